//! Synthetic order-to-cash logs with object types customers, items, orders
//! and packages, plus a linear toy log for smoke tests.
//!
//! Package weight drives the package lifecycle: heavy packages take twice as
//! long to deliver and fail their first delivery attempt far more often, so
//! the weight attribute carries real signal for package suffixes.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ocel::{AttrValue, Event, ObjectEntity, OcelLog, DEFAULT_VERSION};

pub const ACTIVITIES: [&str; 11] = [
    "place order",
    "pick item",
    "confirm order",
    "item out of stock",
    "reorder item",
    "pay order",
    "create package",
    "send package",
    "failed delivery",
    "package delivered",
    "payment reminder",
];

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("invalid generator config: {0}")]
pub struct InvalidConfig(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorityClass {
    pub name: String,
    /// Relative frequency.
    pub weight: f64,
    /// Multiplies every order-side gap.
    pub delay_multiplier: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub num_orders: usize,
    pub num_customers: usize,
    pub items_per_order: (usize, usize),
    pub out_of_stock_prob: f64,
    pub payment_reminder_prob: f64,
    pub priority_classes: Vec<PriorityClass>,
    pub customer_age: (i64, i64),
    pub item_colors: Vec<String>,
    pub order_price: (f64, f64),
    /// Share of packages drawn above `weight_threshold`.
    pub heavy_fraction: f64,
    pub weight_threshold: f64,
    pub weight_range: (f64, f64),
    pub failed_delivery_prob_light: f64,
    pub failed_delivery_prob_heavy: f64,
    /// Multiplies delivery gaps of heavy packages.
    pub heavy_delay_multiplier: f64,
    /// Mean gap between consecutive orders, seconds.
    pub order_interval_secs: f64,
    /// Base gaps, seconds; each draw is jittered by ±`jitter`.
    pub order_step_secs: f64,
    pub send_secs: f64,
    pub delivery_secs: f64,
    pub jitter: f64,
    pub start: DateTime<Utc>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_orders: 200,
            num_customers: 17,
            items_per_order: (1, 4),
            out_of_stock_prob: 0.1,
            payment_reminder_prob: 0.2,
            priority_classes: vec![
                PriorityClass { name: "standard".into(), weight: 0.7, delay_multiplier: 1.0 },
                PriorityClass { name: "express".into(), weight: 0.3, delay_multiplier: 0.5 },
            ],
            customer_age: (18, 80),
            item_colors: ["black", "white", "red", "blue"].map(String::from).to_vec(),
            order_price: (10.0, 500.0),
            heavy_fraction: 0.35,
            weight_threshold: 10.0,
            weight_range: (0.5, 30.0),
            failed_delivery_prob_light: 0.1,
            failed_delivery_prob_heavy: 0.8,
            heavy_delay_multiplier: 2.0,
            order_interval_secs: 3600.0,
            order_step_secs: 1800.0,
            send_secs: 7200.0,
            delivery_secs: 43200.0,
            jitter: 0.1,
            start: Utc.with_ymd_and_hms(2020, 9, 14, 8, 0, 0).unwrap(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        let bad = |m: &str| Err(InvalidConfig(m.to_string()));
        let probs = [
            self.out_of_stock_prob,
            self.payment_reminder_prob,
            self.heavy_fraction,
            self.failed_delivery_prob_light,
            self.failed_delivery_prob_heavy,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.priority_classes.is_empty()
            || self.priority_classes.iter().any(|c| !(c.delay_multiplier > 0.0) || !(c.weight > 0.0))
        {
            return bad("need at least one priority class with positive weight and multiplier");
        }
        if !(self.heavy_delay_multiplier > 0.0) {
            return bad("multipliers must be positive");
        }
        if self.num_customers == 0 || self.items_per_order.0 == 0 || self.items_per_order.0 > self.items_per_order.1 {
            return bad("need customers and a nonempty items-per-order range");
        }
        let (wlo, whi) = self.weight_range;
        if !(wlo < self.weight_threshold && self.weight_threshold < whi) {
            return bad("weight_threshold must lie strictly inside weight_range");
        }
        if !(self.customer_age.0 <= self.customer_age.1) || !(self.order_price.0 < self.order_price.1) {
            return bad("attribute ranges must be ordered");
        }
        if self.item_colors.is_empty() {
            return bad("need at least one item color");
        }
        let gaps = [self.order_interval_secs, self.order_step_secs, self.send_secs, self.delivery_secs];
        if gaps.iter().any(|g| !(*g > 0.0)) || !(0.0..1.0).contains(&self.jitter) {
            return bad("gaps must be positive and jitter in [0, 1)");
        }
        Ok(())
    }
}

struct Builder {
    events: Vec<Event>,
    next_id: usize,
}

impl Builder {
    fn emit(&mut self, activity: &str, at: DateTime<Utc>, objects: &[&str]) {
        self.next_id += 1;
        self.events.push(Event {
            id: format!("e{:07}", self.next_id),
            activity: activity.to_string(),
            timestamp: at,
            omap: objects.iter().map(|s| s.to_string()).collect(),
            vmap: BTreeMap::new(),
        });
    }
}

fn attrs(pairs: &[(&str, AttrValue)]) -> BTreeMap<String, AttrValue> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn generate(config: &GenConfig) -> Result<OcelLog, InvalidConfig> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut objects = Vec::new();
    let mut b = Builder { events: Vec::new(), next_id: 0 };

    let customers: Vec<String> = (0..config.num_customers).map(|i| format!("c{}", i + 1)).collect();
    for c in &customers {
        let age = rng.random_range(config.customer_age.0..=config.customer_age.1);
        objects.push(ObjectEntity { id: c.clone(), otype: "customers".into(), ovmap: attrs(&[("age", AttrValue::Integer(age))]) });
    }
    let total_weight: f64 = config.priority_classes.iter().map(|c| c.weight).sum();
    let jitter = config.jitter;
    let gap = |rng: &mut ChaCha8Rng, base: f64| -> Duration {
        let secs = base * rng.random_range(1.0 - jitter..=1.0 + jitter);
        Duration::seconds(secs.round().max(1.0) as i64)
    };

    let mut clock = config.start;
    let mut item_no = 0;
    for o in 0..config.num_orders {
        clock += gap(&mut rng, config.order_interval_secs);
        let order = format!("o{}", o + 1);
        let customer = customers[rng.random_range(0..customers.len())].clone();
        let mut pick = rng.random_range(0.0..total_weight);
        let class = config
            .priority_classes
            .iter()
            .find(|c| {
                pick -= c.weight;
                pick < 0.0
            })
            .unwrap_or(&config.priority_classes[config.priority_classes.len() - 1]);
        let price = (rng.random_range(config.order_price.0..config.order_price.1) * 100.0).round() / 100.0;
        objects.push(ObjectEntity {
            id: order.clone(),
            otype: "orders".into(),
            ovmap: attrs(&[("price", AttrValue::Float(price)), ("priority", AttrValue::String(class.name.clone()))]),
        });
        let n_items = rng.random_range(config.items_per_order.0..=config.items_per_order.1);
        let items: Vec<String> = (0..n_items)
            .map(|_| {
                item_no += 1;
                format!("i{item_no}")
            })
            .collect();
        for i in &items {
            let color = config.item_colors[rng.random_range(0..config.item_colors.len())].clone();
            objects.push(ObjectEntity { id: i.clone(), otype: "items".into(), ovmap: attrs(&[("color", AttrValue::String(color))]) });
        }
        let step = config.order_step_secs * class.delay_multiplier;

        let mut t = clock;
        let mut all: Vec<&str> = vec![&order, &customer];
        all.extend(items.iter().map(String::as_str));
        b.emit("place order", t, &all);
        for i in &items {
            let touched = [order.as_str(), customer.as_str(), i.as_str()];
            if rng.random_bool(config.out_of_stock_prob) {
                t += gap(&mut rng, step);
                b.emit("item out of stock", t, &touched);
                t += gap(&mut rng, step);
                b.emit("reorder item", t, &touched);
            }
            t += gap(&mut rng, step);
            b.emit("pick item", t, &touched);
        }
        t += gap(&mut rng, step);
        b.emit("confirm order", t, &all);
        if rng.random_bool(config.payment_reminder_prob) {
            t += gap(&mut rng, 4.0 * step);
            b.emit("payment reminder", t, &[&order, &customer]);
        }
        t += gap(&mut rng, step);
        b.emit("pay order", t, &[&order, &customer]);

        let package = format!("p{}", o + 1);
        let heavy = rng.random_bool(config.heavy_fraction);
        let (wlo, whi) = config.weight_range;
        let weight = if heavy {
            rng.random_range(config.weight_threshold..whi)
        } else {
            rng.random_range(wlo..config.weight_threshold)
        };
        let weight = (weight * 100.0).round() / 100.0;
        objects.push(ObjectEntity { id: package.clone(), otype: "packages".into(), ovmap: attrs(&[("weight", AttrValue::Float(weight))]) });
        let fail_p = if heavy { config.failed_delivery_prob_heavy } else { config.failed_delivery_prob_light };
        let delivery = config.delivery_secs * if heavy { config.heavy_delay_multiplier } else { 1.0 };
        let mut with_pkg = all.clone();
        with_pkg.push(&package);
        t += gap(&mut rng, step);
        b.emit("create package", t, &with_pkg);
        t += gap(&mut rng, config.send_secs);
        b.emit("send package", t, &with_pkg);
        if rng.random_bool(fail_p) {
            t += gap(&mut rng, delivery);
            b.emit("failed delivery", t, &with_pkg);
        }
        t += gap(&mut rng, delivery);
        b.emit("package delivered", t, &with_pkg);
    }

    let types = ["customers", "items", "orders", "packages"].map(String::from);
    Ok(OcelLog::from_parts(b.events, objects, Vec::<String>::new(), types, DEFAULT_VERSION)
        .expect("generated logs are valid by construction"))
}

/// `n_cases` objects of type `case`, each with the chain a, b, c, d spaced
/// `gap_seconds` apart.
pub fn generate_toy_linear(n_cases: usize, gap_seconds: i64) -> OcelLog {
    let start = Utc.with_ymd_and_hms(2021, 1, 4, 8, 0, 0).unwrap();
    let mut events = Vec::with_capacity(4 * n_cases);
    let mut objects = Vec::with_capacity(n_cases);
    for c in 0..n_cases {
        let id = format!("case{:05}", c + 1);
        let t0 = start + Duration::seconds(c as i64 * 60);
        for (k, a) in ["a", "b", "c", "d"].iter().enumerate() {
            events.push(Event {
                id: format!("{id}-{k}"),
                activity: a.to_string(),
                timestamp: t0 + Duration::seconds(k as i64 * gap_seconds),
                omap: BTreeSet::from([id.clone()]),
                vmap: BTreeMap::new(),
            });
        }
        objects.push(ObjectEntity { id, otype: "case".into(), ovmap: BTreeMap::new() });
    }
    OcelLog::from_parts(events, objects, Vec::<String>::new(), ["case".to_string()], DEFAULT_VERSION)
        .expect("toy logs are valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocel::{flatten, relations_matrix};

    #[test]
    fn toy_cases_are_linear() {
        let log = generate_toy_linear(5, 600);
        let cases = flatten(&log, "case").unwrap();
        assert_eq!(cases.len(), 5);
        for c in cases {
            assert_eq!(c.activities(), ["a", "b", "c", "d"]);
            assert_eq!(c.duration_secs(), 1800.0);
        }
    }

    #[test]
    fn package_relations() {
        let log = generate(&GenConfig { num_orders: 30, ..Default::default() }).unwrap();
        let rel = relations_matrix(&log);
        let expected: BTreeSet<String> =
            ["create package", "send package", "failed delivery", "package delivered"].map(String::from).into();
        assert_eq!(rel["packages"], expected);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let cfg = GenConfig { out_of_stock_prob: 1.5, ..Default::default() };
        assert!(generate(&cfg).is_err());
        let cfg = GenConfig { heavy_delay_multiplier: 0.0, ..Default::default() };
        assert!(generate(&cfg).is_err());
    }
}
