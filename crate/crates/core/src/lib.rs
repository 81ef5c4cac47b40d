//! Suffix prediction for object-centric event logs.
//!
//! [`ocel`] reads and queries OCEL JSON logs, [`encoding`] turns flattened
//! cases into vectors and prefix/suffix pairs, [`autodiff`] provides the
//! tensors, tape and optimizers, [`gan`] holds the networks, training and
//! prediction, [`metrics`] scores predicted suffixes and [`synthgen`] makes
//! synthetic logs.

pub mod autodiff;
pub mod encoding;
pub mod gan;
pub mod metrics;
pub mod ocel;
pub mod synthgen;
