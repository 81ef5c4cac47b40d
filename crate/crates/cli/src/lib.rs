//! CLI and HTTP front ends over the `ocelgan` library.

pub mod error;
pub mod openapi;
pub mod payload;
pub mod server;
pub mod store;
pub mod table;
