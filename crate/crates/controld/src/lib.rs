//! Control daemon front ends: the HTTP API server and a blocking client for it.

pub mod client;
pub mod server;
