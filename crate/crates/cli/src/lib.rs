//! File formats, HTTP clients, and run manifests for the semantic filter
//! engine. The algorithms live in `semfilter-core`; this crate is the std
//! companion carrying everything that touches the filesystem or the network,
//! plus the `semfilter` binary.

pub mod cache;
pub mod commands;
pub mod embed_io;
pub mod http;
pub mod manifest;
pub mod output;
pub mod table_io;
