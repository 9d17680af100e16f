//! Shares an articulation model between processes.
//!
//! A [`ServerHandle`] owns the authoritative [`TaggedModel`] and its
//! operation history. Any number of [`Client`]s connect over TCP, subscribe
//! to path prefixes and submit operations. Every accepted operation bumps a
//! global revision; subscribers receive the definitions it touched in
//! revision order.
//!
//! ```no_run
//! use kineverse::artmodel::{path, OperationHistory, Placement};
//! use kineverse_server::{serve, Client};
//!
//! let server = serve(OperationHistory::default(), "127.0.0.1:0", None).unwrap();
//! let client = Client::connect(server.local_addr()).unwrap();
//! client.subscribe(&[path("robot")], |ev| println!("{ev:?}")).unwrap();
//! ```
//!
//! [`TaggedModel`]: kineverse::artmodel::TaggedModel

mod client;
pub mod protocol;
mod server;

pub use client::{Client, ClientError, ClientEvent};
pub use protocol::{ErrorCode, Update, WireMessage, WirePlacement, DEFAULT_ENDPOINT, PROTOCOL_VERSION};
pub use server::{initial_history, serve, ServerError, ServerHandle};
