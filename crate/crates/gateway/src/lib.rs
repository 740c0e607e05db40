//! Collection layer for roadside sensor nodes.
//!
//! Nodes send one JSON object per line over TCP. The gateway validates each
//! record, drops duplicates by `(node, seq)`, appends accepted records to a
//! log file in the same line format and answers windowed queries.
//!
//! ```text
//! {"v":1,"node":"n3","seq":17,"ts":1714636800,"gas":{"co":1.82,"so2":0.012,"hc":0.35,"soot":0.06},"temp":21.5,"rh":40.0,"wind":1.2}
//! ```

pub mod client;
pub mod registry;
pub mod server;
pub mod store;
pub mod wire;

pub use registry::{Disposition, NodeRegistry, NodeState, RejectCode};
pub use server::{Server, ServerHandle};
pub use store::{Gateway, StorageError};
pub use wire::{decode_record, encode_record, DecodeError, PROTOCOL_VERSION};
