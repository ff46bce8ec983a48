//! Component coordination toolkit: a textual modeling language for atoms,
//! connectors and priorities, an execution engine, an explicit-state
//! verifier, property-enforcing architectures and a flattening back-end.

pub mod model;
pub mod system;
pub mod textlang;
pub mod interaction;
pub mod engine;
pub mod verify;
pub mod arch;
pub mod flatten;
