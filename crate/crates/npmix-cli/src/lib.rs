//! Library surface of the CLI crate: input parsing and the fitted-model
//! file schema, shared between the binary and its integration tests.

pub mod io;
