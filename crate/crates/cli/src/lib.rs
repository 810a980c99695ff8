//! Command line and HTTP front end for the platform-trial allocation crate.
//!
//! [`api`] holds the request and response types and their handlers,
//! [`render`] turns responses into JSON or CSV, and [`http`] exposes the
//! handlers as a JSON service. The `platalloc` binary wires them to
//! subcommands.

pub mod api;
pub mod http;
pub mod render;
