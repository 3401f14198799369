//! Request execution and the HTTP service behind the `amrvis` binary.

pub mod request;
pub mod service;

pub use request::{execute, resolve_workers, ErrorKind, Mode, Output, RenderRequest, RequestError, Scene, Tonemap};
pub use service::{router, serve, ServiceState};
