//! Teleoperation service for the simulated CRANE robot.
//!
//! One task owns the simulation and advances it in step with the wall clock.
//! Clients connect over TCP and exchange length-delimited JSON frames (a
//! 4-byte big-endian length, then the UTF-8 body). The wire format is
//! described in `docs/PROTOCOL.md`.

pub mod log;
pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, Command, Mode, Reason, Role, ServerMessage, StateSnapshot, WirePose};
pub use server::{serve, Service};
pub use session::{heartbeat_action, HeartbeatAction, Rejection, Session};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] crane_core::Error),

    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        source: std::io::Error,
    },

    #[error("session log: {0}")]
    Log(std::io::Error),

    #[error("simulation setup task failed: {0}")]
    Setup(String),
}
