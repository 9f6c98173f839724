//! Approximate fixpoints of lp-contraction maps on `[0,1]^d` by centerpoint
//! cutting.
//!
//! The crate is layered bottom-up:
//!
//! * [`geometry`]: lp norms, bisector and limit halfspaces.
//! * [`centerpoint`]: sampled-direction centerpoint certificates.
//! * [`oracles`]: contraction instances and query-counting wrappers.
//! * [`solver`]: the continuous cutting solver and the Banach fallback.
//! * [`grid`] and [`grid_solver`]: the l1 grid solver and violation
//!   certificates.
//! * [`bench`]: parameter sweeps shared by the CLI and the acceptance tests.
//!
//! With the default `parallel` feature, membership scans fan out over rayon.
//! Every parallel path yields the same result as [`Exec::Serial`].

pub mod bench;
pub mod centerpoint;
pub mod exec;
pub mod geometry;
pub mod grid;
pub mod grid_solver;
pub mod oracles;
pub mod solver;

pub use exec::Exec;
pub use geometry::{PNorm, Point};
