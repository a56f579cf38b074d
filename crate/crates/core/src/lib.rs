//! Zero-energy orbits of the equal-mass inverse-cube three-body problem,
//! studied as geodesics of the reduced Jacobi–Maupertuis metric on the
//! shape sphere minus its three binary-collision points.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod geodesic;
pub mod library;
pub mod lift;
pub mod ode;
pub mod orbit;
pub mod selfcheck;
pub mod shape;
pub mod syzygy;

pub use error::{Error, Result};
