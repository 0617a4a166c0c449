//! Polynomial meshes on convex bodies.
//!
//! The crate builds finite point sets `Y ⊂ Ω` on which every polynomial of
//! total degree at most `n` attains at least half of its maximum over the
//! convex body `Ω`, using a Dubiner-type metric to place the points. It also
//! contains the polynomial constructions and the empirical checks used to
//! certify the resulting meshes.

pub mod dubiner;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod mesh;
mod par;
pub mod poly;
pub mod verify;

pub use error::{Error, Result};
