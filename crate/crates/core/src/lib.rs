//! Simulation of thin elastic sheets folding along prescribed curved creases.
//!
//! The sheet is discretized by discontinuous, elementwise quadratic
//! deformations on isoparametric triangles. Bending is measured through a
//! reconstructed Hessian whose gradient-jump liftings skip the crease, so the
//! sheet folds freely there, and the isometry constraint is enforced in
//! linearized form by a discrete gradient flow.

pub mod geometry;
pub mod mesh;
pub mod sparse;
pub mod dgspace;
pub mod hessian;
pub mod energy;
pub mod flow;
pub mod diagnostics;
