//! Double-obstacle problems for the regional fractional p-Laplacian on Koch
//! pre-fractal domains, and their p → ∞ limit.

pub mod discretization;
pub mod field_expr;
pub mod geometry;
pub mod harness;
pub mod limit;
pub mod nonlocal_energy;
pub mod obstacle;
