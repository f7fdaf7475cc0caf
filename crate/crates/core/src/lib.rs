//! Numerical toolkit for ω-continuous maps, nested cube families, density-driven
//! separated nets and bi-Lipschitz distortion between finite point sets.

pub mod density;
pub mod distortion;
pub mod geomlab;
pub(crate) mod hp;
pub mod moduli;
pub mod netgen;
pub mod params;
