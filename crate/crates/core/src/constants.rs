//! CODATA 2018 physical constants (SI) used across the trap and thermometry models.

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const HBAR: f64 = 1.054_571_817e-34;

pub const MASS_BA138_U: f64 = 137.905_247;
pub const MASS_YB171_U: f64 = 170.936_326;
