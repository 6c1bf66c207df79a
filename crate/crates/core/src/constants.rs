//! Physical constants (CODATA 2018, SI units).

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const NUCLEAR_MAGNETON: f64 = 5.050_783_746_1e-27;
/// Vacuum permeability, N/A².
pub const MU_0: f64 = 1.256_637_062_12e-6;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// 1 gauss in tesla.
pub const GAUSS: f64 = 1e-4;
/// 1 G/cm in T/m.
pub const GAUSS_PER_CM: f64 = 1e-2;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
