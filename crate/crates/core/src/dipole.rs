//! Magnetic dipole-dipole couplings between atoms on lattice sites.
//!
//! Only the secular (Ising) part `m₁m₂(1 − 3cos²θ)` is kept. Flip-flop terms
//! between m_F = −3/2 and +3/2 change single-atom m_F by 3 and are far off
//! resonance under the bias field.

use serde::{Deserialize, Serialize};

use crate::atomic::{self, AtomParams, HalfInt};
use crate::constants::{BOHR_MAGNETON, MU_0, PLANCK};
use crate::error::{Error, Result};

/// A magnetic moment (J/T, projection on z) at a position (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleSpec {
    pub moment: f64,
    pub position: [f64; 3],
}

/// Ising dipole-dipole energy in Hz for moments along z.
pub fn ddi_energy(d1: &DipoleSpec, d2: &DipoleSpec) -> Result<f64> {
    let r: [f64; 3] = std::array::from_fn(|k| d2.position[k] - d1.position[k]);
    let dist2 = r.iter().map(|x| x * x).sum::<f64>();
    if !(dist2 > 0.0) {
        return Err(Error::Domain("dipoles share a position".into()));
    }
    let cos2 = r[2] * r[2] / dist2;
    Ok(ising_coupling(d1.moment, d2.moment, dist2.sqrt(), cos2))
}

fn ising_coupling(m1: f64, m2: f64, r: f64, cos2_theta: f64) -> f64 {
    MU_0 / (4.0 * std::f64::consts::PI) * m1 * m2 * (1.0 - 3.0 * cos2_theta) / r.powi(3) / PLANCK
}

/// Moments of the two logical states of one atom, J/T.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicalMoments {
    pub zero: f64,
    pub one: f64,
}

impl LogicalMoments {
    /// ±m for the stretched auxiliary pair.
    pub fn symmetric(magnitude: f64) -> Self {
        LogicalMoments {
            zero: -magnitude,
            one: magnitude,
        }
    }

    /// Moments of ³P₂(F = 3/2, m_F = ∓3/2) at `field_t`, from the level slopes.
    pub fn auxiliary(params: &AtomParams, field_t: f64) -> Result<Self> {
        Ok(LogicalMoments {
            zero: atomic::excited_moment(params, params.f32_level(HalfInt::from_twice(-3)), field_t)?,
            one: atomic::excited_moment(params, params.f32_level(HalfInt::from_twice(3)), field_t)?,
        })
    }

    fn of(&self, bit: usize) -> f64 {
        if bit == 0 {
            self.zero
        } else {
            self.one
        }
    }
}

/// Low-field moment magnitude of ³P₂(F = 3/2, m_F = ±3/2): g_F·m_F·μ_B = 2.7 μ_B.
pub const AUXILIARY_MOMENT: f64 = 1.8 * 1.5 * BOHR_MAGNETON;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairLevels {
    pub spacing_m: f64,
    pub theta_rad: f64,
    /// Dipole energies (Hz) of |00⟩, |01⟩, |10⟩, |11⟩; first digit is the control atom.
    pub levels_hz: [f64; 4],
    /// [E(11) − E(10)] − [E(01) − E(00)], Hz.
    pub shift_10_11_vs_00_01_hz: f64,
}

/// Dipole shifts of the four two-atom logical levels.
///
/// Zeeman energies of the individual atoms are common to the |00⟩↔|01⟩ and
/// |10⟩↔|11⟩ transitions and cancel in the conditional shift, so only the
/// interaction part is returned here.
pub fn pair_levels(spacing_m: f64, theta_rad: f64, moments: LogicalMoments) -> Result<PairLevels> {
    if !(spacing_m > 0.0) {
        return Err(Error::Domain(format!("spacing must be positive, got {spacing_m}")));
    }
    let cos2 = theta_rad.cos().powi(2);
    let mut levels_hz = [0.0; 4];
    for (idx, e) in levels_hz.iter_mut().enumerate() {
        let (c, t) = (idx >> 1, idx & 1);
        *e = ising_coupling(moments.of(c), moments.of(t), spacing_m, cos2);
    }
    let shift = (levels_hz[3] - levels_hz[2]) - (levels_hz[1] - levels_hz[0]);
    Ok(PairLevels {
        spacing_m,
        theta_rad,
        levels_hz,
        shift_10_11_vs_00_01_hz: shift,
    })
}

/// Conditional CNOT shift for a pair along the quantization axis, using the
/// 2.7 μ_B auxiliary moment.
pub fn cnot_shift(spacing_m: f64) -> Result<f64> {
    cnot_shift_with(spacing_m, LogicalMoments::symmetric(AUXILIARY_MOMENT))
}

pub fn cnot_shift_with(spacing_m: f64, moments: LogicalMoments) -> Result<f64> {
    Ok(pair_levels(spacing_m, 0.0, moments)?.shift_10_11_vs_00_01_hz)
}
