//! Zeeman and hyperfine structure of the ¹S₀ and ³P₂ manifolds of ¹⁷¹Yb.
//!
//! The ³P₂ manifold (J = 2, I = 1/2) is diagonalized block by block: the
//! Hamiltonian `A·I·J + (g_J μ_B J_z − g_I μ_N I_z)·B` conserves
//! `m_F = m_J + m_I`, so it splits into two 1×1 blocks (|m_F| = 5/2) and four
//! 2×2 blocks that have closed-form eigenpairs.
//!
//! Energies are in Hz. The excited-state zero is the ³P₂ fine-structure
//! centroid, the ground-state zero is the ¹S₀ level at B = 0. Transition
//! frequencies are always offsets from the zero-field line center.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constants::{BOHR_MAGNETON, NUCLEAR_MAGNETON, PLANCK, TWO_PI};
use crate::error::{Error, Result};

/// A half-integer quantum number stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const MINUS_HALF: HalfInt = HalfInt(-1);
    pub const PLUS_HALF: HalfInt = HalfInt(1);
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Position of a level inside its m_F block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Lower,
    Upper,
}

/// Zero-field hyperfine manifold a level connects to adiabatically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HyperfineF {
    #[serde(rename = "3/2")]
    ThreeHalves,
    #[serde(rename = "5/2")]
    FiveHalves,
}

/// Label of a ³P₂ Zeeman level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelLabel {
    pub m_f: HalfInt,
    pub branch: Branch,
}

/// Uncoupled basis state |m_J, m_I⟩ of the ³P₂ manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncoupledState {
    pub m_j: i32,
    pub m_i: HalfInt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomParams {
    pub nuclear_spin: HalfInt,
    pub electronic_j: HalfInt,
    /// Nuclear magnetic moment in units of μ_N.
    pub nuclear_moment_mu_n: f64,
    pub g_j_3p2: f64,
    pub hyperfine_a_3p2_hz: f64,
    pub mass_kg: f64,
    pub lifetime_3p2_s: f64,
    pub linewidth_1s0_3p2_hz: f64,
    pub lifetime_1p1_s: f64,
    pub wavelength_1s0_3p2_m: f64,
    pub wavelength_1s0_1p1_m: f64,
    pub wavelength_lattice_m: f64,
    /// Replace the exact diagonalization by its first-order (linear Zeeman) limit.
    pub linear_zeeman: bool,
}

impl Default for AtomParams {
    fn default() -> Self {
        AtomParams {
            nuclear_spin: HalfInt::from_twice(1),
            electronic_j: HalfInt::from_twice(4),
            nuclear_moment_mu_n: 0.49367,
            g_j_3p2: 1.5,
            hyperfine_a_3p2_hz: 2.678e9,
            mass_kg: 170.936_325_8 * crate::constants::ATOMIC_MASS_UNIT,
            lifetime_3p2_s: 15.0,
            linewidth_1s0_3p2_hz: 0.010,
            lifetime_1p1_s: 5.5e-9,
            wavelength_1s0_3p2_m: 507.339e-9,
            wavelength_1s0_1p1_m: 398.911e-9,
            wavelength_lattice_m: 532e-9,
            linear_zeeman: false,
        }
    }
}

impl AtomParams {
    pub fn validate(&self) -> Result<()> {
        if self.nuclear_spin.twice() != 1 {
            return Err(Error::Config(format!(
                "nuclear spin must be 1/2, got {}",
                self.nuclear_spin
            )));
        }
        if self.electronic_j.twice() != 4 {
            return Err(Error::Config(format!(
                "electronic J of 3P2 must be 2, got {}",
                self.electronic_j
            )));
        }
        let positive = [
            ("mass_kg", self.mass_kg),
            ("lifetime_3p2_s", self.lifetime_3p2_s),
            ("linewidth_1s0_3p2_hz", self.linewidth_1s0_3p2_hz),
            ("lifetime_1p1_s", self.lifetime_1p1_s),
            ("wavelength_1s0_3p2_m", self.wavelength_1s0_3p2_m),
            ("wavelength_1s0_1p1_m", self.wavelength_1s0_1p1_m),
            ("wavelength_lattice_m", self.wavelength_lattice_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.nuclear_moment_mu_n.is_finite() || !self.g_j_3p2.is_finite() {
            return Err(Error::Config("magnetic moments must be finite".into()));
        }
        if !self.hyperfine_a_3p2_hz.is_finite()
            || (self.hyperfine_a_3p2_hz == 0.0 && !self.linear_zeeman)
        {
            return Err(Error::Config(
                "hyperfine_a_3p2_hz must be finite and non-zero unless linear_zeeman is set".into(),
            ));
        }
        Ok(())
    }

    pub fn lattice_constant(&self) -> f64 {
        self.wavelength_lattice_m / 2.0
    }

    /// Nuclear g-factor defined by μ_I = g_I μ_N I.
    pub fn g_i(&self) -> f64 {
        self.nuclear_moment_mu_n / self.nuclear_spin.value()
    }

    /// Branch that continues the F = 3/2 manifold. With A > 0 it lies below F = 5/2.
    pub fn f32_branch(&self) -> Branch {
        if self.hyperfine_a_3p2_hz >= 0.0 {
            Branch::Lower
        } else {
            Branch::Upper
        }
    }

    /// Label of the ³P₂(F = 3/2, m_F) level.
    pub fn f32_level(&self, m_f: HalfInt) -> LevelLabel {
        LevelLabel {
            m_f,
            branch: self.f32_branch(),
        }
    }

    fn electronic_zeeman_hz_per_t(&self) -> f64 {
        self.g_j_3p2 * BOHR_MAGNETON / PLANCK
    }

    fn nuclear_zeeman_hz_per_t(&self) -> f64 {
        self.g_i() * NUCLEAR_MAGNETON / PLANCK
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeemanLevel {
    pub m_f: HalfInt,
    pub branch: Branch,
    pub f: HyperfineF,
    pub energy_hz: f64,
    pub composition: Vec<(UncoupledState, f64)>,
}

impl ZeemanLevel {
    pub fn label(&self) -> LevelLabel {
        LevelLabel {
            m_f: self.m_f,
            branch: self.branch,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeemanSpectrum {
    pub field_t: f64,
    /// Ordered by m_F, lower branch first inside each block.
    pub levels: Vec<ZeemanLevel>,
}

impl ZeemanSpectrum {
    pub fn level(&self, label: LevelLabel) -> Option<&ZeemanLevel> {
        self.levels.iter().find(|l| l.label() == label)
    }
}

/// One m_F block of the ³P₂ Hamiltonian in the uncoupled basis (Hz).
#[derive(Clone, Debug)]
struct Block {
    basis: Vec<UncoupledState>,
    diag: Vec<f64>,
    off: f64,
}

fn uncoupled_block(params: &AtomParams, m_f: HalfInt, field_t: f64, a_hz: f64) -> Block {
    let mu_j = params.electronic_zeeman_hz_per_t() * field_t;
    let mu_i = params.nuclear_zeeman_hz_per_t() * field_t;
    let diag_of = |s: UncoupledState| {
        let m_j = s.m_j as f64;
        let m_i = s.m_i.value();
        a_hz * m_j * m_i + mu_j * m_j - mu_i * m_i
    };
    // m_J = m_F - m_I with m_I = +1/2 first, then m_I = -1/2.
    let mut basis = Vec::with_capacity(2);
    for m_i in [HalfInt::PLUS_HALF, HalfInt::MINUS_HALF] {
        let twice_mj = m_f.twice() - m_i.twice();
        if twice_mj.abs() <= 4 {
            basis.push(UncoupledState {
                m_j: twice_mj / 2,
                m_i,
            });
        }
    }
    let diag = basis.iter().map(|&s| diag_of(s)).collect();
    let off = if basis.len() == 2 {
        // <m_J+1, -1/2| (A/2) I_- J_+ |m_J, +1/2>, with the I_- factor equal to 1.
        let m_j = basis[0].m_j as f64;
        0.5 * a_hz * (6.0 - m_j * (m_j + 1.0)).sqrt()
    } else {
        0.0
    };
    Block { basis, diag, off }
}

/// Closed-form eigenpairs of a real symmetric 2×2 matrix, ascending.
fn eigen2(d1: f64, d2: f64, off: f64) -> [(f64, [f64; 2]); 2] {
    let mean = 0.5 * (d1 + d2);
    let half_diff = 0.5 * (d1 - d2);
    let radius = half_diff.hypot(off);
    let theta = 0.5 * (2.0 * off).atan2(d1 - d2);
    let (s, c) = theta.sin_cos();
    [(mean - radius, [-s, c]), (mean + radius, [c, s])]
}

fn block_levels(params: &AtomParams, m_f: HalfInt, field_t: f64) -> Vec<ZeemanLevel> {
    let f32_branch = params.f32_branch();
    let f52_branch = match f32_branch {
        Branch::Lower => Branch::Upper,
        Branch::Upper => Branch::Lower,
    };
    let f_of = |b: Branch| {
        if b == f32_branch {
            HyperfineF::ThreeHalves
        } else {
            HyperfineF::FiveHalves
        }
    };

    if params.linear_zeeman {
        // Eigenvectors of the zero-field coupling (any A of the right sign)
        // with energies to first order in B.
        let sign = if params.hyperfine_a_3p2_hz < 0.0 { -1.0 } else { 1.0 };
        let unit = uncoupled_block(params, m_f, 0.0, sign);
        let hz = uncoupled_block(params, m_f, field_t, 0.0);
        let zero = uncoupled_block(params, m_f, 0.0, params.hyperfine_a_3p2_hz);
        return match unit.basis.len() {
            1 => vec![ZeemanLevel {
                m_f,
                branch: f52_branch,
                f: HyperfineF::FiveHalves,
                energy_hz: zero.diag[0] + hz.diag[0],
                composition: vec![(unit.basis[0], 1.0)],
            }],
            _ => {
                let pairs = eigen2(unit.diag[0], unit.diag[1], unit.off);
                let mut out: Vec<ZeemanLevel> = pairs
                    .iter()
                    .zip([Branch::Lower, Branch::Upper])
                    .map(|((_, v), branch)| {
                        let e0 = v[0] * v[0] * zero.diag[0]
                            + v[1] * v[1] * zero.diag[1]
                            + 2.0 * v[0] * v[1] * zero.off;
                        let e1 = v[0] * v[0] * hz.diag[0] + v[1] * v[1] * hz.diag[1];
                        ZeemanLevel {
                            m_f,
                            branch,
                            f: f_of(branch),
                            energy_hz: e0 + e1,
                            composition: vec![(unit.basis[0], v[0]), (unit.basis[1], v[1])],
                        }
                    })
                    .collect();
                // The linear model can let levels cross; keep branch labels
                // attached to the zero-field ordering.
                out.sort_by_key(|l| l.branch == Branch::Upper);
                out
            }
        };
    }

    let block = uncoupled_block(params, m_f, field_t, params.hyperfine_a_3p2_hz);
    match block.basis.len() {
        1 => vec![ZeemanLevel {
            m_f,
            branch: f52_branch,
            f: HyperfineF::FiveHalves,
            energy_hz: block.diag[0],
            composition: vec![(block.basis[0], 1.0)],
        }],
        _ => eigen2(block.diag[0], block.diag[1], block.off)
            .iter()
            .zip([Branch::Lower, Branch::Upper])
            .map(|(&(e, v), branch)| ZeemanLevel {
                m_f,
                branch,
                f: f_of(branch),
                energy_hz: e,
                composition: vec![(block.basis[0], v[0]), (block.basis[1], v[1])],
            })
            .collect(),
    }
}

fn check_field(field_t: f64) -> Result<()> {
    if !(field_t >= 0.0 && field_t.is_finite()) {
        return Err(Error::Domain(format!(
            "magnetic field must be finite and non-negative, got {field_t} T"
        )));
    }
    Ok(())
}

/// All ten eigenpairs of the ³P₂ manifold at field `field_t`.
pub fn zeeman_spectrum(params: &AtomParams, field_t: f64) -> Result<ZeemanSpectrum> {
    params.validate()?;
    check_field(field_t)?;
    let levels = (-5..=5)
        .step_by(2)
        .flat_map(|t| block_levels(params, HalfInt::from_twice(t), field_t))
        .collect();
    Ok(ZeemanSpectrum { field_t, levels })
}

/// Energy (Hz, relative to the centroid) of a single ³P₂ level.
pub fn excited_energy(params: &AtomParams, label: LevelLabel, field_t: f64) -> Result<f64> {
    if label.m_f.twice().abs() > 5 || label.m_f.twice() % 2 == 0 {
        return Err(Error::Domain(format!("no 3P2 level with m_F = {}", label.m_f)));
    }
    block_levels(params, label.m_f, field_t)
        .into_iter()
        .find(|l| l.branch == label.branch)
        .map(|l| l.energy_hz)
        .ok_or_else(|| {
            Error::Domain(format!(
                "m_F = {} has a single level; no {:?} branch",
                label.m_f, label.branch
            ))
        })
}

/// ¹S₀ energy (Hz): `−μ_I·B·(m_I/I)/h`.
pub fn ground_energy(params: &AtomParams, m_i: HalfInt, field_t: f64) -> Result<f64> {
    if m_i.twice().abs() != 1 {
        return Err(Error::Domain(format!("no 1S0 sublevel with m_I = {m_i}")));
    }
    Ok(-params.nuclear_moment_mu_n * NUCLEAR_MAGNETON * field_t * (m_i.value() / 0.5) / PLANCK)
}

/// Optical resonance ¹S₀(m_I) ↔ ³P₂(label), as an offset from the zero-field line center.
pub fn transition_frequency(
    params: &AtomParams,
    ground: HalfInt,
    excited: LevelLabel,
    field_t: f64,
) -> Result<f64> {
    params.validate()?;
    check_field(field_t)?;
    Ok(excited_energy(params, excited, field_t)? - ground_energy(params, ground, field_t)?)
}

/// NMR frequency of the ¹S₀ nuclear-spin qubit: `2·μ_I·B/h`.
pub fn ground_qubit_splitting(params: &AtomParams, field_t: f64) -> Result<f64> {
    check_field(field_t)?;
    Ok(ground_energy(params, HalfInt::MINUS_HALF, field_t)?
        - ground_energy(params, HalfInt::PLUS_HALF, field_t)?)
}

/// Magnetic moment projection `−∂E/∂B` of a ³P₂ level, J/T.
pub fn excited_moment(params: &AtomParams, label: LevelLabel, field_t: f64) -> Result<f64> {
    let h = 1e-6;
    let (lo, hi) = if field_t > h { (field_t - h, field_t + h) } else { (field_t, field_t + 2.0 * h) };
    let slope = (excited_energy(params, label, hi)? - excited_energy(params, label, lo)?) / (hi - lo);
    Ok(-slope * PLANCK)
}

/// Magnetic moment projection of a ¹S₀ sublevel, J/T.
pub fn ground_moment(params: &AtomParams, m_i: HalfInt) -> f64 {
    params.nuclear_moment_mu_n * NUCLEAR_MAGNETON * (m_i.value() / 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreePhotonDetunings {
    pub field_t: f64,
    /// Drive angular frequency, one third of the a→d splitting (rad/s).
    pub omega0: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// ω_ab, ω_bc, ω_cd (rad/s).
    pub ladder: [f64; 3],
}

/// Detunings Δ₁ = ω_ab − ω₀ and Δ₂ = ω_cd − ω₀ of the F = 3/2 ladder
/// a, b, c, d = m_F −3/2 … +3/2 at the three-photon resonant drive.
pub fn three_photon_detunings(params: &AtomParams, field_t: f64) -> Result<ThreePhotonDetunings> {
    params.validate()?;
    check_field(field_t)?;
    if field_t == 0.0 {
        return Err(Error::DegenerateManifold(field_t));
    }
    let e: Vec<f64> = (-3..=3)
        .step_by(2)
        .map(|t| excited_energy(params, params.f32_level(HalfInt::from_twice(t)), field_t))
        .collect::<Result<_>>()?;
    let ladder = [
        TWO_PI * (e[1] - e[0]),
        TWO_PI * (e[2] - e[1]),
        TWO_PI * (e[3] - e[2]),
    ];
    let omega0 = TWO_PI * (e[3] - e[0]) / 3.0;
    if omega0.abs() == 0.0 {
        return Err(Error::DegenerateManifold(field_t));
    }
    Ok(ThreePhotonDetunings {
        field_t,
        omega0,
        delta1: ladder[0] - omega0,
        delta2: ladder[2] - omega0,
        ladder,
    })
}

/// Adjusts the hyperfine constant so that |Δ₁(field_t)| equals `target_hz`.
///
/// |Δ₁| falls monotonically with |A| once the hyperfine splitting exceeds
/// the Zeeman energy, so the search is a bisection in log|A| around the
/// current value.
pub fn calibrate_hyperfine_a(params: &AtomParams, field_t: f64, target_hz: f64) -> Result<f64> {
    if !(target_hz > 0.0) {
        return Err(Error::Config("calibration target must be positive".into()));
    }
    if params.linear_zeeman {
        return Err(Error::Config("linear Zeeman model has no detunings to calibrate".into()));
    }
    let sign = params.hyperfine_a_3p2_hz.signum();
    let delta_at = |a: f64| -> Result<f64> {
        let p = AtomParams {
            hyperfine_a_3p2_hz: sign * a,
            ..params.clone()
        };
        Ok(three_photon_detunings(&p, field_t)?.delta1.abs() / TWO_PI)
    };
    let a0 = params.hyperfine_a_3p2_hz.abs();
    let (mut lo, mut hi) = (a0 / 8.0, a0 * 8.0);
    if delta_at(lo)? < target_hz || delta_at(hi)? > target_hz {
        return Err(Error::Config(format!(
            "target {target_hz} Hz not bracketed by A in [{lo:e}, {hi:e}] Hz"
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if delta_at(mid)? > target_hz {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    Ok(sign * (lo * hi).sqrt())
}
