//! Laser intensity, lattice depth, scattering, bias and loss estimates for the
//! experimental parameters of the proposal, each checked against the quoted value.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::addressing::{self, GradientConfig, LatticeGeometry, PlannerSettings};
use crate::atomic::AtomParams;
use crate::constants::{BOLTZMANN, GAUSS, GAUSS_PER_CM, HBAR, PLANCK, SPEED_OF_LIGHT, TWO_PI};
use crate::error::{Error, Result};
use crate::pulse::{NoiseParams, PulseSchedule};

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {x}")))
    }
}

/// Intensity (W/m²) for a π-pulse of length `t_pi_s` on a line of natural
/// linewidth `linewidth_hz`.
///
/// I = 2·I_sat·(Ω/Γ)² with Ω = π/t, Γ = 2π·linewidth and I_sat = πhcΓ/(3λ³).
pub fn pi_pulse_intensity(t_pi_s: f64, linewidth_hz: f64, wavelength_m: f64) -> Result<f64> {
    positive("pi-pulse time", t_pi_s)?;
    positive("linewidth", linewidth_hz)?;
    positive("wavelength", wavelength_m)?;
    let gamma = TWO_PI * linewidth_hz;
    let omega = std::f64::consts::PI / t_pi_s;
    let i_sat = std::f64::consts::PI * PLANCK * SPEED_OF_LIGHT * gamma / (3.0 * wavelength_m.powi(3));
    Ok(2.0 * i_sat * (omega / gamma).powi(2))
}

/// Rabi frequency (rad/s) produced by intensity `i` on the same line; inverse of [`pi_pulse_intensity`].
pub fn rabi_from_intensity(i: f64, linewidth_hz: f64, wavelength_m: f64) -> Result<f64> {
    positive("intensity", i)?;
    let unit = pi_pulse_intensity(std::f64::consts::PI, linewidth_hz, wavelength_m)?;
    Ok((i / unit).sqrt())
}

/// Lattice photon recoil energy h²/(2mλ²) in J.
pub fn recoil_energy(params: &AtomParams) -> f64 {
    PLANCK * PLANCK / (2.0 * params.mass_kg * params.wavelength_lattice_m.powi(2))
}

/// Lowest-band width of the 1D lattice s·E_r·sin²(kx), in units of E_r.
///
/// Plane waves e^{i(q+2ℓ)kx} with |ℓ| ≤ 15 diagonalize the Mathieu problem; the
/// band runs from quasi-momentum q = 0 to the zone edge q = 1.
pub fn lowest_band_width(s: f64) -> f64 {
    let l = 15i32;
    let n = (2 * l + 1) as usize;
    let band_bottom = |q: f64| {
        let h = DMatrix::from_fn(n, n, |a, b| {
            if a == b {
                let m = a as i32 - l;
                (q + 2.0 * m as f64).powi(2) + 0.5 * s
            } else if a.abs_diff(b) == 1 {
                -0.25 * s
            } else {
                0.0
            }
        });
        SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    };
    band_bottom(1.0) - band_bottom(0.0)
}

/// Deep-lattice estimate J ≈ (4/√π)·E_r·s^{3/4}·e^{−2√s}, in units of E_r.
pub fn analytic_tunneling(s: f64) -> f64 {
    4.0 / std::f64::consts::PI.sqrt() * s.powf(0.75) * (-2.0 * s.sqrt()).exp()
}

/// J₀(x) by the trapezoid rule on (1/π)∫₀^π cos(x sin t) dt, which converges
/// geometrically for this periodic integrand.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 64 + (4.0 * x.abs()) as usize;
    let h = std::f64::consts::PI / n as f64;
    let inner: f64 = (1..n).map(|k| (x * (k as f64 * h).sin()).cos()).sum();
    (inner + 1.0) * h / std::f64::consts::PI
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeDepthReport {
    pub depth_recoils: f64,
    pub recoil_energy_j: f64,
    pub recoil_temperature_uk: f64,
    pub depth_j: f64,
    pub depth_uk: f64,
    pub band_width_hz: f64,
    /// Nearest-neighbour tunneling J = band width / 4.
    pub tunneling_rate_hz: f64,
    pub tunneling_time_s: f64,
    pub analytic_tunneling_rate_hz: f64,
    pub hold_time_s: f64,
    /// Probability of finding the atom on its initial site after the hold, J₀(2Jt/ħ)².
    pub hold_survival: f64,
    pub no_lattice: bool,
}

pub fn lattice_depth_report(depth_recoils: f64, params: &AtomParams, hold_time_s: f64) -> Result<LatticeDepthReport> {
    if !(depth_recoils >= 0.0) || !depth_recoils.is_finite() {
        return Err(Error::Domain(format!("lattice depth must be non-negative, got {depth_recoils}")));
    }
    if !(hold_time_s >= 0.0) {
        return Err(Error::Domain(format!("hold time must be non-negative, got {hold_time_s}")));
    }
    params.validate()?;
    let er = recoil_energy(params);
    let width = lowest_band_width(depth_recoils) * er / PLANCK;
    let j = 0.25 * width;
    let depth_j = depth_recoils * er;
    Ok(LatticeDepthReport {
        depth_recoils,
        recoil_energy_j: er,
        recoil_temperature_uk: er / BOLTZMANN * 1e6,
        depth_j,
        depth_uk: depth_j / BOLTZMANN * 1e6,
        band_width_hz: width,
        tunneling_rate_hz: j,
        tunneling_time_s: 1.0 / j,
        analytic_tunneling_rate_hz: analytic_tunneling(depth_recoils) * er / PLANCK,
        hold_time_s,
        hold_survival: bessel_j0(2.0 * TWO_PI * j * hold_time_s).powi(2),
        no_lattice: depth_recoils == 0.0,
    })
}

/// Lattice photon scattering rate (Hz) at trap depth `depth_uk`.
///
/// Two-level estimate from ¹S₀–¹P₁ in the rotating-wave form:
/// Γ_sc = (Γ/|Δ|)·U/ħ with Γ = 1/τ and Δ the lattice detuning from the line.
pub fn scattering_rate(depth_uk: f64, params: &AtomParams) -> Result<f64> {
    positive("lattice depth", depth_uk)?;
    params.validate()?;
    let gamma = 1.0 / params.lifetime_1p1_s;
    let w0 = TWO_PI * SPEED_OF_LIGHT / params.wavelength_1s0_1p1_m;
    let wl = TWO_PI * SPEED_OF_LIGHT / params.wavelength_lattice_m;
    let u = depth_uk * 1e-6 * BOLTZMANN;
    Ok(gamma / (wl - w0).abs() * u / HBAR)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVerdict {
    pub b0_t: f64,
    pub safety_factor: f64,
    /// Gradient-induced field spread from the gradients and lattice extent.
    pub field_range_t: f64,
    /// The same spread from enumerating every site.
    pub scanned_range_t: f64,
    /// B0 / (safety × range); at least 1 passes.
    pub margin: f64,
    /// Planner output for this lattice fits under B0 with the safety factor.
    pub planned_fits: bool,
    pub eq1_holds: bool,
    pub pass: bool,
}

pub fn bias_field_check(
    geom: &LatticeGeometry,
    config: &GradientConfig,
    params: &AtomParams,
    settings: &PlannerSettings,
) -> Result<BiasVerdict> {
    geom.validate()?;
    let range = config.field_range(geom);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in geom.sites() {
        let b = addressing::site_field(geom, config, s)?;
        lo = lo.min(b);
        hi = hi.max(b);
    }
    let scanned = hi - lo;
    let margin = if range > 0.0 {
        config.b0_t / (settings.safety_factor * range)
    } else if config.b0_t > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let planned_fits = addressing::plan_gradients(geom, 1e3, params, settings)
        .map(|p| settings.safety_factor * p.field_range(geom) <= config.b0_t)
        .unwrap_or(false);
    let eq1_holds = addressing::validate_gradients(geom, config).eq1_holds;
    Ok(BiasVerdict {
        b0_t: config.b0_t,
        safety_factor: settings.safety_factor,
        field_range_t: range,
        scanned_range_t: scanned,
        margin,
        planned_fits,
        eq1_holds,
        pass: config.b0_t > 0.0 && margin >= 1.0 && planned_fits,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceBudget {
    pub total_duration_s: f64,
    pub atom_count: usize,
    /// Σ time in ³P₂ over atoms, s.
    pub metastable_exposure_s: f64,
    pub survival_3p2: f64,
    pub survival_scattering: f64,
    pub survival_tunneling: f64,
    pub survival: f64,
}

/// Product of channel survivals for every atom of the schedule.
pub fn decoherence_budget(schedule: &PulseSchedule, noise: &NoiseParams) -> Result<DecoherenceBudget> {
    noise.validate()?;
    let t = schedule.total_duration_s();
    let n = schedule.active_sites.len();
    let exposure = schedule.metastable_exposure_s();
    let s3 = (-noise.decay_rate_3p2() * exposure).exp();
    let ssc = (-noise.scattering_rate_hz * n as f64 * t).exp();
    let stu = (-noise.tunneling_loss_rate_hz * n as f64 * t).exp();
    Ok(DecoherenceBudget {
        total_duration_s: t,
        atom_count: n,
        metastable_exposure_s: exposure,
        survival_3p2: s3,
        survival_scattering: ssc,
        survival_tunneling: stu,
        survival: s3 * ssc * stu,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceKind {
    /// |computed/target − 1| ≤ tolerance.
    Relative,
    /// target/tolerance ≤ computed ≤ target·tolerance.
    Factor,
    AtLeast,
    AtMost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportItem {
    pub quantity: String,
    pub unit: String,
    pub computed: f64,
    pub paper_target: f64,
    pub tolerance: f64,
    pub tolerance_kind: ToleranceKind,
    pub pass: bool,
}

impl ReportItem {
    pub fn new(quantity: &str, unit: &str, computed: f64, target: f64, tolerance: f64, kind: ToleranceKind) -> Self {
        let pass = match kind {
            ToleranceKind::Relative => (computed / target - 1.0).abs() <= tolerance,
            ToleranceKind::Factor => computed >= target / tolerance && computed <= target * tolerance,
            ToleranceKind::AtLeast => computed >= target,
            ToleranceKind::AtMost => computed <= target,
        };
        ReportItem {
            quantity: quantity.into(),
            unit: unit.into(),
            computed,
            paper_target: target,
            tolerance,
            tolerance_kind: kind,
            pass,
        }
    }
}

/// A quantity shown beside the checks without a pass/fail verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoItem {
    pub quantity: String,
    pub unit: String,
    pub value: f64,
    pub note: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityInputs {
    pub t_pi_s: f64,
    pub depth_recoils: f64,
    pub hold_time_s: f64,
    pub geometry: LatticeGeometry,
    pub target_gap_hz: f64,
    pub bias_t: f64,
}

impl FeasibilityInputs {
    pub fn paper_defaults(params: &AtomParams) -> Self {
        FeasibilityInputs {
            t_pi_s: 100e-6,
            depth_recoils: 50.0,
            hold_time_s: 5.0,
            geometry: LatticeGeometry {
                n_x: 10,
                n_y: 10,
                n_z: 10,
                spacing_m: params.lattice_constant(),
            },
            target_gap_hz: 1e3,
            bias_t: 100.0 * GAUSS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub pi_pulse_intensity_w_per_m2: f64,
    pub recoil_energy_j: f64,
    pub recoil_energy_uk: f64,
    pub required_depth_uk: f64,
    pub tunneling_rate_hz: f64,
    pub scattering_rate_hz: f64,
    pub lattice: LatticeDepthReport,
    pub gradients: GradientConfig,
    pub bias: BiasVerdict,
    pub items: Vec<ReportItem>,
    pub info: Vec<InfoItem>,
}

impl FeasibilityReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }
}

pub fn feasibility_report(params: &AtomParams, inputs: &FeasibilityInputs) -> Result<FeasibilityReport> {
    use ToleranceKind::*;
    let settings = PlannerSettings::default();
    let intensity = pi_pulse_intensity(inputs.t_pi_s, params.linewidth_1s0_3p2_hz, params.wavelength_1s0_3p2_m)?;
    let lattice = lattice_depth_report(inputs.depth_recoils, params, inputs.hold_time_s)?;
    let scatter = scattering_rate(lattice.depth_uk, params)?;
    let plane = LatticeGeometry { n_z: 1, ..inputs.geometry };
    let planned = addressing::plan_gradients(&plane, inputs.target_gap_hz, params, &settings)?;
    let mut gradients = addressing::plan_gradients(&inputs.geometry, inputs.target_gap_hz, params, &settings)?;
    gradients.b0_t = inputs.bias_t;
    let bias = bias_field_check(&inputs.geometry, &gradients, params, &settings)?;

    let items = vec![
        ReportItem::new("pi_pulse_intensity", "W/m^2", intensity, 4.82e4, 0.20, Relative),
        ReportItem::new("lattice_depth", "uK", lattice.depth_uk, 10.0, 0.15, Relative),
        ReportItem::new("scattering_rate", "Hz", scatter, 0.2, 3.0, Factor),
        ReportItem::new("tunneling_time", "s", lattice.tunneling_time_s, inputs.hold_time_s, 0.0, AtLeast),
        ReportItem::new("gradient_x", "G/cm", planned.gx_t_per_m / GAUSS_PER_CM, 10.0, 0.25, Relative),
        ReportItem::new("gradient_y", "G/cm", planned.gy_t_per_m / GAUSS_PER_CM, 100.0, 0.25, Relative),
        ReportItem::new("bias_margin", "ratio", bias.margin, 1.0, 0.0, AtLeast),
    ];
    let idle = (-scatter * inputs.hold_time_s).exp();
    let info = vec![
        InfoItem {
            quantity: "scattering_survival_over_hold".into(),
            unit: "probability".into(),
            value: idle,
            note: format!(
                "exp(-rate x {} s); the quoted scattering rate and the multi-second operating time are in tension",
                inputs.hold_time_s
            ),
        },
        InfoItem {
            quantity: "hold_site_survival".into(),
            unit: "probability".into(),
            value: lattice.hold_survival,
            note: "coherent tunneling in an untilted lattice over the hold time".into(),
        },
        InfoItem {
            quantity: "analytic_tunneling_rate".into(),
            unit: "Hz".into(),
            value: lattice.analytic_tunneling_rate_hz,
            note: "deep-lattice approximation".into(),
        },
    ];
    Ok(FeasibilityReport {
        pi_pulse_intensity_w_per_m2: intensity,
        recoil_energy_j: lattice.recoil_energy_j,
        recoil_energy_uk: lattice.recoil_temperature_uk,
        required_depth_uk: lattice.depth_uk,
        tunneling_rate_hz: lattice.tunneling_rate_hz,
        scattering_rate_hz: scatter,
        lattice,
        gradients,
        bias,
        items,
        info,
    })
}
