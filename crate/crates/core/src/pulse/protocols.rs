use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addressing::{self, AddressedTransition, GradientConfig, Site};
use crate::atomic::{self, AtomParams};
use crate::constants::TWO_PI;
use crate::dipole::{self, DipoleSpec};
use crate::error::{Error, Result};

use super::engine::Engine;
use super::register::{Complex, Level, RegisterState, N_LEVELS};
use super::schedule::{Direction, Envelope, NoiseParams, Pulse, Segment, SegmentKind, Target, Tone, Transition};

const PI: f64 = std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferParams {
    pub duration_s: f64,
    pub envelope: Envelope,
    /// Required ratio of the resonance gap (Hz) to the pulse bandwidth 1/duration.
    pub resolvability_multiple: f64,
}

impl Default for TransferParams {
    fn default() -> Self {
        TransferParams {
            duration_s: 1e-3,
            envelope: Envelope::Square,
            resolvability_multiple: 1.0,
        }
    }
}

impl TransferParams {
    fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) || !(self.resolvability_multiple >= 0.0) {
            return Err(Error::Config(format!("invalid transfer parameters {self:?}")));
        }
        Ok(())
    }
}

fn optical(bit: u8) -> Transition {
    Transition::Optical { ground: Level::ground(bit), excited: Level::aux(bit) }
}

/// Simultaneous π-pulses on both stretched ¹S₀ ↔ ³P₂ lines.
pub fn qubit_transfer_pulse(target: Target, tp: &TransferParams) -> Pulse {
    let rabi = PI / tp.duration_s;
    Pulse {
        tones: vec![Tone::resonant(optical(1), rabi), Tone::resonant(optical(0), rabi)],
        duration_s: tp.duration_s,
        envelope: tp.envelope,
        target,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub site: Site,
    pub direction: Direction,
    pub duration_s: f64,
    pub rabi_rad_per_s: f64,
    /// Phase of the logical-1 amplitude relative to logical 0 added by the transfer.
    pub relative_phase_rad: f64,
    /// Mean population transferred from the two logical states of an isolated atom.
    pub transfer_fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSelectReport {
    pub layer: usize,
    /// Smallest retained population among atoms of the selected layer.
    pub selected_survival: f64,
    /// Largest retained population among atoms outside the layer.
    pub selection_error: f64,
}

/// Rotation about an equatorial axis of the auxiliary qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub angle_rad: f64,
    pub axis_phase_rad: f64,
}

/// Three-photon drive settings for one field and Rabi frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderDrive {
    pub field_t: f64,
    pub rabi_rad_per_s: f64,
    pub delta1_rad_per_s: f64,
    pub delta2_rad_per_s: f64,
    /// Ω³/(4Δ₁Δ₂), signed.
    pub omega_eff_formula_rad_per_s: f64,
    /// Splitting of the two a/d dressed states at the compensated resonance.
    pub omega_eff_rad_per_s: f64,
    /// Drive offset that cancels the differential light shift of a and d.
    pub detuning_rad_per_s: f64,
}

fn ladder_hamiltonian(d1: f64, d2: f64, rabi: f64, delta: f64) -> Matrix4<f64> {
    let c = 0.5 * rabi;
    Matrix4::new(
        0.0, c, 0.0, 0.0, //
        c, d1 - delta, c, 0.0, //
        0.0, c, -d2 - 2.0 * delta, c, //
        0.0, 0.0, c, -3.0 * delta,
    )
}

/// Dressed states with the most a + d weight, as (eigenvalue, weight on a, weight on d), lower first.
fn qubit_pair(d1: f64, d2: f64, rabi: f64, delta: f64) -> [(f64, f64, f64); 2] {
    let eig = ladder_hamiltonian(d1, d2, rabi, delta).symmetric_eigen();
    let mut v: Vec<(f64, f64, f64)> = (0..4)
        .map(|k| {
            let col = eig.eigenvectors.column(k);
            (eig.eigenvalues[k], col[0] * col[0], col[3] * col[3])
        })
        .collect();
    v.sort_by(|x, y| (y.1 + y.2).total_cmp(&(x.1 + x.2)));
    let (mut lo, mut hi) = (v[0], v[1]);
    if lo.0 > hi.0 {
        std::mem::swap(&mut lo, &mut hi);
    }
    [lo, hi]
}

/// Finds the drive detuning that minimizes the a/d dressed-state splitting
/// (the light-shift-compensated three-photon resonance) and that splitting.
pub fn ladder_drive(params: &AtomParams, field_t: f64, rabi_rad_per_s: f64) -> Result<LadderDrive> {
    if !(rabi_rad_per_s > 0.0) || !rabi_rad_per_s.is_finite() {
        return Err(Error::Config(format!("ladder Rabi frequency must be positive, got {rabi_rad_per_s}")));
    }
    let det = atomic::three_photon_detunings(params, field_t)?;
    let (d1, d2) = (det.delta1, det.delta2);
    let formula = rabi_rad_per_s.powi(3) / (4.0 * d1 * d2);
    let guess = 0.25 * rabi_rad_per_s * rabi_rad_per_s * (1.0 / d1 + 1.0 / d2) / 3.0;
    let splitting = |delta: f64| {
        let [lo, hi] = qubit_pair(d1, d2, rabi_rad_per_s, delta);
        hi.0 - lo.0
    };
    let span = 10.0 * formula.abs() + guess.abs();
    let (mut a, mut b) = (guess - span, guess + span);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - r * (b - a), a + r * (b - a));
    let (mut f1, mut f2) = (splitting(x1), splitting(x2));
    for _ in 0..200 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = splitting(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = splitting(x2);
        }
        if b - a <= 1e-12 * span {
            break;
        }
    }
    let delta = 0.5 * (a + b);
    if (delta - guess).abs() > 0.99 * span {
        return Err(Error::Domain(format!(
            "no three-photon resonance found for Ω = {rabi_rad_per_s} rad/s at {field_t} T"
        )));
    }
    Ok(LadderDrive {
        field_t,
        rabi_rad_per_s,
        delta1_rad_per_s: d1,
        delta2_rad_per_s: d2,
        omega_eff_formula_rad_per_s: formula,
        omega_eff_rad_per_s: splitting(delta),
        detuning_rad_per_s: delta,
    })
}

impl LadderDrive {
    /// Laser phase that puts the effective a ↔ d coupling on `axis_phase`.
    ///
    /// Three photons carry 3φ; the intermediate denominators add the phase of
    /// 1/((E_a − E_b)(E_a − E_c)).
    pub fn laser_phase(&self, axis_phase: f64) -> f64 {
        let eb = self.delta1_rad_per_s - self.detuning_rad_per_s;
        let ec = -self.delta2_rad_per_s - 2.0 * self.detuning_rad_per_s;
        let denom_phase = if eb * ec >= 0.0 { 0.0 } else { PI };
        (axis_phase - denom_phase) / 3.0
    }

    pub fn pulse(&self, site: Site, rotation: Rotation) -> Pulse {
        Pulse {
            tones: vec![Tone {
                transition: Transition::Ladder,
                rabi_rad_per_s: self.rabi_rad_per_s,
                detuning_rad_per_s: self.detuning_rad_per_s,
                phase_rad: self.laser_phase(rotation.axis_phase_rad),
            }],
            duration_s: rotation.angle_rad.abs() / self.omega_eff_rad_per_s,
            envelope: Envelope::Square,
            target: Target::Site(site),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub site: Site,
    pub field_t: f64,
    pub target_angle_rad: f64,
    pub duration_s: f64,
    pub rabi_rad_per_s: f64,
    pub delta1_rad_per_s: f64,
    pub delta2_rad_per_s: f64,
    pub light_shift_compensation_rad_per_s: f64,
    pub omega_eff_formula_rad_per_s: f64,
    pub omega_eff_rad_per_s: f64,
    /// Phase added to logical 1 after the pulse.
    pub frame_correction_rad: f64,
    pub gate_fidelity: f64,
    /// Rotation angle inferred from the a → d transfer of an isolated atom, in [0, π].
    pub achieved_rotation_rad: f64,
    pub flip_probability: f64,
    pub expected_flip_probability: f64,
    /// Largest b + c population sampled during the pulse.
    pub leakage_peak: f64,
    pub leakage_final: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatePlan {
    pub drive: LadderDrive,
    pub pulse: Segment,
    /// Zero-duration frame update that cancels the light-shift phase.
    pub correction: Segment,
    pub frame_correction_rad: f64,
    /// |Tr(R†U)|²/4 on the auxiliary qubit for an isolated atom.
    pub gate_fidelity: f64,
    pub flip_probability: f64,
    pub achieved_rotation_rad: f64,
    pub leakage_peak: f64,
    pub leakage_final: f64,
}

impl GatePlan {
    pub fn report(&self, site: Site, rotation: Rotation) -> GateReport {
        let d = &self.drive;
        let mut warnings = Vec::new();
        let dmin = d.delta1_rad_per_s.abs().min(d.delta2_rad_per_s.abs());
        if d.rabi_rad_per_s > 0.1 * dmin {
            warnings.push(format!(
                "Rabi frequency {:.3e} rad/s exceeds 0.1 x min|Delta| = {:.3e} rad/s; effective model unreliable",
                d.rabi_rad_per_s,
                0.1 * dmin
            ));
        }
        GateReport {
            site,
            field_t: d.field_t,
            target_angle_rad: rotation.angle_rad,
            duration_s: self.pulse.duration_s(),
            rabi_rad_per_s: d.rabi_rad_per_s,
            delta1_rad_per_s: d.delta1_rad_per_s,
            delta2_rad_per_s: d.delta2_rad_per_s,
            light_shift_compensation_rad_per_s: d.detuning_rad_per_s,
            omega_eff_formula_rad_per_s: d.omega_eff_formula_rad_per_s,
            omega_eff_rad_per_s: d.omega_eff_rad_per_s,
            frame_correction_rad: self.frame_correction_rad,
            gate_fidelity: self.gate_fidelity,
            achieved_rotation_rad: self.achieved_rotation_rad,
            flip_probability: self.flip_probability,
            expected_flip_probability: (0.5 * rotation.angle_rad).sin().powi(2),
            leakage_peak: self.leakage_peak,
            leakage_final: self.leakage_final,
            warnings,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CnotOptions {
    /// Rabi frequency of the π-pulse; defaults to a tenth of the conditional shift.
    pub pulse_rabi_rad_per_s: Option<f64>,
    /// Permit neighbours that are not along the quantization axis.
    pub allow_off_axis: bool,
    /// Overrides the engine's dipole scaling for this gate.
    pub dipole_scale: Option<f64>,
}

/// Interaction-resolved target line for a control/target pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnotDesign {
    pub theta_rad: f64,
    /// Dipole energies of |00⟩, |01⟩, |10⟩, |11⟩ in Hz, scaled.
    pub levels_hz: [f64; 4],
    pub shift_hz: f64,
    pub unscaled_shift_hz: f64,
    pub pulse_rabi_rad_per_s: f64,
    pub detuning_rad_per_s: f64,
    pub duration_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnotReport {
    pub control: Site,
    pub target: Site,
    pub design: CnotDesign,
    /// P(output | input), rows are inputs |00⟩, |01⟩, |10⟩, |11⟩ (control first).
    pub truth_table: [[f64; 4]; 4],
    pub truth_table_fidelity: f64,
    pub p10_to_11: f64,
    pub p00_to_01: f64,
    /// Off-resonant Rabi prediction for |00⟩ → |01⟩.
    pub p00_to_01_formula: f64,
    pub mean_survival: f64,
    /// Whether the flip depends on the control state.
    pub conditional: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub site: Site,
    pub returned_state: u8,
    pub outcome: u8,
    pub probability_returned: f64,
    pub scattered_photons: f64,
    /// Probability the atom survives imaging without branching into ³D.
    pub fluorescence_survival: f64,
    pub branching_loss: f64,
    /// Branching loss above 1 %.
    pub branching_flag: bool,
}

impl Engine {
    /// Fails unless every stretched-line gap to the other register atoms exceeds
    /// the configured multiple of the pulse bandwidth.
    pub fn check_resolvable(
        &self,
        site: Site,
        others: &[Site],
        gradient: &GradientConfig,
        tp: &TransferParams,
    ) -> Result<()> {
        let need = tp.resolvability_multiple / tp.duration_s;
        let b = addressing::site_field(&self.geom, gradient, site)?;
        for tr in [AddressedTransition::stretched(&self.params), AddressedTransition::stretched_minus(&self.params)] {
            let f = tr.frequency(&self.params, b)?;
            for &o in others.iter().filter(|&&o| o != site) {
                let fo = tr.frequency(&self.params, addressing::site_field(&self.geom, gradient, o)?)?;
                let gap = (f - fo).abs();
                if gap < need {
                    return Err(Error::Addressing(site, o, gap, need));
                }
            }
        }
        Ok(())
    }

    /// One-site transfer segment. `held` lists sites already parked in ³P₂.
    pub fn transfer_segment(
        &self,
        site: Site,
        direction: Direction,
        gradient: &GradientConfig,
        tp: &TransferParams,
        others: &[Site],
        held: &[Site],
    ) -> Result<Segment> {
        tp.validate()?;
        self.check_resolvable(site, others, gradient, tp)?;
        let mut metastable = vec![(site, 0.5)];
        metastable.extend(held.iter().filter(|&&s| s != site).map(|&s| (s, 1.0)));
        Ok(Segment {
            kind: SegmentKind::Transfer { site, direction },
            gradient: *gradient,
            pulse: qubit_transfer_pulse(Target::Site(site), tp),
            metastable,
        })
    }

    fn isolated_transfer(&self, seg: &Segment, site: Site, direction: Direction, frame: f64) -> Result<(f64, f64)> {
        type Map = fn(u8) -> Level;
        let (from, to): (Map, Map) = match direction {
            Direction::ToMetastable => (Level::ground, Level::aux),
            Direction::ToGround => (Level::aux, Level::ground),
        };
        let mut out = [Complex::new(0.0, 0.0); 2];
        for bit in 0..2u8 {
            let mut r = RegisterState::product(&[site], &[from(bit)], frame)?;
            self.evolve(&mut r, seg, &NoiseParams::off())?;
            out[bit as usize] = r.amplitude(&[to(bit)]);
        }
        let fidelity = 0.5 * (out[0].norm_sqr() + out[1].norm_sqr());
        Ok(((out[1] / out[0]).arg(), fidelity))
    }

    /// Moves the qubits at `sites` between ¹S₀ and ³P₂, one site after another.
    pub fn transfer(
        &self,
        reg: &mut RegisterState,
        sites: &[Site],
        direction: Direction,
        gradient: &GradientConfig,
        tp: &TransferParams,
        noise: &NoiseParams,
    ) -> Result<Vec<TransferReport>> {
        let mut reports = Vec::with_capacity(sites.len());
        let segments = sites
            .iter()
            .map(|&s| {
                reg.atom_index(s)?;
                self.transfer_segment(s, direction, gradient, tp, reg.sites(), &[])
            })
            .collect::<Result<Vec<_>>>()?;
        for (seg, &site) in segments.iter().zip(sites) {
            let (phase, fidelity) = self.isolated_transfer(seg, site, direction, reg.frame_field_t())?;
            self.apply_segment(reg, seg, noise)?;
            reports.push(TransferReport {
                site,
                direction,
                duration_s: tp.duration_s,
                rabi_rad_per_s: PI / tp.duration_s,
                relative_phase_rad: phase,
                transfer_fidelity: fidelity,
            });
        }
        Ok(reports)
    }

    /// Transfer, blow-away and return segments that keep only layer `layer`.
    pub fn layer_selection_segments(
        &self,
        layer: usize,
        gradient: &GradientConfig,
        tp: &TransferParams,
    ) -> Result<Vec<Segment>> {
        tp.validate()?;
        if layer >= self.geom.n_z {
            return Err(Error::SiteOutOfRange { site: Site::new(0, 0, layer), dims: self.geom.dims() });
        }
        let gz = gradient.z_only();
        let mk = |direction| Segment {
            kind: SegmentKind::LayerTransfer { layer, direction },
            gradient: gz,
            pulse: qubit_transfer_pulse(Target::Layer(layer), tp),
            metastable: Vec::new(),
        };
        let blow = Segment {
            kind: SegmentKind::BlowAway,
            gradient: gz,
            pulse: Pulse::idle(0.0),
            metastable: Vec::new(),
        };
        Ok(vec![mk(Direction::ToMetastable), blow, mk(Direction::ToGround)])
    }

    pub fn select_layer(
        &self,
        reg: &mut RegisterState,
        layer: usize,
        gradient: &GradientConfig,
        tp: &TransferParams,
        noise: &NoiseParams,
    ) -> Result<LayerSelectReport> {
        for seg in self.layer_selection_segments(layer, gradient, tp)? {
            self.apply_segment(reg, &seg, noise)?;
        }
        let mut selected_survival: f64 = 1.0;
        let mut selection_error: f64 = 0.0;
        for &s in reg.sites() {
            let kept = reg.survival() - reg.population(s, Level::Lost)?;
            if s.k == layer {
                selected_survival = selected_survival.min(kept);
            } else {
                selection_error = selection_error.max(kept);
            }
        }
        Ok(LayerSelectReport { layer, selected_survival, selection_error })
    }

    fn require_auxiliary(&self, reg: &RegisterState, site: Site) -> Result<()> {
        let total = reg.survival() - reg.population(site, Level::Lost)?;
        let qubit = reg.population(site, Level::AuxM32)? + reg.population(site, Level::AuxP32)?;
        if total - qubit > 1e-2 * total.max(f64::MIN_POSITIVE) {
            return Err(Error::ProtocolOrder(format!(
                "atom at {site:?} is not in the 3P2 auxiliary qubit ({:.3e} outside); transfer it first",
                total - qubit
            )));
        }
        Ok(())
    }

    /// Ladder pulse and frame correction for a rotation at the site's field.
    ///
    /// An isolated atom is propagated from both qubit states to measure the
    /// differential light-shift phase, which the trailing virtual-Z segment removes.
    pub fn plan_single_qubit(
        &self,
        site: Site,
        rotation: Rotation,
        gradient: &GradientConfig,
        rabi_rad_per_s: f64,
        held: &[Site],
        frame_field_t: f64,
    ) -> Result<GatePlan> {
        if !rotation.angle_rad.is_finite() || !rotation.axis_phase_rad.is_finite() {
            return Err(Error::Config(format!("invalid rotation {rotation:?}")));
        }
        let field = addressing::site_field(&self.geom, gradient, site)?;
        let drive = ladder_drive(&self.params, field, rabi_rad_per_s)?;
        let mut metastable = vec![(site, 1.0)];
        metastable.extend(held.iter().filter(|&&s| s != site).map(|&s| (s, 1.0)));
        let pulse = Segment {
            kind: SegmentKind::SingleQubit {
                site,
                angle_rad: rotation.angle_rad,
                axis_phase_rad: rotation.axis_phase_rad,
            },
            gradient: *gradient,
            pulse: drive.pulse(site, rotation),
            metastable,
        };

        let mid = |r: &RegisterState| r.probability(&[Level::AuxM12]) + r.probability(&[Level::AuxP12]);
        let mut from_a = RegisterState::product(&[site], &[Level::AuxM32], frame_field_t)?;
        let mut peak: f64 = 0.0;
        self.evolve_observed(&mut from_a, &pulse, &NoiseParams::off(), 2000, &mut |_, r| {
            peak = peak.max(mid(r));
        })?;
        let mut from_d = RegisterState::product(&[site], &[Level::AuxP32], frame_field_t)?;
        self.evolve(&mut from_d, &pulse, &NoiseParams::off())?;
        let m_aa = from_a.amplitude(&[Level::AuxM32]);
        let m_da = from_a.amplitude(&[Level::AuxP32]);
        let m_ad = from_d.amplitude(&[Level::AuxM32]);
        let m_dd = from_d.amplitude(&[Level::AuxP32]);
        let phi = rotation.axis_phase_rad;
        let zeta = if m_aa.norm() + m_dd.norm() >= m_ad.norm() + m_da.norm() {
            (m_aa * m_dd.conj()).arg()
        } else {
            2.0 * phi - (m_da * m_ad.conj()).arg()
        };
        let z = Complex::from_polar(1.0, zeta);
        let (c, sn) = ((0.5 * rotation.angle_rad).cos(), (0.5 * rotation.angle_rad).sin());
        let mi = Complex::new(0.0, -1.0);
        // Tr(R† M') with M' = diag(1, e^{iζ}) M.
        let overlap = c * m_aa
            + (mi * Complex::from_polar(sn, phi)).conj() * z * m_da
            + (mi * Complex::from_polar(sn, -phi)).conj() * m_ad
            + c * z * m_dd;
        let leakage_final = mid(&from_a);
        let kept = m_aa.norm_sqr() + m_da.norm_sqr();
        Ok(GatePlan {
            drive,
            correction: Segment {
                kind: SegmentKind::VirtualZ { site, phase_rad: zeta },
                gradient: *gradient,
                pulse: Pulse::idle(0.0),
                metastable: Vec::new(),
            },
            pulse,
            frame_correction_rad: zeta,
            gate_fidelity: 0.25 * overlap.norm_sqr(),
            flip_probability: m_da.norm_sqr(),
            achieved_rotation_rad: 2.0 * (m_da.norm_sqr() / kept.max(f64::MIN_POSITIVE)).sqrt().min(1.0).asin(),
            leakage_peak: peak.max(leakage_final),
            leakage_final,
        })
    }

    /// Three-photon rotation of the auxiliary qubit at `site`.
    pub fn single_qubit_gate(
        &self,
        reg: &mut RegisterState,
        site: Site,
        rotation: Rotation,
        gradient: &GradientConfig,
        rabi_rad_per_s: f64,
        noise: &NoiseParams,
    ) -> Result<GateReport> {
        self.require_auxiliary(reg, site)?;
        let plan = self.plan_single_qubit(site, rotation, gradient, rabi_rad_per_s, &[], reg.frame_field_t())?;
        self.apply_segment(reg, &plan.pulse, noise)?;
        self.apply_segment(reg, &plan.correction, noise)?;
        Ok(plan.report(site, rotation))
    }

    /// Pair geometry, shifted line and π-pulse for a CNOT.
    pub fn cnot_design(
        &self,
        control: Site,
        target: Site,
        gradient: &GradientConfig,
        opts: &CnotOptions,
    ) -> Result<CnotDesign> {
        self.geom.check_site(control)?;
        self.geom.check_site(target)?;
        let d = [
            control.i.abs_diff(target.i),
            control.j.abs_diff(target.j),
            control.k.abs_diff(target.k),
        ];
        if d.iter().sum::<usize>() != 1 {
            return Err(Error::Geometry(format!("{control:?} and {target:?} are not nearest neighbours")));
        }
        if d[2] != 1 && !opts.allow_off_axis {
            return Err(Error::Geometry(format!(
                "{control:?} and {target:?} are not adjacent along the quantization axis"
            )));
        }
        let scale = opts.dipole_scale.unwrap_or(self.dipole_scale);
        let mc = self.level_moments(addressing::site_field(&self.geom, gradient, control)?)?;
        let mt = self.level_moments(addressing::site_field(&self.geom, gradient, target)?)?;
        let (pc, pt) = (self.geom.position(control), self.geom.position(target));
        let mut bare = [0.0; 4];
        for (idx, v) in bare.iter_mut().enumerate() {
            let (c, t) = ((idx >> 1) as u8, (idx & 1) as u8);
            *v = dipole::ddi_energy(
                &DipoleSpec { moment: mc[Level::aux(c).index()], position: pc },
                &DipoleSpec { moment: mt[Level::aux(t).index()], position: pt },
            )?;
        }
        let shift_of = |l: &[f64; 4]| (l[3] - l[2]) - (l[1] - l[0]);
        let levels_hz = bare.map(|v| v * scale);
        let unscaled = shift_of(&bare);
        let rabi = opts.pulse_rabi_rad_per_s.unwrap_or(TWO_PI * unscaled.abs() / 10.0);
        if !(rabi > 0.0) || !rabi.is_finite() {
            return Err(Error::Config(format!("CNOT pulse Rabi frequency must be positive, got {rabi}")));
        }
        let sep = [pt[0] - pc[0], pt[1] - pc[1], pt[2] - pc[2]];
        let r = sep.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(CnotDesign {
            theta_rad: (sep[2] / r).acos(),
            levels_hz,
            shift_hz: shift_of(&levels_hz),
            unscaled_shift_hz: unscaled,
            pulse_rabi_rad_per_s: rabi,
            detuning_rad_per_s: TWO_PI * (levels_hz[3] - levels_hz[2]),
            duration_s: PI / rabi,
        })
    }

    pub fn cnot_segment(
        &self,
        control: Site,
        target: Site,
        gradient: &GradientConfig,
        opts: &CnotOptions,
        held: &[Site],
    ) -> Result<(Segment, CnotDesign)> {
        let design = self.cnot_design(control, target, gradient, opts)?;
        let mut metastable = vec![(control, 1.0), (target, 1.0)];
        metastable.extend(held.iter().filter(|&&s| s != control && s != target).map(|&s| (s, 1.0)));
        let seg = Segment {
            kind: SegmentKind::CnotPulse { control, target },
            gradient: *gradient,
            pulse: Pulse {
                tones: vec![Tone {
                    detuning_rad_per_s: design.detuning_rad_per_s,
                    ..Tone::resonant(Transition::AuxiliaryPair, design.pulse_rabi_rad_per_s)
                }],
                duration_s: design.duration_s,
                envelope: Envelope::Square,
                target: Target::Site(target),
            },
            metastable,
        };
        Ok((seg, design))
    }

    /// Conditional flip of `target` on the dipole-shifted |1x⟩ line.
    pub fn cnot(
        &self,
        reg: &mut RegisterState,
        control: Site,
        target: Site,
        gradient: &GradientConfig,
        opts: &CnotOptions,
        noise: &NoiseParams,
    ) -> Result<CnotReport> {
        self.require_auxiliary(reg, control)?;
        self.require_auxiliary(reg, target)?;
        let (seg, design) = self.cnot_segment(control, target, gradient, opts, &[])?;
        let mut eng = self.clone();
        eng.dipole_scale = opts.dipole_scale.unwrap_or(self.dipole_scale);

        let mut table = [[0.0; 4]; 4];
        let mut survival = 0.0;
        for (input, row) in table.iter_mut().enumerate() {
            let (c, t) = ((input >> 1) as u8, (input & 1) as u8);
            let mut r = RegisterState::product(&[control, target], &[Level::aux(c), Level::aux(t)], reg.frame_field_t())?;
            eng.evolve(&mut r, &seg, noise)?;
            for (out, p) in row.iter_mut().enumerate() {
                *p = r.probability(&[Level::aux((out >> 1) as u8), Level::aux((out & 1) as u8)]);
            }
            survival += 0.25 * r.survival();
        }
        let fidelity = 0.25 * (table[0][0] + table[1][1] + table[2][3] + table[3][2]);
        let omega = design.pulse_rabi_rad_per_s;
        let delta = TWO_PI * design.shift_hz;
        let w = (omega * omega + delta * delta).sqrt();
        let formula = (omega / w).powi(2) * (0.5 * w * design.duration_s).sin().powi(2);

        eng.apply_segment(reg, &seg, noise)?;
        Ok(CnotReport {
            control,
            target,
            design,
            truth_table: table,
            truth_table_fidelity: fidelity,
            p10_to_11: table[2][3],
            p00_to_01: table[0][1],
            p00_to_01_formula: formula,
            mean_survival: survival,
            conditional: table[2][3] - table[0][1] > 0.5,
        })
    }
}

/// Projective readout of the atom at `site` onto logical `returned`.
///
/// The outcome is `returned` when the fluorescence projector fires and the
/// other bit otherwise. A seed is required so that every run is reproducible.
pub fn measure_qubit(
    reg: &mut RegisterState,
    site: Site,
    noise: &NoiseParams,
    returned: u8,
    seed: Option<u64>,
) -> Result<(u8, MeasurementReport)> {
    let seed = seed.ok_or_else(|| Error::Config("measurement requires an explicit RNG seed".into()))?;
    measure_with_rng(reg, site, noise, returned, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn measure_with_rng<R: Rng + ?Sized>(
    reg: &mut RegisterState,
    site: Site,
    noise: &NoiseParams,
    returned: u8,
    rng: &mut R,
) -> Result<(u8, MeasurementReport)> {
    noise.validate()?;
    if returned > 1 {
        return Err(Error::Config(format!("returned state must be 0 or 1, got {returned}")));
    }
    let atom = reg.atom_index(site)?;
    let total = reg.survival();
    if !(total > 0.0) {
        return Err(Error::Domain("register has no surviving population to measure".into()));
    }
    let fires = |lv: usize| lv == Level::ground(returned).index() || lv == Level::aux(returned).index();
    let p: f64 = (0..reg.dim())
        .filter(|&i| fires(reg.level_of(i, atom)))
        .map(|i| reg.amplitudes()[i].norm_sqr())
        .sum::<f64>()
        / total;
    let detected = rng.random::<f64>() < p;
    let keep: Vec<bool> = (0..reg.dim()).map(|i| fires(reg.level_of(i, atom)) == detected).collect();
    let amps = reg.amplitudes_mut();
    for (a, &k) in amps.iter_mut().zip(&keep) {
        if !k {
            *a = Complex::new(0.0, 0.0);
        }
    }
    let kept = amps.norm_squared();
    if kept > 0.0 {
        *amps *= Complex::new((total / kept).sqrt(), 0.0);
    }
    let outcome = if detected { returned } else { 1 - returned };
    let photons = noise.detection_photon_rate_hz * noise.detection_time_s;
    let fluor = (1.0 - noise.branching_1p1).powf(photons);
    Ok((
        outcome,
        MeasurementReport {
            site,
            returned_state: returned,
            outcome,
            probability_returned: p,
            scattered_photons: photons,
            fluorescence_survival: fluor,
            branching_loss: 1.0 - fluor,
            branching_flag: 1.0 - fluor > 0.01,
        },
    ))
}

/// Single-atom state α|lo⟩ + β|hi⟩ padded to the full level set.
pub fn qubit_state(lo: Level, hi: Level, alpha: Complex, beta: Complex) -> [Complex; N_LEVELS] {
    let mut s = [Complex::new(0.0, 0.0); N_LEVELS];
    s[lo.index()] = alpha;
    s[hi.index()] = beta;
    s
}
