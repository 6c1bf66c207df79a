use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::addressing::{self, GradientConfig, LatticeGeometry, Site};
use crate::atomic::{self, AtomParams, HalfInt};
use crate::constants::TWO_PI;
use crate::dipole::{self, DipoleSpec};
use crate::error::{Error, Result};

use super::register::{Complex, Level, RegisterState, N_LEVELS};
use super::schedule::{Envelope, NoiseParams, Pulse, Segment, SegmentKind, Target, Transition};

/// Shaped envelopes are sampled at no fewer than this many points.
pub const MIN_SHAPED_STEPS: usize = 200;

/// Largest allowed ‖U†U − I‖ (max entry) for a noiseless step.
pub const UNITARITY_TOLERANCE: f64 = 1e-6;

/// Propagates register states through pulse segments.
///
/// Up to two atoms the full Hamiltonian is exponentiated exactly on each step.
/// Larger registers use a symmetric split between the single-atom drives and
/// the diagonal dipole coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Engine {
    pub params: AtomParams,
    pub geom: LatticeGeometry,
    /// Upper bound on the integration step, s. `None` lets square pulses run in one step.
    pub max_step_s: Option<f64>,
    /// Multiplies every dipole-dipole energy; 0 disables the interaction.
    pub dipole_scale: f64,
}

impl Engine {
    pub fn new(params: AtomParams, geom: LatticeGeometry) -> Result<Self> {
        params.validate()?;
        geom.validate()?;
        Ok(Engine {
            params,
            geom,
            max_step_s: None,
            dipole_scale: 1.0,
        })
    }

    /// Level energies in Hz at `field_t`, indexed by `Level::index`. LOST sits at 0.
    pub fn level_energies(&self, field_t: f64) -> Result<[f64; N_LEVELS]> {
        let mut e = [0.0; N_LEVELS];
        for l in Level::ALL {
            e[l.index()] = match (l, l.twice_m()) {
                (Level::GroundMinus | Level::GroundPlus, Some(t)) => {
                    atomic::ground_energy(&self.params, HalfInt::from_twice(t), field_t)?
                }
                (_, Some(t)) => {
                    atomic::excited_energy(&self.params, self.params.f32_level(HalfInt::from_twice(t)), field_t)?
                }
                (_, None) => 0.0,
            };
        }
        Ok(e)
    }

    /// Magnetic moment projections (J/T) of each level at `field_t`.
    pub fn level_moments(&self, field_t: f64) -> Result<[f64; N_LEVELS]> {
        let mut m = [0.0; N_LEVELS];
        for l in Level::ALL {
            m[l.index()] = match (l, l.twice_m()) {
                (Level::GroundMinus | Level::GroundPlus, Some(t)) => {
                    atomic::ground_moment(&self.params, HalfInt::from_twice(t))
                }
                (_, Some(t)) => {
                    atomic::excited_moment(&self.params, self.params.f32_level(HalfInt::from_twice(t)), field_t)?
                }
                (_, None) => 0.0,
            };
        }
        Ok(m)
    }

    pub fn target_field(&self, gradient: &GradientConfig, target: Target) -> Result<f64> {
        match target {
            Target::All => Ok(gradient.b0_t),
            Target::Layer(k) => addressing::site_field(&self.geom, gradient, Site::new(0, 0, k)),
            Target::Site(s) => addressing::site_field(&self.geom, gradient, s),
        }
    }

    /// Angular frequency of each level's pulse frame relative to the global frame.
    fn pulse_frame(&self, pulse: &Pulse, gradient: &GradientConfig, frame: &[f64; N_LEVELS]) -> Result<[f64; N_LEVELS]> {
        let mut constraints = Vec::new();
        if !pulse.tones.is_empty() {
            let e = self.level_energies(self.target_field(gradient, pulse.target)?)?;
            for tone in &pulse.tones {
                let ladder = matches!(tone.transition, Transition::Ladder);
                for (a, b) in tone.transition.edges()? {
                    let (ia, ib) = (a.index(), b.index());
                    let omega = if ladder {
                        TWO_PI * (e[Level::AuxP32.index()] - e[Level::AuxM32.index()]) / 3.0
                    } else {
                        TWO_PI * (e[ib] - e[ia])
                    } + tone.detuning_rad_per_s;
                    constraints.push((ia, ib, omega - TWO_PI * (frame[ib] - frame[ia])));
                }
            }
        }
        let mut g: [Option<f64>; N_LEVELS] = [None; N_LEVELS];
        g[Level::Lost.index()] = Some(0.0);
        loop {
            let mut progress = false;
            for &(a, b, d) in &constraints {
                match (g[a], g[b]) {
                    (Some(ga), None) => {
                        g[b] = Some(ga + d);
                        progress = true;
                    }
                    (None, Some(gb)) => {
                        g[a] = Some(gb - d);
                        progress = true;
                    }
                    (Some(ga), Some(gb)) => {
                        if (gb - ga - d).abs() > 1e-6 * d.abs().max(1.0) {
                            return Err(Error::Config(
                                "tones in one pulse imply inconsistent level frequencies".into(),
                            ));
                        }
                    }
                    (None, None) => {}
                }
            }
            if !progress {
                match constraints.iter().find(|(a, b, _)| g[*a].is_none() && g[*b].is_none()) {
                    Some(&(a, _, _)) => g[a] = Some(0.0),
                    None => break,
                }
            }
        }
        Ok(g.map(|x| x.unwrap_or(0.0)))
    }

    /// Single-atom pulse-frame Hamiltonian (rad/s) at envelope value `v`.
    fn site_hamiltonian(
        &self,
        pulse: &Pulse,
        diag: &[Complex; N_LEVELS],
        v: f64,
    ) -> Result<DMatrix<Complex>> {
        let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
        for tone in &pulse.tones {
            let c = Complex::from_polar(0.5 * v * tone.rabi_rad_per_s, tone.phase_rad);
            for (a, b) in tone.transition.edges()? {
                h[(b.index(), a.index())] += c;
                h[(a.index(), b.index())] += c.conj();
            }
        }
        Ok(h)
    }

    /// Applies one segment. Detection segments need the executor's RNG and are rejected here.
    pub fn apply_segment(&self, reg: &mut RegisterState, seg: &Segment, noise: &NoiseParams) -> Result<()> {
        match seg.kind {
            SegmentKind::Detect { .. } => Err(Error::ProtocolOrder(
                "detection segments are run by the schedule executor".into(),
            )),
            SegmentKind::GradientSet => Ok(()),
            SegmentKind::VirtualZ { site, phase_rad } => {
                let atom = reg.atom_index(site)?;
                let n = reg.n_atoms();
                let shift = Complex::from_polar(1.0, phase_rad);
                for (idx, a) in reg.amplitudes_mut().iter_mut().enumerate() {
                    if Level::ALL[level_digit(idx, atom, n)].logical() == Some(1) {
                        *a *= shift;
                    }
                }
                Ok(())
            }
            SegmentKind::BlowAway => {
                self.evolve(reg, seg, noise)?;
                blow_away(reg);
                Ok(())
            }
            _ => self.evolve(reg, seg, noise),
        }
    }

    pub fn evolve(&self, reg: &mut RegisterState, seg: &Segment, noise: &NoiseParams) -> Result<()> {
        self.evolve_observed(reg, seg, noise, 0, &mut |_, _| {})
    }

    /// Like [`Engine::evolve`], calling `observer(τ, state)` after each of at
    /// least `min_steps` steps. Mid-pulse amplitudes are in the pulse frame,
    /// so only populations are meaningful there.
    pub fn evolve_observed(
        &self,
        reg: &mut RegisterState,
        seg: &Segment,
        noise: &NoiseParams,
        min_steps: usize,
        observer: &mut dyn FnMut(f64, &RegisterState),
    ) -> Result<()> {
        noise.validate()?;
        let pulse = &seg.pulse;
        let duration = pulse.duration_s;
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(Error::Config(format!("pulse duration must be finite and non-negative, got {duration}")));
        }
        if duration == 0.0 {
            return Ok(());
        }
        for t in &pulse.tones {
            if !t.rabi_rad_per_s.is_finite() || !t.detuning_rad_per_s.is_finite() || !t.phase_rad.is_finite() {
                return Err(Error::Config(format!("non-finite tone parameters {t:?}")));
            }
        }
        if let Some(dt) = self.max_step_s {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("integration step must be positive, got {dt}")));
            }
        }

        let frame = self.level_energies(reg.frame_field_t())?;
        let g = self.pulse_frame(pulse, &seg.gradient, &frame)?;

        let n = reg.n_atoms();
        let mut diags = Vec::with_capacity(n);
        let mut fields = Vec::with_capacity(n);
        for &s in reg.sites() {
            let b = addressing::site_field(&self.geom, &seg.gradient, s)?;
            let e = self.level_energies(b)?;
            let mut d = [Complex::new(0.0, 0.0); N_LEVELS];
            for l in Level::ALL {
                let i = l.index();
                let mut loss = 0.0;
                if l != Level::Lost {
                    loss += noise.scattering_rate_hz + noise.tunneling_loss_rate_hz;
                }
                if l.is_metastable() {
                    loss += noise.decay_rate_3p2();
                }
                d[i] = Complex::new(TWO_PI * (e[i] - frame[i]) - g[i], -0.5 * loss);
            }
            diags.push(d);
            fields.push(b);
        }
        let interaction = self.interaction_diagonal(reg, &fields)?;

        let steps = {
            let by_dt = self.max_step_s.map_or(1, |dt| (duration / dt).ceil() as usize).max(1);
            let shaped = if pulse.envelope == Envelope::Square { 1 } else { MIN_SHAPED_STEPS };
            by_dt.max(shaped).max(min_steps)
        };
        let h = duration / steps as f64;
        let check = if noise.is_off() { Check::Unitary } else { Check::Contractive };

        let mut cached: Option<Propagator> = None;
        for step in 0..steps {
            let v = pulse.envelope.value((step as f64 + 0.5) / steps as f64);
            if cached.is_none() || pulse.envelope != Envelope::Square {
                let locals = diags
                    .iter()
                    .map(|d| self.site_hamiltonian(pulse, d, v))
                    .collect::<Result<Vec<_>>>()?;
                cached = Some(Propagator::build(&locals, &interaction, h, check)?);
            }
            let before = reg.survival();
            cached.as_ref().unwrap().apply(reg.amplitudes_mut(), n);
            let after = reg.survival();
            reg.add_leaked(before - after);
            observer((step + 1) as f64 * h, reg);
        }

        let amps = reg.amplitudes_mut();
        for idx in 0..amps.len() {
            let phase: f64 = (0..n).map(|a| g[level_digit(idx, a, n)]).sum::<f64>() * duration;
            amps[idx] *= Complex::from_polar(1.0, -phase);
        }
        reg.advance_time(duration);
        Ok(())
    }

    /// Diagonal dipole-dipole energies (rad/s) over the product basis.
    fn interaction_diagonal(&self, reg: &RegisterState, fields: &[f64]) -> Result<Vec<f64>> {
        let n = reg.n_atoms();
        let mut out = vec![0.0; reg.dim()];
        if n < 2 || self.dipole_scale == 0.0 {
            return Ok(out);
        }
        let moments = fields.iter().map(|&b| self.level_moments(b)).collect::<Result<Vec<_>>>()?;
        let pos: Vec<[f64; 3]> = reg.sites().iter().map(|&s| self.geom.position(s)).collect();
        for p in 0..n {
            for q in p + 1..n {
                let mut table = [[0.0; N_LEVELS]; N_LEVELS];
                for (lp, row) in table.iter_mut().enumerate() {
                    for (lq, v) in row.iter_mut().enumerate() {
                        let e = dipole::ddi_energy(
                            &DipoleSpec { moment: moments[p][lp], position: pos[p] },
                            &DipoleSpec { moment: moments[q][lq], position: pos[q] },
                        )?;
                        *v = TWO_PI * self.dipole_scale * e;
                    }
                }
                for (idx, o) in out.iter_mut().enumerate() {
                    *o += table[level_digit(idx, p, n)][level_digit(idx, q, n)];
                }
            }
        }
        Ok(out)
    }
}

fn level_digit(idx: usize, atom: usize, n: usize) -> usize {
    (idx / N_LEVELS.pow((n - 1 - atom) as u32)) % N_LEVELS
}

#[derive(Clone, Copy)]
enum Check {
    Unitary,
    Contractive,
}

enum Propagator {
    Dense(DMatrix<Complex>),
    /// Half-step interaction phases around a product of single-atom propagators.
    Split { half: Vec<Complex>, locals: Vec<DMatrix<Complex>> },
}

fn expm_step(h_mat: &DMatrix<Complex>, dt: f64, check: Check) -> Result<DMatrix<Complex>> {
    let u = (h_mat * Complex::new(0.0, -dt)).exp();
    let gram = u.adjoint() * &u;
    let id = DMatrix::<Complex>::identity(u.nrows(), u.ncols());
    let deviation = match check {
        Check::Unitary => (gram - id).iter().map(|z| z.norm()).fold(0.0, nan_max),
        Check::Contractive => gram.diagonal().iter().map(|z| z.re - 1.0).fold(0.0, nan_max),
    };
    if !(deviation <= UNITARITY_TOLERANCE) {
        return Err(Error::Integrator { deviation, dt });
    }
    Ok(u)
}

/// Maximum that keeps NaN, so a blown-up step cannot pass the check.
fn nan_max(a: f64, b: f64) -> f64 {
    if b.is_nan() || b > a {
        b
    } else {
        a
    }
}

fn kron(a: &DMatrix<Complex>, b: &DMatrix<Complex>) -> DMatrix<Complex> {
    a.kronecker(b)
}

impl Propagator {
    fn build(locals: &[DMatrix<Complex>], interaction: &[f64], dt: f64, check: Check) -> Result<Self> {
        if locals.len() <= 2 {
            let id = DMatrix::<Complex>::identity(N_LEVELS, N_LEVELS);
            let mut h = if locals.len() == 1 {
                locals[0].clone()
            } else {
                kron(&locals[0], &id) + kron(&id, &locals[1])
            };
            for (i, v) in interaction.iter().enumerate() {
                h[(i, i)] += Complex::new(*v, 0.0);
            }
            Ok(Propagator::Dense(expm_step(&h, dt, check)?))
        } else {
            let locals = locals.iter().map(|h| expm_step(h, dt, check)).collect::<Result<Vec<_>>>()?;
            let half = interaction.iter().map(|v| Complex::from_polar(1.0, -0.5 * v * dt)).collect();
            Ok(Propagator::Split { half, locals })
        }
    }

    fn apply(&self, psi: &mut DVector<Complex>, n: usize) {
        match self {
            Propagator::Dense(u) => *psi = u * &*psi,
            Propagator::Split { half, locals } => {
                psi.component_mul_assign(&DVector::from_column_slice(half));
                for (atom, u) in locals.iter().enumerate() {
                    apply_local(psi, u, atom, n);
                }
                psi.component_mul_assign(&DVector::from_column_slice(half));
            }
        }
    }
}

fn apply_local(psi: &mut DVector<Complex>, u: &DMatrix<Complex>, atom: usize, n: usize) {
    let stride = N_LEVELS.pow((n - 1 - atom) as u32);
    let block = stride * N_LEVELS;
    let mut tmp = [Complex::new(0.0, 0.0); N_LEVELS];
    for outer in (0..psi.len()).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (r, t) in tmp.iter_mut().enumerate() {
                *t = (0..N_LEVELS).map(|c| u[(r, c)] * psi[base + c * stride]).sum();
            }
            for (r, t) in tmp.iter().enumerate() {
                psi[base + r * stride] = *t;
            }
        }
    }
}

/// Ejects every ground-state atom into LOST.
///
/// Each atom is treated in turn. For every configuration of the other atoms the
/// ground and LOST weights of that atom are merged into LOST, keeping the phase
/// of the largest contributor. Populations are exact; coherence between the
/// ejected branches is discarded, as scattering would do.
pub fn blow_away(reg: &mut RegisterState) {
    let n = reg.n_atoms();
    let amps = reg.amplitudes_mut();
    for atom in 0..n {
        let stride = N_LEVELS.pow((n - 1 - atom) as u32);
        let block = stride * N_LEVELS;
        for outer in (0..amps.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                let idx = [Level::GroundMinus, Level::GroundPlus, Level::Lost].map(|l| base + l.index() * stride);
                let weight: f64 = idx.iter().map(|&i| amps[i].norm_sqr()).sum();
                let lead = idx
                    .iter()
                    .copied()
                    .max_by(|&a, &b| amps[a].norm_sqr().total_cmp(&amps[b].norm_sqr()))
                    .unwrap();
                let phase = amps[lead].arg();
                for &i in &idx {
                    amps[i] = Complex::new(0.0, 0.0);
                }
                amps[idx[2]] = Complex::from_polar(weight.sqrt(), phase);
            }
        }
    }
}
