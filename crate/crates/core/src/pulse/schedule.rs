use serde::{Deserialize, Serialize};

use crate::addressing::{GradientConfig, Site};
use crate::error::{Error, Result};

use super::register::Level;

/// Coupling driven by one laser or RF tone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Transition {
    /// ¹S₀ sublevel to ³P₂ sublevel at 507 nm.
    Optical { ground: Level, excited: Level },
    /// Direct ¹S₀ m_I = −1/2 ↔ +1/2 (nuclear-spin RF).
    GroundRf,
    /// One frequency on all three Δm_F = +1 steps of the F = 3/2 ladder.
    Ladder,
    /// Effective m_F = −3/2 ↔ +3/2 coupling with the intermediate levels eliminated.
    AuxiliaryPair,
}

impl Transition {
    /// (lower, upper) level pair of each step the tone drives.
    pub fn edges(&self) -> Result<Vec<(Level, Level)>> {
        Ok(match *self {
            Transition::Optical { ground, excited } => {
                if !ground.is_ground() || !excited.is_metastable() {
                    return Err(Error::Config(format!(
                        "optical tone must couple a ground level to a 3P2 level, got {ground:?}-{excited:?}"
                    )));
                }
                vec![(ground, excited)]
            }
            Transition::GroundRf => vec![(Level::GroundMinus, Level::GroundPlus)],
            Transition::Ladder => vec![
                (Level::AuxM32, Level::AuxM12),
                (Level::AuxM12, Level::AuxP12),
                (Level::AuxP12, Level::AuxP32),
            ],
            Transition::AuxiliaryPair => vec![(Level::AuxM32, Level::AuxP32)],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub transition: Transition,
    /// Peak Rabi frequency of each driven step, rad/s.
    pub rabi_rad_per_s: f64,
    /// Offset of the tone from resonance at the target field, rad/s.
    pub detuning_rad_per_s: f64,
    pub phase_rad: f64,
}

impl Tone {
    pub fn resonant(transition: Transition, rabi_rad_per_s: f64) -> Self {
        Tone {
            transition,
            rabi_rad_per_s,
            detuning_rad_per_s: 0.0,
            phase_rad: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Envelope {
    Square,
    /// Blackman window, scaled so its pulse area equals the square pulse's.
    Blackman,
}

impl Envelope {
    /// Envelope at fractional time u ∈ [0, 1], normalized to unit mean.
    pub fn value(self, u: f64) -> f64 {
        match self {
            Envelope::Square => 1.0,
            Envelope::Blackman => {
                let c = std::f64::consts::TAU * u;
                (0.42 - 0.5 * c.cos() + 0.08 * (2.0 * c).cos()) / 0.42
            }
        }
    }
}

/// Where the tone frequencies are referenced. The light reaches every atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// Resonant at the bias field B0.
    All,
    /// Resonant at the field of layer k (x = y = 0 column).
    Layer(usize),
    Site(Site),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub tones: Vec<Tone>,
    pub duration_s: f64,
    pub envelope: Envelope,
    pub target: Target,
}

impl Pulse {
    pub fn idle(duration_s: f64) -> Self {
        Pulse {
            tones: Vec::new(),
            duration_s,
            envelope: Envelope::Square,
            target: Target::All,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    ToMetastable,
    ToGround,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SegmentKind {
    GradientSet,
    Idle,
    Transfer { site: Site, direction: Direction },
    /// Global transfer with gradients off, before readout.
    TransferAll { direction: Direction },
    LayerTransfer { layer: usize, direction: Direction },
    /// Resonant ¹S₀ light that ejects every ground-state atom.
    BlowAway,
    SingleQubit { site: Site, angle_rad: f64, axis_phase_rad: f64 },
    CnotPulse { control: Site, target: Site },
    /// Software frame update: phase on the logical-1 levels of one atom.
    VirtualZ { site: Site, phase_rad: f64 },
    /// Detection of one atom; handled by the executor, not the integrator.
    Detect { site: Site, returned: u8 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub gradient: GradientConfig,
    pub pulse: Pulse,
    /// Sites held in ³P₂ during the segment with the fraction of its duration spent there.
    pub metastable: Vec<(Site, f64)>,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.pulse.duration_s
    }

    pub fn gradient_set(gradient: GradientConfig) -> Self {
        Segment {
            kind: SegmentKind::GradientSet,
            gradient,
            pulse: Pulse::idle(0.0),
            metastable: Vec::new(),
        }
    }

    pub fn idle(gradient: GradientConfig, duration_s: f64, metastable: Vec<(Site, f64)>) -> Self {
        Segment {
            kind: SegmentKind::Idle,
            gradient,
            pulse: Pulse::idle(duration_s),
            metastable,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub active_sites: Vec<Site>,
    pub segments: Vec<Segment>,
}

impl PulseSchedule {
    pub fn total_duration_s(&self) -> f64 {
        self.segments.iter().map(Segment::duration_s).sum()
    }

    /// Σ over segments and sites of the time spent in ³P₂, atom-seconds.
    pub fn metastable_exposure_s(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.duration_s() * s.metastable.iter().map(|(_, w)| w).sum::<f64>())
            .sum()
    }
}

/// Loss and decoherence channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// ³P₂ lifetime; infinite disables the channel.
    pub lifetime_3p2_s: f64,
    /// Lattice photon scattering per atom, Hz.
    pub scattering_rate_hz: f64,
    /// Loss from tunneling out of the addressed site, Hz.
    pub tunneling_loss_rate_hz: f64,
    /// Branching ratio of ¹P₁ into the ³D states per scattered photon.
    pub branching_1p1: f64,
    pub detection_time_s: f64,
    /// Photons scattered per second during imaging.
    pub detection_photon_rate_hz: f64,
}

impl NoiseParams {
    pub fn off() -> Self {
        NoiseParams {
            lifetime_3p2_s: f64::INFINITY,
            scattering_rate_hz: 0.0,
            tunneling_loss_rate_hz: 0.0,
            branching_1p1: 0.0,
            detection_time_s: 0.0,
            detection_photon_rate_hz: 0.0,
        }
    }

    pub fn decay_rate_3p2(&self) -> f64 {
        if self.lifetime_3p2_s.is_finite() {
            1.0 / self.lifetime_3p2_s
        } else {
            0.0
        }
    }

    pub fn is_off(&self) -> bool {
        self.decay_rate_3p2() == 0.0 && self.scattering_rate_hz == 0.0 && self.tunneling_loss_rate_hz == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lifetime_3p2_s > 0.0
            && self.scattering_rate_hz >= 0.0
            && self.tunneling_loss_rate_hz >= 0.0
            && (0.0..=1.0).contains(&self.branching_1p1)
            && self.detection_time_s >= 0.0
            && self.detection_photon_rate_hz >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid noise parameters {self:?}")))
        }
    }
}

impl Default for NoiseParams {
    /// 15 s ³P₂ lifetime, 0.2 Hz lattice scattering, 1 ms imaging at 10⁷ photons/s.
    fn default() -> Self {
        NoiseParams {
            lifetime_3p2_s: 15.0,
            scattering_rate_hz: 0.2,
            tunneling_loss_rate_hz: 0.0,
            branching_1p1: 1e-7,
            detection_time_s: 1e-3,
            detection_photon_rate_hz: 1e7,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blackman_has_unit_mean() {
        let n = 100_000;
        let mean: f64 = (0..n).map(|k| Envelope::Blackman.value((k as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 1e-9);
        assert!(Envelope::Blackman.value(0.0).abs() < 1e-12);
    }

    #[test]
    fn optical_tone_validates_levels() {
        let bad = Transition::Optical { ground: Level::AuxM32, excited: Level::AuxP32 };
        assert!(bad.edges().is_err());
        assert_eq!(Transition::Ladder.edges().unwrap().len(), 3);
    }

    #[test]
    fn schedule_round_trips_through_json() {
        let g = GradientConfig::from_gauss(100.0, 10.0, 100.0, 0.0);
        let mut seg = Segment::idle(g, 1e-3, vec![(Site::new(0, 0, 0), 1.0)]);
        seg.pulse.tones.push(Tone::resonant(Transition::Ladder, 1e5));
        let s = PulseSchedule { active_sites: vec![Site::new(0, 0, 0)], segments: vec![seg] };
        let back: PulseSchedule = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!((s.metastable_exposure_s() - 1e-3).abs() < 1e-18);
    }
}
