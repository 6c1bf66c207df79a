use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::addressing::Site;
use crate::error::{Error, Result};

pub type Complex = nalgebra::Complex<f64>;

/// Internal levels of one atom.
///
/// Logical 0 is ¹S₀ m_I = −1/2 or ³P₂ m_F = −3/2; logical 1 is m_I = +1/2 or m_F = +3/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    GroundMinus,
    GroundPlus,
    AuxM32,
    AuxM12,
    AuxP12,
    AuxP32,
    /// Absorbing: atoms removed by blow-away or branching decay.
    Lost,
}

pub const N_LEVELS: usize = 7;
pub const MAX_ATOMS: usize = 4;

impl Level {
    pub const ALL: [Level; N_LEVELS] = [
        Level::GroundMinus,
        Level::GroundPlus,
        Level::AuxM32,
        Level::AuxM12,
        Level::AuxP12,
        Level::AuxP32,
        Level::Lost,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_ground(self) -> bool {
        matches!(self, Level::GroundMinus | Level::GroundPlus)
    }

    pub fn is_metastable(self) -> bool {
        matches!(self, Level::AuxM32 | Level::AuxM12 | Level::AuxP12 | Level::AuxP32)
    }

    /// Twice the m_I (ground) or m_F (³P₂) quantum number.
    pub fn twice_m(self) -> Option<i32> {
        match self {
            Level::GroundMinus => Some(-1),
            Level::GroundPlus => Some(1),
            Level::AuxM32 => Some(-3),
            Level::AuxM12 => Some(-1),
            Level::AuxP12 => Some(1),
            Level::AuxP32 => Some(3),
            Level::Lost => None,
        }
    }

    pub fn logical(self) -> Option<u8> {
        match self {
            Level::GroundMinus | Level::AuxM32 => Some(0),
            Level::GroundPlus | Level::AuxP32 => Some(1),
            _ => None,
        }
    }

    pub fn ground(bit: u8) -> Level {
        if bit == 0 {
            Level::GroundMinus
        } else {
            Level::GroundPlus
        }
    }

    pub fn aux(bit: u8) -> Level {
        if bit == 0 {
            Level::AuxM32
        } else {
            Level::AuxP32
        }
    }
}

/// State vector of the active atoms over `N_LEVELS^n` product states.
///
/// Atom 0 is the most significant digit of the basis index. Amplitudes live in
/// a global frame that rotates with each level's energy at `frame_field_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegisterState {
    sites: Vec<Site>,
    amplitudes: DVector<Complex>,
    leaked: f64,
    frame_field_t: f64,
    time_s: f64,
}

fn check_sites(sites: &[Site]) -> Result<()> {
    if sites.is_empty() || sites.len() > MAX_ATOMS {
        return Err(Error::Config(format!(
            "register holds 1..={MAX_ATOMS} atoms, got {}",
            sites.len()
        )));
    }
    for (n, s) in sites.iter().enumerate() {
        if sites[..n].contains(s) {
            return Err(Error::Config(format!("site {s:?} listed twice")));
        }
    }
    Ok(())
}

impl RegisterState {
    /// Product state with each atom in the given level.
    pub fn product(sites: &[Site], levels: &[Level], frame_field_t: f64) -> Result<Self> {
        if levels.len() != sites.len() {
            return Err(Error::Config("one level per site required".into()));
        }
        let states: Vec<[Complex; N_LEVELS]> = levels
            .iter()
            .map(|l| {
                let mut a = [Complex::new(0.0, 0.0); N_LEVELS];
                a[l.index()] = Complex::new(1.0, 0.0);
                a
            })
            .collect();
        Self::from_atom_states(sites, &states, frame_field_t)
    }

    /// Product of single-atom states. The amplitudes are used as given.
    pub fn from_atom_states(
        sites: &[Site],
        states: &[[Complex; N_LEVELS]],
        frame_field_t: f64,
    ) -> Result<Self> {
        check_sites(sites)?;
        if states.len() != sites.len() {
            return Err(Error::Config("one state per site required".into()));
        }
        let mut amps = DVector::from_element(1, Complex::new(1.0, 0.0));
        for st in states {
            let next = DVector::from_fn(amps.len() * N_LEVELS, |idx, _| {
                amps[idx / N_LEVELS] * st[idx % N_LEVELS]
            });
            amps = next;
        }
        let norm = amps.norm_squared();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("register state must be normalized, |psi|^2 = {norm}")));
        }
        Ok(RegisterState {
            sites: sites.to_vec(),
            amplitudes: amps,
            leaked: 0.0,
            frame_field_t,
            time_s: 0.0,
        })
    }

    /// Arbitrary (entangled) amplitudes over the full product basis.
    pub fn from_amplitudes(sites: &[Site], amplitudes: Vec<Complex>, frame_field_t: f64) -> Result<Self> {
        check_sites(sites)?;
        if amplitudes.len() != N_LEVELS.pow(sites.len() as u32) {
            return Err(Error::Config("amplitude vector has the wrong dimension".into()));
        }
        let amplitudes = DVector::from_vec(amplitudes);
        let norm = amplitudes.norm_squared();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("register state must be normalized, |psi|^2 = {norm}")));
        }
        Ok(RegisterState {
            sites: sites.to_vec(),
            amplitudes,
            leaked: 0.0,
            frame_field_t,
            time_s: 0.0,
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn n_atoms(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex> {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut DVector<Complex> {
        &mut self.amplitudes
    }

    pub fn frame_field_t(&self) -> f64 {
        self.frame_field_t
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub(crate) fn advance_time(&mut self, dt: f64) {
        self.time_s += dt;
    }

    /// Probability mass lost to decay and scattering so far.
    pub fn leaked(&self) -> f64 {
        self.leaked
    }

    pub(crate) fn add_leaked(&mut self, mass: f64) {
        self.leaked += mass;
    }

    /// ‖ψ‖², the probability that no atom has left the modelled levels.
    pub fn survival(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// |‖ψ‖² + leaked − 1|.
    pub fn norm_defect(&self) -> f64 {
        (self.survival() + self.leaked - 1.0).abs()
    }

    pub fn atom_index(&self, site: Site) -> Result<usize> {
        self.sites
            .iter()
            .position(|&s| s == site)
            .ok_or_else(|| Error::Config(format!("site {site:?} is not in the register")))
    }

    /// Level of atom `atom` in basis state `idx`.
    pub fn level_of(&self, idx: usize, atom: usize) -> usize {
        let stride = N_LEVELS.pow((self.n_atoms() - 1 - atom) as u32);
        (idx / stride) % N_LEVELS
    }

    pub fn index_of(&self, levels: &[Level]) -> usize {
        levels.iter().fold(0, |acc, l| acc * N_LEVELS + l.index())
    }

    pub fn amplitude(&self, levels: &[Level]) -> Complex {
        self.amplitudes[self.index_of(levels)]
    }

    pub fn probability(&self, levels: &[Level]) -> f64 {
        self.amplitude(levels).norm_sqr()
    }

    /// Population of `level` on the atom at `site`.
    pub fn population(&self, site: Site, level: Level) -> Result<f64> {
        let atom = self.atom_index(site)?;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(idx, _)| self.level_of(*idx, atom) == level.index())
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Reduced density matrix of one atom (unnormalized, trace = ‖ψ‖²).
    pub fn reduced(&self, site: Site) -> Result<[[Complex; N_LEVELS]; N_LEVELS]> {
        let atom = self.atom_index(site)?;
        let stride = N_LEVELS.pow((self.n_atoms() - 1 - atom) as u32);
        let mut rho = [[Complex::new(0.0, 0.0); N_LEVELS]; N_LEVELS];
        for idx in 0..self.dim() {
            let a = self.level_of(idx, atom);
            let base = idx - a * stride;
            for (b, r) in rho[a].iter_mut().enumerate() {
                *r += self.amplitudes[idx] * self.amplitudes[base + b * stride].conj();
            }
        }
        Ok(rho)
    }
}
