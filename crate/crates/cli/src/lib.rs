//! Scenario files, CSV/JSON emitters and the pipeline driver behind the `ybqc` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ybqc::addressing::{self, AddressedTransition, PlannerSettings};
use ybqc::atomic::{self, HalfInt};
use ybqc::constants::{BOHR_MAGNETON, GAUSS, GAUSS_PER_CM, NUCLEAR_MAGNETON};
use ybqc::dipole::{self, DipoleSpec, LogicalMoments};
use ybqc::feasibility::{self, FeasibilityInputs, FeasibilityReport};
use ybqc::pulse::{self, CompileOptions, CompiledCircuit, Gate, Level, MeasurementReport, NoiseParams};
use ybqc::{AtomParams, GradientConfig, LatticeGeometry, Site};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ybqc::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for bad input, 3 for failures inside the physics modules.
    pub fn exit_code(&self) -> i32 {
        use ybqc::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Model(e) => match e {
                E::Config(_) | E::Parse { .. } | E::Topology(_) | E::Geometry(_) | E::SiteOutOfRange { .. } => 2,
                _ => 3,
            },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSection {
    pub hyperfine_a_hz: Option<f64>,
    /// Recalibrate A so that |Δ₁| equals this value at `calibration_field_gauss`.
    pub calibrate_delta1_hz: Option<f64>,
    pub calibration_field_gauss: Option<f64>,
    pub nuclear_moment_mu_n: Option<f64>,
    pub lifetime_3p2_s: Option<f64>,
    pub linewidth_3p2_hz: Option<f64>,
    pub lattice_wavelength_nm: Option<f64>,
    pub linear_zeeman: Option<bool>,
}

impl AtomSection {
    pub fn params(&self) -> Result<AtomParams> {
        let d = AtomParams::default();
        let mut p = AtomParams {
            hyperfine_a_3p2_hz: self.hyperfine_a_hz.unwrap_or(d.hyperfine_a_3p2_hz),
            nuclear_moment_mu_n: self.nuclear_moment_mu_n.unwrap_or(d.nuclear_moment_mu_n),
            lifetime_3p2_s: self.lifetime_3p2_s.unwrap_or(d.lifetime_3p2_s),
            linewidth_1s0_3p2_hz: self.linewidth_3p2_hz.unwrap_or(d.linewidth_1s0_3p2_hz),
            wavelength_lattice_m: self.lattice_wavelength_nm.map_or(d.wavelength_lattice_m, |x| x * 1e-9),
            linear_zeeman: self.linear_zeeman.unwrap_or(d.linear_zeeman),
            ..d
        };
        p.validate()?;
        match (self.calibrate_delta1_hz, self.calibration_field_gauss) {
            (Some(target), field) => {
                let b = field.unwrap_or(650.0) * GAUSS;
                p.hyperfine_a_3p2_hz = atomic::calibrate_hyperfine_a(&p, b, target)?;
            }
            (None, Some(_)) => {
                return Err(CliError::Config("atom.calibration_field_gauss needs atom.calibrate_delta1_hz".into()))
            }
            (None, None) => {}
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub n_x: usize,
    pub n_y: usize,
    #[serde(default = "one")]
    pub n_z: usize,
    pub spacing_nm: Option<f64>,
}

fn one() -> usize {
    1
}

impl LatticeSection {
    pub fn geometry(&self, params: &AtomParams) -> Result<LatticeGeometry> {
        let spacing = self.spacing_nm.map_or(params.lattice_constant(), |x| x * 1e-9);
        Ok(LatticeGeometry::new(self.n_x, self.n_y, self.n_z, spacing)?)
    }
}

/// Explicit gradients, or a target resonance gap for the planner when they are omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientSection {
    pub b0_gauss: Option<f64>,
    pub gx_gauss_per_cm: Option<f64>,
    pub gy_gauss_per_cm: Option<f64>,
    pub gz_gauss_per_cm: Option<f64>,
    pub target_gap_hz: Option<f64>,
}

impl GradientSection {
    pub fn config(&self, geom: &LatticeGeometry, params: &AtomParams) -> Result<GradientConfig> {
        let explicit = [self.b0_gauss, self.gx_gauss_per_cm, self.gy_gauss_per_cm, self.gz_gauss_per_cm];
        if explicit.iter().all(Option::is_none) {
            let gap = self.target_gap_hz.unwrap_or(1e3);
            return Ok(addressing::plan_gradients(geom, gap, params, &PlannerSettings::default())?);
        }
        if self.target_gap_hz.is_some() {
            return Err(CliError::Config("gradient.target_gap_hz cannot be combined with explicit gradients".into()));
        }
        let b0 = self.b0_gauss.ok_or_else(|| CliError::Config("gradient.b0_gauss is required".into()))?;
        if !(b0 > 0.0) {
            return Err(CliError::Config(format!("gradient.b0_gauss must be positive, got {b0}")));
        }
        Ok(GradientConfig::from_gauss(
            b0,
            self.gx_gauss_per_cm.unwrap_or(0.0),
            self.gy_gauss_per_cm.unwrap_or(0.0),
            self.gz_gauss_per_cm.unwrap_or(0.0),
        ))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Switch every loss channel off.
    pub disabled: Option<bool>,
    pub lifetime_3p2_s: Option<f64>,
    pub scattering_rate_hz: Option<f64>,
    pub tunneling_loss_rate_hz: Option<f64>,
    pub branching_1p1_per_photon: Option<f64>,
    pub detection_time_s: Option<f64>,
    pub detection_photon_rate_hz: Option<f64>,
}

impl NoiseSection {
    pub fn params(&self) -> Result<NoiseParams> {
        let d = if self.disabled == Some(true) { NoiseParams::off() } else { NoiseParams::default() };
        let n = NoiseParams {
            lifetime_3p2_s: self.lifetime_3p2_s.unwrap_or(d.lifetime_3p2_s),
            scattering_rate_hz: self.scattering_rate_hz.unwrap_or(d.scattering_rate_hz),
            tunneling_loss_rate_hz: self.tunneling_loss_rate_hz.unwrap_or(d.tunneling_loss_rate_hz),
            branching_1p1: self.branching_1p1_per_photon.unwrap_or(d.branching_1p1),
            detection_time_s: self.detection_time_s.unwrap_or(d.detection_time_s),
            detection_photon_rate_hz: self.detection_photon_rate_hz.unwrap_or(d.detection_photon_rate_hz),
        };
        n.validate()?;
        Ok(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    /// Relative paths resolve against the scenario file's directory.
    pub path: PathBuf,
    pub seed: Option<u64>,
    /// ¹S₀ logical state of each active atom at the start, in schedule order.
    pub initial_bits: Option<Vec<u8>>,
    /// Multiplier on the dipole-dipole energies (0 disables the interaction).
    pub dipole_scale_ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepQuantity {
    Detunings,
    Levels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub quantity: SweepQuantity,
    pub b_min_gauss: f64,
    pub b_max_gauss: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddressSection {
    pub layer: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibilitySection {
    pub t_pi_s: Option<f64>,
    pub depth_recoils: Option<f64>,
    pub hold_time_s: Option<f64>,
    pub target_gap_hz: Option<f64>,
    pub bias_gauss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Relative to the scenario file's directory.
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub atom: AtomSection,
    pub lattice: Option<LatticeSection>,
    #[serde(default)]
    pub gradient: GradientSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub circuit: Option<CircuitSection>,
    #[serde(default)]
    pub sweep: Vec<SweepSection>,
    pub address: Option<AddressSection>,
    pub feasibility: Option<FeasibilitySection>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("scenario: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Lattice for the addressing and circuit pipelines; a single 10×10 plane by default.
    pub fn geometry(&self, params: &AtomParams) -> Result<LatticeGeometry> {
        match &self.lattice {
            Some(l) => l.geometry(params),
            None => Ok(LatticeGeometry::new(10, 10, 1, params.lattice_constant())?),
        }
    }
}

/// Field grid of `steps` points over (b_min, b_max]; the open lower end keeps B = 0
/// out of the sweep, where the three-photon drive frequency is undefined.
pub fn field_grid_gauss(b_min: f64, b_max: f64, steps: usize) -> Result<Vec<f64>> {
    if !(b_min >= 0.0 && b_max > b_min && b_max.is_finite()) {
        return Err(CliError::Config(format!("field range must satisfy 0 <= min < max, got {b_min}..{b_max} G")));
    }
    if steps == 0 {
        return Err(CliError::Config("sweep needs at least one step".into()));
    }
    let h = (b_max - b_min) / steps as f64;
    Ok((1..=steps).map(|k| if k == steps { b_max } else { b_min + h * k as f64 }).collect())
}

fn csv_text(header: &[String], rows: impl IntoIterator<Item = Result<Vec<String>>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Config(e.to_string()))?;
    for r in rows {
        w.write_record(r?).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_of(header: &[&str], rows: impl IntoIterator<Item = Result<Vec<String>>>) -> Result<String> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    csv_text(&header, rows)
}

/// `B_gauss, delta1_hz, delta2_hz` with Δ in ordinary frequency units.
pub fn detunings_csv(params: &AtomParams, b_min_gauss: f64, b_max_gauss: f64, steps: usize) -> Result<String> {
    let grid = field_grid_gauss(b_min_gauss, b_max_gauss, steps)?;
    csv_of(
        &["B_gauss", "delta1_hz", "delta2_hz"],
        grid.into_iter().map(|b| {
            let d = atomic::three_photon_detunings(params, b * GAUSS)?;
            Ok(vec![
                b.to_string(),
                (d.delta1 / ybqc::constants::TWO_PI).to_string(),
                (d.delta2 / ybqc::constants::TWO_PI).to_string(),
            ])
        }),
    )
}

fn level_column(l: &atomic::ZeemanLevel) -> String {
    let f = match l.f {
        atomic::HyperfineF::ThreeHalves => "3/2",
        atomic::HyperfineF::FiveHalves => "5/2",
    };
    format!("F{f}_mF{}_hz", l.m_f)
}

/// Energies of the ten ³P₂ levels and the two ¹S₀ sublevels over a field sweep.
pub fn levels_csv(params: &AtomParams, b_min_gauss: f64, b_max_gauss: f64, steps: usize) -> Result<String> {
    let grid = field_grid_gauss(b_min_gauss, b_max_gauss, steps)?;
    let first = atomic::zeeman_spectrum(params, grid[0] * GAUSS)?;
    let mut header = vec!["B_gauss".to_string(), "ground_mI-1/2_hz".into(), "ground_mI+1/2_hz".into()];
    header.extend(first.levels.iter().map(level_column));
    let rows = grid.into_iter().map(|b| {
        let field = b * GAUSS;
        let spec = atomic::zeeman_spectrum(params, field)?;
        let mut row = vec![
            b.to_string(),
            atomic::ground_energy(params, HalfInt::MINUS_HALF, field)?.to_string(),
            atomic::ground_energy(params, HalfInt::PLUS_HALF, field)?.to_string(),
        ];
        row.extend(spec.levels.iter().map(|l| l.energy_hz.to_string()));
        Ok(row)
    });
    csv_text(&header, rows)
}

/// One row per site of `layer`, sorted by resonance frequency.
pub fn spectrum_csv(geom: &LatticeGeometry, config: &GradientConfig, params: &AtomParams, layer: usize) -> Result<String> {
    let map = addressing::resonance_map(geom, config, params, AddressedTransition::stretched(params), layer)?;
    csv_of(
        &["i", "j", "k", "field_gauss", "frequency_hz"],
        map.sorted().into_iter().map(|e| {
            Ok(vec![
                e.site.i.to_string(),
                e.site.j.to_string(),
                e.site.k.to_string(),
                (e.field_t / GAUSS).to_string(),
                e.frequency_hz.to_string(),
            ])
        }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdiReport {
    pub spacing_m: f64,
    pub theta_rad: f64,
    /// Ising energy of two equal moments `moment_bohr` apart by the spacing at θ.
    pub moment_bohr: f64,
    pub electronic_hz: f64,
    pub nuclear_moment_mu_n: f64,
    pub nuclear_hz: f64,
    /// Dipole energies of |00⟩..|11⟩ for the ±2.7 μ_B auxiliary qubit, Hz.
    pub pair_levels_hz: [f64; 4],
    pub cnot_shift_hz: f64,
    /// Every value is for a single pair; neighbours on both sides are not summed.
    pub convention: String,
}

pub fn ddi_report(spacing_m: f64, theta_rad: f64, moment_bohr: f64, params: &AtomParams) -> Result<DdiReport> {
    let r = [spacing_m * theta_rad.sin(), 0.0, spacing_m * theta_rad.cos()];
    let pair = |m: f64| -> Result<f64> {
        Ok(dipole::ddi_energy(&DipoleSpec { moment: m, position: [0.0; 3] }, &DipoleSpec { moment: m, position: r })?)
    };
    let levels = dipole::pair_levels(spacing_m, theta_rad, LogicalMoments::symmetric(dipole::AUXILIARY_MOMENT))?;
    Ok(DdiReport {
        spacing_m,
        theta_rad,
        moment_bohr,
        electronic_hz: pair(moment_bohr * BOHR_MAGNETON)?,
        nuclear_moment_mu_n: params.nuclear_moment_mu_n,
        nuclear_hz: pair(params.nuclear_moment_mu_n * NUCLEAR_MAGNETON)?,
        pair_levels_hz: levels.levels_hz,
        cnot_shift_hz: levels.shift_10_11_vs_00_01_hz,
        convention: "single pair".into(),
    })
}

pub fn feasibility_inputs(section: &FeasibilitySection, lattice: Option<&LatticeSection>, params: &AtomParams) -> Result<FeasibilityInputs> {
    let d = FeasibilityInputs::paper_defaults(params);
    Ok(FeasibilityInputs {
        t_pi_s: section.t_pi_s.unwrap_or(d.t_pi_s),
        depth_recoils: section.depth_recoils.unwrap_or(d.depth_recoils),
        hold_time_s: section.hold_time_s.unwrap_or(d.hold_time_s),
        geometry: match lattice {
            Some(l) => l.geometry(params)?,
            None => d.geometry,
        },
        target_gap_hz: section.target_gap_hz.unwrap_or(d.target_gap_hz),
        bias_t: section.bias_gauss.map_or(d.bias_t, |b| b * GAUSS),
    })
}

pub fn feasibility_json(params: &AtomParams, inputs: &FeasibilityInputs) -> Result<(FeasibilityReport, String)> {
    let report = feasibility::feasibility_report(params, inputs)?;
    let text = to_json(&report)?;
    Ok((report, text))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SitePopulations {
    pub site: Site,
    pub logical0: f64,
    pub logical1: f64,
    /// Population in ¹S₀ (the rest of the logical weight sits in ³P₂).
    pub ground: f64,
    pub lost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CircuitResult {
    pub gates: Vec<Gate>,
    pub seed: Option<u64>,
    pub initial_bits: Vec<u8>,
    pub total_duration_s: f64,
    pub gradient: GradientConfig,
    pub budget: feasibility::DecoherenceBudget,
    pub survival: f64,
    pub leaked: f64,
    pub populations: Vec<SitePopulations>,
    pub measurements: Vec<MeasurementReport>,
    /// P(output | input) for the first two-qubit gate, control first, with detection skipped.
    pub truth_table: Option<TruthTable>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthTable {
    pub control: Site,
    pub target: Site,
    pub probabilities: [[f64; 4]; 4],
    pub fidelity: f64,
}

pub struct CircuitRun {
    pub compiled: CompiledCircuit,
    pub result: CircuitResult,
}

pub fn load_circuit(path: &Path) -> Result<Vec<Gate>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(pulse::parse_circuit(&text)?)
}

pub fn compile(gates: &[Gate], geom: &LatticeGeometry, params: &AtomParams, noise: &NoiseParams, dipole_scale: Option<f64>) -> Result<CompiledCircuit> {
    let mut opts = CompileOptions::default();
    opts.cnot.dipole_scale = dipole_scale;
    Ok(pulse::compile_circuit(gates, geom, params, noise, &opts)?)
}

/// Compiles and executes `gates`; `seed` is required when the circuit measures.
pub fn simulate_circuit(
    gates: Vec<Gate>,
    geom: &LatticeGeometry,
    params: &AtomParams,
    noise: &NoiseParams,
    seed: Option<u64>,
    initial_bits: Option<Vec<u8>>,
    dipole_scale: Option<f64>,
) -> Result<CircuitRun> {
    let measures = gates.iter().any(|g| matches!(g, Gate::Measure { .. }));
    if measures && seed.is_none() {
        return Err(CliError::Config("the circuit measures; a --seed is required".into()));
    }
    let compiled = compile(&gates, geom, params, noise, dipole_scale)?;
    let sites = compiled.schedule.active_sites.clone();
    let bits = initial_bits.unwrap_or_else(|| vec![0; sites.len()]);
    if bits.len() != sites.len() || bits.iter().any(|&b| b > 1) {
        return Err(CliError::Config(format!(
            "initial_bits needs one 0/1 entry per active site ({} sites), got {bits:?}",
            sites.len()
        )));
    }
    let exec = compiled.execute(compiled.initial_register(&bits)?, noise, seed)?;
    let state = &exec.state;
    let mut populations = Vec::new();
    for &s in &sites {
        let pop = |levels: &[Level]| -> Result<f64> {
            levels.iter().map(|&l| state.population(s, l).map_err(CliError::from)).sum()
        };
        populations.push(SitePopulations {
            site: s,
            logical0: pop(&[Level::GroundMinus, Level::AuxM32])?,
            logical1: pop(&[Level::GroundPlus, Level::AuxP32])?,
            ground: pop(&[Level::GroundMinus, Level::GroundPlus])?,
            lost: pop(&[Level::Lost])?,
        });
    }
    let truth_table = match gates.iter().find_map(|g| match *g {
        Gate::Cnot { control, target } => Some((control, target)),
        _ => None,
    }) {
        Some((control, target)) => {
            let t = compiled.truth_table([control, target], noise)?;
            Some(TruthTable {
                control,
                target,
                probabilities: t,
                fidelity: 0.25 * (t[0][0] + t[1][1] + t[2][3] + t[3][2]),
            })
        }
        None => None,
    };
    let result = CircuitResult {
        gates,
        seed,
        initial_bits: bits,
        total_duration_s: compiled.schedule.total_duration_s(),
        gradient: compiled.gradient,
        budget: compiled.budget,
        survival: state.survival(),
        leaked: state.leaked(),
        populations,
        measurements: exec.measurements,
        truth_table,
    };
    Ok(CircuitRun { compiled, result })
}

/// Files written by a scenario run, keyed by name.
pub type Artifacts = BTreeMap<String, String>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Computes every artifact of `scenario` in memory. Nothing touches the disk
/// except reading the circuit file.
pub fn scenario_artifacts(scenario: &Scenario, base_dir: &Path, seed_override: Option<u64>) -> Result<Artifacts> {
    let params = scenario.atom.params()?;
    let noise = scenario.noise.params()?;
    let mut out = Artifacts::new();

    for s in &scenario.sweep {
        let (name, text) = match s.quantity {
            SweepQuantity::Detunings => ("detunings.csv", detunings_csv(&params, s.b_min_gauss, s.b_max_gauss, s.steps)?),
            SweepQuantity::Levels => ("levels.csv", levels_csv(&params, s.b_min_gauss, s.b_max_gauss, s.steps)?),
        };
        if out.insert(name.into(), text).is_some() {
            return Err(CliError::Config(format!("more than one sweep writes {name}")));
        }
    }

    if let Some(a) = &scenario.address {
        let geom = scenario.geometry(&params)?;
        let config = scenario.gradient.config(&geom, &params)?;
        out.insert("spectrum.csv".into(), spectrum_csv(&geom, &config, &params, a.layer.unwrap_or(0))?);
    }

    if let Some(f) = &scenario.feasibility {
        let inputs = feasibility_inputs(f, scenario.lattice.as_ref(), &params)?;
        out.insert("feasibility.json".into(), feasibility_json(&params, &inputs)?.1);
    }

    if let Some(c) = &scenario.circuit {
        let gates = load_circuit(&base_dir.join(&c.path))?;
        let geom = scenario.geometry(&params)?;
        let seed = seed_override.or(c.seed);
        let run = simulate_circuit(gates, &geom, &params, &noise, seed, c.initial_bits.clone(), c.dipole_scale_ratio)?;
        out.insert("schedule.json".into(), to_json(&run.compiled.schedule)?);
        out.insert("circuit.json".into(), to_json(&run.result)?);
    }

    if out.is_empty() {
        return Err(CliError::Config(
            "scenario requests no pipeline; add [feasibility], [address], [circuit] or [[sweep]]".into(),
        ));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// File name to SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
}

/// Loads `path`, computes all artifacts and only then writes them with a
/// `manifest.json` of content hashes.
pub fn run_scenario(path: &Path, out_override: Option<&Path>, seed_override: Option<u64>) -> Result<(PathBuf, Manifest)> {
    let scenario = Scenario::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let artifacts = scenario_artifacts(&scenario, base, seed_override)?;
    let dir = match (out_override, &scenario.output_dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => base.join(d),
        (None, None) => base.join("out"),
    };
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut files = BTreeMap::new();
    for (name, text) in &artifacts {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))?;
        files.insert(name.clone(), sha256_hex(text.as_bytes()));
    }
    let manifest = Manifest { files };
    let p = dir.join("manifest.json");
    fs::write(&p, to_json(&manifest)?).map_err(io_err(&p))?;
    Ok((dir, manifest))
}

/// Field in tesla for a value in gauss, and gradients in T/m for G/cm.
pub fn gradient_from_gauss(b0: f64, gx: f64, gy: f64, gz: f64) -> GradientConfig {
    GradientConfig {
        b0_t: b0 * GAUSS,
        gx_t_per_m: gx * GAUSS_PER_CM,
        gy_t_per_m: gy * GAUSS_PER_CM,
        gz_t_per_m: gz * GAUSS_PER_CM,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_left_open() {
        let g = field_grid_gauss(0.0, 20000.0, 2000).unwrap();
        assert_eq!(g.len(), 2000);
        assert_eq!(g[0], 10.0);
        assert_eq!(*g.last().unwrap(), 20000.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(field_grid_gauss(5.0, 5.0, 3).is_err());
        assert!(field_grid_gauss(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = Scenario::from_toml("[feasibility]\nt_pi = 1e-4\n").unwrap_err();
        assert!(e.to_string().contains("t_pi"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn explicit_gradients_need_a_bias() {
        let g = GradientSection { gx_gauss_per_cm: Some(10.0), ..Default::default() };
        let p = AtomParams::default();
        let geom = LatticeGeometry::new(2, 2, 1, p.lattice_constant()).unwrap();
        assert!(g.config(&geom, &p).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(ybqc::Error::Integrator { deviation: 1.0, dt: 1.0 }).exit_code(), 3);
        assert_eq!(CliError::from(ybqc::Error::Parse { line: 1, msg: "x".into() }).exit_code(), 2);
        assert_eq!(CliError::from(ybqc::Error::Planning("x".into())).exit_code(), 3);
    }
}
