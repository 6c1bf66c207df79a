use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addressing::{self, AddressedTransition, GradientConfig, LatticeGeometry, PlannerSettings, Site};
use crate::atomic::{self, AtomParams};
use crate::error::{Error, Result};
use crate::feasibility::{self, DecoherenceBudget};

use super::engine::Engine;
use super::protocols::{measure_with_rng, CnotOptions, MeasurementReport, Rotation, TransferParams};
use super::register::{Level, RegisterState, MAX_ATOMS};
use super::schedule::{
    Direction, Envelope, NoiseParams, Pulse, PulseSchedule, Segment, SegmentKind, Target, Tone, Transition,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    /// Rotation by `angle_rad` about x.
    X { site: Site, angle_rad: f64 },
    Cnot { control: Site, target: Site },
    Measure { site: Site },
}

impl Gate {
    pub fn sites(&self) -> Vec<Site> {
        match *self {
            Gate::X { site, .. } | Gate::Measure { site } => vec![site],
            Gate::Cnot { control, target } => vec![control, target],
        }
    }
}

fn parse_angle(tok: &str) -> Option<f64> {
    let t = tok.trim().to_ascii_lowercase();
    if let Ok(v) = t.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().ok().filter(|d| *d != 0.0)?),
        None => (t.as_str(), 1.0),
    };
    let coeff = match num.strip_suffix("pi")? {
        "" => 1.0,
        "-" => -1.0,
        c => c.trim_end_matches('*').parse::<f64>().ok()?,
    };
    Some(coeff * std::f64::consts::PI / den)
}

/// Parses one gate per line: `X i j [k] theta`, `CNOT i1 j1 [k1] i2 j2 [k2]`,
/// `MEAS i j [k]`. Angles accept plain numbers and forms like `pi/2` or `-3pi/4`.
/// `#` starts a comment.
pub fn parse_circuit(text: &str) -> Result<Vec<Gate>> {
    let mut gates = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let err = |msg: String| Error::Parse { line, msg };
        let idx = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad site index `{s}`")));
        let site = |t: &[&str]| -> Result<Site> {
            match t.len() {
                2 => Ok(Site::new(idx(t[0])?, idx(t[1])?, 0)),
                3 => Ok(Site::new(idx(t[0])?, idx(t[1])?, idx(t[2])?)),
                _ => Err(err("a site needs 2 or 3 indices".into())),
            }
        };
        let args = &toks[1..];
        let gate = match toks[0].to_ascii_uppercase().as_str() {
            "X" => {
                let (last, head) = args.split_last().ok_or_else(|| err("X needs a site and an angle".into()))?;
                let angle = parse_angle(last).ok_or_else(|| err(format!("bad angle `{last}`")))?;
                Gate::X { site: site(head)?, angle_rad: angle }
            }
            "CNOT" => {
                if args.len() != 4 && args.len() != 6 {
                    return Err(err(format!("CNOT needs 4 or 6 indices, got {}", args.len())));
                }
                let h = args.len() / 2;
                Gate::Cnot { control: site(&args[..h])?, target: site(&args[h..])? }
            }
            "MEAS" => Gate::Measure { site: site(args)? },
            other => return Err(err(format!("unknown gate `{other}`"))),
        };
        gates.push(gate);
    }
    Ok(gates)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub target_gap_hz: f64,
    pub planner: PlannerSettings,
    pub min_transfer_s: f64,
    pub transfer_envelope: Envelope,
    /// Transfer pulses last at least this many inverse resonance gaps.
    pub resolvability_multiple: f64,
    /// Ladder Rabi frequency as a fraction of min(|Δ₁|, |Δ₂|) at the site.
    pub ladder_rabi_fraction: f64,
    pub cnot: CnotOptions,
    /// Logical state returned to ¹S₀ for fluorescence detection.
    pub returned_state: u8,
    /// Register atoms that no gate touches.
    pub spectators: Vec<Site>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            target_gap_hz: 1e3,
            planner: PlannerSettings::default(),
            min_transfer_s: 1e-3,
            transfer_envelope: Envelope::Blackman,
            resolvability_multiple: 4.0,
            ladder_rabi_fraction: 0.1,
            cnot: CnotOptions { allow_off_axis: true, ..CnotOptions::default() },
            returned_state: 1,
            spectators: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledCircuit {
    pub schedule: PulseSchedule,
    pub gradient: GradientConfig,
    pub transfer: TransferParams,
    pub budget: DecoherenceBudget,
    /// Engine configured for this schedule, including the dipole scaling.
    pub engine: Engine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Execution {
    pub state: RegisterState,
    pub measurements: Vec<MeasurementReport>,
}

fn adjacent(a: Site, b: Site) -> bool {
    a.i.abs_diff(b.i) + a.j.abs_diff(b.j) + a.k.abs_diff(b.k) == 1
}

fn active_sites(gates: &[Gate], spectators: &[Site]) -> Vec<Site> {
    let mut out: Vec<Site> = Vec::new();
    for s in gates.iter().flat_map(Gate::sites).chain(spectators.iter().copied()) {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn check_topology(gates: &[Gate], geom: &LatticeGeometry, active: &[Site]) -> Result<()> {
    for &s in active {
        geom.check_site(s)?;
    }
    if active.len() > MAX_ATOMS {
        return Err(Error::Topology(format!("{} active sites exceed the {MAX_ATOMS}-atom register", active.len())));
    }
    let mut measured = false;
    for g in gates {
        match *g {
            Gate::Measure { .. } => measured = true,
            _ if measured => {
                return Err(Error::Topology("gates after a measurement are not supported".into()));
            }
            Gate::Cnot { control, target } if !adjacent(control, target) => {
                return Err(Error::Topology(format!(
                    "CNOT between {control:?} and {target:?} needs nearest neighbours (no routing)"
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Planned gradients, with the z gradient raised so that atoms in different
/// layers never share a field.
fn circuit_gradient(
    geom: &LatticeGeometry,
    params: &AtomParams,
    active: &[Site],
    opts: &CompileOptions,
) -> Result<GradientConfig> {
    let mut g = addressing::plan_gradients(geom, opts.target_gap_hz, params, &opts.planner)?;
    let layers = active.iter().map(|s| s.k).collect::<std::collections::BTreeSet<_>>();
    if layers.len() > 1 {
        let unique = (g.gx_t_per_m * (geom.n_x * geom.n_y) as f64).max(g.gy_t_per_m * geom.n_y as f64);
        g.gz_t_per_m = g.gz_t_per_m.max(unique);
        let need = opts.planner.safety_factor * g.field_range(geom);
        if need > opts.planner.bias_ceiling_t {
            return Err(Error::Planning(format!("bias of {need} T exceeds the ceiling")));
        }
        g.b0_t = g.b0_t.max(need);
    }
    Ok(g)
}

/// Smallest stretched-line frequency difference (Hz) between active sites.
fn min_active_gap(geom: &LatticeGeometry, params: &AtomParams, g: &GradientConfig, active: &[Site]) -> Result<f64> {
    let mut gap = f64::INFINITY;
    for tr in [AddressedTransition::stretched(params), AddressedTransition::stretched_minus(params)] {
        let f = active
            .iter()
            .map(|&s| tr.frequency(params, addressing::site_field(geom, g, s)?))
            .collect::<Result<Vec<_>>>()?;
        for a in 0..f.len() {
            for b in a + 1..f.len() {
                gap = gap.min((f[a] - f[b]).abs());
            }
        }
    }
    Ok(gap)
}

/// Turns a gate list into gradient, transfer, drive and detection segments.
///
/// Two-qubit gates move both atoms to ³P₂ one after the other, apply the
/// shifted π-pulse and return them. Readout transfers every atom to ³P₂ with the
/// gradients off, then returns the measured atom's `returned_state` level.
pub fn compile_circuit(
    gates: &[Gate],
    geom: &LatticeGeometry,
    params: &AtomParams,
    noise: &NoiseParams,
    opts: &CompileOptions,
) -> Result<CompiledCircuit> {
    let mut engine = Engine::new(params.clone(), *geom)?;
    if let Some(scale) = opts.cnot.dipole_scale {
        engine.dipole_scale = scale;
    }
    if opts.returned_state > 1 {
        return Err(Error::Config("returned state must be 0 or 1".into()));
    }
    let active = active_sites(gates, &opts.spectators);
    if gates.is_empty() {
        let schedule = PulseSchedule { active_sites: active, segments: Vec::new() };
        let budget = feasibility::decoherence_budget(&schedule, noise)?;
        return Ok(CompiledCircuit {
            schedule,
            gradient: GradientConfig::uniform(opts.planner.bias_floor_t),
            transfer: TransferParams::default(),
            budget,
            engine,
        });
    }
    check_topology(gates, geom, &active)?;
    let g = circuit_gradient(geom, params, &active, opts)?;
    let gap = min_active_gap(geom, params, &g, &active)?;
    let tp = TransferParams {
        duration_s: opts.min_transfer_s.max(opts.resolvability_multiple / gap),
        envelope: opts.transfer_envelope,
        resolvability_multiple: opts.resolvability_multiple,
    };
    let frame = g.b0_t;

    let mut segs = vec![Segment::gradient_set(g)];
    let mut held: Vec<Site> = Vec::new();
    let transfer = |segs: &mut Vec<Segment>, held: &mut Vec<Site>, site: Site, dir: Direction| -> Result<()> {
        segs.push(engine.transfer_segment(site, dir, &g, &tp, &active, held)?);
        match dir {
            Direction::ToMetastable => held.push(site),
            Direction::ToGround => held.retain(|&s| s != site),
        }
        Ok(())
    };
    let mut readout_started = false;
    for gate in gates {
        match *gate {
            Gate::X { site, angle_rad } => {
                transfer(&mut segs, &mut held, site, Direction::ToMetastable)?;
                let det = atomic::three_photon_detunings(params, addressing::site_field(geom, &g, site)?)?;
                let rabi = opts.ladder_rabi_fraction * det.delta1.abs().min(det.delta2.abs());
                let rot = Rotation { angle_rad, axis_phase_rad: 0.0 };
                let others: Vec<Site> = held.iter().copied().filter(|&s| s != site).collect();
                let plan = engine.plan_single_qubit(site, rot, &g, rabi, &others, frame)?;
                segs.push(plan.pulse);
                segs.push(plan.correction);
                transfer(&mut segs, &mut held, site, Direction::ToGround)?;
            }
            Gate::Cnot { control, target } => {
                transfer(&mut segs, &mut held, control, Direction::ToMetastable)?;
                transfer(&mut segs, &mut held, target, Direction::ToMetastable)?;
                let (seg, _) = engine.cnot_segment(control, target, &g, &opts.cnot, &held)?;
                segs.push(seg);
                transfer(&mut segs, &mut held, control, Direction::ToGround)?;
                transfer(&mut segs, &mut held, target, Direction::ToGround)?;
            }
            Gate::Measure { site } => {
                if !readout_started {
                    readout_started = true;
                    let flat = GradientConfig::uniform(g.b0_t);
                    segs.push(Segment::gradient_set(flat));
                    segs.push(Segment {
                        kind: SegmentKind::TransferAll { direction: Direction::ToMetastable },
                        gradient: flat,
                        pulse: super::protocols::qubit_transfer_pulse(Target::All, &tp),
                        metastable: active.iter().map(|&s| (s, 0.5)).collect(),
                    });
                    held = active.clone();
                    segs.push(Segment::gradient_set(g));
                }
                engine.check_resolvable(site, &active, &g, &tp)?;
                let r = opts.returned_state;
                let mut metastable = vec![(site, 0.5)];
                metastable.extend(held.iter().filter(|&&s| s != site).map(|&s| (s, 1.0)));
                held.retain(|&s| s != site);
                segs.push(Segment {
                    kind: SegmentKind::Transfer { site, direction: Direction::ToGround },
                    gradient: g,
                    pulse: Pulse {
                        tones: vec![Tone::resonant(
                            Transition::Optical { ground: Level::ground(r), excited: Level::aux(r) },
                            std::f64::consts::PI / tp.duration_s,
                        )],
                        duration_s: tp.duration_s,
                        envelope: tp.envelope,
                        target: Target::Site(site),
                    },
                    metastable,
                });
                segs.push(Segment {
                    kind: SegmentKind::Detect { site, returned: r },
                    gradient: g,
                    pulse: Pulse::idle(0.0),
                    metastable: Vec::new(),
                });
            }
        }
    }
    let schedule = PulseSchedule { active_sites: active, segments: segs };
    let budget = feasibility::decoherence_budget(&schedule, noise)?;
    Ok(CompiledCircuit { schedule, gradient: g, transfer: tp, budget, engine })
}

impl CompiledCircuit {
    /// Register of the active sites with each atom in ¹S₀ logical `bits[n]`.
    pub fn initial_register(&self, bits: &[u8]) -> Result<RegisterState> {
        let levels: Vec<Level> = bits.iter().map(|&b| Level::ground(b)).collect();
        RegisterState::product(&self.schedule.active_sites, &levels, self.gradient.b0_t)
    }

    /// Runs every segment; detection segments draw from a generator seeded with `seed`.
    pub fn execute(&self, reg: RegisterState, noise: &NoiseParams, seed: Option<u64>) -> Result<Execution> {
        execute_schedule(&self.engine, &self.schedule, reg, noise, seed)
    }

    /// P(output | input) over the computational basis of two active atoms, with
    /// all other atoms starting in logical 0 and detection segments skipped.
    pub fn truth_table(&self, pair: [Site; 2], noise: &NoiseParams) -> Result<[[f64; 4]; 4]> {
        let sites = &self.schedule.active_sites;
        let pos = pair.map(|s| sites.iter().position(|&x| x == s));
        let [Some(p0), Some(p1)] = pos else {
            return Err(Error::Config(format!("{pair:?} are not both active in the schedule")));
        };
        let coherent = PulseSchedule {
            active_sites: sites.clone(),
            segments: self
                .schedule
                .segments
                .iter()
                .filter(|s| !matches!(s.kind, SegmentKind::Detect { .. }))
                .cloned()
                .collect(),
        };
        let mut table = [[0.0; 4]; 4];
        for (input, row) in table.iter_mut().enumerate() {
            let mut bits = vec![0u8; sites.len()];
            bits[p0] = (input >> 1) as u8;
            bits[p1] = (input & 1) as u8;
            let out = execute_schedule(&self.engine, &coherent, self.initial_register(&bits)?, noise, None)?.state;
            for (o, p) in row.iter_mut().enumerate() {
                let (a, b) = ((o >> 1) as u8, (o & 1) as u8);
                *p = (0..out.dim())
                    .filter(|&i| {
                        Level::ALL[out.level_of(i, p0)].logical() == Some(a)
                            && Level::ALL[out.level_of(i, p1)].logical() == Some(b)
                    })
                    .map(|i| out.amplitudes()[i].norm_sqr())
                    .sum();
            }
        }
        Ok(table)
    }
}

pub fn execute_schedule(
    engine: &Engine,
    schedule: &PulseSchedule,
    mut reg: RegisterState,
    noise: &NoiseParams,
    seed: Option<u64>,
) -> Result<Execution> {
    let detects = schedule.segments.iter().any(|s| matches!(s.kind, SegmentKind::Detect { .. }));
    let mut rng = match (detects, seed) {
        (true, None) => return Err(Error::Config("schedule contains measurements; an RNG seed is required".into())),
        (_, s) => ChaCha8Rng::seed_from_u64(s.unwrap_or(0)),
    };
    let mut measurements = Vec::new();
    for seg in &schedule.segments {
        match seg.kind {
            SegmentKind::Detect { site, returned } => {
                measurements.push(measure_with_rng(&mut reg, site, noise, returned, &mut rng)?.1);
            }
            _ => engine.apply_segment(&mut reg, seg, noise)?,
        }
    }
    Ok(Execution { state: reg, measurements })
}
