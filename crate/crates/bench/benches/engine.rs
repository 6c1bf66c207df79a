use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ybqc::addressing::{self, AddressedTransition, PlannerSettings};
use ybqc::atomic;
use ybqc::constants::{GAUSS, TWO_PI};
use ybqc::pulse::{
    compile_circuit, ladder_drive, parse_circuit, CompileOptions, Engine, Envelope, Level, NoiseParams, Pulse,
    RegisterState, Segment, SegmentKind, Target, Tone, Transition,
};
use ybqc::{AtomParams, GradientConfig, LatticeGeometry, Site};

fn spectrum(c: &mut Criterion) {
    let p = AtomParams::default();
    c.bench_function("zeeman_spectrum", |b| b.iter(|| atomic::zeeman_spectrum(&p, black_box(0.065)).unwrap()));
    c.bench_function("ladder_drive", |b| b.iter(|| ladder_drive(&p, 0.065, black_box(TWO_PI * 985e3)).unwrap()));
}

fn addressing(c: &mut Criterion) {
    let p = AtomParams::default();
    let g = LatticeGeometry::new(10, 10, 1, p.lattice_constant()).unwrap();
    c.bench_function("plan_gradients_10x10", |b| {
        b.iter(|| addressing::plan_gradients(&g, black_box(1e3), &p, &PlannerSettings::default()).unwrap())
    });
    let config = addressing::plan_gradients(&g, 1e3, &p, &PlannerSettings::default()).unwrap();
    c.bench_function("resonance_map_10x10", |b| {
        b.iter(|| addressing::resonance_map(&g, &config, &p, AddressedTransition::stretched(&p), 0).unwrap())
    });
}

fn shaped_segment(sites: &[Site], field: f64) -> Segment {
    Segment {
        kind: SegmentKind::Idle,
        gradient: GradientConfig::uniform(field),
        pulse: Pulse {
            tones: vec![Tone::resonant(
                Transition::Optical { ground: Level::GroundPlus, excited: Level::AuxP32 },
                TWO_PI * 1e3,
            )],
            duration_s: 1e-3,
            envelope: Envelope::Blackman,
            target: Target::Site(sites[0]),
        },
        metastable: vec![],
    }
}

fn evolution(c: &mut Criterion) {
    let p = AtomParams::default();
    let field = 100.0 * GAUSS;
    let geom = LatticeGeometry::new(2, 2, 1, p.lattice_constant()).unwrap();
    let engine = Engine::new(p, geom).unwrap();
    let all = [Site::new(0, 0, 0), Site::new(1, 0, 0), Site::new(0, 1, 0), Site::new(1, 1, 0)];
    let mut group = c.benchmark_group("blackman_pulse");
    group.sample_size(10);
    for n in [1, 2, 4] {
        let sites = &all[..n];
        let seg = shaped_segment(sites, field);
        let reg = RegisterState::product(sites, &vec![Level::GroundPlus; n], field).unwrap();
        group.bench_function(format!("{n}_atoms"), |b| {
            b.iter(|| {
                let mut r = reg.clone();
                engine.evolve(&mut r, &seg, &NoiseParams::default()).unwrap();
                r
            })
        });
    }
    group.finish();
}

fn compile(c: &mut Criterion) {
    let p = AtomParams::default();
    let geom = LatticeGeometry::new(2, 2, 2, p.lattice_constant()).unwrap();
    let gates = parse_circuit("X 0 0 0 pi/2\nCNOT 0 0 0 0 0 1\nMEAS 0 0 0").unwrap();
    let mut group = c.benchmark_group("circuit");
    group.sample_size(10);
    group.bench_function("compile_bell", |b| {
        b.iter(|| compile_circuit(&gates, &geom, &p, &NoiseParams::default(), &CompileOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, spectrum, addressing, evolution, compile);
criterion_main!(benches);
