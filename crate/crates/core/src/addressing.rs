//! Site fields, resonance maps and gradient planning for spectral addressing.

use serde::{Deserialize, Serialize};

use crate::atomic::{self, AtomParams, HalfInt, LevelLabel};
use crate::constants::{GAUSS, GAUSS_PER_CM};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Site {
    pub const fn new(i: usize, j: usize, k: usize) -> Self {
        Site { i, j, k }
    }
}

/// Cubic lattice with site (0,0,0) at the minimum coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub n_x: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub spacing_m: f64,
}

impl Default for LatticeGeometry {
    fn default() -> Self {
        LatticeGeometry {
            n_x: 10,
            n_y: 10,
            n_z: 1,
            spacing_m: 266e-9,
        }
    }
}

impl LatticeGeometry {
    pub fn new(n_x: usize, n_y: usize, n_z: usize, spacing_m: f64) -> Result<Self> {
        let g = LatticeGeometry { n_x, n_y, n_z, spacing_m };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 || self.n_z == 0 {
            return Err(Error::Config("lattice site counts must be at least 1".into()));
        }
        if !(self.spacing_m > 0.0 && self.spacing_m.is_finite()) {
            return Err(Error::Config(format!("lattice spacing must be positive, got {}", self.spacing_m)));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_x, self.n_y, self.n_z)
    }

    pub fn check_site(&self, site: Site) -> Result<()> {
        if site.i < self.n_x && site.j < self.n_y && site.k < self.n_z {
            Ok(())
        } else {
            Err(Error::SiteOutOfRange { site, dims: self.dims() })
        }
    }

    pub fn position(&self, site: Site) -> [f64; 3] {
        [
            self.spacing_m * site.i as f64,
            self.spacing_m * site.j as f64,
            self.spacing_m * site.k as f64,
        ]
    }

    /// Sites of layer `k`, row-major in (j, i).
    pub fn layer(&self, k: usize) -> impl Iterator<Item = Site> + '_ {
        (0..self.n_y).flat_map(move |j| (0..self.n_x).map(move |i| Site::new(i, j, k)))
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.n_z).flat_map(move |k| self.layer(k))
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bias field along z plus the gradients of B_z (T/m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientConfig {
    pub b0_t: f64,
    pub gx_t_per_m: f64,
    pub gy_t_per_m: f64,
    pub gz_t_per_m: f64,
}

impl GradientConfig {
    pub fn from_gauss(b0_gauss: f64, gx: f64, gy: f64, gz: f64) -> Self {
        GradientConfig {
            b0_t: b0_gauss * GAUSS,
            gx_t_per_m: gx * GAUSS_PER_CM,
            gy_t_per_m: gy * GAUSS_PER_CM,
            gz_t_per_m: gz * GAUSS_PER_CM,
        }
    }

    pub fn uniform(b0_t: f64) -> Self {
        GradientConfig {
            b0_t,
            gx_t_per_m: 0.0,
            gy_t_per_m: 0.0,
            gz_t_per_m: 0.0,
        }
    }

    /// Same bias with only the z gradient kept (layer selection).
    pub fn z_only(&self) -> Self {
        GradientConfig {
            gx_t_per_m: 0.0,
            gy_t_per_m: 0.0,
            ..*self
        }
    }

    /// max − min of the gradient-induced field over the lattice.
    pub fn field_range(&self, geom: &LatticeGeometry) -> f64 {
        geom.spacing_m
            * (self.gx_t_per_m.abs() * (geom.n_x - 1) as f64
                + self.gy_t_per_m.abs() * (geom.n_y - 1) as f64
                + self.gz_t_per_m.abs() * (geom.n_z - 1) as f64)
    }

    /// B0 > 0 and B0 ≥ safety × field range.
    pub fn check_bias(&self, geom: &LatticeGeometry, safety_factor: f64) -> Result<()> {
        if !(self.b0_t > 0.0) {
            return Err(Error::Config(format!("bias field must be positive, got {} T", self.b0_t)));
        }
        let need = safety_factor * self.field_range(geom);
        if self.b0_t < need {
            return Err(Error::Config(format!(
                "bias {} T below {safety_factor} x gradient range ({need} T)",
                self.b0_t
            )));
        }
        Ok(())
    }
}

/// Local |B| along z at a site.
pub fn site_field(geom: &LatticeGeometry, config: &GradientConfig, site: Site) -> Result<f64> {
    geom.check_site(site)?;
    let [x, y, z] = geom.position(site);
    Ok(config.b0_t + config.gx_t_per_m * x + config.gy_t_per_m * y + config.gz_t_per_m * z)
}

/// Optical transition used for addressing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddressedTransition {
    pub ground: HalfInt,
    pub excited: LevelLabel,
}

impl AddressedTransition {
    /// ¹S₀(m_I = +1/2) ↔ ³P₂(F = 3/2, m_F = +3/2).
    pub fn stretched(params: &AtomParams) -> Self {
        AddressedTransition {
            ground: HalfInt::PLUS_HALF,
            excited: params.f32_level(HalfInt::from_twice(3)),
        }
    }

    /// ¹S₀(m_I = −1/2) ↔ ³P₂(F = 3/2, m_F = −3/2).
    pub fn stretched_minus(params: &AtomParams) -> Self {
        AddressedTransition {
            ground: HalfInt::MINUS_HALF,
            excited: params.f32_level(HalfInt::from_twice(-3)),
        }
    }

    pub fn frequency(&self, params: &AtomParams, field_t: f64) -> Result<f64> {
        atomic::transition_frequency(params, self.ground, self.excited, field_t)
    }

    /// dν/dB (Hz/T) by central difference.
    pub fn slope(&self, params: &AtomParams, field_t: f64) -> Result<f64> {
        let h = 1e-7_f64.min(field_t.max(1e-9));
        let lo = (field_t - h).max(0.0);
        let hi = lo + 2.0 * h;
        Ok((self.frequency(params, hi)? - self.frequency(params, lo)?) / (hi - lo))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteResonance {
    pub site: Site,
    pub field_t: f64,
    pub frequency_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceMap {
    pub layer: usize,
    pub entries: Vec<SiteResonance>,
    /// Smallest |Δν| between two distinct sites of the layer (0 for a single site
    /// is reported as infinity).
    pub min_gap_hz: f64,
    pub closest_pair: Option<(Site, Site)>,
}

impl ResonanceMap {
    pub fn frequency(&self, site: Site) -> Option<f64> {
        self.entries.iter().find(|e| e.site == site).map(|e| e.frequency_hz)
    }

    /// Entries ordered by frequency.
    pub fn sorted(&self) -> Vec<SiteResonance> {
        let mut v = self.entries.clone();
        v.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz).then(a.site.cmp(&b.site)));
        v
    }
}

fn min_gap(entries: &[SiteResonance]) -> (f64, Option<(Site, Site)>) {
    let mut sorted: Vec<&SiteResonance> = entries.iter().collect();
    sorted.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    sorted
        .windows(2)
        .map(|w| ((w[1].frequency_hz - w[0].frequency_hz).abs(), Some((w[0].site, w[1].site))))
        .fold((f64::INFINITY, None), |acc, x| if x.0 < acc.0 { x } else { acc })
}

/// Addressed-transition frequency at every site of layer `layer`.
pub fn resonance_map(
    geom: &LatticeGeometry,
    config: &GradientConfig,
    params: &AtomParams,
    transition: AddressedTransition,
    layer: usize,
) -> Result<ResonanceMap> {
    geom.validate()?;
    geom.check_site(Site::new(0, 0, layer))?;
    let entries = geom
        .layer(layer)
        .map(|site| {
            let field_t = site_field(geom, config, site)?;
            Ok(SiteResonance {
                site,
                field_t,
                frequency_hz: transition.frequency(params, field_t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (min_gap_hz, closest_pair) = min_gap(&entries);
    Ok(ResonanceMap {
        layer,
        entries,
        min_gap_hz,
        closest_pair,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientValidity {
    /// n_x·|Gx| ≤ |Gy|, the sufficient condition as written.
    pub eq1_holds: bool,
    pub eq1_strict: bool,
    /// Exhaustive pairwise check that every in-plane site field is distinct.
    pub fields_unique: bool,
    pub colliding_pair: Option<(Site, Site)>,
    pub min_field_difference_t: f64,
}

/// Checks the row/column gradient condition and, independently, that no two
/// sites of a layer share a field.
pub fn validate_gradients(geom: &LatticeGeometry, config: &GradientConfig) -> GradientValidity {
    let lhs = geom.n_x as f64 * config.gx_t_per_m.abs();
    let rhs = config.gy_t_per_m.abs();
    let sites: Vec<(Site, f64)> = geom
        .layer(0)
        .map(|s| {
            let [x, y, _] = geom.position(s);
            (s, config.gx_t_per_m * x + config.gy_t_per_m * y)
        })
        .collect();
    // Collisions are judged relative to one lattice step of field so that
    // rounding in B0 + G·x does not mask exact degeneracies.
    let step = geom.spacing_m * (config.gx_t_per_m.abs() + config.gy_t_per_m.abs());
    let tol = 1e-9 * step;
    let mut min_diff = f64::INFINITY;
    let mut colliding = None;
    for (n, (sa, fa)) in sites.iter().enumerate() {
        for (sb, fb) in &sites[n + 1..] {
            let d = (fa - fb).abs();
            if d < min_diff {
                min_diff = d;
            }
            if d <= tol && colliding.is_none() {
                colliding = Some((*sa, *sb));
            }
        }
    }
    GradientValidity {
        eq1_holds: lhs <= rhs,
        eq1_strict: lhs < rhs,
        fields_unique: colliding.is_none(),
        colliding_pair: colliding,
        min_field_difference_t: min_diff,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerSettings {
    /// Required ratio B0 / (gradient-induced field range).
    pub safety_factor: f64,
    /// Smallest bias the planner will return.
    pub bias_floor_t: f64,
    /// Largest bias considered achievable.
    pub bias_ceiling_t: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        PlannerSettings {
            safety_factor: 10.0,
            bias_floor_t: 100.0 * GAUSS,
            bias_ceiling_t: 1.0,
        }
    }
}

/// Smallest (Gx, Gy) that give every site of a layer a distinct addressed
/// frequency at least `target_gap_hz` from every other site.
///
/// Gy = n_x·Gx saturates the row/column condition; Gz repeats the row step
/// for layer selection, and B0 honours the safety factor. The slope is taken
/// from the spectrum at B0, then the map is checked exactly and the
/// gradients rescaled until the smallest gap meets the target.
pub fn plan_gradients(
    geom: &LatticeGeometry,
    target_gap_hz: f64,
    params: &AtomParams,
    settings: &PlannerSettings,
) -> Result<GradientConfig> {
    geom.validate()?;
    if !(target_gap_hz > 0.0) {
        return Err(Error::Planning(format!("target gap must be positive, got {target_gap_hz}")));
    }
    let transition = AddressedTransition::stretched(params);
    let mut b0 = settings.bias_floor_t;
    let mut scale = 1.0;
    for _ in 0..50 {
        let slope = transition.slope(params, b0)?.abs();
        let step = scale * target_gap_hz / (slope * geom.spacing_m);
        let (gx, gy) = match (geom.n_x > 1, geom.n_y > 1) {
            (false, false) => (0.0, 0.0),
            (false, true) => (0.0, step),
            (true, _) => (step, geom.n_x as f64 * step),
        };
        let gz = if geom.n_z > 1 { gy.max(gx).max(step) } else { 0.0 };
        let config = GradientConfig {
            b0_t: b0,
            gx_t_per_m: gx,
            gy_t_per_m: gy,
            gz_t_per_m: gz,
        };
        let needed = settings.safety_factor * config.field_range(geom);
        if needed > settings.bias_ceiling_t {
            return Err(Error::Planning(format!(
                "bias of {needed} T needed for the gradient range exceeds the {} T ceiling",
                settings.bias_ceiling_t
            )));
        }
        if needed > b0 {
            b0 = needed;
            continue;
        }
        let worst = (0..geom.n_z)
            .map(|k| resonance_map(geom, &config, params, transition, k).map(|m| m.min_gap_hz))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if worst >= target_gap_hz {
            return Ok(config);
        }
        scale *= (target_gap_hz / worst) * (1.0 + 1e-12);
    }
    Err(Error::Planning("gradient planning did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane() -> LatticeGeometry {
        LatticeGeometry::new(10, 10, 1, 266e-9).unwrap()
    }

    #[test]
    fn origin_sits_at_bias() {
        let c = GradientConfig::from_gauss(100.0, 10.0, 100.0, 100.0);
        assert_eq!(site_field(&plane(), &c, Site::new(0, 0, 0)).unwrap(), c.b0_t);
    }

    #[test]
    fn adjacent_field_step() {
        let c = GradientConfig::from_gauss(100.0, 10.0, 0.0, 0.0);
        let g = plane();
        let d = site_field(&g, &c, Site::new(1, 0, 0)).unwrap() - site_field(&g, &c, Site::new(0, 0, 0)).unwrap();
        // 10 G/cm × 266 nm = 2.66e-4 G.
        assert!((d / GAUSS - 2.66e-4).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_site() {
        let c = GradientConfig::uniform(0.01);
        assert!(matches!(
            site_field(&plane(), &c, Site::new(10, 0, 0)),
            Err(Error::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_gradients_give_uniform_field_and_no_gap() {
        let c = GradientConfig::uniform(0.01);
        let p = AtomParams::default();
        let m = resonance_map(&plane(), &c, &p, AddressedTransition::stretched(&p), 0).unwrap();
        assert!(m.entries.iter().all(|e| e.field_t == 0.01));
        assert_eq!(m.min_gap_hz, 0.0);
    }

    #[test]
    fn paper_gradients_resolve_every_site() {
        let p = AtomParams::default();
        let c = GradientConfig::from_gauss(100.0, 10.0, 100.0, 0.0);
        let m = resonance_map(&plane(), &c, &p, AddressedTransition::stretched(&p), 0).unwrap();
        // Brute-force all pairs.
        let mut brute = f64::INFINITY;
        for (n, a) in m.entries.iter().enumerate() {
            for b in &m.entries[n + 1..] {
                brute = brute.min((a.frequency_hz - b.frequency_hz).abs());
            }
        }
        assert_eq!(brute, m.min_gap_hz);
        // 2.7 μ_B slope ≈ 3.76 MHz/G at 100 G → just under 1 kHz.
        assert!((m.min_gap_hz - 1000.0).abs() < 10.0, "{}", m.min_gap_hz);
    }

    #[test]
    fn eq1_equality_case() {
        let v = validate_gradients(&plane(), &GradientConfig::from_gauss(100.0, 10.0, 100.0, 0.0));
        assert!(v.eq1_holds);
        assert!(!v.eq1_strict);
        assert!(v.fields_unique);
    }

    #[test]
    fn eq1_violation_reports_collision() {
        let g = LatticeGeometry::new(2, 2, 1, 266e-9).unwrap();
        let v = validate_gradients(&g, &GradientConfig::from_gauss(100.0, 10.0, 10.0, 0.0));
        assert!(!v.eq1_holds);
        assert_eq!(v.colliding_pair, Some((Site::new(1, 0, 0), Site::new(0, 1, 0))));
    }

    #[test]
    fn planner_matches_paper_gradients() {
        let p = AtomParams::default();
        let c = plan_gradients(&plane(), 1000.0, &p, &PlannerSettings::default()).unwrap();
        assert!((c.gx_t_per_m / GAUSS_PER_CM - 10.0).abs() < 0.5);
        assert!((c.gy_t_per_m / GAUSS_PER_CM - 100.0).abs() < 5.0);
        assert!(c.b0_t <= 100.0 * GAUSS + 1e-15);
        let m = resonance_map(&plane(), &c, &p, AddressedTransition::stretched(&p), 0).unwrap();
        assert!(m.min_gap_hz >= 1000.0);
    }

    #[test]
    fn single_site_needs_no_gradient() {
        let g = LatticeGeometry::new(1, 1, 1, 266e-9).unwrap();
        let c = plan_gradients(&g, 1000.0, &AtomParams::default(), &PlannerSettings::default()).unwrap();
        assert_eq!((c.gx_t_per_m, c.gy_t_per_m, c.gz_t_per_m), (0.0, 0.0, 0.0));
    }

    #[test]
    fn infeasible_plan() {
        let g = LatticeGeometry::new(100, 100, 100, 266e-9).unwrap();
        let s = PlannerSettings { bias_ceiling_t: 1e-3, ..Default::default() };
        assert!(matches!(plan_gradients(&g, 1e6, &AtomParams::default(), &s), Err(Error::Planning(_))));
    }

    #[test]
    fn affine_along_axes_at_100_gauss() {
        let p = AtomParams::default();
        let c = GradientConfig::from_gauss(100.0, 10.0, 100.0, 0.0);
        let m = resonance_map(&plane(), &c, &p, AddressedTransition::stretched(&p), 0).unwrap();
        let f = |i, j| m.frequency(Site::new(i, j, 0)).unwrap();
        for j in 0..10 {
            for i in 1..9 {
                let d2 = f(i + 1, j) - 2.0 * f(i, j) + f(i - 1, j);
                assert!(d2.abs() <= 1e-9 * f(i, j).abs(), "{d2}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn strict_eq1_implies_unique(nx in 1usize..8, ny in 1usize..8, gx in 0.1..50.0f64, extra in 1.0001..3.0f64) {
            let g = LatticeGeometry::new(nx, ny, 1, 266e-9).unwrap();
            let gy = nx as f64 * gx * extra;
            let v = validate_gradients(&g, &GradientConfig::from_gauss(100.0, gx, gy, 0.0));
            prop_assert!(v.eq1_strict);
            prop_assert!(v.fields_unique);
        }

        #[test]
        fn planner_round_trip(nx in 1usize..12, ny in 1usize..12, nz in 1usize..3, gap in 100.0..5000.0f64) {
            let g = LatticeGeometry::new(nx, ny, nz, 266e-9).unwrap();
            let p = AtomParams::default();
            let c = plan_gradients(&g, gap, &p, &PlannerSettings::default()).unwrap();
            let v = validate_gradients(&g, &c);
            prop_assert!(v.eq1_holds);
            prop_assert!(v.fields_unique || nx * ny == 1);
            prop_assert!(c.check_bias(&g, 10.0).is_ok());
        }

        #[test]
        fn planner_monotone(gap in 100.0..5000.0f64, factor in 1.0..4.0f64) {
            let p = AtomParams::default();
            let s = PlannerSettings::default();
            let a = plan_gradients(&plane(), gap, &p, &s).unwrap();
            let b = plan_gradients(&plane(), gap * factor, &p, &s).unwrap();
            prop_assert!(b.gx_t_per_m >= a.gx_t_per_m);
        }
    }
}
