//! Loops in the Hamiltonian group, lifts of their action to capped loops,
//! the shift constant relating the action functionals of two generators of
//! one time-1 map, and the loop monodromy value
//! `I = -(capping area) - integral of the generator along the basepoint
//! orbit`, together with verifiers for its homomorphism property and for
//! the constancy of the action along normalized isotopies with fixed
//! endpoints.
//!
//! Discretization: capped loops carry an explicit disc surface on a polar
//! grid (radial index `s`, angular index `t`) in the universal cover; all
//! signed areas are sums of per-cell chart cross-products, which telescope
//! to boundary line integrals and stay consistent across every operation.

use crate::error::{Error, Result};
use crate::flow::family::{random_chart_point, IsotopyFamily};
use crate::flow::{flow_raw, FlowConfig};
use crate::geom::{Manifold, Point};
use crate::hamalg::{sharp, HamPath};
use crate::hamdsl::NormalizationTag;
use crate::num::Real;
use crate::orbits::{Capping, PeriodicOrbit};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Default polar disc resolution: radial cells.
pub const DEFAULT_DISC_NS: usize = 64;
/// Default polar disc resolution: angular cells.
pub const DEFAULT_DISC_NT: usize = 256;
/// Chart-distance tolerance for the time-1 map to count as the identity.
pub const LOOP_ID_TOL: f64 = 1e-5;
/// Number of probe points for the identity check.
pub const LOOP_ID_PROBES: usize = 100;
/// Closedness tolerance for discretized loops.
pub const CLOSEDNESS_TOL: f64 = 1e-6;
/// Allowed variation of the monodromy value across basepoints.
pub const BASEPOINT_SPREAD_TOL: f64 = 1e-4;
/// Allowed standard deviation of the shift constant across probes.
pub const SHIFT_STDDEV_TOL: f64 = 1e-4;
/// Residual tolerance of the homomorphism check.
pub const HOMOMORPHISM_TOL: f64 = 1e-4;
/// Allowed drift of the action along a normalized fixed-endpoint isotopy.
pub const ISOTOPY_DRIFT_TOL: f64 = 5e-4;

const LOOP_SEED: u64 = 0x6c6f6f70;
const SLICE_SEED: u64 = 0x736c6963;

// ---------------------------------------------------------------------------
// discretized loops and capping discs

/// A loop sampled on the uniform time grid `t_j = j / n`, stored as `n + 1`
/// points in the universal cover (the last point may differ from the first
/// by chart periods for loops winding around the torus).
#[derive(Debug, Clone)]
pub struct LoopSamples<T> {
    pub samples: Vec<(T, T)>,
    pub n: usize,
    manifold: Manifold<T>,
}

impl<T: Real> LoopSamples<T> {
    pub fn new(manifold: Manifold<T>, samples: Vec<(T, T)>) -> Result<Self> {
        assert!(samples.len() >= 4, "a loop needs at least 3 samples");
        let n = samples.len() - 1;
        let start = manifold.chart_wrap(samples[0])?;
        let end = manifold.chart_wrap(samples[n])?;
        let gap = manifold.distance(start, end);
        if gap >= T::lit(CLOSEDNESS_TOL) {
            return Err(Error::EndpointMismatch {
                distance: gap.to64(),
            });
        }
        Ok(Self {
            samples,
            n,
            manifold,
        })
    }

    pub fn constant(manifold: Manifold<T>, p: Point<T>, n: usize) -> Self {
        Self {
            samples: vec![(p.q1, p.q2); n + 1],
            n,
            manifold,
        }
    }

    pub fn manifold(&self) -> Manifold<T> {
        self.manifold
    }

    pub fn time(&self, j: usize) -> T {
        T::from_usize_(j) / T::from_usize_(self.n)
    }

    /// Mean of `path`'s generator value along the loop (left Riemann sum,
    /// which is the trapezoid rule on a periodic integrand).
    pub fn mean_value(&self, path: &HamPath<T>, cfg: &FlowConfig<T>) -> Result<T> {
        let mut acc = T::zero();
        for j in 0..self.n {
            let p = self.manifold.chart_wrap(self.samples[j])?;
            acc += path.value(p, self.time(j), cfg)?;
        }
        Ok(acc / T::from_usize_(self.n))
    }
}

/// A disc surface on the polar grid: `(n_s + 1) x (n_t + 1)` points in the
/// universal cover, row `i` holding the loop at radial position `i / n_s`
/// (row 0 is the center, row `n_s` the boundary).
#[derive(Debug, Clone)]
pub struct DiscGrid<T> {
    pub n_s: usize,
    pub n_t: usize,
    pub points: Vec<(T, T)>,
}

impl<T: Real> DiscGrid<T> {
    pub fn from_rows(rows: Vec<Vec<(T, T)>>) -> Self {
        let n_s = rows.len() - 1;
        let n_t = rows[0].len() - 1;
        assert!(rows.iter().all(|r| r.len() == n_t + 1));
        Self {
            n_s,
            n_t,
            points: rows.into_iter().flatten().collect(),
        }
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> (T, T) {
        self.points[i * (self.n_t + 1) + j]
    }

    pub fn row(&self, i: usize) -> &[(T, T)] {
        &self.points[i * (self.n_t + 1)..(i + 1) * (self.n_t + 1)]
    }

    /// Signed symplectic area: the sum of signed quadrilateral cell areas in
    /// the chart/cover, oriented by the (s, t) parametrization.
    pub fn signed_area(&self) -> T {
        let mut total = T::zero();
        for i in 0..self.n_s {
            for j in 0..self.n_t {
                total += quad_area(
                    self.point(i, j),
                    self.point(i + 1, j),
                    self.point(i + 1, j + 1),
                    self.point(i, j + 1),
                );
            }
        }
        total
    }
}

/// Signed area of the quadrilateral `a -> b -> c -> d` via the diagonal
/// cross product.
#[inline]
fn quad_area<T: Real>(a: (T, T), b: (T, T), c: (T, T), d: (T, T)) -> T {
    T::lit(0.5) * ((c.0 - a.0) * (d.1 - b.1) - (c.1 - a.1) * (d.0 - b.0))
}

/// Signed area of the strip between two consecutive loops of a homotopy
/// (`a` at the inner parameter value, `b` at the outer one).
fn strip_area<T: Real>(a: &[(T, T)], b: &[(T, T)]) -> T {
    let mut total = T::zero();
    for j in 0..a.len() - 1 {
        total += quad_area(a[j], b[j], b[j + 1], a[j + 1]);
    }
    total
}

/// A loop together with a capping disc and its signed symplectic area.
///
/// For caps transported from a declared basepoint capping, `disc` stores
/// only the swept transport surface; `area` is always the authoritative
/// total capping area.
#[derive(Debug, Clone)]
pub struct CappedLoop<T> {
    pub boundary: LoopSamples<T>,
    pub disc: DiscGrid<T>,
    pub area: T,
}

impl<T: Real> CappedLoop<T> {
    /// The constant loop at `p` with the constant (zero-area) disc.
    pub fn constant(manifold: Manifold<T>, p: Point<T>, n_s: usize, n_t: usize) -> Self {
        let rows = vec![vec![(p.q1, p.q2); n_t + 1]; n_s + 1];
        let disc = DiscGrid::from_rows(rows);
        Self {
            boundary: LoopSamples::constant(manifold, p, n_t),
            disc,
            area: T::zero(),
        }
    }

    /// The canonical cone capping: a straight-line cone to the loop's
    /// centroid in the cover on the plane and the torus, a meridian cone to
    /// the south pole on the sphere.
    pub fn cone(boundary: LoopSamples<T>, n_s: usize) -> Result<Self> {
        let m = boundary.manifold();
        let n = boundary.n;
        // only torus winding obstructs a cone; sphere loops winding in theta
        // are still contractible and capped by the meridian cone
        if m.kind == crate::geom::ManifoldKind::Torus2 {
            let drift1 = boundary.samples[n].0 - boundary.samples[0].0;
            let drift2 = boundary.samples[n].1 - boundary.samples[0].1;
            if drift1.abs() > T::lit(0.5) || drift2.abs() > T::lit(0.5) {
                return Err(Error::IncompatibleCapping {
                    reason: "cone capping requires a loop with zero winding".into(),
                });
            }
        }
        let rows: Vec<Vec<(T, T)>> = match m.kind {
            crate::geom::ManifoldKind::Sphere2 => (0..=n_s)
                .map(|i| {
                    let fac = T::from_usize_(i) / T::from_usize_(n_s);
                    boundary
                        .samples
                        .iter()
                        .map(|&(th, z)| (th, -T::one() + fac * (z + T::one())))
                        .collect()
                })
                .collect(),
            _ => {
                let inv = T::one() / T::from_usize_(n);
                let mut apex = (T::zero(), T::zero());
                for &(a, b) in &boundary.samples[..n] {
                    apex.0 += a * inv;
                    apex.1 += b * inv;
                }
                (0..=n_s)
                    .map(|i| {
                        let fac = T::from_usize_(i) / T::from_usize_(n_s);
                        boundary
                            .samples
                            .iter()
                            .map(|&(a, b)| {
                                (apex.0 + fac * (a - apex.0), apex.1 + fac * (b - apex.1))
                            })
                            .collect()
                    })
                    .collect()
            }
        };
        let disc = DiscGrid::from_rows(rows);
        let area = disc.signed_area();
        Ok(Self {
            boundary,
            disc,
            area,
        })
    }
}

fn require_same_grid(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::GridMismatch { left, right });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// loops in the Hamiltonian group and their lifts

/// A loop based at the identity: a generator whose time-1 map is the
/// identity, optionally with a contraction family `h^s` interpolating the
/// constant identity loop (`s = 0`) and the loop itself (`s = 1`).
pub struct HamLoop<T> {
    pub generator: HamPath<T>,
    pub contractible_hint: Option<IsotopyFamily<T>>,
}

impl<T: Real> HamLoop<T> {
    /// Verifies that the generator's time-1 map fixes `LOOP_ID_PROBES`
    /// deterministic probe points within `LOOP_ID_TOL`.
    pub fn new(generator: HamPath<T>, cfg: &FlowConfig<T>) -> Result<Self> {
        let m = generator.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(LOOP_SEED);
        let mut worst = T::zero();
        for _ in 0..LOOP_ID_PROBES {
            let (a, b) = random_chart_point(&m, &mut rng);
            let p = Point::new(a, b);
            let q = generator.flow(p, T::zero(), T::one(), cfg)?;
            worst = worst.max(m.distance(p, q));
        }
        if worst >= T::lit(LOOP_ID_TOL) {
            return Err(Error::EndpointMismatch {
                distance: worst.to64(),
            });
        }
        Ok(Self {
            generator,
            contractible_hint: None,
        })
    }

    /// Attaches a contraction family after checking its boundary slices:
    /// the `s = 0` member must generate the constant identity loop and the
    /// `s = 1` member must generate this loop, both within `LOOP_ID_TOL` on
    /// deterministic probes.
    pub fn with_contraction(
        mut self,
        fam: IsotopyFamily<T>,
        cfg: &FlowConfig<T>,
    ) -> Result<Self> {
        let m = self.generator.manifold();
        if fam.manifold().kind != m.kind {
            return Err(Error::ManifoldMismatch);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(SLICE_SEED);
        let mut worst = T::zero();
        let first = &fam.members[0];
        let last = &fam.members[fam.s_count() - 1];
        for _ in 0..12 {
            let (a, b) = random_chart_point(&m, &mut rng);
            let p = Point::new(a, b);
            for &t in &[0.35, 0.7, 1.0] {
                let q = first.flow(p, T::zero(), T::lit(t), cfg)?;
                worst = worst.max(m.distance(p, q));
            }
            for &t in &[0.37, 0.81] {
                let q = last.flow(p, T::zero(), T::lit(t), cfg)?;
                let r = self.generator.flow(p, T::zero(), T::lit(t), cfg)?;
                worst = worst.max(m.distance(q, r));
            }
        }
        if worst >= T::lit(LOOP_ID_TOL) {
            return Err(Error::EndpointMismatch {
                distance: worst.to64(),
            });
        }
        self.contractible_hint = Some(fam);
        Ok(self)
    }

    pub fn manifold(&self) -> Manifold<T> {
        self.generator.manifold()
    }
}

/// How the loop's action on loops is lifted to capped loops.
#[derive(Debug, Clone)]
pub enum Lift<T> {
    /// Sweep the loop's contraction family over the capping disc.
    CanonicalFromContraction,
    /// Declare the capping of the basepoint-orbit loop directly and
    /// transport to other capped loops by area bookkeeping; `sheet` selects
    /// the period-group coset of the declared area.
    BasepointCapping {
        basepoint: Point<T>,
        cap_area: T,
        sheet: i64,
    },
}

/// Samples `t -> phi_t(x)` of the path's flow on the uniform grid
/// `t_j = j / n`, in the cover. Chains leaf integrations along the single
/// trajectory; composites recurse structurally.
fn sample_flow_on_grid<T: Real>(
    path: &HamPath<T>,
    x: (T, T),
    n: usize,
    cfg: &FlowConfig<T>,
) -> Result<Vec<(T, T)>> {
    let t = |j: usize| T::from_usize_(j) / T::from_usize_(n);
    match path {
        HamPath::Leaf(h) => {
            let mut out = Vec::with_capacity(n + 1);
            out.push(x);
            let mut cur = x;
            for j in 0..n {
                cur = flow_raw(h, cur, t(j), t(j + 1), cfg)?;
                out.push(cur);
            }
            Ok(out)
        }
        HamPath::Shifted { base, .. } => sample_flow_on_grid(base, x, n, cfg),
        HamPath::Sharp(f, g) => {
            let inner = sample_flow_on_grid(g, x, n, cfg)?;
            inner
                .into_iter()
                .enumerate()
                .map(|(j, w)| f.flow_from0_raw(w, t(j), cfg))
                .collect()
        }
        HamPath::Bar(g) => (0..=n).map(|j| g.flow_to0_raw(x, t(j), cfg)).collect(),
        HamPath::Reparam(f, prof) => (0..=n)
            .map(|j| f.flow_from0_raw(x, prof.lambda(t(j)), cfg))
            .collect(),
    }
}

/// Applies the loop pointwise in time: `(h . gamma)(t) = h(t)(gamma(t))`.
pub fn loop_act<T: Real>(
    h: &HamLoop<T>,
    gamma: &LoopSamples<T>,
    cfg: &FlowConfig<T>,
) -> Result<LoopSamples<T>> {
    if h.manifold().kind != gamma.manifold().kind {
        return Err(Error::ManifoldMismatch);
    }
    let n = gamma.n;
    let samples: Vec<(T, T)> = (0..=n)
        .into_par_iter()
        .map(|j| h.generator.flow_from0_raw(gamma.samples[j], gamma.time(j), cfg))
        .collect::<Result<_>>()?;
    LoopSamples::new(gamma.manifold(), samples)
}

/// Flows one disc row under the member's path at the row's time grid,
/// chaining along the trajectory when the whole row is a single point.
fn flow_disc_row<T: Real>(
    member: &HamPath<T>,
    row: &[(T, T)],
    cfg: &FlowConfig<T>,
) -> Result<Vec<(T, T)>> {
    let n_t = row.len() - 1;
    let first = row[0];
    if row.iter().all(|&p| p.0 == first.0 && p.1 == first.1) {
        return sample_flow_on_grid(member, first, n_t, cfg);
    }
    let t = |j: usize| T::from_usize_(j) / T::from_usize_(n_t);
    (0..=n_t)
        .map(|j| member.flow_from0_raw(row[j], t(j), cfg))
        .collect()
}

/// Straight-line cone in the cover from the basepoint to the loop, row `i`
/// at radial position `i / n_s`.
fn cone_to_basepoint<T: Real>(
    basepoint: Point<T>,
    boundary: &LoopSamples<T>,
    n_s: usize,
) -> DiscGrid<T> {
    let rows: Vec<Vec<(T, T)>> = (0..=n_s)
        .map(|i| {
            let fac = T::from_usize_(i) / T::from_usize_(n_s);
            boundary
                .samples
                .iter()
                .map(|&(a, b)| {
                    (
                        basepoint.q1 + fac * (a - basepoint.q1),
                        basepoint.q2 + fac * (b - basepoint.q2),
                    )
                })
                .collect()
        })
        .collect();
    DiscGrid::from_rows(rows)
}

/// The lifted action on capped loops.
///
/// With a contraction, the new disc is the pointwise sweep
/// `(i, j) -> h^{s_i}(t_j)(w(s_i, t_j))` and the new area its cell sum.
/// With a declared basepoint capping, the new area is
/// `declared + area(swept transport surface) - area(cone from basepoint)
///  + area(w)`: the transport surface is the image under the loop of the
/// cone homotopy from the constant basepoint loop to the boundary, and the
/// difference `area(w) - area(cone)` carries over unchanged because the two
/// cappings of one boundary differ by a cycle fixed by the time-1 identity.
pub fn capped_image<T: Real>(
    h: &HamLoop<T>,
    lift: &Lift<T>,
    capped: &CappedLoop<T>,
    cfg: &FlowConfig<T>,
) -> Result<CappedLoop<T>> {
    let m = h.manifold();
    if m.kind != capped.boundary.manifold().kind {
        return Err(Error::ManifoldMismatch);
    }
    require_same_grid(capped.disc.n_t, capped.boundary.n)?;
    match lift {
        Lift::CanonicalFromContraction => {
            let fam = h
                .contractible_hint
                .as_ref()
                .ok_or(Error::MissingContraction)?;
            require_same_grid(capped.disc.n_s + 1, fam.s_count())?;
            let n_s = capped.disc.n_s;
            let rows: Vec<Vec<(T, T)>> = (0..=n_s)
                .into_par_iter()
                .map(|i| flow_disc_row(&fam.members[i], capped.disc.row(i), cfg))
                .collect::<Result<_>>()?;
            let disc = DiscGrid::from_rows(rows);
            let area = disc.signed_area();
            let boundary = LoopSamples::new(m, disc.row(n_s).to_vec())?;
            Ok(CappedLoop {
                boundary,
                disc,
                area,
            })
        }
        Lift::BasepointCapping {
            basepoint,
            cap_area,
            sheet,
        } => {
            let n_s = capped.disc.n_s;
            let cone = cone_to_basepoint(*basepoint, &capped.boundary, n_s);
            let rows: Vec<Vec<(T, T)>> = (0..=n_s)
                .into_par_iter()
                .map(|i| flow_disc_row(&h.generator, cone.row(i), cfg))
                .collect::<Result<_>>()?;
            let swept = DiscGrid::from_rows(rows);
            let declared = *cap_area + T::lit(*sheet as f64) * m.gamma_omega_generator;
            let area = declared + swept.signed_area() - cone.signed_area() + capped.area;
            let boundary = LoopSamples::new(m, swept.row(n_s).to_vec())?;
            Ok(CappedLoop {
                boundary,
                disc: swept,
                area,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// shift constant and monodromy value

/// Resolution and sampling knobs for the monodromy evaluations.
#[derive(Debug, Clone, Copy)]
pub struct MonodromyOptions {
    /// Radial disc cells for basepoint lifts (contractions fix their own).
    pub n_s: usize,
    /// Angular/time cells.
    pub n_t: usize,
    /// Number of basepoints the value is averaged over.
    pub basepoints: usize,
    pub seed: u64,
}

impl Default for MonodromyOptions {
    fn default() -> Self {
        Self {
            n_s: DEFAULT_DISC_NS,
            n_t: DEFAULT_DISC_NT,
            basepoints: 10,
            seed: 0x6d6f6e6f,
        }
    }
}

fn require_normalized<T: Real>(path: &HamPath<T>) -> Result<()> {
    match path.normalization() {
        NormalizationTag::MeanZero | NormalizationTag::CompactSupport => Ok(()),
        tag => Err(Error::NotNormalized {
            tag: tag.to_string(),
        }),
    }
}

fn radial_cells_for<T: Real>(h: &HamLoop<T>, lift: &Lift<T>, opts: &MonodromyOptions) -> Result<usize> {
    match lift {
        Lift::CanonicalFromContraction => {
            let fam = h
                .contractible_hint
                .as_ref()
                .ok_or(Error::MissingContraction)?;
            Ok(fam.s_count() - 1)
        }
        Lift::BasepointCapping { .. } => Ok(opts.n_s),
    }
}

/// The monodromy value of the lifted loop, evaluated with a vanishing
/// reference Hamiltonian: for each basepoint `p`, form the image of the
/// constant capped loop at `p` and return
/// `-(capping area) - mean_t H(orbit(t), t)`, averaged over basepoints
/// after checking their spread.
pub fn monodromy_value<T: Real>(
    h: &HamLoop<T>,
    lift: &Lift<T>,
    opts: &MonodromyOptions,
    cfg: &FlowConfig<T>,
) -> Result<T> {
    require_normalized(&h.generator)?;
    let m = h.manifold();
    let n_s = radial_cells_for(h, lift, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut values = Vec::with_capacity(opts.basepoints);
    for _ in 0..opts.basepoints {
        let (a, b) = random_chart_point(&m, &mut rng);
        let c0 = CappedLoop::constant(m, Point::new(a, b), n_s, opts.n_t);
        let img = capped_image(h, lift, &c0, cfg)?;
        values.push(-img.area - img.boundary.mean_value(&h.generator, cfg)?);
    }
    let lo = values.iter().cloned().fold(T::infinity(), T::min);
    let hi = values.iter().cloned().fold(-T::infinity(), T::max);
    let spread = hi - lo;
    if spread >= T::lit(BASEPOINT_SPREAD_TOL) {
        return Err(Error::BasepointDependent {
            spread: spread.to64(),
        });
    }
    let mean = values.iter().cloned().fold(T::zero(), |acc, v| acc + v)
        / T::from_usize_(values.len());
    Ok(mean)
}

/// The constant relating the action functionals of two generators `f`, `g`
/// of one time-1 map through the lifted comparison loop: evaluates
/// `A_f(lifted image of [gamma, w]) - A_g([gamma, w])` on each probe capped
/// loop and returns the mean, after checking the probes agree.
pub fn lemma23_shift<T: Real>(
    f: &HamPath<T>,
    g: &HamPath<T>,
    lift: &Lift<T>,
    contraction: Option<IsotopyFamily<T>>,
    probes: &[CappedLoop<T>],
    cfg: &FlowConfig<T>,
) -> Result<T> {
    assert!(probes.len() >= 3, "need at least 3 probe capped loops");
    for probe in probes {
        require_same_grid(probe.boundary.n, probes[0].boundary.n)?;
    }
    let gen = sharp(f.clone(), crate::hamalg::bar(g.clone()))?;
    let mut h = HamLoop::new(gen, cfg)?;
    if let Some(fam) = contraction {
        h = h.with_contraction(fam, cfg)?;
    }
    let diffs: Vec<T> = probes
        .par_iter()
        .map(|probe| {
            let img = capped_image(&h, lift, probe, cfg)?;
            let a_f = -img.area - img.boundary.mean_value(f, cfg)?;
            let a_g = -probe.area - probe.boundary.mean_value(g, cfg)?;
            Ok(a_f - a_g)
        })
        .collect::<Result<_>>()?;
    let n = T::from_usize_(diffs.len());
    let mean = diffs.iter().cloned().fold(T::zero(), |a, v| a + v) / n;
    let var = diffs
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .fold(T::zero(), |a, v| a + v)
        / n;
    let stddev = var.sqrt();
    if stddev >= T::lit(SHIFT_STDDEV_TOL) {
        return Err(Error::ShiftNotConstant {
            stddev: stddev.to64(),
        });
    }
    Ok(mean)
}

// ---------------------------------------------------------------------------
// verification reports

/// A serializable pass/fail record of one numerical verification.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub inputs_digest: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(check: &str, inputs: &[String], residual: f64, tolerance: f64) -> Self {
        Self {
            check: check.to_string(),
            inputs_digest: fnv_digest(inputs),
            residual,
            tolerance,
            pass: residual < tolerance,
        }
    }
}

/// FNV-1a digest of the concatenated input descriptions, as 16 hex digits.
pub fn fnv_digest(parts: &[String]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for part in parts {
        for byte in part.as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash ^= 0x1f;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

/// Checks additivity of the monodromy value under pointwise composition of
/// loops: the composite loop is generated by `H2 # H1` and its lift by
/// applying the two lifted actions in sequence.
pub fn verify_homomorphism<T: Real>(
    h1: &HamLoop<T>,
    h2: &HamLoop<T>,
    lift1: &Lift<T>,
    lift2: &Lift<T>,
    opts: &MonodromyOptions,
    cfg: &FlowConfig<T>,
) -> Result<VerificationReport> {
    let i1 = monodromy_value(h1, lift1, opts, cfg)?;
    let i2 = monodromy_value(h2, lift2, opts, cfg)?;
    let gen21 = sharp(h2.generator.clone(), h1.generator.clone())?;
    require_normalized(&gen21)?;
    let m = h1.manifold();
    let n_s = radial_cells_for(h1, lift1, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut values = Vec::with_capacity(opts.basepoints);
    for _ in 0..opts.basepoints {
        let (a, b) = random_chart_point(&m, &mut rng);
        let c0 = CappedLoop::constant(m, Point::new(a, b), n_s, opts.n_t);
        let c1 = capped_image(h1, lift1, &c0, cfg)?;
        let c2 = capped_image(h2, lift2, &c1, cfg)?;
        values.push(-c2.area - c2.boundary.mean_value(&gen21, cfg)?);
    }
    let lo = values.iter().cloned().fold(T::infinity(), T::min);
    let hi = values.iter().cloned().fold(-T::infinity(), T::max);
    let spread = hi - lo;
    if spread >= T::lit(BASEPOINT_SPREAD_TOL) {
        return Err(Error::BasepointDependent {
            spread: spread.to64(),
        });
    }
    let i21 = values.iter().cloned().fold(T::zero(), |acc, v| acc + v)
        / T::from_usize_(values.len());
    let residual = (i21 - i2 - i1).abs().to64();
    Ok(VerificationReport::new(
        "monodromy_homomorphism",
        &[
            format!("{:?}", h1.generator),
            format!("{:?}", h2.generator),
            format!("{lift1:?}"),
            format!("{lift2:?}"),
        ],
        residual,
        HOMOMORPHISM_TOL,
    ))
}

// ---------------------------------------------------------------------------
// action constancy along normalized isotopies

/// The per-parameter actions along an isotopy and their maximal drift.
#[derive(Debug, Clone)]
pub struct IsotopyActionTrace<T> {
    pub chi: Vec<T>,
    pub max_drift: T,
    pub pass: bool,
}

impl<T: Real> IsotopyActionTrace<T> {
    pub fn report(&self, inputs: &[String]) -> VerificationReport {
        VerificationReport::new(
            "isotopy_action_constancy",
            inputs,
            self.max_drift.to64(),
            ISOTOPY_DRIFT_TOL,
        )
    }
}

/// Tracks the action of one capped orbit of the first member across a
/// fixed-endpoint isotopy: transports the orbit by the comparison loops
/// `h^s(t) = f^s_t o (f^0_t)^{-1}`, accumulates the capping area through
/// the swept strips, and evaluates each member's generator along its loop.
/// Passes when the action drifts by less than `ISOTOPY_DRIFT_TOL`.
pub fn verify_isotopy_constancy<T: Real>(
    fam: &IsotopyFamily<T>,
    orbit: &PeriodicOrbit<T>,
    cap: &Capping<T>,
    cfg: &FlowConfig<T>,
) -> Result<IsotopyActionTrace<T>> {
    let m = fam.manifold();
    if m.kind != orbit.manifold().kind {
        return Err(Error::ManifoldMismatch);
    }
    fam.check_same_endpoint(20, 17, cfg)?;
    let n = orbit.n;
    let sc = fam.s_count();
    let t = |j: usize| T::from_usize_(j) / T::from_usize_(n);
    let rows: Vec<Vec<(T, T)>> = (0..sc)
        .into_par_iter()
        .map(|i| {
            (0..=n)
                .map(|j| {
                    let x = fam.members[0].flow_to0_raw(orbit.samples[j], t(j), cfg)?;
                    fam.members[i].flow_from0_raw(x, t(j), cfg)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let base_area = cap.signed_area + T::lit(cap.sheet as f64) * m.gamma_omega_generator;
    let mut chi = Vec::with_capacity(sc);
    let mut swept = T::zero();
    for i in 0..sc {
        if i > 0 {
            swept += strip_area(&rows[i - 1], &rows[i]);
        }
        let mut acc = T::zero();
        for j in 0..n {
            let p = m.chart_wrap(rows[i][j])?;
            acc += fam.members[i].value(p, t(j), cfg)?;
        }
        chi.push(-(base_area + swept) - acc / T::from_usize_(n));
    }
    let max_drift = chi
        .iter()
        .map(|&v| (v - chi[0]).abs())
        .fold(T::zero(), T::max);
    Ok(IsotopyActionTrace {
        pass: max_drift < T::lit(ISOTOPY_DRIFT_TOL),
        chi,
        max_drift,
    })
}

/// A deterministic smooth probe loop: the base point perturbed by a few
/// Fourier modes, with the transverse amplitude shrunk near the sphere
/// poles so the loop stays inside the chart.
pub fn fourier_probe_loop<T: Real>(
    m: &Manifold<T>,
    rng: &mut ChaCha8Rng,
    amplitude: f64,
    n: usize,
) -> Result<LoopSamples<T>> {
    let (c1, c2) = random_chart_point(m, rng);
    let amp2 = match m.kind {
        crate::geom::ManifoldKind::Sphere2 => {
            amplitude.min((1.0 - c2.to64().abs()) * 0.3)
        }
        _ => amplitude,
    };
    let mut coeffs = [[0.0f64; 4]; 3];
    for (k, row) in coeffs.iter_mut().enumerate() {
        let scale = amplitude / (k + 1) as f64;
        let zscale = amp2 / (k + 1) as f64;
        row[0] = rng.gen_range(-scale..scale);
        row[1] = rng.gen_range(-scale..scale);
        row[2] = rng.gen_range(-zscale..zscale);
        row[3] = rng.gen_range(-zscale..zscale);
    }
    let samples = (0..=n)
        .map(|j| {
            let t = j as f64 / n as f64;
            let mut a = c1.to64();
            let mut b = c2.to64();
            for (k, row) in coeffs.iter().enumerate() {
                let w = std::f64::consts::TAU * (k + 1) as f64 * t;
                a += row[0] * w.cos() + row[1] * w.sin();
                b += row[2] * w.cos() + row[3] * w.sin();
            }
            (T::lit(a), T::lit(b))
        })
        .collect();
    LoopSamples::new(*m, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamalg::{bar, reparam, ReparamProfile};
    use crate::hamdsl::{parse, Hamiltonian};
    use crate::num::PeriodicSpline;

    const PI: f64 = std::f64::consts::PI;
    const TAU: f64 = std::f64::consts::TAU;

    fn cfg() -> FlowConfig<f64> {
        FlowConfig::default()
    }

    fn identity_loop(m: &Manifold<f64>) -> HamLoop<f64> {
        let zero = Hamiltonian::zero(*m).tagged(NormalizationTag::MeanZero);
        HamLoop::new(HamPath::Leaf(zero), &cfg()).unwrap()
    }

    fn constant_contraction(m: &Manifold<f64>, count: usize) -> IsotopyFamily<f64> {
        let zero = Hamiltonian::zero(*m).tagged(NormalizationTag::MeanZero);
        IsotopyFamily::new(vec![HamPath::Leaf(zero); count])
    }

    fn rotation_loop() -> HamLoop<f64> {
        let m = Manifold::<f64>::sphere();
        let h = parse("2*pi*z", &m).unwrap().tagged(NormalizationTag::MeanZero);
        HamLoop::new(HamPath::Leaf(h), &cfg()).unwrap()
    }

    fn north_lift() -> Lift<f64> {
        Lift::BasepointCapping {
            basepoint: Point::new(0.0, 1.0),
            cap_area: 0.0,
            sheet: 0,
        }
    }

    fn small_opts() -> MonodromyOptions {
        MonodromyOptions {
            n_s: 16,
            n_t: 64,
            ..MonodromyOptions::default()
        }
    }

    // The comparison loop of a path with its own reparametrization, plus the
    // canonical contraction that scales the reparametrization to zero.
    fn reparam_pair(
        m: &Manifold<f64>,
        expr: &str,
        a: f64,
        s_count: usize,
    ) -> (HamPath<f64>, HamPath<f64>, IsotopyFamily<f64>) {
        let f = HamPath::Leaf(parse(expr, m).unwrap().tagged(NormalizationTag::MeanZero));
        let g = reparam(f.clone(), ReparamProfile::new(a));
        let members = (0..s_count)
            .map(|i| {
                let s = i as f64 / (s_count - 1) as f64;
                sharp(
                    f.clone(),
                    bar(reparam(f.clone(), ReparamProfile::new(a * s))),
                )
                .unwrap()
            })
            .collect();
        (f, g, IsotopyFamily::new(members))
    }

    #[test]
    fn non_loops_are_rejected() {
        let m = Manifold::<f64>::sphere();
        let h = parse("pi*z", &m).unwrap();
        assert!(matches!(
            HamLoop::new(HamPath::Leaf(h), &cfg()),
            Err(Error::EndpointMismatch { .. })
        ));
    }

    #[test]
    fn identity_loop_fixes_loops() {
        let m = Manifold::<f64>::torus();
        let h = identity_loop(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gamma = fourier_probe_loop(&m, &mut rng, 0.2, 64).unwrap();
        let image = loop_act(&h, &gamma, &cfg()).unwrap();
        for (a, b) in gamma.samples.iter().zip(&image.samples) {
            assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_drags_equator_point_around_the_equator() {
        let h = rotation_loop();
        let m = h.manifold();
        let gamma = LoopSamples::constant(m, Point::new(0.0, 0.0), 64);
        let image = loop_act(&h, &gamma, &cfg()).unwrap();
        for (j, &(th, z)) in image.samples.iter().enumerate() {
            let want = TAU * j as f64 / 64.0;
            assert!((th - want).abs() < 1e-8, "j={j}: theta {th} vs {want}");
            assert!(z.abs() < 1e-10);
        }
        // the north pole is fixed by every h(t)
        let north = LoopSamples::constant(m, Point::new(0.0, 1.0), 64);
        let fixed = loop_act(&h, &north, &cfg()).unwrap();
        for &(_, z) in &fixed.samples {
            assert!((z - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn canonical_lift_requires_contraction_and_matching_grid() {
        let m = Manifold::<f64>::torus();
        let h = identity_loop(&m);
        let c0 = CappedLoop::constant(m, Point::new(0.3, 0.4), 8, 32);
        assert!(matches!(
            capped_image(&h, &Lift::CanonicalFromContraction, &c0, &cfg()),
            Err(Error::MissingContraction)
        ));
        let h = identity_loop(&m)
            .with_contraction(constant_contraction(&m, 5), &cfg())
            .unwrap();
        assert!(matches!(
            capped_image(&h, &Lift::CanonicalFromContraction, &c0, &cfg()),
            Err(Error::GridMismatch { left: 9, right: 5 })
        ));
    }

    #[test]
    fn identity_loop_with_constant_contraction_preserves_cappings() {
        let m = Manifold::<f64>::torus();
        let h = identity_loop(&m)
            .with_contraction(constant_contraction(&m, 9), &cfg())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gamma = fourier_probe_loop(&m, &mut rng, 0.15, 64).unwrap();
        let capped = CappedLoop::cone(gamma, 8).unwrap();
        let image = capped_image(&h, &Lift::CanonicalFromContraction, &capped, &cfg()).unwrap();
        assert!((image.area - capped.area).abs() < 1e-9);
        for (a, b) in capped.boundary.samples.iter().zip(&image.boundary.samples) {
            assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
        }
    }

    #[test]
    fn null_homotopic_sweep_of_a_constant_loop_has_zero_area() {
        // the comparison loop of a path with its reparametrization sweeps
        // each point along its own flow line, a degenerate surface
        let m = Manifold::<f64>::torus();
        let (f, g, fam) = reparam_pair(&m, "0.3*sin(2*pi*x)*sin(2*pi*y)", 0.4, 9);
        let gen = sharp(f, bar(g)).unwrap();
        let h = HamLoop::new(gen, &cfg())
            .unwrap()
            .with_contraction(fam, &cfg())
            .unwrap();
        let c0 = CappedLoop::constant(m, Point::new(0.31, 0.17), 8, 64);
        let image = capped_image(&h, &Lift::CanonicalFromContraction, &c0, &cfg()).unwrap();
        assert!(image.area.abs() < 1e-5, "area {}", image.area);
    }

    #[test]
    fn identity_loop_monodromy_vanishes() {
        let m = Manifold::<f64>::torus();
        let h = identity_loop(&m)
            .with_contraction(constant_contraction(&m, 17), &cfg())
            .unwrap();
        let value = monodromy_value(
            &h,
            &Lift::CanonicalFromContraction,
            &small_opts(),
            &cfg(),
        )
        .unwrap();
        assert!(value.abs() < 1e-6, "value {value}");
    }

    #[test]
    fn rotation_monodromy_is_minus_two_pi() {
        let h = rotation_loop();
        let value = monodromy_value(&h, &north_lift(), &small_opts(), &cfg()).unwrap();
        assert!((value + TAU).abs() < 1e-6, "value {value}");
    }

    #[test]
    fn doubled_rotation_monodromy_is_minus_four_pi() {
        let m = Manifold::<f64>::sphere();
        let leaf = || {
            HamPath::Leaf(
                parse("2*pi*z", &m)
                    .unwrap()
                    .tagged(NormalizationTag::MeanZero),
            )
        };
        let doubled = HamLoop::new(sharp(leaf(), leaf()).unwrap(), &cfg()).unwrap();
        let value = monodromy_value(&doubled, &north_lift(), &small_opts(), &cfg()).unwrap();
        assert!((value + 2.0 * TAU).abs() < 1e-4, "value {value}");
        // the value lands in the period group 4*pi*Z
        let gen = m.gamma_omega_generator;
        let k = (value / gen).round();
        assert!((value - k * gen).abs() < 1e-4);
    }

    #[test]
    fn lifts_differ_by_period_group_elements() {
        let h = rotation_loop();
        let gen = h.manifold().gamma_omega_generator;
        let opts = small_opts();
        let south = Lift::BasepointCapping {
            basepoint: Point::new(0.0, -1.0),
            cap_area: 0.0,
            sheet: 0,
        };
        let sheeted = Lift::BasepointCapping {
            basepoint: Point::new(0.0, 1.0),
            cap_area: 0.0,
            sheet: 1,
        };
        let i_north = monodromy_value(&h, &north_lift(), &opts, &cfg()).unwrap();
        let i_south = monodromy_value(&h, &south, &opts, &cfg()).unwrap();
        let i_sheet = monodromy_value(&h, &sheeted, &opts, &cfg()).unwrap();
        for (a, b) in [(i_north, i_south), (i_north, i_sheet), (i_south, i_sheet)] {
            let d = a - b;
            let k = (d / gen).round();
            assert!((d - k * gen).abs() < 1e-4, "difference {d}");
        }
        // the north and south declarations genuinely disagree (by one sheet)
        assert!((i_north - i_south).abs() > 1.0);
    }

    #[test]
    fn torus_monodromy_is_lift_independent() {
        let m = Manifold::<f64>::torus();
        let (f, g, _) = reparam_pair(&m, "0.3*sin(2*pi*x)*sin(2*pi*y)", 0.5, 3);
        let h = HamLoop::new(sharp(f, bar(g)).unwrap(), &cfg()).unwrap();
        let opts = MonodromyOptions {
            n_s: 12,
            n_t: 96,
            basepoints: 6,
            ..MonodromyOptions::default()
        };
        let lift_a = Lift::BasepointCapping {
            basepoint: Point::new(0.2, 0.6),
            cap_area: 0.0,
            sheet: 0,
        };
        let lift_b = Lift::BasepointCapping {
            basepoint: Point::new(0.8, 0.1),
            cap_area: 0.0,
            sheet: 0,
        };
        let ia = monodromy_value(&h, &lift_a, &opts, &cfg()).unwrap();
        let ib = monodromy_value(&h, &lift_b, &opts, &cfg()).unwrap();
        assert!((ia - ib).abs() < 1e-4, "{ia} vs {ib}");
    }

    fn torus_probes(m: &Manifold<f64>, n_s: usize, n_t: usize, count: usize) -> Vec<CappedLoop<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        (0..count)
            .map(|_| {
                let gamma = fourier_probe_loop(m, &mut rng, 0.12, n_t).unwrap();
                CappedLoop::cone(gamma, n_s).unwrap()
            })
            .collect()
    }

    #[test]
    fn shift_constant_vanishes_for_equal_generators() {
        let m = Manifold::<f64>::torus();
        let f = HamPath::Leaf(
            parse("0.3*sin(2*pi*x)*sin(2*pi*y)", &m)
                .unwrap()
                .tagged(NormalizationTag::MeanZero),
        );
        let probes = torus_probes(&m, 8, 64, 10);
        let shift = lemma23_shift(
            &f,
            &f,
            &Lift::CanonicalFromContraction,
            Some(IsotopyFamily::new(vec![
                sharp(f.clone(), bar(f.clone())).unwrap();
                9
            ])),
            &probes,
            &cfg(),
        )
        .unwrap();
        assert!(shift.abs() < 1e-6, "shift {shift}");
    }

    #[test]
    fn constant_offset_shifts_actions_by_the_offset() {
        let m = Manifold::<f64>::torus();
        let f = HamPath::Leaf(
            parse("0.3*sin(2*pi*x)*sin(2*pi*y)", &m)
                .unwrap()
                .tagged(NormalizationTag::MeanZero),
        );
        // g = f + 1: same flow, values offset by the constant
        let g = HamPath::Shifted {
            base: Box::new(f.clone()),
            shift: PeriodicSpline::new(vec![-1.0; 4]),
            tag: NormalizationTag::Unchecked,
        };
        let probes = torus_probes(&m, 8, 64, 10);
        let shift = lemma23_shift(
            &f,
            &g,
            &Lift::CanonicalFromContraction,
            Some(IsotopyFamily::new(vec![
                sharp(f.clone(), bar(g.clone())).unwrap();
                9
            ])),
            &probes,
            &cfg(),
        )
        .unwrap();
        assert!((shift - 1.0).abs() < 1e-5, "shift {shift}");
    }

    #[test]
    fn shift_constant_vanishes_for_reparametrizations() {
        let m = Manifold::<f64>::torus();
        let (f, g, fam) = reparam_pair(&m, "0.3*sin(2*pi*x)*sin(2*pi*y)", 0.4, 9);
        let probes = torus_probes(&m, 8, 64, 10);
        let shift = lemma23_shift(
            &f,
            &g,
            &Lift::CanonicalFromContraction,
            Some(fam),
            &probes,
            &cfg(),
        )
        .unwrap();
        assert!(shift.abs() < 1e-4, "shift {shift}");
    }

    #[test]
    fn mismatched_time_one_maps_are_rejected() {
        let m = Manifold::<f64>::torus();
        let f = HamPath::Leaf(
            parse("0.3*sin(2*pi*x)*sin(2*pi*y)", &m)
                .unwrap()
                .tagged(NormalizationTag::MeanZero),
        );
        let g = HamPath::Leaf(
            parse("0.1*cos(2*pi*x)", &m)
                .unwrap()
                .tagged(NormalizationTag::MeanZero),
        );
        let probes = torus_probes(&m, 8, 64, 3);
        assert!(matches!(
            lemma23_shift(&f, &g, &north_lift(), None, &probes, &cfg()),
            Err(Error::EndpointMismatch { .. })
        ));
    }

    #[test]
    fn pullback_identity_holds_variationally() {
        // directional derivatives of A_f(lifted image) and A_g agree
        let m = Manifold::<f64>::torus();
        let (f, g, fam) = reparam_pair(&m, "0.3*sin(2*pi*x)*sin(2*pi*y)", 0.4, 17);
        let gen = sharp(f.clone(), bar(g.clone())).unwrap();
        let h = HamLoop::new(gen, &cfg())
            .unwrap()
            .with_contraction(fam, &cfg())
            .unwrap();
        // the finite-difference derivative exposes the second-order polygon
        // bias of the boundary loops and the flow's step bias, so both grids
        // are finer than the defaults here
        let n_t = 256;
        let fine = FlowConfig::with_step(1.0 / 1024.0);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let base = fourier_probe_loop(&m, &mut rng, 0.12, n_t).unwrap();
        let action_pair = |gamma: &LoopSamples<f64>| -> (f64, f64) {
            let capped = CappedLoop::cone(gamma.clone(), 16).unwrap();
            let img = capped_image(&h, &Lift::CanonicalFromContraction, &capped, &fine).unwrap();
            let a_f = -img.area - img.boundary.mean_value(&f, &fine).unwrap();
            let a_g = -capped.area - gamma.mean_value(&g, &fine).unwrap();
            (a_f, a_g)
        };
        let eps = 1e-4;
        for _ in 0..4 {
            let dir = fourier_probe_loop(&m, &mut rng, 1.0, n_t).unwrap();
            let perturbed = |sign: f64| {
                let samples = base
                    .samples
                    .iter()
                    .zip(&dir.samples)
                    .map(|(&(a, b), &(da, db))| (a + sign * eps * da, b + sign * eps * db))
                    .collect();
                LoopSamples::new(m, samples).unwrap()
            };
            let (fp, gp) = action_pair(&perturbed(1.0));
            let (fm, gm) = action_pair(&perturbed(-1.0));
            let d_f = (fp - fm) / (2.0 * eps);
            let d_g = (gp - gm) / (2.0 * eps);
            assert!((d_f - d_g).abs() < 1e-4, "{d_f} vs {d_g}");
        }
    }

    #[test]
    fn monodromy_is_a_homomorphism_on_rotations() {
        let m = Manifold::<f64>::torus();
        let id = identity_loop(&m)
            .with_contraction(constant_contraction(&m, 17), &cfg())
            .unwrap();
        let opts = small_opts();
        let report = verify_homomorphism(
            &id,
            &id,
            &Lift::CanonicalFromContraction,
            &Lift::CanonicalFromContraction,
            &opts,
            &cfg(),
        )
        .unwrap();
        assert!(report.pass, "identity: residual {}", report.residual);

        let rot = rotation_loop();
        let report =
            verify_homomorphism(&rot, &rot, &north_lift(), &north_lift(), &opts, &cfg()).unwrap();
        assert!(report.pass, "rotation: residual {}", report.residual);
        assert_eq!(report.check, "monodromy_homomorphism");
        assert_eq!(report.inputs_digest.len(), 16);
        let json = serde_json::to_value(&report).unwrap();
        for key in ["check", "inputs_digest", "residual", "tolerance", "pass"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn rotation_composed_with_identity_keeps_its_value() {
        let m = Manifold::<f64>::sphere();
        let rot = rotation_loop();
        let id = HamLoop::new(
            HamPath::Leaf(Hamiltonian::zero(m).tagged(NormalizationTag::MeanZero)),
            &cfg(),
        )
        .unwrap();
        let id_lift = Lift::BasepointCapping {
            basepoint: Point::new(1.0, 0.2),
            cap_area: 0.0,
            sheet: 0,
        };
        let opts = small_opts();
        let report =
            verify_homomorphism(&rot, &id, &north_lift(), &id_lift, &opts, &cfg()).unwrap();
        assert!(report.pass, "residual {}", report.residual);
    }

    fn torus_family(s_count: usize, reparam_a: f64, offset: f64) -> IsotopyFamily<f64> {
        let m = Manifold::<f64>::torus();
        let f = HamPath::Leaf(
            parse("0.3*sin(2*pi*x)*sin(2*pi*y)", &m)
                .unwrap()
                .tagged(NormalizationTag::MeanZero),
        );
        let members = (0..s_count)
            .map(|i| {
                let s = i as f64 / (s_count - 1) as f64;
                let member = reparam(f.clone(), ReparamProfile::new(reparam_a * s));
                if offset == 0.0 {
                    member
                } else {
                    HamPath::Shifted {
                        base: Box::new(member),
                        shift: PeriodicSpline::new(vec![-offset * s; 4]),
                        tag: NormalizationTag::Unchecked,
                    }
                }
            })
            .collect();
        IsotopyFamily::new(members)
    }

    #[test]
    fn action_is_constant_along_normalized_isotopies() {
        let fam = torus_family(9, 0.5, 0.0);
        // the saddle-free maximum of F is a fixed point with action -0.3
        let orbit =
            PeriodicOrbit::from_fixed_point(&fam.members[0], Point::new(0.25, 0.25), 64, &cfg())
                .unwrap();
        let cap = crate::orbits::canonical_capping(&orbit).unwrap();
        let trace = verify_isotopy_constancy(&fam, &orbit, &cap, &cfg()).unwrap();
        assert!(trace.pass, "drift {}", trace.max_drift);
        assert!((trace.chi[0] + 0.3).abs() < 1e-9);
        assert!(trace.report(&["reparam family".into()]).pass);

        // a constant family trivially has zero drift
        let const_fam = torus_family(5, 0.0, 0.0);
        let trace = verify_isotopy_constancy(&const_fam, &orbit, &cap, &cfg()).unwrap();
        assert!(trace.max_drift < 1e-12);
    }

    #[test]
    fn broken_normalization_shows_up_as_action_drift() {
        let fam = torus_family(9, 0.5, 0.1);
        let orbit =
            PeriodicOrbit::from_fixed_point(&fam.members[0], Point::new(0.25, 0.25), 64, &cfg())
                .unwrap();
        let cap = crate::orbits::canonical_capping(&orbit).unwrap();
        let trace = verify_isotopy_constancy(&fam, &orbit, &cap, &cfg()).unwrap();
        assert!(!trace.pass);
        assert!((trace.max_drift - 0.1).abs() < 1e-3, "drift {}", trace.max_drift);
    }

    #[test]
    fn endpoint_violations_are_rejected() {
        let m = Manifold::<f64>::sphere();
        let members = (0..5)
            .map(|i| {
                let s = i as f64 / 4.0;
                HamPath::Leaf(parse(&format!("{s}*z"), &m).unwrap())
            })
            .collect();
        let fam = IsotopyFamily::new(members);
        let orbit = PeriodicOrbit::from_fixed_point(
            &fam.members[0],
            Point::new(0.0, 1.0),
            32,
            &cfg(),
        )
        .unwrap();
        let cap = crate::orbits::canonical_capping(&orbit).unwrap();
        assert!(matches!(
            verify_isotopy_constancy(&fam, &orbit, &cap, &cfg()),
            Err(Error::EndpointMismatch { .. })
        ));
    }

    #[test]
    fn spectrum_requires_a_normalized_loop_generator() {
        let m = Manifold::<f64>::sphere();
        let h = HamLoop::new(
            HamPath::Leaf(parse("2*pi*z", &m).unwrap()),
            &cfg(),
        )
        .unwrap();
        assert!(matches!(
            monodromy_value(&h, &north_lift(), &small_opts(), &cfg()),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn sphere_cone_area_matches_the_boundary_integral() {
        // equator at fixed latitude: cone area is -(z+1) * 2*pi
        let m = Manifold::<f64>::sphere();
        let z0 = 0.4;
        let n = 256;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|j| (TAU * j as f64 / n as f64, z0))
            .collect();
        let gamma = LoopSamples::new(m, samples).unwrap();
        let capped = CappedLoop::cone(gamma, 16).unwrap();
        assert!((capped.area + (z0 + 1.0) * TAU).abs() < 1e-12);
        // plane cone: circle of radius r has area pi r^2 (ccw)
        let m = Manifold::<f64>::plane_default();
        let r = 1.3;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|j| {
                let t = TAU * j as f64 / n as f64;
                (r * t.cos(), r * t.sin())
            })
            .collect();
        let gamma = LoopSamples::new(m, samples).unwrap();
        // cell sums telescope to the boundary polygon shoelace, whose bias
        // for a circle is pi r^2 (2 pi / n)^2 / 6
        let capped = CappedLoop::cone(gamma, 16).unwrap();
        assert!((capped.area - PI * r * r).abs() < 1e-3, "{}", capped.area);
    }

    #[test]
    fn winding_loops_admit_no_cone() {
        let m = Manifold::<f64>::torus();
        let samples: Vec<(f64, f64)> = (0..=64)
            .map(|j| (j as f64 / 64.0, 0.3))
            .collect();
        let gamma = LoopSamples::new(m, samples).unwrap();
        assert!(matches!(
            CappedLoop::cone(gamma, 8),
            Err(Error::IncompatibleCapping { .. })
        ));
    }
}
