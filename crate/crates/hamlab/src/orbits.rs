//! Periodic orbits of a Hamiltonian path's flow, cappings, the action
//! functional on the period-group cover, and assembly of the action
//! spectrum.
//!
//! Only contractible orbits through fixed points of the time-1 map are
//! enumerated. Fixed points come from damped Newton / Gauss-Newton
//! searches seeded on a uniform chart grid; the sphere search runs on the
//! ambient round embedding so the poles are reachable where the chart
//! degenerates. Non-isolated fixed-point sets (Morse-Bott circles, lines,
//! plateaus) are clustered into families with a representative.

use crate::error::{Error, Result};
use crate::flow::{trajectory, FlowConfig};
use crate::geom::{Manifold, ManifoldKind, Point};
use crate::hamalg::HamPath;
use crate::num::{solve2, spectral_derivative, Real};

use rayon::prelude::*;

pub const DEFAULT_SEEDS_PER_AXIS: usize = 64;
pub const DEFAULT_ORBIT_SAMPLES: usize = 256;

/// Fixed-point residual norm required for convergence.
const ROOT_TOL: f64 = 1e-10;
/// Chart distance below which two roots are the same point.
const DEDUP_TOL: f64 = 1e-6;
/// Chart distance below which two actions are the same spectral value.
const ACTION_DEDUP_TOL: f64 = 1e-8;
/// Orbit closure tolerance.
const CLOSURE_TOL: f64 = 1e-8;
/// Max pointwise defect of the sampled orbit against the generating field.
const ODE_RESIDUAL_TOL: f64 = 1e-4;
/// Minimum cluster size that is reported as a degenerate family.
const FAMILY_MIN_SIZE: usize = 5;
/// Field/value threshold for classifying plane points as outside the
/// support of the Hamiltonian ("inert": trivially fixed).
const INERT_TOL: f64 = 1e-9;

/// A closed integral curve of the flow through a fixed point of the
/// time-1 map. `samples` holds n+1 positions in the universal cover at
/// times i/n; `samples[n]` reproduces `samples[0]` up to chart periods.
pub struct PeriodicOrbit<T> {
    pub samples: Vec<(T, T)>,
    pub n: usize,
    pub seed_fixed_point: Point<T>,
    pub contractible: bool,
    /// Whole chart periods accumulated over one loop, per coordinate.
    pub winding: (i64, i64),
    manifold: Manifold<T>,
}

impl<T: Real> PeriodicOrbit<T> {
    /// Flow the fixed point over [0, 1] and sample on a uniform grid.
    pub fn from_fixed_point(
        h: &HamPath<T>,
        p: Point<T>,
        n: usize,
        cfg: &FlowConfig<T>,
    ) -> Result<Self> {
        let m = h.manifold();
        let samples = sample_path_orbit(h, (p.q1, p.q2), n, cfg)?;
        let start = m.chart_wrap(samples[0])?;
        let end = m.chart_wrap(samples[n])?;
        let gap = m.distance(start, end);
        if gap >= T::lit(CLOSURE_TOL) {
            return Err(Error::EndpointMismatch {
                distance: gap.to64(),
            });
        }
        let winding = |axis: usize| -> i64 {
            let (per1, per2) = m.periods();
            let (per, d) = if axis == 0 {
                (per1, samples[n].0 - samples[0].0)
            } else {
                (per2, samples[n].1 - samples[0].1)
            };
            match per {
                Some(period) => (d / period).to64().round() as i64,
                None => 0,
            }
        };
        let winding = (winding(0), winding(1));
        let contractible = match m.kind {
            // pi_1 of the plane and the sphere is trivial
            ManifoldKind::Torus2 => winding == (0, 0),
            _ => true,
        };
        Ok(Self {
            samples,
            n,
            seed_fixed_point: p,
            contractible,
            winding,
            manifold: m,
        })
    }

    pub fn manifold(&self) -> Manifold<T> {
        self.manifold
    }

    pub fn time(&self, i: usize) -> T {
        T::from_usize_(i) / T::from_usize_(self.n)
    }

    /// True if the loop never leaves its starting point (up to closure
    /// tolerance), e.g. an orbit through a zero of the field or a pole.
    pub fn is_constant(&self) -> bool {
        let p0 = match self.manifold.chart_wrap(self.samples[0]) {
            Ok(p) => p,
            Err(_) => return false,
        };
        self.samples.iter().all(|&s| match self.manifold.chart_wrap(s) {
            Ok(p) => self.manifold.distance(p0, p) < T::lit(CLOSURE_TOL),
            Err(_) => false,
        })
    }

    /// Max over the grid of |zdot - X_H(z, t)|, with zdot by spectral
    /// differentiation of the drift-corrected cover samples.
    pub fn ode_residual(&self, h: &HamPath<T>, cfg: &FlowConfig<T>) -> Result<T> {
        let n = self.n;
        let drift1 = self.samples[n].0 - self.samples[0].0;
        let drift2 = self.samples[n].1 - self.samples[0].1;
        let mut f1 = Vec::with_capacity(n);
        let mut f2 = Vec::with_capacity(n);
        for i in 0..n {
            let t = self.time(i);
            f1.push(self.samples[i].0 - drift1 * t);
            f2.push(self.samples[i].1 - drift2 * t);
        }
        let d1 = spectral_derivative(&f1);
        let d2 = spectral_derivative(&f2);
        let mut worst = T::zero();
        for i in 0..n {
            let t = self.time(i);
            let p = self.manifold.chart_wrap(self.samples[i])?;
            let (x1, x2) = h.vector_field(p, t, cfg)?;
            worst = worst
                .max((d1[i] + drift1 - x1).abs())
                .max((d2[i] + drift2 - x2).abs());
        }
        Ok(worst)
    }

    /// Enforce the sampling invariants (closure is enforced at build time).
    pub fn validate(&self, h: &HamPath<T>, cfg: &FlowConfig<T>) -> Result<()> {
        let r = self.ode_residual(h, cfg)?;
        if r.to64() > ODE_RESIDUAL_TOL {
            return Err(Error::NonConvergence {
                residual: r.to64(),
                iterations: 0,
            });
        }
        Ok(())
    }
}

/// Sample the flow of a path at n+1 uniform times in the universal cover,
/// using a single trajectory where the path reduces to one leaf flow.
fn sample_path_orbit<T: Real>(
    h: &HamPath<T>,
    start: (T, T),
    n: usize,
    cfg: &FlowConfig<T>,
) -> Result<Vec<(T, T)>> {
    fn leaf_flow<T: Real>(h: &HamPath<T>) -> Option<&crate::hamdsl::Hamiltonian<T>> {
        match h {
            HamPath::Leaf(f) => Some(f),
            // a constant shift does not change the flow
            HamPath::Shifted { base, .. } => leaf_flow(base),
            _ => None,
        }
    }
    if let Some(f) = leaf_flow(h) {
        let dt = T::one() / T::from_usize_(n);
        let per = (dt / cfg.step).to64().round();
        if per >= 1.0 && ((dt / cfg.step).to64() - per).abs() < 1e-9 {
            let traj = trajectory(f, start, T::zero(), T::one(), cfg)?;
            let per = per as usize;
            return Ok((0..=n).map(|i| traj.raw[i * per]).collect());
        }
    }
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = T::from_usize_(i) / T::from_usize_(n);
        out.push(h.flow_from0_raw(start, t, cfg)?);
    }
    Ok(out)
}

/// How a capping disc is realized and which period-group sheet it sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CappingKind {
    /// Constant disc at a point (constant loops only).
    ConstantAtPoint,
    /// Straight-line cone to a basepoint in the universal cover
    /// (plane/torus; requires a contractible loop).
    ConeFill,
    /// Meridian cone to the south pole on the sphere.
    SphericalCone,
}

#[derive(Debug, Clone, Copy)]
pub struct Capping<T> {
    pub kind: CappingKind,
    /// The symplectic area of the disc on the canonical sheet.
    pub signed_area: T,
    /// Period-group coset index; the reported area is
    /// `signed_area + sheet * gamma_omega_generator`.
    pub sheet: i64,
}

/// The canonical capping of a closed contractible orbit: a constant disc
/// for constant loops, a cone fill in the cover on plane/torus, a south
/// pole cone on the sphere (areas exact for the product area form).
/// Boundary integrals use spectral derivatives of the loop samples, so
/// the areas converge spectrally and are stable under re-sampling.
pub fn canonical_capping<T: Real>(orbit: &PeriodicOrbit<T>) -> Result<Capping<T>> {
    let m = orbit.manifold();
    if orbit.is_constant() {
        return Ok(Capping {
            kind: CappingKind::ConstantAtPoint,
            signed_area: T::zero(),
            sheet: 0,
        });
    }
    let n = orbit.n;
    // drift-corrected periodic samples and their spectral derivatives
    let drift1 = orbit.samples[n].0 - orbit.samples[0].0;
    let drift2 = orbit.samples[n].1 - orbit.samples[0].1;
    let mut f1 = Vec::with_capacity(n);
    let mut f2 = Vec::with_capacity(n);
    for i in 0..n {
        let t = orbit.time(i);
        f1.push(orbit.samples[i].0 - drift1 * t);
        f2.push(orbit.samples[i].1 - drift2 * t);
    }
    let d1 = spectral_derivative(&f1);
    let d2 = spectral_derivative(&f2);
    let nf = T::from_usize_(n);
    match m.kind {
        ManifoldKind::PlaneR2 | ManifoldKind::Torus2 => {
            if !orbit.contractible {
                return Err(Error::IncompatibleCapping {
                    reason: format!(
                        "cone fill needs a contractible loop; winding {:?}",
                        orbit.winding
                    ),
                });
            }
            // enclosed signed area in the cover = area of the
            // straight-line cone to any basepoint:
            // (1/2) * integral of (x * ydot - y * xdot) dt
            let mut acc = T::zero();
            for i in 0..n {
                let (x, y) = orbit.samples[i];
                acc += x * (d2[i] + drift2) - y * (d1[i] + drift1);
            }
            Ok(Capping {
                kind: CappingKind::ConeFill,
                signed_area: acc * T::half() / nf,
                sheet: 0,
            })
        }
        ManifoldKind::Sphere2 => {
            // meridian cone to the south pole: integral of (z+1) dtheta
            // over the loop, with the orientation of a disc whose boundary
            // is the loop itself
            let mut acc = T::zero();
            for i in 0..n {
                let z = orbit.samples[i].1;
                acc += (z + T::one()) * (d1[i] + drift1);
            }
            Ok(Capping {
                kind: CappingKind::SphericalCone,
                signed_area: -acc / nf,
                sheet: 0,
            })
        }
    }
}

/// The action of a capped orbit:
/// `-(area + sheet * generator) - integral of H along the orbit`.
pub fn action<T: Real>(
    h: &HamPath<T>,
    orbit: &PeriodicOrbit<T>,
    cap: &Capping<T>,
    cfg: &FlowConfig<T>,
) -> Result<T> {
    let m = h.manifold();
    if m.kind != orbit.manifold().kind {
        return Err(Error::ManifoldMismatch);
    }
    match cap.kind {
        CappingKind::ConstantAtPoint => {
            if !orbit.is_constant() {
                return Err(Error::IncompatibleCapping {
                    reason: "constant capping on a non-constant loop".into(),
                });
            }
        }
        CappingKind::ConeFill => {
            if m.kind == ManifoldKind::Sphere2 {
                return Err(Error::IncompatibleCapping {
                    reason: "cone fill lives in the plane/torus cover".into(),
                });
            }
            if !orbit.contractible {
                return Err(Error::IncompatibleCapping {
                    reason: "cone fill needs a contractible loop".into(),
                });
            }
        }
        CappingKind::SphericalCone => {
            if m.kind != ManifoldKind::Sphere2 {
                return Err(Error::IncompatibleCapping {
                    reason: "spherical cone capping needs the sphere".into(),
                });
            }
        }
    }
    // trapezoid over the periodic grid (= mean of the first n samples)
    let mut acc = T::zero();
    for i in 0..orbit.n {
        let p = m.chart_wrap(orbit.samples[i])?;
        acc += h.value(p, orbit.time(i), cfg)?;
    }
    // the sheet shift is applied last so that actions on different sheets
    // of the same capping differ by exact multiples of the generator
    let base = -cap.signed_area - acc / T::from_usize_(orbit.n);
    Ok(base - T::lit(cap.sheet as f64) * m.gamma_omega_generator)
}

/// A clustered non-isolated fixed-point set.
#[derive(Debug, Clone)]
pub struct FixedPointFamily<T> {
    pub representative: Point<T>,
    pub size: usize,
}

/// Result of the seeded fixed-point search.
#[derive(Debug, Clone)]
pub struct FixedPointSearch<T> {
    pub isolated: Vec<Point<T>>,
    pub families: Vec<FixedPointFamily<T>>,
    pub nonconverged: usize,
    /// Plane seeds outside the support of H (trivially fixed), excluded
    /// from the results and the degeneracy statistic.
    pub inert: usize,
    /// Fraction of non-inert seeds whose initial residual was already
    /// below tolerance (converged in zero iterations).
    pub zero_iteration_fraction: f64,
    /// True when more than half of the non-inert seeds were fixed from the
    /// start: the time-1 map is (numerically) the identity.
    pub degenerate_identity: bool,
}

struct SeedOutcome<T> {
    root: Option<Point<T>>,
    iterations: usize,
    inert: bool,
}

/// Newton / Gauss-Newton search for fixed points of the time-1 map from a
/// uniform grid of chart seeds.
pub fn find_fixed_points<T: Real>(
    h: &HamPath<T>,
    seeds_per_axis: usize,
    cfg: &FlowConfig<T>,
) -> Result<FixedPointSearch<T>> {
    let m = h.manifold();
    let grid = crate::flow::derived::SeedGrid::for_manifold(&m, seeds_per_axis, seeds_per_axis);
    let seeds: Vec<Point<T>> = (0..grid.n1)
        .flat_map(|i| (0..grid.n2).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (a, b) = grid.node(i, j);
            Point::new(a, b)
        })
        .collect();
    let outcomes: Vec<SeedOutcome<T>> = seeds
        .par_iter()
        .map(|&seed| seed_search(h, &m, seed, cfg))
        .collect();

    let mut roots: Vec<Point<T>> = Vec::new();
    let mut nonconverged = 0usize;
    let mut inert = 0usize;
    let mut zero_iter = 0usize;
    let mut considered = 0usize;
    for o in &outcomes {
        if o.inert {
            inert += 1;
            continue;
        }
        considered += 1;
        match o.root {
            Some(p) => {
                if o.iterations == 0 {
                    zero_iter += 1;
                }
                let dedup = T::lit(DEDUP_TOL);
                if !roots.iter().any(|&q| m.distance(p, q) < dedup) {
                    roots.push(p);
                }
            }
            None => nonconverged += 1,
        }
    }
    let zero_iteration_fraction = if considered == 0 {
        0.0
    } else {
        zero_iter as f64 / considered as f64
    };
    let degenerate_identity = zero_iteration_fraction > 0.5;

    // single-linkage clustering at a few seed spacings separates isolated
    // roots from degenerate families (circles, lines, plateaus). H is
    // constant along a connected fixed set (either an orbit or a curve of
    // equilibria), so nearby roots on different H-levels are not linked --
    // this resolves concentric families closer together than the seeds.
    let spacing = grid.h.0.max(grid.h.1);
    let link = spacing * T::lit(4.0);
    let level_times = [0.0, 0.31, 0.5, 0.79];
    let level = |p: Point<T>| -> T {
        let mut acc = T::zero();
        for &tf in &level_times {
            acc += h.value(p, T::lit(tf), cfg).unwrap_or(T::zero());
        }
        acc / T::lit(level_times.len() as f64)
    };
    let levels: Vec<T> = roots.iter().map(|&p| level(p)).collect();
    let nroots = roots.len();
    let mut parent: Vec<usize> = (0..nroots).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..nroots {
        for j in i + 1..nroots {
            let same_level =
                (levels[i] - levels[j]).abs() < T::lit(1e-6) * (T::one() + levels[i].abs());
            if same_level && m.distance(roots[i], roots[j]) < link {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut clusters: std::collections::HashMap<usize, Vec<usize>> = Default::default();
    for i in 0..nroots {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    let mut isolated = Vec::new();
    let mut families = Vec::new();
    let mut cluster_list: Vec<Vec<usize>> = clusters.into_values().collect();
    cluster_list.sort_by_key(|c| c[0]);
    for members in cluster_list {
        if members.len() >= FAMILY_MIN_SIZE {
            // representative: the member closest to all the others
            let rep = *members
                .iter()
                .min_by(|&&a, &&b| {
                    let cost = |k: usize| -> T {
                        members.iter().map(|&l| m.distance(roots[k], roots[l])).fold(
                            T::zero(),
                            |acc, d| acc + d,
                        )
                    };
                    cost(a).partial_cmp(&cost(b)).unwrap()
                })
                .unwrap();
            families.push(FixedPointFamily {
                representative: roots[rep],
                size: members.len(),
            });
        } else {
            for k in members {
                isolated.push(roots[k]);
            }
        }
    }
    Ok(FixedPointSearch {
        isolated,
        families,
        nonconverged,
        inert,
        zero_iteration_fraction,
        degenerate_identity,
    })
}

fn seed_search<T: Real>(
    h: &HamPath<T>,
    m: &Manifold<T>,
    seed: Point<T>,
    cfg: &FlowConfig<T>,
) -> SeedOutcome<T> {
    if m.kind == ManifoldKind::PlaneR2 && is_inert(h, seed, cfg) {
        return SeedOutcome {
            root: None,
            iterations: 0,
            inert: true,
        };
    }
    match newton_root(h, m, seed, cfg) {
        Some((p, iters)) => SeedOutcome {
            root: Some(p),
            iterations: iters,
            inert: false,
        },
        None => SeedOutcome {
            root: None,
            iterations: 0,
            inert: false,
        },
    }
}

/// True when both H and its field vanish at the point and on a small
/// neighborhood at several times: the point is outside the support of H
/// and fixed for trivial reasons.
fn is_inert<T: Real>(h: &HamPath<T>, p: Point<T>, cfg: &FlowConfig<T>) -> bool {
    let tol = T::lit(INERT_TOL);
    let probe_times = [0.0, 0.23, 0.5, 0.77];
    let delta = T::lit(1e-2);
    for &tf in &probe_times {
        let t = T::lit(tf);
        match h.value(p, t, cfg) {
            Ok(v) if v.abs() < tol => {}
            _ => return false,
        }
        for k in 0..8 {
            let ang = T::two() * T::PI() * T::from_usize_(k) / T::lit(8.0);
            let q = Point::new(p.q1 + delta * ang.cos(), p.q2 + delta * ang.sin());
            match h.vector_field(q, t, cfg) {
                Ok((x1, x2)) if x1.abs() < tol && x2.abs() < tol => {}
                _ => return false,
            }
        }
    }
    true
}

const NEWTON_MAX_ITERS: usize = 60;
const FD_DELTA: f64 = 1e-6;
/// Cap on the Newton step length in chart units.
const STEP_CLAMP: f64 = 0.35;

/// Levenberg-Marquardt search for a fixed point of the time-1 map. The
/// residual is 3-dimensional: chart displacement (third component zero)
/// on plane/torus, ambient embedding difference on the sphere, where it
/// stays meaningful at the poles. The adaptive damping handles the
/// rank-deficient Jacobians of non-isolated fixed-point sets (circles,
/// lines, plateaus) by degrading gracefully to gradient steps.
fn newton_root<T: Real>(
    h: &HamPath<T>,
    m: &Manifold<T>,
    seed: Point<T>,
    cfg: &FlowConfig<T>,
) -> Option<(Point<T>, usize)> {
    let tol = T::lit(ROOT_TOL);
    let delta = T::lit(FD_DELTA);
    let clamp = T::lit(STEP_CLAMP);
    let residual = |p: Point<T>| fixed_point_residual(h, m, p, cfg);
    let norm = |r: [T; 3]| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let mut p = seed;
    let mut lambda = T::lit(1e-3);
    for iter in 0..NEWTON_MAX_ITERS {
        let r = residual(p).ok()?;
        let rn = norm(r);
        if rn < tol {
            return Some((p, iter));
        }
        // 3x2 Jacobian by central differences in the chart; one-sided in
        // z near the rim of the sphere chart
        let rq1p = residual(Point::new(p.q1 + delta, p.q2)).ok()?;
        let rq1m = residual(Point::new(p.q1 - delta, p.q2)).ok()?;
        let sphere = m.kind == ManifoldKind::Sphere2;
        let (zp, zm, span) = if sphere && p.q2 + delta > T::one() {
            (p.q2, p.q2 - delta, delta)
        } else if sphere && p.q2 - delta < -T::one() {
            (p.q2 + delta, p.q2, delta)
        } else {
            (p.q2 + delta, p.q2 - delta, T::two() * delta)
        };
        let rq2p = residual(Point::new(p.q1, zp)).ok()?;
        let rq2m = residual(Point::new(p.q1, zm)).ok()?;
        let mut j = [[T::zero(); 2]; 3];
        for k in 0..3 {
            j[k][0] = (rq1p[k] - rq1m[k]) / (T::two() * delta);
            j[k][1] = (rq2p[k] - rq2m[k]) / span;
        }
        let a11 = j[0][0] * j[0][0] + j[1][0] * j[1][0] + j[2][0] * j[2][0];
        let a12 = j[0][0] * j[0][1] + j[1][0] * j[1][1] + j[2][0] * j[2][1];
        let a22 = j[0][1] * j[0][1] + j[1][1] * j[1][1] + j[2][1] * j[2][1];
        let b1 = j[0][0] * r[0] + j[1][0] * r[1] + j[2][0] * r[2];
        let b2 = j[0][1] * r[0] + j[1][1] * r[1] + j[2][1] * r[2];
        let floor = (a11 + a22) * T::lit(1e-14) + T::lit(1e-300);
        let mut improved = false;
        for _ in 0..14 {
            let d11 = a11 + lambda * a11 + floor;
            let d22 = a22 + lambda * a22 + floor;
            if let Some((s1, s2)) = solve2(d11, a12, a12, d22, b1, b2) {
                let (s1, s2) = clamp_step(s1, s2, clamp);
                let cand = wrap_iterate(m, Point::new(p.q1 - s1, p.q2 - s2));
                if let Ok(rc) = residual(cand) {
                    if norm(rc) < rn {
                        p = cand;
                        lambda = (lambda / T::lit(3.0)).max(T::lit(1e-12));
                        improved = true;
                        break;
                    }
                }
            }
            lambda = lambda * T::lit(5.0);
        }
        if !improved {
            return None;
        }
    }
    None
}

fn fixed_point_residual<T: Real>(
    h: &HamPath<T>,
    m: &Manifold<T>,
    p: Point<T>,
    cfg: &FlowConfig<T>,
) -> Result<[T; 3]> {
    let q = h.flow(p, T::zero(), T::one(), cfg)?;
    match m.kind {
        ManifoldKind::Sphere2 => {
            let a = m.embed3(p);
            let b = m.embed3(q);
            Ok([b[0] - a[0], b[1] - a[1], b[2] - a[2]])
        }
        _ => {
            let (d1, d2) = m.displacement(p, q);
            Ok([d1, d2, T::zero()])
        }
    }
}

fn clamp_step<T: Real>(s1: T, s2: T, clamp: T) -> (T, T) {
    let n = (s1 * s1 + s2 * s2).sqrt();
    if n > clamp {
        (s1 * clamp / n, s2 * clamp / n)
    } else {
        (s1, s2)
    }
}

fn wrap_iterate<T: Real>(m: &Manifold<T>, p: Point<T>) -> Point<T> {
    match m.kind {
        ManifoldKind::Sphere2 => {
            let z = p.q2.max(-T::one()).min(T::one());
            Point::new(p.q1, z)
        }
        _ => m.chart_wrap((p.q1, p.q2)).unwrap_or(p),
    }
}

/// One line of a spectrum table.
#[derive(Debug, Clone)]
pub struct SpectrumEntry<T> {
    pub orbit_id: String,
    pub point: Point<T>,
    pub base_action: T,
}

/// The action spectrum of a normalized Hamiltonian path: one base value
/// per orbit plus the shared period-group generator (each spectral coset
/// is the base value plus integer multiples of the generator).
#[derive(Debug, Clone)]
pub struct SpectrumTable<T> {
    pub manifold: ManifoldKind,
    pub hamiltonian_id: String,
    pub coset_generator: T,
    pub entries: Vec<SpectrumEntry<T>>,
    /// Torus orbits through fixed points that wind around the torus and
    /// are therefore outside the contractible loop space.
    pub excluded_noncontractible: usize,
}

impl<T: Real> SpectrumTable<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("orbit_id,p_q1,p_q2,base_action,coset_generator\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.orbit_id,
                e.point.q1.to64(),
                e.point.q2.to64(),
                e.base_action.to64(),
                self.coset_generator.to64()
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "manifold": format!("{:?}", self.manifold),
            "hamiltonian": self.hamiltonian_id,
            "coset_generator": self.coset_generator.to64(),
            "excluded_noncontractible": self.excluded_noncontractible,
            "entries": self.entries.iter().map(|e| serde_json::json!({
                "orbit_id": e.orbit_id,
                "p_q1": e.point.q1.to64(),
                "p_q2": e.point.q2.to64(),
                "base_action": e.base_action.to64(),
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions<T> {
    pub seeds_per_axis: usize,
    pub orbit_samples: usize,
    pub cfg: FlowConfig<T>,
}

impl<T: Real> Default for SpectrumOptions<T> {
    fn default() -> Self {
        Self {
            seeds_per_axis: DEFAULT_SEEDS_PER_AXIS,
            orbit_samples: DEFAULT_ORBIT_SAMPLES,
            cfg: FlowConfig::default(),
        }
    }
}

/// Assemble the action spectrum of a normalized path: fixed points, their
/// orbits, canonical cappings, base actions; sorted and deduplicated.
pub fn spectrum<T: Real>(
    h: &HamPath<T>,
    name: &str,
    opts: &SpectrumOptions<T>,
) -> Result<SpectrumTable<T>> {
    use crate::hamdsl::NormalizationTag;
    match h.normalization() {
        NormalizationTag::MeanZero | NormalizationTag::CompactSupport => {}
        tag => {
            return Err(Error::NotNormalized {
                tag: format!("{tag}"),
            })
        }
    }
    let m = h.manifold();
    let found = find_fixed_points(h, opts.seeds_per_axis, &opts.cfg)?;
    if found.degenerate_identity {
        return Err(Error::DegenerateIdentity);
    }
    let mut points: Vec<(Point<T>, bool)> = Vec::new();
    for &p in &found.isolated {
        points.push((p, false));
    }
    for fam in &found.families {
        points.push((fam.representative, true));
    }

    let mut entries: Vec<SpectrumEntry<T>> = Vec::new();
    let mut excluded = 0usize;
    let mut orbit_counter = 0usize;
    let mut family_counter = 0usize;
    for (p, is_family) in points {
        let orbit = PeriodicOrbit::from_fixed_point(h, p, opts.orbit_samples, &opts.cfg)?;
        if !orbit.contractible {
            excluded += 1;
            if is_family {
                family_counter += 1;
            } else {
                orbit_counter += 1;
            }
            continue;
        }
        let cap = canonical_capping(&orbit)?;
        let a = action(h, &orbit, &cap, &opts.cfg)?;
        let orbit_id = if m.kind == ManifoldKind::Sphere2 && (p.q2 - T::one()).abs() < T::lit(1e-6)
        {
            "north".to_string()
        } else if m.kind == ManifoldKind::Sphere2 && (p.q2 + T::one()).abs() < T::lit(1e-6) {
            "south".to_string()
        } else if is_family {
            let id = format!("family{family_counter}");
            family_counter += 1;
            id
        } else {
            let id = format!("orbit{orbit_counter}");
            orbit_counter += 1;
            id
        };
        entries.push(SpectrumEntry {
            orbit_id,
            point: p,
            base_action: a,
        });
    }
    entries.sort_by(|a, b| a.base_action.partial_cmp(&b.base_action).unwrap());
    entries.dedup_by(|a, b| (a.base_action - b.base_action).abs() < T::lit(ACTION_DEDUP_TOL));
    Ok(SpectrumTable {
        manifold: m.kind,
        hamiltonian_id: name.to_string(),
        coset_generator: m.gamma_omega_generator,
        entries,
        excluded_noncontractible: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamdsl::{parse, Hamiltonian, NormalizationTag};
    use crate::num::PeriodicSpline;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    fn leaf(src: &str, m: &Manifold<f64>) -> HamPath<f64> {
        HamPath::Leaf(parse(src, m).unwrap())
    }

    fn mean_zero_leaf(src: &str, m: &Manifold<f64>) -> HamPath<f64> {
        HamPath::Leaf(parse(src, m).unwrap().tagged(NormalizationTag::MeanZero))
    }

    #[test]
    fn half_rotation_spectrum_is_the_two_poles() {
        let m = Manifold::<f64>::sphere();
        let h = mean_zero_leaf("pi*z", &m);
        let opts = SpectrumOptions {
            seeds_per_axis: 16,
            orbit_samples: 256,
            cfg: FlowConfig::with_step(1.0 / 256.0),
        };
        let table = spectrum(&h, "half-rotation", &opts).unwrap();
        assert_eq!(table.entries.len(), 2);
        assert_eq!(table.entries[0].orbit_id, "north");
        assert!((table.entries[0].base_action + PI).abs() < 1e-9);
        assert_eq!(table.entries[1].orbit_id, "south");
        assert!((table.entries[1].base_action - PI).abs() < 1e-9);
        assert!((table.coset_generator - 4.0 * PI).abs() < 1e-12);
        let csv = table.to_csv();
        assert!(csv.starts_with("orbit_id,p_q1,p_q2,base_action,coset_generator\n"));
        assert!(csv.contains("north"));
    }

    #[test]
    fn full_rotation_is_degenerate_identity() {
        let m = Manifold::<f64>::sphere();
        let h = mean_zero_leaf("2*pi*z", &m);
        let opts = SpectrumOptions {
            seeds_per_axis: 12,
            orbit_samples: 128,
            cfg: FlowConfig::with_step(1.0 / 128.0),
        };
        assert!(matches!(
            spectrum(&h, "full-rotation", &opts),
            Err(Error::DegenerateIdentity)
        ));
    }

    #[test]
    fn zero_hamiltonian_is_degenerate_identity() {
        let m = Manifold::<f64>::torus();
        let h = HamPath::Leaf(Hamiltonian::zero(m));
        let cfg = FlowConfig::with_step(1.0 / 64.0);
        let found = find_fixed_points(&h, 8, &cfg).unwrap();
        assert!(found.degenerate_identity);
        assert!((found.zero_iteration_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn torus_winding_lines_are_excluded() {
        // X = (cos(2*pi*y), 0): lines y = 0, 1/2 wind around the torus,
        // lines y = 1/4, 3/4 are constant fixed lines
        let m = Manifold::<f64>::torus();
        let h = mean_zero_leaf("sin(2*pi*y)/(2*pi)", &m);
        let opts = SpectrumOptions {
            seeds_per_axis: 16,
            orbit_samples: 128,
            cfg: FlowConfig::with_step(1.0 / 128.0),
        };
        let table = spectrum(&h, "shear", &opts).unwrap();
        assert!(table.excluded_noncontractible >= 2, "{table:?}");
        assert_eq!(table.entries.len(), 2, "{table:?}");
        let expect = 1.0 / (2.0 * PI);
        assert!((table.entries[0].base_action + expect).abs() < 1e-9);
        assert!((table.entries[1].base_action - expect).abs() < 1e-9);
        assert_eq!(table.coset_generator, 0.0);
    }

    #[test]
    fn plane_radial_bump_families_and_actions() {
        // H = h0 * bump(x^2 + y^2) supported in r <= 2, plateau r <= 1;
        // with u = (r^2-1)/3 the angular speed is (60*h0/3)*u^2*(1-u)^2,
        // which crosses 2*pi at the roots of u*(1-u) = sqrt(2*pi/(20*h0))
        let m = Manifold::<f64>::plane_default();
        let h0 = 20.0;
        let h = HamPath::Leaf(
            parse("20*bump2(x^2 + y^2; 1, 4)", &m)
                .unwrap()
                .tagged(NormalizationTag::CompactSupport),
        );
        let opts = SpectrumOptions {
            seeds_per_axis: 20,
            orbit_samples: 256,
            cfg: FlowConfig::with_step(1.0 / 1024.0),
        };
        let table = spectrum(&h, "radial-bump", &opts).unwrap();

        // closed-form oracle for the crossing circles
        let q = (2.0 * PI / (20.0 * h0)).sqrt();
        let u1 = (1.0 - (1.0f64 - 4.0 * q).sqrt()) / 2.0;
        let u2 = (1.0 + (1.0f64 - 4.0 * q).sqrt()) / 2.0;
        let smoothstep = |u: f64| u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
        let circle_action = |u: f64| {
            let r2 = 1.0 + 3.0 * u;
            -PI * r2 - h0 * (1.0 - smoothstep(u))
        };
        let expected = [circle_action(u2), -h0, circle_action(u1)];
        for want in expected {
            assert!(
                table
                    .entries
                    .iter()
                    .any(|e| (e.base_action - want).abs() < 1e-4),
                "missing action {want}: {table:?}"
            );
        }
        // the plateau shows up as a degenerate family, and the crossing
        // circles are found at the oracle radii
        let found = find_fixed_points(&h, 20, &opts.cfg).unwrap();
        assert!(!found.families.is_empty());
        let r1 = (1.0 + 3.0 * u1).sqrt();
        let r2c = (1.0 + 3.0 * u2).sqrt();
        let has_radius = |r: f64| {
            found.families.iter().any(|f| {
                (f.representative.q1.hypot(f.representative.q2) - r).abs() < 1e-3
            }) || found
                .isolated
                .iter()
                .any(|p| (p.q1.hypot(p.q2) - r).abs() < 1e-3)
        };
        assert!(has_radius(r1), "no circle near r = {r1}: {found:?}");
        assert!(has_radius(r2c), "no circle near r = {r2c}: {found:?}");
    }

    /// Circle orbit of H = 4*z^2 at z = pi/4 (rotation rate 8z = 2*pi).
    fn sphere_test_orbit(n: usize, cfg: &FlowConfig<f64>) -> (HamPath<f64>, PeriodicOrbit<f64>) {
        let m = Manifold::<f64>::sphere();
        let h = leaf("4*z^2", &m);
        let orbit =
            PeriodicOrbit::from_fixed_point(&h, Point::new(0.0, PI / 4.0), n, cfg).unwrap();
        (h, orbit)
    }

    #[test]
    fn sphere_circle_orbit_action_matches_closed_form() {
        let cfg = FlowConfig::with_step(1.0 / 512.0);
        let (h, orbit) = sphere_test_orbit(256, &cfg);
        orbit.validate(&h, &cfg).unwrap();
        assert!(!orbit.is_constant());
        let cap = canonical_capping(&orbit).unwrap();
        assert_eq!(cap.kind, CappingKind::SphericalCone);
        // cap area -2*pi*(z+1), H = 4 z^2 on the orbit
        let z = PI / 4.0;
        let want = 2.0 * PI * (z + 1.0) - 4.0 * z * z;
        let a = action(&h, &orbit, &cap, &cfg).unwrap();
        assert!((a - want).abs() < 1e-9, "{a} vs {want}");
    }

    #[test]
    fn coset_shift_is_exact() {
        let cfg = FlowConfig::with_step(1.0 / 256.0);
        let (h, orbit) = sphere_test_orbit(128, &cfg);
        let cap = canonical_capping(&orbit).unwrap();
        let base = action(&h, &orbit, &cap, &cfg).unwrap();
        let gen = h.manifold().gamma_omega_generator;
        for k in [-2i64, -1, 1, 3] {
            let shifted = Capping { sheet: k, ..cap };
            let a = action(&h, &orbit, &shifted, &cfg).unwrap();
            assert_eq!(a, base - k as f64 * gen);
        }
    }

    #[test]
    fn constant_time_shift_moves_all_actions_by_its_integral() {
        let cfg = FlowConfig::with_step(1.0 / 256.0);
        let (h, orbit) = sphere_test_orbit(128, &cfg);
        let cap = canonical_capping(&orbit).unwrap();
        let base = action(&h, &orbit, &cap, &cfg).unwrap();
        // G = H + c(t) with c = 0.3 + 0.1 sin(2 pi t): same flow, and
        // every action shifts by -integral(c) = -0.3
        let nodes = 64;
        let c: Vec<f64> = (0..nodes)
            .map(|i| {
                let t = i as f64 / nodes as f64;
                -(0.3 + 0.1 * (2.0 * PI * t).sin())
            })
            .collect();
        let m = Manifold::<f64>::sphere();
        let g = HamPath::Shifted {
            base: Box::new(leaf("4*z^2", &m)),
            shift: PeriodicSpline::new(c),
            tag: NormalizationTag::Unchecked,
        };
        let shifted = action(&g, &orbit, &cap, &cfg).unwrap();
        assert!((shifted - (base - 0.3)).abs() < 1e-7, "{shifted} vs {base}");
    }

    #[test]
    fn action_invariant_under_resampling() {
        let cfg = FlowConfig::with_step(1.0 / 512.0);
        let (h, o128) = sphere_test_orbit(128, &cfg);
        let (_, o512) = sphere_test_orbit(512, &cfg);
        let a128 = action(&h, &o128, &canonical_capping(&o128).unwrap(), &cfg).unwrap();
        let a512 = action(&h, &o512, &canonical_capping(&o512).unwrap(), &cfg).unwrap();
        assert!((a128 - a512).abs() < 1e-7);
    }

    #[test]
    fn orbits_are_critical_points_of_the_action() {
        // smooth loop perturbations of size eps change the action by
        // O(eps^2) at a genuine orbit
        let cfg = FlowConfig::with_step(1.0 / 512.0);
        let (h, orbit) = sphere_test_orbit(256, &cfg);
        let m = h.manifold();
        let cap = canonical_capping(&orbit).unwrap();
        let base = action(&h, &orbit, &cap, &cfg).unwrap();
        let eps = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mode = rng.gen_range(1..=4) as f64;
            let (a1, b1, a2, b2) = (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = orbit.n;
            let perturbed: Vec<(f64, f64)> = (0..=n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    let (c, s) = ((2.0 * PI * mode * t).cos(), (2.0 * PI * mode * t).sin());
                    let (q1, q2) = orbit.samples[i];
                    (q1 + eps * (a1 * s + b1 * c), q2 + eps * (a2 * s + b2 * c))
                })
                .collect();
            // discrete action of the perturbed capped loop
            let mut area = 0.0;
            let mut ham = 0.0;
            for i in 0..n {
                let a = perturbed[i];
                let b = perturbed[i + 1];
                area += (a.1 + b.1 + 2.0) * 0.5 * (b.0 - a.0);
                let p = m.chart_wrap(a).unwrap();
                ham += h.value(p, i as f64 / n as f64, &cfg).unwrap();
            }
            let perturbed_action = -(-area) - ham / n as f64;
            assert!(
                (perturbed_action - base).abs() < 1e-6,
                "first variation too large: {:e}",
                (perturbed_action - base).abs()
            );
        }
    }

    #[test]
    fn capping_compatibility_is_enforced() {
        let cfg = FlowConfig::with_step(1.0 / 256.0);
        let (h, orbit) = sphere_test_orbit(128, &cfg);
        let bad = Capping {
            kind: CappingKind::ConstantAtPoint,
            signed_area: 0.0,
            sheet: 0,
        };
        assert!(matches!(
            action(&h, &orbit, &bad, &cfg),
            Err(Error::IncompatibleCapping { .. })
        ));
        let bad = Capping {
            kind: CappingKind::ConeFill,
            signed_area: 0.0,
            sheet: 0,
        };
        assert!(matches!(
            action(&h, &orbit, &bad, &cfg),
            Err(Error::IncompatibleCapping { .. })
        ));
    }

    #[test]
    fn spectrum_requires_normalization() {
        let m = Manifold::<f64>::sphere();
        let h = leaf("pi*z", &m); // tag left Unchecked
        let opts = SpectrumOptions {
            seeds_per_axis: 8,
            orbit_samples: 64,
            cfg: FlowConfig::with_step(1.0 / 64.0),
        };
        assert!(matches!(
            spectrum(&h, "untagged", &opts),
            Err(Error::NotNormalized { .. })
        ));
    }
}
