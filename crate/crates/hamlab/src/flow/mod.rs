//! Hamiltonian flows by the implicit midpoint rule.
//!
//! The integrator works in the universal cover of the chart (coordinates are
//! never wrapped along a trajectory, only for field evaluation), is
//! symplectic and time-reversible, and steps on a global time grid so that
//! flowing `0 -> a` and then `a -> b` reproduces `0 -> b` exactly whenever
//! `a` and `b` are multiples of the step.

pub mod derived;
pub mod family;

use crate::error::{Error, Result};
use crate::geom::{Manifold, ManifoldKind, Point};
use crate::hamdsl::Hamiltonian;
use crate::num::{wrap_to, Real};

/// A time-dependent vector field in the Darboux chart of a manifold.
pub trait Field<T: Real> {
    fn manifold(&self) -> Manifold<T>;
    /// Field value at a chart point (callers pass wrapped points).
    fn at(&self, p: Point<T>, t: T) -> (T, T);
}

impl<T: Real> Field<T> for Hamiltonian<T> {
    fn manifold(&self) -> Manifold<T> {
        self.manifold
    }

    fn at(&self, p: Point<T>, t: T) -> (T, T) {
        self.vector_field(p, t)
    }
}

impl<T: Real, F: Field<T>> Field<T> for &F {
    fn manifold(&self) -> Manifold<T> {
        (*self).manifold()
    }

    fn at(&self, p: Point<T>, t: T) -> (T, T) {
        (*self).at(p, t)
    }
}

/// Closure-backed field, mostly for tests and derived fields.
pub struct FnField<T, F> {
    pub manifold: Manifold<T>,
    pub f: F,
}

impl<T: Real, F: Fn(Point<T>, T) -> (T, T)> Field<T> for FnField<T, F> {
    fn manifold(&self) -> Manifold<T> {
        self.manifold
    }

    fn at(&self, p: Point<T>, t: T) -> (T, T) {
        (self.f)(p, t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlowConfig<T> {
    /// Global grid step; flows are resolved in whole multiples of it.
    pub step: T,
    /// Convergence threshold for the fixed-point iteration residual.
    pub tol: T,
    pub max_iters: usize,
}

impl<T: Real> Default for FlowConfig<T> {
    fn default() -> Self {
        Self {
            step: T::one() / T::lit(512.0),
            tol: T::lit(1e-12),
            max_iters: 50,
        }
    }
}

impl<T: Real> FlowConfig<T> {
    pub fn with_step(step: T) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }
}

/// Wrap universal-cover coordinates for field evaluation only. The sphere
/// `z` is clamped (midpoint iterates may overshoot the poles transiently).
fn eval_point<T: Real>(m: &Manifold<T>, a: T, b: T) -> Point<T> {
    match m.kind {
        ManifoldKind::PlaneR2 => Point::new(a, b),
        ManifoldKind::Torus2 => Point::new(wrap_to(a, T::one()), wrap_to(b, T::one())),
        ManifoldKind::Sphere2 => Point::new(
            wrap_to(a, T::two() * T::PI()),
            b.max(-T::one()).min(T::one()),
        ),
    }
}

/// One implicit midpoint step from `(a, b)` at time `t` with signed step
/// `h`: the midpoint `m` solves `m = x + (h/2) X(m, t + h/2)`, and the step
/// output is `2m - x`.
fn midpoint_step<T: Real, F: Field<T>>(
    field: &F,
    m: &Manifold<T>,
    a: T,
    b: T,
    t: T,
    h: T,
    cfg: &FlowConfig<T>,
) -> Result<(T, T)> {
    let half_h = h * T::half();
    let tm = t + half_h;
    let (mut ma, mut mb) = (a, b);
    let mut residual = T::infinity();
    for _ in 0..cfg.max_iters {
        let (va, vb) = field.at(eval_point(m, ma, mb), tm);
        let na = a + half_h * va;
        let nb = b + half_h * vb;
        residual = ((na - ma).powi(2) + (nb - mb).powi(2)).sqrt();
        ma = na;
        mb = nb;
        if residual < cfg.tol {
            return Ok((T::two() * ma - a, T::two() * mb - b));
        }
    }
    Err(Error::NonConvergence {
        residual: residual.to64(),
        iterations: cfg.max_iters,
    })
}

/// Number of global grid steps between `t0` and `t1` (rounded; the interval
/// is expected to be an integer multiple of the step).
fn step_count<T: Real>(t0: T, t1: T, step: T) -> usize {
    ((t1 - t0).abs() / step).to64().round().max(1.0) as usize
}

/// Trajectory in the universal cover on the global grid from `t0` to `t1`.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    /// Unwrapped chart coordinates, one state per grid time.
    pub raw: Vec<(T, T)>,
}

impl<T: Real> Trajectory<T> {
    pub fn end_raw(&self) -> (T, T) {
        *self.raw.last().expect("trajectory is nonempty")
    }

    pub fn wrapped(&self, m: &Manifold<T>) -> Result<Vec<Point<T>>> {
        self.raw.iter().map(|&(a, b)| m.chart_wrap((a, b))).collect()
    }
}

/// Integrate the field from `t0` to `t1` (either direction), returning the
/// full grid trajectory in the universal cover.
pub fn trajectory<T: Real, F: Field<T>>(
    field: &F,
    start: (T, T),
    t0: T,
    t1: T,
    cfg: &FlowConfig<T>,
) -> Result<Trajectory<T>> {
    let m = field.manifold();
    if t1 == t0 {
        return Ok(Trajectory {
            times: vec![t0],
            raw: vec![start],
        });
    }
    let n = step_count(t0, t1, cfg.step);
    let h = (t1 - t0) / T::from_usize_(n);
    let mut times = Vec::with_capacity(n + 1);
    let mut raw = Vec::with_capacity(n + 1);
    times.push(t0);
    raw.push(start);
    let (mut a, mut b) = start;
    for i in 0..n {
        let t = t0 + T::from_usize_(i) * h;
        let (na, nb) = midpoint_step(field, &m, a, b, t, h, cfg)?;
        a = na;
        b = nb;
        times.push(t0 + T::from_usize_(i + 1) * h);
        raw.push((a, b));
    }
    Ok(Trajectory { times, raw })
}

/// Endpoint of the flow in the universal cover.
pub fn flow_raw<T: Real, F: Field<T>>(
    field: &F,
    start: (T, T),
    t0: T,
    t1: T,
    cfg: &FlowConfig<T>,
) -> Result<(T, T)> {
    if t1 == t0 {
        return Ok(start);
    }
    let m = field.manifold();
    let n = step_count(t0, t1, cfg.step);
    let h = (t1 - t0) / T::from_usize_(n);
    let (mut a, mut b) = start;
    for i in 0..n {
        let t = t0 + T::from_usize_(i) * h;
        let (na, nb) = midpoint_step(field, &m, a, b, t, h, cfg)?;
        a = na;
        b = nb;
    }
    Ok((a, b))
}

/// Endpoint of the flow as a wrapped chart point.
pub fn flow<T: Real, F: Field<T>>(
    field: &F,
    start: Point<T>,
    t0: T,
    t1: T,
    cfg: &FlowConfig<T>,
) -> Result<Point<T>> {
    let m = field.manifold();
    let (a, b) = flow_raw(field, (start.q1, start.q2), t0, t1, cfg)?;
    m.chart_wrap((a, b))
}

/// Chart Jacobian of the time-`t0 -> t1` flow map by central differences.
pub fn flow_jacobian<T: Real, F: Field<T>>(
    field: &F,
    start: Point<T>,
    t0: T,
    t1: T,
    cfg: &FlowConfig<T>,
    eps: T,
) -> Result<[[T; 2]; 2]> {
    let base = (start.q1, start.q2);
    let mut jac = [[T::zero(); 2]; 2];
    for (j, delta) in [(0usize, (eps, T::zero())), (1usize, (T::zero(), eps))] {
        let plus = flow_raw(
            field,
            (base.0 + delta.0, base.1 + delta.1),
            t0,
            t1,
            cfg,
        )?;
        let minus = flow_raw(
            field,
            (base.0 - delta.0, base.1 - delta.1),
            t0,
            t1,
            cfg,
        )?;
        jac[0][j] = (plus.0 - minus.0) / (T::two() * eps);
        jac[1][j] = (plus.1 - minus.1) / (T::two() * eps);
    }
    Ok(jac)
}
