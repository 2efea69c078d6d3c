//! Derived fields of a two-parameter family of flows `f^s_t` on a fixed
//! chart grid: the generator field `X(t,s)`, the transverse field
//! `Y(t,s) = (d/ds f^s_t) o (f^s_t)^{-1}`, the normalized Hamiltonians `K`
//! generating `Y` (reconstructed from `dK = omega(Y, .)` by line
//! integration), and the compatibility-PDE residual
//! `r = dF/ds - dK/dt + {F, K}` with its constant-in-x diagnostic `c(s,t)`.
//!
//! Pipeline: each family member's flow is integrated once per seed-grid
//! node and stored on the (s, t) grid; `Y` at a fixed chart point comes
//! from an s-central difference of same-seed positions, pulled to the
//! fixed point by Newton inversion of the bilinearly interpolated forward
//! map. Everything downstream is grid arithmetic.

use crate::error::{Error, Result};
use crate::flow::{trajectory, FlowConfig};
use crate::geom::{Manifold, ManifoldKind, Point};
use crate::hamdsl::{Hamiltonian, HamiltonianFamily};
use crate::num::{cumulative_integral, periodic_integral, solve2, wrap_signed, Real};

use rayon::prelude::*;

/// Tolerance on fundamental-cycle periods of `omega(Y, .)`.
const EXACTNESS_TOL: f64 = 1e-6;

/// Uniform rectangular grid in the chart, periodic where the chart is.
#[derive(Debug, Clone, Copy)]
pub struct SeedGrid<T> {
    pub manifold: Manifold<T>,
    pub n1: usize,
    pub n2: usize,
    pub origin: (T, T),
    pub h: (T, T),
    pub periodic: (bool, bool),
}

impl<T: Real> SeedGrid<T> {
    pub fn for_manifold(m: &Manifold<T>, n1: usize, n2: usize) -> Self {
        assert!(n1 >= 8 && n2 >= 8, "seed grid too coarse");
        match m.kind {
            ManifoldKind::Torus2 => Self {
                manifold: *m,
                n1,
                n2,
                origin: (T::zero(), T::zero()),
                h: (T::one() / T::from_usize_(n1), T::one() / T::from_usize_(n2)),
                periodic: (true, true),
            },
            ManifoldKind::Sphere2 => {
                let h2 = T::two() / T::from_usize_(n2);
                Self {
                    manifold: *m,
                    n1,
                    n2,
                    // z nodes at cell midpoints, away from the poles
                    origin: (T::zero(), -T::one() + h2 * T::half()),
                    h: (T::two() * T::PI() / T::from_usize_(n1), h2),
                    periodic: (true, false),
                }
            }
            ManifoldKind::PlaneR2 => {
                let w = m.window.expect("plane manifold carries a window");
                let h1 = w.side() / T::from_usize_(n1);
                let h2 = w.side() / T::from_usize_(n2);
                Self {
                    manifold: *m,
                    n1,
                    n2,
                    origin: (w.min + h1 * T::half(), w.min + h2 * T::half()),
                    h: (h1, h2),
                    periodic: (false, false),
                }
            }
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize, j: usize) -> (T, T) {
        (
            self.origin.0 + T::from_usize_(i) * self.h.0,
            self.origin.1 + T::from_usize_(j) * self.h.1,
        )
    }

    /// Chart period of each grid direction (only meaningful if periodic).
    fn periods(&self) -> (T, T) {
        (
            T::from_usize_(self.n1) * self.h.0,
            T::from_usize_(self.n2) * self.h.1,
        )
    }
}

/// A tangent field sampled on a seed grid.
#[derive(Debug, Clone)]
pub struct VectorGrid<T> {
    pub grid: SeedGrid<T>,
    pub v1: Vec<T>,
    pub v2: Vec<T>,
}

/// A scalar field sampled on a seed grid.
#[derive(Debug, Clone)]
pub struct ScalarGrid<T> {
    pub grid: SeedGrid<T>,
    pub values: Vec<T>,
}

impl<T: Real> ScalarGrid<T> {
    /// Central-difference partials, one-sided (second order) at
    /// non-periodic boundaries.
    pub fn partials(&self, i: usize, j: usize) -> (T, T) {
        let g = &self.grid;
        let d = |axis: usize| -> T {
            let (n, h, periodic) = if axis == 0 {
                (g.n1, g.h.0, g.periodic.0)
            } else {
                (g.n2, g.h.1, g.periodic.1)
            };
            let at = |k: usize| {
                if axis == 0 {
                    self.values[g.idx(k, j)]
                } else {
                    self.values[g.idx(i, k)]
                }
            };
            let pos = if axis == 0 { i } else { j };
            if periodic {
                let p = (pos + 1) % n;
                let m = (pos + n - 1) % n;
                (at(p) - at(m)) / (T::two() * h)
            } else if pos == 0 {
                (-T::lit(3.0) * at(0) + T::lit(4.0) * at(1) - at(2)) / (T::two() * h)
            } else if pos == n - 1 {
                (T::lit(3.0) * at(n - 1) - T::lit(4.0) * at(n - 2) + at(n - 3)) / (T::two() * h)
            } else {
                (at(pos + 1) - at(pos - 1)) / (T::two() * h)
            }
        };
        (d(0), d(1))
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    fn mean(&self) -> T {
        let mut s = T::zero();
        for &v in &self.values {
            s += v;
        }
        s / T::from_usize_(self.values.len())
    }
}

/// Solve `dK = omega(Y, .)` on the grid by fourth-order line integration
/// (`dK/dq1 = -Y_2`, `dK/dq2 = Y_1`), then normalize: subtract the mean on
/// closed manifolds, anchor the window corner to 0 on the plane. Periodic
/// grid directions are first checked for vanishing cycle periods; a
/// nonvanishing period means the field is symplectic but not Hamiltonian.
pub fn reconstruct_normalized_generator<T: Real>(
    field: &VectorGrid<T>,
) -> Result<ScalarGrid<T>> {
    let g = field.grid;
    let (n1, n2) = (g.n1, g.n2);
    let p1 = |i: usize, j: usize| -field.v2[g.idx(i, j)];
    let p2 = |i: usize, j: usize| field.v1[g.idx(i, j)];
    let (period1, period2) = g.periods();
    let tol = T::lit(EXACTNESS_TOL);

    let mut worst_period = T::zero();
    if g.periodic.0 {
        for j in 0..n2 {
            let row: Vec<T> = (0..n1).map(|i| p1(i, j)).collect();
            worst_period = worst_period.max(periodic_integral(&row, period1).abs());
        }
    }
    if g.periodic.1 {
        for i in 0..n1 {
            let col: Vec<T> = (0..n2).map(|j| p2(i, j)).collect();
            worst_period = worst_period.max(periodic_integral(&col, period2).abs());
        }
    }
    if worst_period > tol {
        return Err(Error::NonExactField {
            period: worst_period.to64(),
        });
    }

    // integrate the first column in q2, then every row in q1
    let col0: Vec<T> = (0..n2).map(|j| p2(0, j)).collect();
    let k_col0 = cumulative_integral(&col0, g.h.1);
    let mut values = vec![T::zero(); g.len()];
    for j in 0..n2 {
        let row: Vec<T> = (0..n1).map(|i| p1(i, j)).collect();
        let k_row = cumulative_integral(&row, g.h.0);
        for i in 0..n1 {
            values[g.idx(i, j)] = k_col0[j] + k_row[i];
        }
    }
    let mut out = ScalarGrid { grid: g, values };
    if g.manifold.is_closed() {
        let mean = out.mean();
        for v in &mut out.values {
            *v -= mean;
        }
    } else {
        let anchor = out.values[g.idx(0, 0)];
        for v in &mut out.values {
            *v -= anchor;
        }
    }
    Ok(out)
}

/// Forward flows of an expression family, integrated once per seed node
/// and stored on the full (s, t) grid in the universal cover.
pub struct FamilySweep<T> {
    pub family: HamiltonianFamily<T>,
    pub grid: SeedGrid<T>,
    pub s_count: usize,
    pub t_count: usize,
    /// `members[i]` is the family at `s = i/(s_count-1)`.
    members: Vec<Hamiltonian<T>>,
    /// positions[s][t * len + node]
    positions: Vec<Vec<(T, T)>>,
}

impl<T: Real> FamilySweep<T> {
    pub fn build(
        family: HamiltonianFamily<T>,
        grid: SeedGrid<T>,
        s_count: usize,
        t_count: usize,
        cfg: &FlowConfig<T>,
    ) -> Result<Self> {
        assert!(s_count >= 3 && t_count >= 3);
        let dt = T::one() / T::from_usize_(t_count - 1);
        let per = (dt / cfg.step).to64().round() as usize;
        assert!(
            per >= 1 && ((dt / cfg.step).to64() - per as f64).abs() < 1e-9,
            "flow step must divide the t-grid spacing"
        );
        let members: Vec<Hamiltonian<T>> = (0..s_count)
            .map(|i| family.at(T::from_usize_(i) / T::from_usize_(s_count - 1)))
            .collect();
        let positions: Vec<Result<Vec<(T, T)>>> = members
            .par_iter()
            .map(|ham| {
                let mut slab = vec![(T::zero(), T::zero()); t_count * grid.len()];
                for i in 0..grid.n1 {
                    for j in 0..grid.n2 {
                        let start = grid.node(i, j);
                        let traj = trajectory(ham, start, T::zero(), T::one(), cfg)?;
                        for k in 0..t_count {
                            slab[k * grid.len() + grid.idx(i, j)] = traj.raw[k * per];
                        }
                    }
                }
                Ok(slab)
            })
            .collect();
        let positions = positions.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family,
            grid,
            s_count,
            t_count,
            members,
            positions,
        })
    }

    pub fn s_value(&self, i: usize) -> T {
        T::from_usize_(i) / T::from_usize_(self.s_count - 1)
    }

    pub fn t_value(&self, k: usize) -> T {
        T::from_usize_(k) / T::from_usize_(self.t_count - 1)
    }

    pub fn member(&self, s_index: usize) -> &Hamiltonian<T> {
        &self.members[s_index]
    }

    #[inline]
    fn pos(&self, s: usize, t: usize, node: usize) -> (T, T) {
        self.positions[s][t * self.grid.len() + node]
    }

    /// `Y o f^s_t` at a seed node: s-difference of same-seed positions.
    fn ytilde(&self, s: usize, t: usize, node: usize) -> (T, T) {
        let ds = T::one() / T::from_usize_(self.s_count - 1);
        if s == 0 {
            let a = self.pos(0, t, node);
            let b = self.pos(1, t, node);
            ((b.0 - a.0) / ds, (b.1 - a.1) / ds)
        } else if s == self.s_count - 1 {
            let a = self.pos(s - 1, t, node);
            let b = self.pos(s, t, node);
            ((b.0 - a.0) / ds, (b.1 - a.1) / ds)
        } else {
            let a = self.pos(s - 1, t, node);
            let b = self.pos(s + 1, t, node);
            ((b.0 - a.0) / (T::two() * ds), (b.1 - a.1) / (T::two() * ds))
        }
    }

    /// Bilinearly interpolated forward position at continuous seed
    /// coordinates `q`, with deck-transformation compensation across
    /// periodic wraps, plus the interpolation Jacobian.
    fn forward_interp(&self, s: usize, t: usize, q: (T, T)) -> ((T, T), [[T; 2]; 2]) {
        let g = &self.grid;
        let (periods, comp) = (g.periods(), g.periodic);
        let u = (q.0 - g.origin.0) / g.h.0;
        let v = (q.1 - g.origin.1) / g.h.1;
        let (i0, fu) = cell_index(u, g.n1, comp.0);
        let (j0, fv) = cell_index(v, g.n2, comp.1);
        let corner = |di: usize, dj: usize| -> (T, T) {
            let (ii, wrap_i) = wrap_index(i0 + di as isize, g.n1, comp.0);
            let (jj, wrap_j) = wrap_index(j0 + dj as isize, g.n2, comp.1);
            let mut p = self.pos(s, t, g.idx(ii, jj));
            // forward maps commute with deck transformations
            p.0 += T::lit(wrap_i as f64) * periods.0;
            p.1 += T::lit(wrap_j as f64) * periods.1;
            p
        };
        let f00 = corner(0, 0);
        let f10 = corner(1, 0);
        let f01 = corner(0, 1);
        let f11 = corner(1, 1);
        let one = T::one();
        let w00 = (one - fu) * (one - fv);
        let w10 = fu * (one - fv);
        let w01 = (one - fu) * fv;
        let w11 = fu * fv;
        let val = (
            w00 * f00.0 + w10 * f10.0 + w01 * f01.0 + w11 * f11.0,
            w00 * f00.1 + w10 * f10.1 + w01 * f01.1 + w11 * f11.1,
        );
        let d1 = (
            ((one - fv) * (f10.0 - f00.0) + fv * (f11.0 - f01.0)) / g.h.0,
            ((one - fv) * (f10.1 - f00.1) + fv * (f11.1 - f01.1)) / g.h.0,
        );
        let d2 = (
            ((one - fu) * (f01.0 - f00.0) + fu * (f11.0 - f10.0)) / g.h.1,
            ((one - fu) * (f01.1 - f00.1) + fu * (f11.1 - f10.1)) / g.h.1,
        );
        (val, [[d1.0, d2.0], [d1.1, d2.1]])
    }

    /// Periodic bilinear interpolation of the ytilde field (no deck
    /// compensation: same-seed differences are already periodic).
    fn ytilde_interp(&self, s: usize, t: usize, q: (T, T)) -> (T, T) {
        let g = &self.grid;
        let u = (q.0 - g.origin.0) / g.h.0;
        let v = (q.1 - g.origin.1) / g.h.1;
        let (i0, fu) = cell_index(u, g.n1, g.periodic.0);
        let (j0, fv) = cell_index(v, g.n2, g.periodic.1);
        let at = |di: usize, dj: usize| -> (T, T) {
            let (ii, _) = wrap_index(i0 + di as isize, g.n1, g.periodic.0);
            let (jj, _) = wrap_index(j0 + dj as isize, g.n2, g.periodic.1);
            self.ytilde(s, t, g.idx(ii, jj))
        };
        let one = T::one();
        let y00 = at(0, 0);
        let y10 = at(1, 0);
        let y01 = at(0, 1);
        let y11 = at(1, 1);
        let w00 = (one - fu) * (one - fv);
        let w10 = fu * (one - fv);
        let w01 = (one - fu) * fv;
        let w11 = fu * fv;
        (
            w00 * y00.0 + w10 * y10.0 + w01 * y01.0 + w11 * y11.0,
            w00 * y00.1 + w10 * y10.1 + w01 * y01.1 + w11 * y11.1,
        )
    }

    /// Newton inversion of the interpolated forward map: seed coordinates
    /// `q` with `f^s_t(q) = p` (modulo chart periods), warm-started.
    fn invert(&self, s: usize, t: usize, p: (T, T), warm: (T, T)) -> Result<(T, T)> {
        let g = &self.grid;
        let periods = g.periods();
        let mut q = warm;
        let mut best = T::infinity();
        for _ in 0..40 {
            let (f, jac) = self.forward_interp(s, t, q);
            let mut r1 = f.0 - p.0;
            let mut r2 = f.1 - p.1;
            if g.periodic.0 {
                r1 = wrap_signed(r1, periods.0);
            }
            if g.periodic.1 {
                r2 = wrap_signed(r2, periods.1);
            }
            let res = (r1 * r1 + r2 * r2).sqrt();
            best = best.min(res);
            if res < T::lit(1e-11) {
                return Ok(q);
            }
            match solve2(jac[0][0], jac[0][1], jac[1][0], jac[1][1], r1, r2) {
                Some((d1, d2)) => {
                    q.0 -= d1;
                    q.1 -= d2;
                }
                None => break,
            }
        }
        if best < T::lit(1e-8) {
            Ok(q)
        } else {
            Err(Error::NonConvergence {
                residual: best.to64(),
                iterations: 40,
            })
        }
    }

    /// `Y(t_k, s_i)` sampled at every seed-grid node (as fixed chart
    /// points), via inversion of the forward map. `warm` carries the
    /// inversion warm starts across consecutive `t` for each node.
    pub fn y_at_nodes(
        &self,
        s: usize,
        t: usize,
        warm: &mut [(T, T)],
    ) -> Result<VectorGrid<T>> {
        let g = self.grid;
        let mut v1 = vec![T::zero(); g.len()];
        let mut v2 = vec![T::zero(); g.len()];
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let node = g.idx(i, j);
                let p = g.node(i, j);
                let q = self.invert(s, t, p, warm[node])?;
                warm[node] = q;
                let y = self.ytilde_interp(s, t, q);
                v1[node] = y.0;
                v2[node] = y.1;
            }
        }
        Ok(VectorGrid { grid: g, v1, v2 })
    }

    /// Largest defect between the analytic generator field and the
    /// family's own definition, sampled at seed nodes (sanity invariant:
    /// the X grid is the analytic `ham_vector_field` of `F^s`).
    pub fn x_field(&self, s: usize, t: usize) -> VectorGrid<T> {
        let g = self.grid;
        let ham = &self.members[s];
        let tv = self.t_value(t);
        let mut v1 = vec![T::zero(); g.len()];
        let mut v2 = vec![T::zero(); g.len()];
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let (a, b) = g.node(i, j);
                let (x1, x2) = ham.vector_field(Point::new(a, b), tv);
                let node = g.idx(i, j);
                v1[node] = x1;
                v2[node] = x2;
            }
        }
        VectorGrid { grid: g, v1, v2 }
    }
}

/// Locate the cell and fractional offset for a continuous grid coordinate.
fn cell_index<T: Real>(u: T, n: usize, periodic: bool) -> (isize, T) {
    if periodic {
        let i = u.floor();
        (i.to64() as isize, u - i)
    } else {
        // clamp to the grid so boundary queries extrapolate from the
        // outermost cell
        let max = T::from_usize_(n - 1) - T::lit(1e-12);
        let uu = u.max(T::zero()).min(max);
        let i = uu.floor().min(T::from_usize_(n - 2));
        (i.to64() as isize, u - i)
    }
}

/// Wrap a (possibly negative) index into range, reporting how many whole
/// periods were crossed.
fn wrap_index(i: isize, n: usize, periodic: bool) -> (usize, isize) {
    if periodic {
        let n = n as isize;
        let w = i.div_euclid(n);
        ((i - w * n) as usize, w)
    } else {
        (i.clamp(0, n as isize - 1) as usize, 0)
    }
}

/// Output of the compatibility-PDE residual computation.
pub struct Pde36Output<T> {
    pub s_count: usize,
    pub t_count: usize,
    /// Normalized generator grids of `Y`, indexed `[s * t_count + t]`.
    pub k: Vec<ScalarGrid<T>>,
    /// `c(s, t)` on interior nodes, row-major over `(s-2) x (t-2)`.
    pub c: Vec<T>,
    /// Max of `|r - c|` over space per interior `(s, t)`.
    pub residual_max: Vec<T>,
    pub max_residual: T,
    pub max_abs_c: T,
    /// Sup of `|K|` at the time endpoints `t = 0` and `t = 1`.
    pub k_endpoint_max: T,
}

impl<T: Real> Pde36Output<T> {
    pub fn k_at(&self, s: usize, t: usize) -> &ScalarGrid<T> {
        &self.k[s * self.t_count + t]
    }

    pub fn c_at(&self, s: usize, t: usize) -> T {
        debug_assert!(s >= 1 && s < self.s_count - 1 && t >= 1 && t < self.t_count - 1);
        self.c[(s - 1) * (self.t_count - 2) + (t - 1)]
    }
}

/// Full residual computation over the (s, t) grid: reconstructs `K` at
/// every grid point and evaluates `r = dF/ds - dK/dt + {F, K}` on interior
/// nodes, returning `max |r - c|` along with the diagnostic `c(s, t)`.
pub fn pde36_residual<T: Real>(sweep: &FamilySweep<T>) -> Result<Pde36Output<T>> {
    let g = sweep.grid;
    let (sc, tc) = (sweep.s_count, sweep.t_count);
    let ds = T::one() / T::from_usize_(sc - 1);
    let dt = T::one() / T::from_usize_(tc - 1);

    // pass 1: K(., t, s) everywhere (parallel over s; warm starts run in t)
    let k: Vec<Result<Vec<ScalarGrid<T>>>> = (0..sc)
        .into_par_iter()
        .map(|s| {
            let mut warm: Vec<(T, T)> = (0..g.n1)
                .flat_map(|i| (0..g.n2).map(move |j| (i, j)))
                .map(|(i, j)| g.node(i, j))
                .collect();
            let mut out = Vec::with_capacity(tc);
            for t in 0..tc {
                let y = sweep.y_at_nodes(s, t, &mut warm)?;
                out.push(reconstruct_normalized_generator(&y)?);
            }
            Ok(out)
        })
        .collect();
    let k: Vec<ScalarGrid<T>> = k
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut k_endpoint_max = T::zero();
    for s in 0..sc {
        k_endpoint_max = k_endpoint_max
            .max(k[s * tc].max_abs())
            .max(k[s * tc + tc - 1].max_abs());
    }

    // pass 2: residual on interior (s, t)
    let mut c = vec![T::zero(); (sc - 2) * (tc - 2)];
    let mut residual_max = vec![T::zero(); (sc - 2) * (tc - 2)];
    let mut max_residual = T::zero();
    let mut max_abs_c = T::zero();
    let mut raw = vec![T::zero(); g.len()];
    for s in 1..sc - 1 {
        let ham = sweep.member(s);
        let s_lo = sweep.s_value(s - 1);
        let s_hi = sweep.s_value(s + 1);
        for t in 1..tc - 1 {
            let tv = sweep.t_value(t);
            let k_here = &k[s * tc + t];
            let k_prev = &k[s * tc + t - 1];
            let k_next = &k[s * tc + t + 1];
            for i in 0..g.n1 {
                for j in 0..g.n2 {
                    let node = g.idx(i, j);
                    let (a, b) = g.node(i, j);
                    let f_lo = sweep.family.eval_raw(a, b, tv, s_lo);
                    let f_hi = sweep.family.eval_raw(a, b, tv, s_hi);
                    let df_ds = (f_hi - f_lo) / (T::two() * ds);
                    let dk_dt =
                        (k_next.values[node] - k_prev.values[node]) / (T::two() * dt);
                    let (f1, f2) = ham.partials(Point::new(a, b), tv);
                    let (k1, k2) = k_here.partials(i, j);
                    let bracket = f1 * k2 - f2 * k1;
                    raw[node] = df_ds - dk_dt + bracket;
                }
            }
            let mut mean = T::zero();
            for &v in &raw {
                mean += v;
            }
            mean /= T::from_usize_(raw.len());
            let mut local_max = T::zero();
            for &v in &raw {
                local_max = local_max.max((v - mean).abs());
            }
            let slot = (s - 1) * (tc - 2) + (t - 1);
            c[slot] = mean;
            residual_max[slot] = local_max;
            max_residual = max_residual.max(local_max);
            max_abs_c = max_abs_c.max(mean.abs());
        }
    }

    Ok(Pde36Output {
        s_count: sc,
        t_count: tc,
        k,
        c,
        residual_max,
        max_residual,
        max_abs_c,
        k_endpoint_max,
    })
}
