//! One-parameter families of Hamiltonian paths `F^s` on a uniform s-grid,
//! with the transverse field `Y(t,s) = (d/ds f^s_t) o (f^s_t)^{-1}` by
//! finite differences in `s`, and the same-endpoint check that makes the
//! family a homotopy of paths with fixed endpoints.

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::geom::{Manifold, Point};
use crate::hamalg::HamPath;
use crate::num::Real;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default s-grid size.
pub const DEFAULT_S_COUNT: usize = 33;

/// An s-indexed family of Hamiltonian paths on a uniform grid over [0, 1].
pub struct IsotopyFamily<T> {
    pub members: Vec<HamPath<T>>,
}

/// A sampled value of `Y` (or any tangent field); `one_sided` marks samples
/// at the s-grid boundary where only a one-sided difference is available.
#[derive(Debug, Clone, Copy)]
pub struct TangentSample<T> {
    pub v1: T,
    pub v2: T,
    pub one_sided: bool,
}

impl<T: Real> IsotopyFamily<T> {
    pub fn new(members: Vec<HamPath<T>>) -> Self {
        assert!(members.len() >= 3, "family needs at least 3 s-samples");
        let kind = members[0].manifold().kind;
        assert!(
            members.iter().all(|m| m.manifold().kind == kind),
            "family members live on one manifold"
        );
        Self { members }
    }

    pub fn manifold(&self) -> Manifold<T> {
        self.members[0].manifold()
    }

    pub fn s_count(&self) -> usize {
        self.members.len()
    }

    pub fn s_value(&self, i: usize) -> T {
        T::from_usize_(i) / T::from_usize_(self.members.len() - 1)
    }

    /// Chart-distance check that every member shares the time-1 map of the
    /// first one, probed at `n_probes` deterministic points.
    pub fn check_same_endpoint(
        &self,
        n_probes: usize,
        seed: u64,
        cfg: &FlowConfig<T>,
    ) -> Result<()> {
        let m = self.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probes: Vec<(T, T)> = (0..n_probes)
            .map(|_| random_chart_point(&m, &mut rng))
            .collect();
        let reference: Vec<Point<T>> = probes
            .iter()
            .map(|&p| self.members[0].flow(Point::new(p.0, p.1), T::zero(), T::one(), cfg))
            .collect::<Result<_>>()?;
        let tol = T::lit(1e-4);
        let mut worst = T::zero();
        for member in &self.members[1..] {
            for (&p, &q0) in probes.iter().zip(&reference) {
                let q = member.flow(Point::new(p.0, p.1), T::zero(), T::one(), cfg)?;
                worst = worst.max(m.distance(q, q0));
            }
        }
        if worst >= tol {
            return Err(Error::EndpointMismatch {
                distance: worst.to64(),
            });
        }
        Ok(())
    }

    /// `Y(t, s_i)` at the chart point `p`: the s-derivative of
    /// `f^s_t((f^{s_i}_t)^{-1}(p))` by central differences on the s-grid
    /// (one-sided at the boundary, flagged).
    pub fn derive_y(
        &self,
        t: T,
        s_index: usize,
        p: Point<T>,
        cfg: &FlowConfig<T>,
    ) -> Result<TangentSample<T>> {
        let n = self.members.len();
        assert!(s_index < n);
        let ds = T::one() / T::from_usize_(n - 1);
        let x = self.members[s_index].flow_to0_raw((p.q1, p.q2), t, cfg)?;
        let (lo, hi, span, one_sided) = if s_index == 0 {
            (0, 1, ds, true)
        } else if s_index == n - 1 {
            (n - 2, n - 1, ds, true)
        } else {
            (s_index - 1, s_index + 1, T::two() * ds, false)
        };
        let a = self.members[lo].flow_from0_raw(x, t, cfg)?;
        let b = self.members[hi].flow_from0_raw(x, t, cfg)?;
        Ok(TangentSample {
            v1: (b.0 - a.0) / span,
            v2: (b.1 - a.1) / span,
            one_sided,
        })
    }
}

/// Deterministic random chart point, away from the sphere poles.
pub(crate) fn random_chart_point<T: Real>(
    m: &Manifold<T>,
    rng: &mut ChaCha8Rng,
) -> (T, T) {
    use crate::geom::ManifoldKind;
    match m.kind {
        ManifoldKind::Torus2 => (T::lit(rng.gen_range(0.0..1.0)), T::lit(rng.gen_range(0.0..1.0))),
        ManifoldKind::Sphere2 => (
            T::lit(rng.gen_range(0.0..std::f64::consts::TAU)),
            T::lit(rng.gen_range(-0.95..0.95)),
        ),
        ManifoldKind::PlaneR2 => {
            let w = m.window.expect("plane manifold carries a window");
            let lo = w.min.to64() * 0.8;
            let hi = w.max.to64() * 0.8;
            (T::lit(rng.gen_range(lo..hi)), T::lit(rng.gen_range(lo..hi)))
        }
    }
}
