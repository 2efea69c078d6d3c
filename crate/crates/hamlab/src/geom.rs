//! Model symplectic surfaces: the plane, the flat torus, and the round
//! sphere, each realized in a global Darboux chart where the area form is
//! `dq1 ∧ dq2`, together with quadrature, chart distance, and the period
//! group of the surface.
//!
//! Charts:
//! - plane: `(x, y)` on R^2, with a compact quadrature window;
//! - torus: `(x, y)` modulo 1, total area 1;
//! - sphere: cylindrical coordinates `(theta, z)`, `theta` modulo 2*pi,
//!   `z` in `[-1, 1]`, area form `dtheta ∧ dz`, total area `4*pi`.
//!
//! The period group is trivial for the plane and the torus and is
//! `(total area) * Z` for the sphere.

use crate::error::{Error, Result};
use crate::num::{wrap_signed, wrap_to, Real};

pub const POLE_PROBES: usize = 8;

/// Tolerance for accepting a z coordinate just outside `[-1, 1]`.
const SPHERE_Z_SLACK: f64 = 1e-12;

/// Relative support threshold for the plane compact-support probe.
pub const SUPPORT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ManifoldKind {
    PlaneR2,
    Torus2,
    Sphere2,
}

/// Square quadrature window `[min, max]^2` for the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<T> {
    pub min: T,
    pub max: T,
}

impl<T: Real> Window<T> {
    pub fn new(min: T, max: T) -> Self {
        assert!(min < max, "window must be nonempty");
        Self { min, max }
    }

    pub fn side(&self) -> T {
        self.max - self.min
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manifold<T> {
    pub kind: ManifoldKind,
    /// Total symplectic area; infinity for the plane.
    pub total_area: T,
    /// Positive generator of the period group; 0 means the group is trivial.
    pub gamma_omega_generator: T,
    /// Compact quadrature window (plane only).
    pub window: Option<Window<T>>,
}

impl<T: Real> Manifold<T> {
    pub fn plane(window: Window<T>) -> Self {
        Self {
            kind: ManifoldKind::PlaneR2,
            total_area: T::infinity(),
            gamma_omega_generator: T::zero(),
            window: Some(window),
        }
    }

    /// Plane with the default `[-4, 4]^2` window.
    pub fn plane_default() -> Self {
        Self::plane(Window::new(T::lit(-4.0), T::lit(4.0)))
    }

    pub fn torus() -> Self {
        Self {
            kind: ManifoldKind::Torus2,
            total_area: T::one(),
            gamma_omega_generator: T::zero(),
            window: None,
        }
    }

    pub fn sphere() -> Self {
        let area = T::lit(4.0) * T::PI();
        Self {
            kind: ManifoldKind::Sphere2,
            total_area: area,
            gamma_omega_generator: area,
            window: None,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.kind != ManifoldKind::PlaneR2
    }

    /// Canonical chart representative of raw coordinates.
    pub fn chart_wrap(&self, raw: (T, T)) -> Result<Point<T>> {
        let (a, b) = raw;
        match self.kind {
            ManifoldKind::PlaneR2 => Ok(Point { q1: a, q2: b }),
            ManifoldKind::Torus2 => Ok(Point {
                q1: wrap_to(a, T::one()),
                q2: wrap_to(b, T::one()),
            }),
            ManifoldKind::Sphere2 => {
                let slack = T::lit(SPHERE_Z_SLACK);
                if b.abs() > T::one() + slack {
                    return Err(Error::SphereDomain { z: b.to64() });
                }
                let z = b.max(-T::one()).min(T::one());
                let theta = if z.abs() == T::one() {
                    T::zero()
                } else {
                    wrap_to(a, T::two() * T::PI())
                };
                Ok(Point { q1: theta, q2: z })
            }
        }
    }

    /// Chart period in each coordinate direction (None = non-periodic).
    pub fn periods(&self) -> (Option<T>, Option<T>) {
        match self.kind {
            ManifoldKind::PlaneR2 => (None, None),
            ManifoldKind::Torus2 => (Some(T::one()), Some(T::one())),
            ManifoldKind::Sphere2 => (Some(T::two() * T::PI()), None),
        }
    }

    /// Minimal chart displacement from `p` to `q` (wrap-aware).
    pub fn displacement(&self, p: Point<T>, q: Point<T>) -> (T, T) {
        let (p1, p2) = self.periods();
        let d1 = match p1 {
            Some(period) => wrap_signed(q.q1 - p.q1, period),
            None => q.q1 - p.q1,
        };
        let d2 = match p2 {
            Some(period) => wrap_signed(q.q2 - p.q2, period),
            None => q.q2 - p.q2,
        };
        (d1, d2)
    }

    /// Distance between points. Plane and torus use the (wrapped) chart
    /// metric; the sphere uses the chordal distance of the round embedding,
    /// which stays meaningful at the poles where the chart degenerates.
    pub fn distance(&self, p: Point<T>, q: Point<T>) -> T {
        match self.kind {
            ManifoldKind::Sphere2 => {
                let a = self.embed3(p);
                let b = self.embed3(q);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            }
            _ => {
                let (d1, d2) = self.displacement(p, q);
                (d1 * d1 + d2 * d2).sqrt()
            }
        }
    }

    /// Round embedding of a sphere chart point into R^3 (unit radius).
    pub fn embed3(&self, p: Point<T>) -> [T; 3] {
        debug_assert_eq!(self.kind, ManifoldKind::Sphere2);
        let r = (T::one() - p.q2 * p.q2).max(T::zero()).sqrt();
        [r * p.q1.cos(), r * p.q1.sin(), p.q2]
    }

    /// Shift an action value by `k` copies of the period-group generator.
    pub fn gamma_shift(&self, a: T, k: i64) -> T {
        a + T::lit(k as f64) * self.gamma_omega_generator
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point<T> {
    pub q1: T,
    pub q2: T,
}

impl<T: Real> Point<T> {
    pub fn new(q1: T, q2: T) -> Self {
        Self { q1, q2 }
    }
}

/// Tensor-product quadrature rule adapted to the manifold:
/// - torus: midpoint in both directions (spectrally accurate for periodic
///   integrands);
/// - sphere: midpoint in `theta` (exact for trigonometric polynomials),
///   Gauss-Legendre in `z` (exact for polynomials up to degree
///   `2 * resolution - 1`);
/// - plane: midpoint cells over the compact window, valid only for
///   integrands compactly supported inside it.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    pub manifold: Manifold<T>,
    pub resolution: usize,
    nodes: Vec<(Point<T>, T)>,
    /// Indices of the two outermost node layers of the plane window.
    boundary_ring: Vec<usize>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn new(manifold: &Manifold<T>, resolution: usize) -> Self {
        assert!(resolution >= 4, "resolution too small");
        let n = resolution;
        let nf = T::from_usize_(n);
        let mut nodes = Vec::with_capacity(n * n);
        let mut boundary_ring = Vec::new();
        match manifold.kind {
            ManifoldKind::Torus2 => {
                let w = T::one() / (nf * nf);
                for i in 0..n {
                    for j in 0..n {
                        let x = (T::from_usize_(i) + T::half()) / nf;
                        let y = (T::from_usize_(j) + T::half()) / nf;
                        nodes.push((Point::new(x, y), w));
                    }
                }
            }
            ManifoldKind::Sphere2 => {
                let two_pi = T::two() * T::PI();
                let wt = two_pi / nf;
                let gl = crate::num::gauss_legendre::<T>(n);
                for i in 0..n {
                    let theta = (T::from_usize_(i) + T::half()) * two_pi / nf;
                    for &(z, wz) in &gl {
                        nodes.push((Point::new(theta, z), wt * wz));
                    }
                }
            }
            ManifoldKind::PlaneR2 => {
                let win = manifold.window.expect("plane manifold carries a window");
                let side = win.side();
                let w = side * side / (nf * nf);
                for i in 0..n {
                    for j in 0..n {
                        let x = win.min + (T::from_usize_(i) + T::half()) * side / nf;
                        let y = win.min + (T::from_usize_(j) + T::half()) * side / nf;
                        if i < 2 || i >= n - 2 || j < 2 || j >= n - 2 {
                            boundary_ring.push(nodes.len());
                        }
                        nodes.push((Point::new(x, y), w));
                    }
                }
            }
        }
        Self {
            manifold: *manifold,
            resolution,
            nodes,
            boundary_ring,
        }
    }

    pub fn nodes(&self) -> &[(Point<T>, T)] {
        &self.nodes
    }

    /// Sum of weights; equals the total area for closed manifolds.
    pub fn total_weight(&self) -> T {
        let mut s = T::zero();
        for &(_, w) in &self.nodes {
            s += w;
        }
        s
    }

    /// Integrate a scalar field over the manifold. On the plane the field
    /// must vanish (below `SUPPORT_EPS`) on the two outermost node layers.
    pub fn integrate(&self, f: impl Fn(Point<T>) -> T) -> Result<T> {
        if self.manifold.kind == ManifoldKind::PlaneR2 {
            let eps = T::lit(SUPPORT_EPS);
            for &i in &self.boundary_ring {
                if f(self.nodes[i].0).abs() > eps {
                    return Err(Error::UnsupportedWindow);
                }
            }
        }
        let mut s = T::zero();
        for &(p, w) in &self.nodes {
            s += w * f(p);
        }
        Ok(s)
    }

    /// Integrate without the plane support check (internal use where the
    /// caller guarantees or separately verifies the support condition).
    pub fn integrate_unchecked(&self, f: impl Fn(Point<T>) -> T) -> T {
        let mut s = T::zero();
        for &(p, w) in &self.nodes {
            s += w * f(p);
        }
        s
    }

    /// Mean value of a scalar field (closed manifolds).
    pub fn mean(&self, f: impl Fn(Point<T>) -> T) -> Result<T> {
        if !self.manifold.is_closed() {
            return Err(Error::OpenManifold);
        }
        Ok(self.integrate_unchecked(f) / self.manifold.total_area)
    }

    /// True iff `|f| < SUPPORT_EPS` on the two outermost node layers.
    pub fn vanishes_on_boundary_ring(&self, f: impl Fn(Point<T>) -> T) -> bool {
        let eps = T::lit(SUPPORT_EPS);
        self.boundary_ring
            .iter()
            .all(|&i| f(self.nodes[i].0).abs() < eps)
    }
}
