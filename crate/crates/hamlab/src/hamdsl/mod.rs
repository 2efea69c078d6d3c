//! Hamiltonian expression DSL: parsing of `H(x, t)` from text into an AST
//! with exact symbolic partial derivatives, so gradients and Hamiltonian
//! vector fields are analytic rather than finite-differenced.
//!
//! Grammar (EBNF, whitespace-insensitive):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = atom [ "^" exponent ] ;
//! exponent= integer | "(" integer ")" ;
//! atom    = number | "pi" | coord | "t" | "s"
//!         | ("sin" | "cos" | "exp") "(" expr ")"
//!         | "bump2" "(" expr ";" const "," const ")"
//!         | "(" expr ")" ;
//! coord   = "x" | "y"            (plane, torus)
//!         | "theta" | "z"        (sphere) ;
//! ```
//!
//! Restrictions: exponents are nonnegative integer literals; division
//! requires a syntactically constant nonzero denominator; the time symbol
//! `t` may appear only inside `sin`/`cos` arguments of the form
//! `c * t` with `c` a constant equal to `2*pi*k` for a nonzero integer `k`,
//! which makes every expression 1-periodic in time by construction. The
//! parameter symbol `s` is only available when parsing family expressions.
//!
//! `bump2(e; lo, hi)` is a C^2 cutoff in the scalar `e` (typically a squared
//! radius): identically 1 for `e <= lo`, identically 0 for `e >= hi`, with
//! the quintic smoothstep profile in between.

mod parse;

pub use parse::{parse, parse_family, HamiltonianFamily};

use crate::error::Result;
use crate::geom::{Manifold, ManifoldKind, Point, QuadratureRule, POLE_PROBES};
use crate::num::{fract_mod1, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Coord1,
    Coord2,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr<T> {
    Num(T),
    Pi,
    Coord1,
    Coord2,
    Time,
    /// Family parameter `s`; substituted numerically before binding.
    Param,
    Neg(Box<Expr<T>>),
    Add(Box<Expr<T>>, Box<Expr<T>>),
    Sub(Box<Expr<T>>, Box<Expr<T>>),
    Mul(Box<Expr<T>>, Box<Expr<T>>),
    Div(Box<Expr<T>>, Box<Expr<T>>),
    Pow(Box<Expr<T>>, u32),
    Sin(Box<Expr<T>>),
    Cos(Box<Expr<T>>),
    Exp(Box<Expr<T>>),
    /// `order`-th derivative of the cutoff profile with respect to its raw
    /// argument; `order = 0` is the cutoff itself.
    Bump2 {
        arg: Box<Expr<T>>,
        lo: T,
        hi: T,
        order: u8,
    },
}

/// Evaluation environment: chart coordinates, reduced time, family parameter.
#[derive(Debug, Clone, Copy)]
pub struct Env<T> {
    pub c1: T,
    pub c2: T,
    pub t: T,
    pub param: T,
}

impl<T: Real> Expr<T> {
    pub fn eval(&self, env: &Env<T>) -> T {
        match self {
            Expr::Num(v) => *v,
            Expr::Pi => T::PI(),
            Expr::Coord1 => env.c1,
            Expr::Coord2 => env.c2,
            Expr::Time => env.t,
            Expr::Param => env.param,
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, n) => a.eval(env).powi(*n as i32),
            Expr::Sin(a) => a.eval(env).sin(),
            Expr::Cos(a) => a.eval(env).cos(),
            Expr::Exp(a) => a.eval(env).exp(),
            Expr::Bump2 { arg, lo, hi, order } => {
                bump_profile(arg.eval(env), *lo, *hi, *order)
            }
        }
    }

    /// Exact partial derivative with respect to `var`.
    pub fn differentiate(&self, var: Var) -> Expr<T> {
        let d = |e: &Expr<T>| Box::new(e.differentiate(var));
        let b = |e: Expr<T>| Box::new(e);
        match self {
            Expr::Num(_) | Expr::Pi | Expr::Param => Expr::Num(T::zero()),
            Expr::Coord1 => Expr::Num(if var == Var::Coord1 { T::one() } else { T::zero() }),
            Expr::Coord2 => Expr::Num(if var == Var::Coord2 { T::one() } else { T::zero() }),
            Expr::Time => Expr::Num(if var == Var::Time { T::one() } else { T::zero() }),
            Expr::Neg(a) => Expr::Neg(d(a)),
            Expr::Add(a, bb) => Expr::Add(d(a), d(bb)),
            Expr::Sub(a, bb) => Expr::Sub(d(a), d(bb)),
            Expr::Mul(a, bb) => Expr::Add(
                b(Expr::Mul(d(a), bb.clone())),
                b(Expr::Mul(a.clone(), d(bb))),
            ),
            // denominators are constant by construction
            Expr::Div(a, bb) => Expr::Div(d(a), bb.clone()),
            Expr::Pow(a, n) => {
                if *n == 0 {
                    Expr::Num(T::zero())
                } else {
                    Expr::Mul(
                        b(Expr::Mul(
                            b(Expr::Num(T::from_usize_(*n as usize))),
                            b(Expr::Pow(a.clone(), n - 1)),
                        )),
                        d(a),
                    )
                }
            }
            Expr::Sin(a) => Expr::Mul(b(Expr::Cos(a.clone())), d(a)),
            Expr::Cos(a) => Expr::Neg(b(Expr::Mul(b(Expr::Sin(a.clone())), d(a)))),
            Expr::Exp(a) => Expr::Mul(b(Expr::Exp(a.clone())), d(a)),
            Expr::Bump2 { arg, lo, hi, order } => Expr::Mul(
                b(Expr::Bump2 {
                    arg: arg.clone(),
                    lo: *lo,
                    hi: *hi,
                    order: order + 1,
                }),
                d(arg),
            ),
        }
    }

    /// Light constant folding and identity pruning to keep derivative ASTs
    /// small.
    pub fn simplify(self) -> Expr<T> {
        use Expr::*;
        let is_zero = |e: &Expr<T>| matches!(e, Num(v) if *v == T::zero());
        let is_one = |e: &Expr<T>| matches!(e, Num(v) if *v == T::one());
        match self {
            Neg(a) => {
                let a = a.simplify();
                match a {
                    Num(v) => Num(-v),
                    Neg(inner) => *inner,
                    a => Neg(Box::new(a)),
                }
            }
            Add(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                if is_zero(&a) {
                    b
                } else if is_zero(&b) {
                    a
                } else if let (Num(x), Num(y)) = (&a, &b) {
                    Num(*x + *y)
                } else {
                    Add(Box::new(a), Box::new(b))
                }
            }
            Sub(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                if is_zero(&b) {
                    a
                } else if let (Num(x), Num(y)) = (&a, &b) {
                    Num(*x - *y)
                } else {
                    Sub(Box::new(a), Box::new(b))
                }
            }
            Mul(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                if is_zero(&a) || is_zero(&b) {
                    Num(T::zero())
                } else if is_one(&a) {
                    b
                } else if is_one(&b) {
                    a
                } else if let (Num(x), Num(y)) = (&a, &b) {
                    Num(*x * *y)
                } else {
                    Mul(Box::new(a), Box::new(b))
                }
            }
            Div(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                if is_zero(&a) {
                    Num(T::zero())
                } else if is_one(&b) {
                    a
                } else if let (Num(x), Num(y)) = (&a, &b) {
                    Num(*x / *y)
                } else {
                    Div(Box::new(a), Box::new(b))
                }
            }
            Pow(a, n) => {
                let a = a.simplify();
                match (a, n) {
                    (_, 0) => Num(T::one()),
                    (a, 1) => a,
                    (Num(v), n) => Num(v.powi(n as i32)),
                    (a, n) => Pow(Box::new(a), n),
                }
            }
            Sin(a) => Sin(Box::new(a.simplify())),
            Cos(a) => Cos(Box::new(a.simplify())),
            Exp(a) => Exp(Box::new(a.simplify())),
            Bump2 { arg, lo, hi, order } => Bump2 {
                arg: Box::new(arg.simplify()),
                lo,
                hi,
                order,
            },
            other => other,
        }
    }

    /// Substitute a numeric value for the family parameter `s`.
    pub fn substitute_param(&self, value: T) -> Expr<T> {
        use Expr::*;
        let s = |e: &Expr<T>| Box::new(e.substitute_param(value));
        match self {
            Param => Num(value),
            Neg(a) => Neg(s(a)),
            Add(a, b) => Add(s(a), s(b)),
            Sub(a, b) => Sub(s(a), s(b)),
            Mul(a, b) => Mul(s(a), s(b)),
            Div(a, b) => Div(s(a), s(b)),
            Pow(a, n) => Pow(s(a), *n),
            Sin(a) => Sin(s(a)),
            Cos(a) => Cos(s(a)),
            Exp(a) => Exp(s(a)),
            Bump2 { arg, lo, hi, order } => Bump2 {
                arg: s(arg),
                lo: *lo,
                hi: *hi,
                order: *order,
            },
            other => other.clone(),
        }
    }

    pub fn contains_param(&self) -> bool {
        use Expr::*;
        match self {
            Param => true,
            Neg(a) | Pow(a, _) | Sin(a) | Cos(a) | Exp(a) | Bump2 { arg: a, .. } => {
                a.contains_param()
            }
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                a.contains_param() || b.contains_param()
            }
            _ => false,
        }
    }
}

/// The C^2 cutoff profile and its derivatives with respect to the raw
/// argument. `order = 0`: 1 for `e <= lo`, 0 for `e >= hi`, quintic
/// smoothstep in between.
fn bump_profile<T: Real>(e: T, lo: T, hi: T, order: u8) -> T {
    let width = hi - lo;
    let u = (e - lo) / width;
    if u <= T::zero() || u >= T::one() {
        return if order == 0 && u <= T::zero() {
            T::one()
        } else {
            T::zero()
        };
    }
    let profile_u = match order {
        0 => {
            T::one()
                - (T::lit(10.0) * u.powi(3) - T::lit(15.0) * u.powi(4) + T::lit(6.0) * u.powi(5))
        }
        1 => -(T::lit(30.0) * u.powi(2) - T::lit(60.0) * u.powi(3) + T::lit(30.0) * u.powi(4)),
        2 => -(T::lit(60.0) * u - T::lit(180.0) * u.powi(2) + T::lit(120.0) * u.powi(3)),
        3 => -(T::lit(60.0) - T::lit(360.0) * u + T::lit(360.0) * u.powi(2)),
        4 => T::lit(360.0) - T::lit(720.0) * u,
        5 => -T::lit(720.0),
        _ => T::zero(),
    };
    profile_u / width.powi(order as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum NormalizationTag {
    Unchecked,
    MeanZero,
    CompactSupport,
}

impl std::fmt::Display for NormalizationTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormalizationTag::Unchecked => write!(f, "unchecked"),
            NormalizationTag::MeanZero => write!(f, "mean_zero"),
            NormalizationTag::CompactSupport => write!(f, "compact_support"),
        }
    }
}

/// A time-periodic Hamiltonian bound to a manifold, with precomputed
/// symbolic partials.
#[derive(Debug, Clone)]
pub struct Hamiltonian<T> {
    pub expr: Expr<T>,
    pub manifold: Manifold<T>,
    pub d_coord1: Expr<T>,
    pub d_coord2: Expr<T>,
    pub d_t: Expr<T>,
    pub normalization: NormalizationTag,
}

impl<T: Real> Hamiltonian<T> {
    /// Build from a bound expression; computes symbolic partials.
    pub fn from_expr(expr: Expr<T>, manifold: Manifold<T>) -> Self {
        let expr = expr.simplify();
        let d_coord1 = expr.differentiate(Var::Coord1).simplify();
        let d_coord2 = expr.differentiate(Var::Coord2).simplify();
        let d_t = expr.differentiate(Var::Time).simplify();
        Self {
            expr,
            manifold,
            d_coord1,
            d_coord2,
            d_t,
            normalization: NormalizationTag::Unchecked,
        }
    }

    pub fn zero(manifold: Manifold<T>) -> Self {
        let mut h = Self::from_expr(Expr::Num(T::zero()), manifold);
        h.normalization = if manifold.is_closed() {
            NormalizationTag::MeanZero
        } else {
            NormalizationTag::CompactSupport
        };
        h
    }

    pub fn tagged(mut self, tag: NormalizationTag) -> Self {
        self.normalization = tag;
        self
    }

    fn eval_expr(&self, expr: &Expr<T>, p: Point<T>, t: T) -> T {
        let t = fract_mod1(t);
        let at_pole = self.manifold.kind == ManifoldKind::Sphere2
            && p.q2.abs() >= T::one() - T::lit(1e-14);
        if at_pole {
            // theta-averaged limit over probe angles
            let mut acc = T::zero();
            let nf = T::from_usize_(POLE_PROBES);
            for k in 0..POLE_PROBES {
                let theta = T::two() * T::PI() * T::from_usize_(k) / nf;
                acc += expr.eval(&Env {
                    c1: theta,
                    c2: p.q2.signum(),
                    t,
                    param: T::zero(),
                });
            }
            acc / nf
        } else {
            expr.eval(&Env {
                c1: p.q1,
                c2: p.q2,
                t,
                param: T::zero(),
            })
        }
    }

    pub fn eval(&self, p: Point<T>, t: T) -> T {
        self.eval_expr(&self.expr, p, t)
    }

    /// Spatial partials `(dH/dq1, dH/dq2)`.
    pub fn partials(&self, p: Point<T>, t: T) -> (T, T) {
        (
            self.eval_expr(&self.d_coord1, p, t),
            self.eval_expr(&self.d_coord2, p, t),
        )
    }

    pub fn eval_dt(&self, p: Point<T>, t: T) -> T {
        self.eval_expr(&self.d_t, p, t)
    }

    /// Hamiltonian vector field in the Darboux chart: with `ω = dq1 ∧ dq2`
    /// and the convention `dH = ω(X_H, ·)`, the field is
    /// `X_H = (∂H/∂q2, -∂H/∂q1)`.
    pub fn vector_field(&self, p: Point<T>, t: T) -> (T, T) {
        let (d1, d2) = self.partials(p, t);
        (d2, -d1)
    }

    /// Quadrature check that every time slice has zero mean
    /// (within `1e-8 * total_area`, probed at 9 times in [0, 1]).
    pub fn has_zero_mean(&self, rule: &QuadratureRule<T>) -> Result<bool> {
        if !self.manifold.is_closed() {
            return Err(crate::error::Error::OpenManifold);
        }
        let tol = T::lit(1e-8) * self.manifold.total_area;
        for i in 0..9 {
            let t = T::from_usize_(i) / T::lit(9.0);
            let m = rule.integrate_unchecked(|p| self.eval(p, t));
            if m.abs() >= tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Node-set compact-support check on the plane window.
    pub fn has_compact_support(&self, rule: &QuadratureRule<T>) -> bool {
        if self.manifold.is_closed() {
            return false;
        }
        for i in 0..9 {
            let t = T::from_usize_(i) / T::lit(9.0);
            if !rule.vanishes_on_boundary_ring(|p| self.eval(p, t)) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Manifold;

    const PI: f64 = std::f64::consts::PI;

    fn sphere_pt(theta: f64, z: f64) -> Point<f64> {
        Manifold::<f64>::sphere().chart_wrap((theta, z)).unwrap()
    }

    #[test]
    fn moment_map_partials() {
        let m = Manifold::<f64>::sphere();
        let h = parse("2*pi*z", &m).unwrap();
        let north = sphere_pt(0.0, 1.0);
        assert!((h.eval(north, 0.5) - 2.0 * PI).abs() < 1e-14);
        let (d1, d2) = h.partials(sphere_pt(1.0, 0.25), 0.0);
        assert!(d1.abs() < 1e-14);
        assert!((d2 - 2.0 * PI).abs() < 1e-14);
        let (v1, v2) = h.vector_field(sphere_pt(0.0, 0.5), 0.0);
        assert!((v1 - 2.0 * PI).abs() < 1e-14);
        assert!(v2.abs() < 1e-14);
    }

    #[test]
    fn product_rule_time_partial() {
        let m = Manifold::<f64>::torus();
        let h = parse("sin(2*pi*t)*sin(2*pi*x)", &m).unwrap();
        let p = Point::new(0.3, 0.1);
        for &t in &[0.0, 0.17, 0.5, 0.93] {
            let exact = 2.0 * PI * (2.0 * PI * t).cos() * (2.0 * PI * p.q1).sin();
            assert!((h.eval_dt(p, t) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_oscillator_field() {
        let m = Manifold::<f64>::plane_default();
        let h = parse("(1/2)*(x^2+y^2)", &m).unwrap();
        let (v1, v2) = h.vector_field(Point::new(1.0, 0.0), 0.0);
        assert!((v1 - 0.0).abs() < 1e-14);
        assert!((v2 + 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_hamiltonian_zero_field() {
        let m = Manifold::<f64>::torus();
        let h = parse("3.7", &m).unwrap();
        for &(a, b) in &[(0.1, 0.9), (0.5, 0.5)] {
            let (v1, v2) = h.vector_field(Point::new(a, b), 0.3);
            assert_eq!(v1, 0.0);
            assert_eq!(v2, 0.0);
        }
    }

    #[test]
    fn time_periodicity_of_eval() {
        let m = Manifold::<f64>::torus();
        let h = parse("sin(2*pi*t)*cos(2*pi*y) + x", &m).unwrap();
        let p = Point::new(0.4, 0.8);
        assert!((h.eval(p, 1.0) - h.eval(p, 0.0)).abs() < 1e-14);
    }

    #[test]
    fn symbolic_partials_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let cases = [
            ("sin(2*pi*x)*cos(2*pi*y) + 0.3*x^3", Manifold::<f64>::torus()),
            ("exp(0.2*z)*sin(theta)", Manifold::<f64>::sphere()),
            (
                "bump2(x^2+y^2; 1, 4)*sin(2*pi*t)",
                Manifold::<f64>::plane_default(),
            ),
        ];
        let step = 1e-5;
        for (src, m) in cases {
            let h = parse(src, &m).unwrap();
            for _ in 0..100 {
                // keep samples away from chart borders so the plain central
                // difference below stays inside the chart
                let a = rng.gen_range(0.1..0.9);
                let b = rng.gen_range(-0.9..0.9);
                let t = rng.gen_range(0.0..1.0);
                let p = Point::new(a, b);
                let (d1, d2) = h.partials(p, t);
                let fd1 =
                    (h.eval(Point::new(a + step, b), t) - h.eval(Point::new(a - step, b), t))
                        / (2.0 * step);
                let fd2 =
                    (h.eval(Point::new(a, b + step), t) - h.eval(Point::new(a, b - step), t))
                        / (2.0 * step);
                assert!((d1 - fd1).abs() < 1e-6, "{src}: d1 {d1} vs {fd1}");
                assert!((d2 - fd2).abs() < 1e-6, "{src}: d2 {d2} vs {fd2}");
                let fdt = (h.eval(p, t + step) - h.eval(p, t - step)) / (2.0 * step);
                assert!((h.eval_dt(p, t) - fdt).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn vector_field_linearity() {
        let m = Manifold::<f64>::torus();
        let f = parse("sin(2*pi*x)", &m).unwrap();
        let g = parse("cos(2*pi*y)", &m).unwrap();
        let combo = parse("2*sin(2*pi*x) - 3*cos(2*pi*y)", &m).unwrap();
        for i in 0..10 {
            let p = Point::new(0.05 + 0.09 * i as f64, 0.93 - 0.08 * i as f64);
            let (f1, f2) = f.vector_field(p, 0.0);
            let (g1, g2) = g.vector_field(p, 0.0);
            let (c1, c2) = combo.vector_field(p, 0.0);
            assert!((c1 - (2.0 * f1 - 3.0 * g1)).abs() < 1e-12);
            assert!((c2 - (2.0 * f2 - 3.0 * g2)).abs() < 1e-12);
        }
    }

    #[test]
    fn bump_profile_smoothness() {
        // value 1 inside, 0 outside, C^2 across the joins
        assert_eq!(bump_profile(0.5f64, 1.0, 4.0, 0), 1.0);
        assert_eq!(bump_profile(5.0f64, 1.0, 4.0, 0), 0.0);
        let h = 1e-4;
        for &e in &[1.0f64, 4.0] {
            for order in 0..=2u8 {
                let below = bump_profile(e - h, 1.0, 4.0, order);
                let above = bump_profile(e + h, 1.0, 4.0, order);
                assert!((below - above).abs() < 1e-2, "order {order} join at {e}");
            }
        }
        // derivative consistency against finite differences
        for i in 0..50 {
            let e = 1.0 + 3.0 * (i as f64 + 0.5) / 50.0;
            let fd = (bump_profile(e + h, 1.0, 4.0, 0) - bump_profile(e - h, 1.0, 4.0, 0))
                / (2.0 * h);
            assert!((fd - bump_profile(e, 1.0, 4.0, 1)).abs() < 1e-6);
        }
    }

    #[test]
    fn pole_evaluation_is_averaged() {
        let m = Manifold::<f64>::sphere();
        let h = parse("sin(theta)*(1-z^2)", &m).unwrap();
        let north = sphere_pt(0.0, 1.0);
        assert!(h.eval(north, 0.0).abs() < 1e-14);
    }
}
