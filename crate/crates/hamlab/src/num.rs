//! Scalar abstraction and the small numerical kernels shared across modules:
//! high-order cumulative integration, periodic splines, spectral
//! differentiation of periodic samples, and Gauss-Legendre nodes.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};

/// Floating scalar the library is generic over. `f64` is the working type;
/// `f32` compiles but the default tolerances assume double precision.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssignOps + Debug + Display + Send + Sync + 'static
{
    /// Convert an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("literal not representable")
    }

    #[inline]
    fn to64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_(v: usize) -> Self {
        Self::lit(v as f64)
    }

    #[inline]
    fn two() -> Self {
        Self::lit(2.0)
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + NumAssignOps + Debug + Display + Send + Sync + 'static
{
}

/// Reduce `t` to `[0, 1)`.
pub fn fract_mod1<T: Real>(t: T) -> T {
    let f = t - t.floor();
    if f >= T::one() {
        T::zero()
    } else {
        f
    }
}

/// Reduce `x` to `[0, p)`.
pub fn wrap_to<T: Real>(x: T, p: T) -> T {
    let f = x - (x / p).floor() * p;
    if f >= p || f < T::zero() {
        T::zero()
    } else {
        f
    }
}

/// Minimal signed representative of `x` modulo `p`, in `[-p/2, p/2)`.
pub fn wrap_signed<T: Real>(x: T, p: T) -> T {
    let mut f = wrap_to(x, p);
    if f >= p * T::half() {
        f -= p;
    }
    f
}

/// Integral over one full period of uniform periodic samples
/// `f(i * period / n)`, `i = 0..n`. Trapezoid on a full period of a smooth
/// periodic function is spectrally accurate.
pub fn periodic_integral<T: Real>(samples: &[T], period: T) -> T {
    let n = samples.len();
    let mut s = T::zero();
    for &v in samples {
        s += v;
    }
    s * period / T::from_usize_(n)
}

/// Cumulative integral of uniform samples with spacing `h`, fourth order.
///
/// Each interval is integrated with the cubic through its four nearest
/// samples; the two boundary intervals use one-sided stencils. Output has
/// the same length as the input, with `out[0] = 0`.
pub fn cumulative_integral<T: Real>(samples: &[T], h: T) -> Vec<T> {
    let n = samples.len();
    let mut out = vec![T::zero(); n];
    if n < 2 {
        return out;
    }
    if n < 4 {
        // fall back to trapezoid for very short inputs
        for i in 1..n {
            out[i] = out[i - 1] + (samples[i - 1] + samples[i]) * h * T::half();
        }
        return out;
    }
    let c24 = T::lit(24.0);
    for i in 0..n - 1 {
        let seg = if i == 0 {
            (T::lit(9.0) * samples[0] + T::lit(19.0) * samples[1] - T::lit(5.0) * samples[2]
                + samples[3])
                * h
                / c24
        } else if i == n - 2 {
            (T::lit(9.0) * samples[n - 1] + T::lit(19.0) * samples[n - 2]
                - T::lit(5.0) * samples[n - 3]
                + samples[n - 4])
                * h
                / c24
        } else {
            (-samples[i - 1] + T::lit(13.0) * samples[i] + T::lit(13.0) * samples[i + 1]
                - samples[i + 2])
                * h
                / c24
        };
        out[i + 1] = out[i] + seg;
    }
    out
}

/// Periodic cubic spline on the uniform grid `t_i = i/n`, `i = 0..n`,
/// interpolating samples of a 1-periodic function.
#[derive(Debug, Clone)]
pub struct PeriodicSpline<T> {
    values: Vec<T>,
    second: Vec<T>,
}

impl<T: Real> PeriodicSpline<T> {
    pub fn new(values: Vec<T>) -> Self {
        let n = values.len();
        assert!(n >= 3, "periodic spline needs at least 3 samples");
        let h = T::one() / T::from_usize_(n);
        // cyclic tridiagonal system for second derivatives:
        //   m[i-1] + 4 m[i] + m[i+1] = 6 (f[i-1] - 2 f[i] + f[i+1]) / h^2
        let mut rhs = vec![T::zero(); n];
        let six = T::lit(6.0);
        for i in 0..n {
            let im = (i + n - 1) % n;
            let ip = (i + 1) % n;
            rhs[i] = six * (values[im] - T::two() * values[i] + values[ip]) / (h * h);
        }
        let second = solve_cyclic_tridiag(T::one(), T::lit(4.0), T::one(), &rhs);
        Self { values, second }
    }

    pub fn eval(&self, t: T) -> T {
        let n = self.values.len();
        let nf = T::from_usize_(n);
        let s = fract_mod1(t) * nf;
        let i = s.floor().to64() as usize % n;
        let ip = (i + 1) % n;
        let h = T::one() / nf;
        let a = T::from_usize_(i + 1) - s; // (t_{i+1} - t)/h
        let b = s - T::from_usize_(i); // (t - t_i)/h
        let six = T::lit(6.0);
        a * self.values[i]
            + b * self.values[ip]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[ip]) * h * h / six
    }

    pub fn deriv(&self, t: T) -> T {
        let n = self.values.len();
        let nf = T::from_usize_(n);
        let s = fract_mod1(t) * nf;
        let i = s.floor().to64() as usize % n;
        let ip = (i + 1) % n;
        let h = T::one() / nf;
        let a = T::from_usize_(i + 1) - s;
        let b = s - T::from_usize_(i);
        let three = T::lit(3.0);
        let six = T::lit(6.0);
        (self.values[ip] - self.values[i]) / h
            + ((three * b * b - T::one()) * self.second[ip]
                - (three * a * a - T::one()) * self.second[i])
                * h
                / six
    }
}

/// Solve a cyclic tridiagonal system with constant bands (lo, diag, hi)
/// via the Sherman-Morrison correction.
fn solve_cyclic_tridiag<T: Real>(lo: T, diag: T, hi: T, rhs: &[T]) -> Vec<T> {
    let n = rhs.len();
    assert!(n >= 3);
    let gamma = -diag;
    // modified diagonal
    let mut dd = vec![diag; n];
    dd[0] = diag - gamma;
    dd[n - 1] = diag - lo * hi / gamma;
    let y = solve_tridiag_const(lo, &dd, hi, rhs);
    let mut u = vec![T::zero(); n];
    u[0] = gamma;
    u[n - 1] = hi;
    let z = solve_tridiag_const(lo, &dd, hi, &u);
    let fact = (y[0] + lo * y[n - 1] / gamma) / (T::one() + z[0] + lo * z[n - 1] / gamma);
    (0..n).map(|i| y[i] - fact * z[i]).collect()
}

fn solve_tridiag_const<T: Real>(lo: T, diag: &[T], hi: T, rhs: &[T]) -> Vec<T> {
    let n = rhs.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[0] = hi / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lo * c[i - 1];
        c[i] = hi / m;
        d[i] = (rhs[i] - lo * d[i - 1]) / m;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Derivative of a 1-periodic function from uniform samples `f(i/n)` by
/// direct Fourier resummation (O(n^2), exact for trigonometric polynomials
/// below the Nyquist mode).
pub fn spectral_derivative<T: Real>(samples: &[T]) -> Vec<T> {
    let n = samples.len();
    let nf = T::from_usize_(n);
    let two_pi = T::two() * T::PI();
    let kmax = n / 2;
    // Fourier coefficients a_k (cos), b_k (sin)
    let mut a = vec![T::zero(); kmax + 1];
    let mut b = vec![T::zero(); kmax + 1];
    for k in 1..=kmax {
        let mut ak = T::zero();
        let mut bk = T::zero();
        for (j, &f) in samples.iter().enumerate() {
            let ang = two_pi * T::from_usize_(k) * T::from_usize_(j) / nf;
            ak += f * ang.cos();
            bk += f * ang.sin();
        }
        a[k] = ak * T::two() / nf;
        b[k] = bk * T::two() / nf;
    }
    let nyquist = n % 2 == 0;
    let mut out = vec![T::zero(); n];
    for (j, o) in out.iter_mut().enumerate() {
        let mut d = T::zero();
        for k in 1..=kmax {
            if nyquist && k == kmax {
                // the sawtooth Nyquist mode carries no usable derivative
                continue;
            }
            let kk = T::from_usize_(k);
            let ang = two_pi * kk * T::from_usize_(j) / nf;
            d += two_pi * kk * (b[k] * ang.cos() - a[k] * ang.sin());
        }
        *o = d;
    }
    out
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> Vec<(T, T)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    let nf = T::from_usize_(n);
    for i in 0..n {
        // Newton from the Chebyshev-like initial guess
        let mut x = T::lit((std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos());
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < T::lit(1e-15) {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        let w = T::two() / ((T::one() - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|l, r| l.0.partial_cmp(&r.0).unwrap());
    let _ = nf;
    out
}

fn legendre_with_deriv<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    if n == 0 {
        return (p0, T::zero());
    }
    for k in 2..=n {
        let kf = T::from_usize_(k);
        let p2 = ((T::two() * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = T::from_usize_(n) * (x * p1 - p0) / (x * x - T::one());
    (p1, dp)
}

/// Solve the 2x2 system `[[a, b], [c, d]] v = r`. Returns `None` when the
/// determinant is numerically zero relative to the matrix scale.
pub fn solve2<T: Real>(a: T, b: T, c: T, d: T, r1: T, r2: T) -> Option<(T, T)> {
    let det = a * d - b * c;
    let scale = a.abs() + b.abs() + c.abs() + d.abs();
    if det.abs() <= T::lit(1e-14) * scale * scale + T::lit(1e-300) {
        return None;
    }
    Some(((d * r1 - b * r2) / det, (a * r2 - c * r1) / det))
}
