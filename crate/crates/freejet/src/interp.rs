//! Piecewise-cubic interpolation: shape-preserving Hermite (PCHIP) for
//! tabulated profiles and a uniform-grid Hermite for ODE trajectories.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Monotone (Fritsch-Carlson) piecewise cubic Hermite interpolant.
///
/// Preserves monotonicity of the data on each interval, is C1 globally, and
/// carries an exact antiderivative (the integrand is piecewise cubic).
#[derive(Debug, Clone)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
    /// cumulative integral of the interpolant from xs[0] to each knot
    cum: Vec<f64>,
}

impl Pchip {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::config("pchip: need at least two knots and matching lengths"));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::config("pchip: abscissae must be strictly increasing and finite"));
            }
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let sec: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();

        let mut ds = alloc::vec![0.0; n];
        for i in 1..n - 1 {
            let (s0, s1) = (sec[i - 1], sec[i]);
            if s0 * s1 > 0.0 {
                // Weighted harmonic mean keeps the interpolant monotone.
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                ds[i] = (w1 + w2) / (w1 / s0 + w2 / s1);
            }
        }
        ds[0] = endpoint_slope(h[0], if n > 2 { h[1] } else { h[0] }, sec[0], if n > 2 { sec[1] } else { sec[0] });
        ds[n - 1] = endpoint_slope(
            h[n - 2],
            if n > 2 { h[n - 3] } else { h[n - 2] },
            sec[n - 2],
            if n > 2 { sec[n - 3] } else { sec[n - 2] },
        );

        let mut cum = alloc::vec![0.0; n];
        for i in 0..n - 1 {
            // Exact integral of the cubic over one interval.
            let seg = h[i] * (0.5 * (ys[i] + ys[i + 1]) + h[i] * (ds[i] - ds[i + 1]) / 12.0);
            cum[i + 1] = cum[i] + seg;
        }
        Ok(Self { xs: xs.to_vec(), ys: ys.to_vec(), ds, cum })
    }

    fn locate(&self, x: f64) -> usize {
        // Rightmost interval whose left knot is <= x, clamped to valid range.
        match self.xs.binary_search_by(|t| t.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (h00, h10, h01, h11) = hermite_basis(s);
        self.ys[i] * h00 + h * self.ds[i] * h10 + self.ys[i + 1] * h01 + h * self.ds[i + 1] * h11
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let d00 = (6.0 * s * s - 6.0 * s) / h;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d01 = (-6.0 * s * s + 6.0 * s) / h;
        let d11 = 3.0 * s * s - 2.0 * s;
        self.ys[i] * d00 + self.ds[i] * d10 + self.ys[i + 1] * d01 + self.ds[i + 1] * d11
    }

    /// Second derivative; piecewise linear and generally discontinuous at knots.
    pub fn deriv2(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let d00 = (12.0 * s - 6.0) / (h * h);
        let d10 = (6.0 * s - 4.0) / h;
        let d01 = (-12.0 * s + 6.0) / (h * h);
        let d11 = (6.0 * s - 2.0) / h;
        self.ys[i] * d00 + self.ds[i] * d10 + self.ys[i + 1] * d01 + self.ds[i + 1] * d11
    }

    /// Exact integral of the interpolant from the first knot to `x`.
    pub fn integral_from_start(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let s = ((x - self.xs[i]) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let i00 = 0.5 * s4 - s3 + s;
        let i10 = 0.25 * s4 - 2.0 * s3 / 3.0 + 0.5 * s2;
        let i01 = -0.5 * s4 + s3;
        let i11 = 0.25 * s4 - s3 / 3.0;
        self.cum[i] + h * (self.ys[i] * i00 + h * self.ds[i] * i10 + self.ys[i + 1] * i01 + h * self.ds[i + 1] * i11)
    }
}

fn endpoint_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    // Standard PCHIP one-sided three-point estimate with shape clamps.
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 < 0.0 && crate::fmath::abs(d) > 3.0 * crate::fmath::abs(s0) {
        3.0 * s0
    } else {
        d
    }
}

#[inline]
fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2)
}

/// Cubic Hermite interpolant on a uniform grid, built from stored values and
/// derivatives (used for dense ODE trajectories).
#[derive(Debug, Clone)]
pub struct UniformHermite {
    x0: f64,
    h: f64,
    vals: Vec<f64>,
    ders: Vec<f64>,
}

impl UniformHermite {
    pub fn new(x0: f64, h: f64, vals: Vec<f64>, ders: Vec<f64>) -> Result<Self> {
        if vals.len() < 2 || vals.len() != ders.len() || !(h > 0.0) {
            return Err(Error::config("uniform hermite: need >= 2 samples, matching derivs, positive step"));
        }
        Ok(Self { x0, h, vals, ders })
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let t = (x - self.x0) / self.h;
        let i = (t as isize).clamp(0, self.vals.len() as isize - 2) as usize;
        (i, t - i as f64)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, s) = self.locate(x);
        let (h00, h10, h01, h11) = hermite_basis(s);
        self.vals[i] * h00 + self.h * self.ders[i] * h10 + self.vals[i + 1] * h01 + self.h * self.ders[i + 1] * h11
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let (i, s) = self.locate(x);
        let d00 = (6.0 * s * s - 6.0 * s) / self.h;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d01 = (-6.0 * s * s + 6.0 * s) / self.h;
        let d11 = 3.0 * s * s - 2.0 * s;
        self.vals[i] * d00 + self.ders[i] * d10 + self.vals[i + 1] * d01 + self.ders[i + 1] * d11
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn reproduces_parabola_values_and_integral() {
        let xs: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 1.0 + x * x).collect();
        let p = Pchip::new(&xs, &ys).unwrap();
        for &x in &[0.0, 0.05, 0.314, 1.0, 1.77, 2.0] {
            assert!((p.eval(x) - (1.0 + x * x)).abs() < 2e-3, "value at {x}");
            assert!((p.deriv(x) - 2.0 * x).abs() < 3e-2, "deriv at {x}");
            let exact = x + x * x * x / 3.0;
            assert!((p.integral_from_start(x) - exact).abs() < 2e-4, "integral to {x}");
        }
    }

    #[test]
    fn monotone_data_gives_monotone_interpolant() {
        // Step-like data that classical splines overshoot.
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [0.0, 0.0, 0.1, 4.9, 5.0, 5.0];
        let p = Pchip::new(&xs, &ys).unwrap();
        let mut prev = p.eval(0.0);
        for k in 1..=500 {
            let x = 5.0 * k as f64 / 500.0;
            let v = p.eval(x);
            assert!(v >= prev - 1e-12, "overshoot at {x}");
            assert!((0.0..=5.0 + 1e-12).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(Pchip::new(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(Pchip::new(&[0.0], &[1.0]).is_err());
        assert!(Pchip::new(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn uniform_hermite_reproduces_cubic_exactly() {
        let f = |x: f64| x * x * x - x + 2.0;
        let fp = |x: f64| 3.0 * x * x - 1.0;
        let n = 11;
        let h = 0.25;
        let vals: Vec<f64> = (0..n).map(|i| f(h * i as f64)).collect();
        let ders: Vec<f64> = (0..n).map(|i| fp(h * i as f64)).collect();
        let u = UniformHermite::new(0.0, h, vals, ders).unwrap();
        for k in 0..=100 {
            let x = 2.5 * k as f64 / 100.0;
            assert!((u.eval(x) - f(x)).abs() < 1e-12);
            assert!((u.deriv(x) - fp(x)).abs() < 1e-11);
        }
    }
}
