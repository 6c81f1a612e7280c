//! Truncated univariate Taylor series.
//!
//! A [`Jet`] holds the Taylor coefficients `c[k] = f^(k)(0) / k!` of a
//! function of one variable. Arithmetic on jets propagates derivatives
//! exactly, which is how the built-in initial-data fields report directional
//! derivatives along a line without finite differences.

use std::ops::{Add, Mul, Neg, Sub};

/// Number of stored coefficients (derivatives up to order `JET_LEN - 1`).
pub const JET_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet(pub [f64; JET_LEN]);

impl Jet {
    pub const ZERO: Jet = Jet([0.0; JET_LEN]);

    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; JET_LEN];
        c[0] = v;
        Jet(c)
    }

    /// The affine map `s -> v + slope * s`.
    pub fn affine(v: f64, slope: f64) -> Self {
        let mut c = [0.0; JET_LEN];
        c[0] = v;
        c[1] = slope;
        Jet(c)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// The k-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for j in 2..=k {
            fact *= j as f64;
        }
        self.0[k] * fact
    }

    pub fn scale(self, s: f64) -> Self {
        Jet(self.0.map(|c| c * s))
    }

    pub fn exp(self) -> Self {
        let a = &self.0;
        let mut e = [0.0; JET_LEN];
        e[0] = a[0].exp();
        for k in 1..JET_LEN {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * a[j] * e[k - j];
            }
            e[k] = acc / k as f64;
        }
        Jet(e)
    }

    pub fn recip(self) -> Self {
        let a = &self.0;
        let mut r = [0.0; JET_LEN];
        r[0] = 1.0 / a[0];
        for k in 1..JET_LEN {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += a[j] * r[k - j];
            }
            r[k] = -acc * r[0];
        }
        Jet(r)
    }

    /// Requires a positive constant term.
    pub fn sqrt(self) -> Self {
        let a = &self.0;
        let mut r = [0.0; JET_LEN];
        r[0] = a[0].sqrt();
        for k in 1..JET_LEN {
            let mut acc = a[k];
            for j in 1..k {
                acc -= r[j] * r[k - j];
            }
            r[k] = acc / (2.0 * r[0]);
        }
        Jet(r)
    }

    pub fn powi(self, n: u32) -> Self {
        let mut out = Jet::constant(1.0);
        for _ in 0..n {
            out = out * self;
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut c = self.0;
        for (x, y) in c.iter_mut().zip(rhs.0) {
            *x += y;
        }
        Jet(c)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet(self.0.map(|c| -c))
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut c = [0.0; JET_LEN];
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in rhs.0.iter().enumerate().take(JET_LEN - i) {
                c[i + j] += a * b;
            }
        }
        Jet(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_of_affine_matches_series() {
        // exp(2 + 3s): k-th derivative is 3^k e^2
        let j = Jet::affine(2.0, 3.0).exp();
        for k in 0..JET_LEN {
            assert_relative_eq!(j.derivative(k), 3f64.powi(k as i32) * 2f64.exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn recip_matches_closed_form() {
        // 1/(1 - s) = sum s^k
        let j = Jet::affine(1.0, -1.0).recip();
        for k in 0..JET_LEN {
            assert_relative_eq!(j.0[k], 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let a = Jet([2.0, -0.5, 0.3, 1.1, -0.7]);
        let r = a.sqrt();
        let back = r * r;
        for k in 0..JET_LEN {
            assert_relative_eq!(back.0[k], a.0[k], max_relative = 1e-14, epsilon = 1e-15);
        }
    }

    #[test]
    fn composite_bump_derivatives_match_finite_differences() {
        let f = |s: f64| (-1.0 / (1.0 - (0.3 + s) * (0.3 + s))).exp();
        let q = Jet::affine(0.3, 1.0).powi(2);
        let j = (Jet::constant(1.0) - q).recip().scale(-1.0).exp();
        let h = 1e-3;
        let d1 = (f(h) - f(-h)) / (2.0 * h);
        let d2 = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        let d3 = (f(2.0 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2.0 * h)) / (2.0 * h * h * h);
        assert_relative_eq!(j.value(), f(0.0), max_relative = 1e-14);
        assert_relative_eq!(j.derivative(1), d1, max_relative = 1e-5);
        assert_relative_eq!(j.derivative(2), d2, max_relative = 1e-5);
        assert_relative_eq!(j.derivative(3), d3, max_relative = 1e-4);
    }
}
