//! Second-order jets: a value carried together with its first and second
//! derivative with respect to a single scalar input.

use std::ops::{Add, Mul, Neg, Sub};

/// `(u, u', u'')` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Self::new(v, 0.0, 0.0)
    }

    /// The jet of the independent variable itself.
    pub const fn variable(x: f64) -> Self {
        Self::new(x, 1.0, 0.0)
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v`.
    #[inline]
    pub fn compose(self, g: f64, dg: f64, d2g: f64) -> Self {
        Self {
            v: g,
            d1: dg * self.d1,
            d2: d2g * self.d1 * self.d1 + dg * self.d2,
        }
    }

    #[inline]
    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        let s = 1.0 - t * t;
        self.compose(t, s, -2.0 * t * s)
    }

    #[inline]
    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose(s, c, -s)
    }

    #[inline]
    pub fn scale(self, k: f64) -> Self {
        Self::new(k * self.v, k * self.d1, k * self.d2)
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    #[inline]
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

/// Leibniz rule to second order.
impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, c: f64) -> Jet2 {
        Jet2::new(self.v + c, self.d1, self.d2)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, k: f64) -> Jet2 {
        self.scale(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn variable_jet() {
        let x = Jet2::variable(0.7);
        assert_eq!(x, Jet2::new(0.7, 1.0, 0.0));
    }

    #[test]
    fn sin_of_scaled_variable() {
        // d²/dx² sin(2x) = -4 sin(2x)
        let x = 0.3;
        let j = (Jet2::variable(x) * 2.0).sin();
        assert_relative_eq!(j.v, (2.0 * x).sin());
        assert_relative_eq!(j.d1, 2.0 * (2.0 * x).cos());
        assert_relative_eq!(j.d2, -4.0 * (2.0 * x).sin(), epsilon = 1e-15);
    }

    #[test]
    fn product_rule_matches_closed_form() {
        // x * sin(x): (x sin x)'' = 2 cos x - x sin x
        let x = 1.1;
        let j = Jet2::variable(x) * Jet2::variable(x).sin();
        assert_relative_eq!(j.d2, 2.0 * x.cos() - x * x.sin(), epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn composition_chain_rule(x in -2.0f64..2.0, a in -3.0f64..3.0, b in -1.0f64..1.0) {
            // h = tanh(f), f = a x^2 + b x
            let xj = Jet2::variable(x);
            let f = xj * xj * a + xj * b;
            let h = f.tanh();
            let t = f.v.tanh();
            let s = 1.0 - t * t;
            let expect_d2 = -2.0 * t * s * f.d1 * f.d1 + s * f.d2;
            prop_assert!((h.d2 - expect_d2).abs() <= 1e-12 * (1.0 + expect_d2.abs()));
            prop_assert!((f.d2 - 2.0 * a).abs() < 1e-12);
        }
    }
}
