//! Hyper-dual numbers `v + d1 ε₁ + d2 ε₂ + d12 ε₁ε₂` with `ε₁² = ε₂² = 0`.
//!
//! Seeding `x_j` with `d1 = 1` and `x_k` with `d2 = 1` makes `d1` carry
//! `∂f/∂x_j` and `d12` carry `∂²f/∂x_j∂x_k` exactly, with no truncation error.
//! Every operation forms the mixed part as a sum of terms that are each
//! symmetric under swapping `ε₁` and `ε₂`, so seeding `(j, k)` or `(k, j)`
//! gives bit-identical `d12`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HyperDual {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
    pub d12: f64,
}

impl HyperDual {
    pub const fn constant(v: f64) -> Self {
        HyperDual { v, d1: 0.0, d2: 0.0, d12: 0.0 }
    }

    pub const fn new(v: f64, d1: f64, d2: f64, d12: f64) -> Self {
        HyperDual { v, d1, d2, d12 }
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    pub fn chain(self, g: f64, dg: f64, d2g: f64) -> Self {
        HyperDual {
            v: g,
            d1: dg * self.d1,
            d2: dg * self.d2,
            d12: dg * self.d12 + d2g * (self.d1 * self.d2),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite() && self.d12.is_finite()
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(self.v.ln(), r, -r * r)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    /// Integer power, exact in the sense of the polynomial derivatives.
    pub fn powi(self, k: i32) -> Self {
        match k {
            0 => HyperDual::constant(1.0),
            1 => self,
            _ => {
                let kf = f64::from(k);
                self.chain(
                    self.v.powi(k),
                    kf * self.v.powi(k - 1),
                    kf * (kf - 1.0) * self.v.powi(k - 2),
                )
            }
        }
    }
}

impl Add for HyperDual {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        HyperDual::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2, self.d12 + o.d12)
    }
}

impl Sub for HyperDual {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        HyperDual::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2, self.d12 - o.d12)
    }
}

impl Neg for HyperDual {
    type Output = Self;

    fn neg(self) -> Self {
        HyperDual::new(-self.v, -self.d1, -self.d2, -self.d12)
    }
}

impl Mul for HyperDual {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        HyperDual {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + self.v * o.d2,
            d12: (self.d12 * o.v + self.v * o.d12) + (self.d1 * o.d2 + self.d2 * o.d1),
        }
    }
}

impl Div for HyperDual {
    type Output = Self;

    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded(v: f64) -> HyperDual {
        HyperDual::new(v, 1.0, 1.0, 0.0)
    }

    #[test]
    fn square() {
        let x = seeded(3.0);
        let y = x * x;
        assert_eq!((y.v, y.d1, y.d12), (9.0, 6.0, 2.0));
    }

    #[test]
    fn sine_at_half_pi() {
        let y = seeded(std::f64::consts::FRAC_PI_2).sin();
        assert_eq!(y.v, 1.0);
        assert!(y.d1.abs() < 1e-16);
        assert_eq!(y.d12, -1.0);
    }

    #[test]
    fn mixed_partial_of_product() {
        // f = x*y*y at (2, 3): ∂²f/∂x∂y = 2y = 6.
        let x = HyperDual::new(2.0, 1.0, 0.0, 0.0);
        let y = HyperDual::new(3.0, 0.0, 1.0, 0.0);
        assert_eq!((x * y * y).d12, 6.0);
    }

    #[test]
    fn quotient_rule() {
        // f = 1/x at 2: f' = -1/4, f'' = 1/4.
        let y = HyperDual::constant(1.0) / seeded(2.0);
        assert_eq!((y.v, y.d1, y.d12), (0.5, -0.25, 0.25));
    }

    #[test]
    fn powi_matches_products() {
        let x = seeded(1.7);
        let p = x.powi(4);
        let m = x * x * x * x;
        assert!((p.v - m.v).abs() <= 1e-12 * m.v.abs());
        assert!((p.d1 - m.d1).abs() <= 1e-12 * m.d1.abs());
        assert!((p.d12 - m.d12).abs() <= 1e-12 * m.d12.abs());
        let inv = x.powi(-2);
        let r = (x * x).recip();
        assert!((inv.d12 - r.d12).abs() <= 1e-12 * r.d12.abs());
    }
}
