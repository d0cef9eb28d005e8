//! Second-order forward-mode numbers.
//!
//! A [`Jet`] carries a value together with its gradient and Hessian with
//! respect to `N` independent seed variables. Arithmetic propagates all three
//! exactly (up to floating point rounding), so closed-form expressions written
//! over jets yield analytic first and second derivatives without any step
//! size.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; N],
            h: [[0.0; N]; N],
        }
    }

    /// The `i`-th seed variable evaluated at `v`.
    pub fn variable(i: usize, v: f64) -> Self {
        let mut j = Self::constant(v);
        j.g[i] = 1.0;
        j
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v`.
    pub fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Self::constant(f);
        for i in 0..N {
            out.g[i] = df * self.g[i];
            for k in 0..N {
                out.h[i][k] = df * self.h[i][k] + d2f * self.g[i] * self.g[k];
            }
        }
        out
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Composes an outer function, known through its value, gradient and
    /// Hessian with respect to `M` arguments, with `M` inner jets.
    pub fn compose<const M: usize>(
        value: f64,
        grad: &[f64; M],
        hess: &[[f64; M]; M],
        inner: &[Jet<N>; M],
    ) -> Self {
        let mut out = Self::constant(value);
        for (a, ia) in inner.iter().enumerate() {
            for i in 0..N {
                out.g[i] += grad[a] * ia.g[i];
                for k in 0..N {
                    out.h[i][k] += grad[a] * ia.h[i][k];
                }
            }
            for (b, ib) in inner.iter().enumerate() {
                let c = hess[a][b];
                if c == 0.0 {
                    continue;
                }
                for i in 0..N {
                    for k in 0..N {
                        out.h[i][k] += c * ia.g[i] * ib.g[k];
                    }
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.g.iter().all(|x| x.is_finite())
            && self.h.iter().flatten().all(|x| x.is_finite())
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..N {
            self.g[i] += o.g[i];
            for k in 0..N {
                self.h[i][k] += o.h[i][k];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for i in 0..N {
            self.g[i] = -self.g[i];
            for k in 0..N {
                self.h[i][k] = -self.h[i][k];
            }
        }
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for i in 0..N {
            out.g[i] = self.v * o.g[i] + o.v * self.g[i];
            for k in 0..N {
                out.h[i][k] = self.v * o.h[i][k]
                    + o.v * self.h[i][k]
                    + self.g[i] * o.g[k]
                    + o.g[i] * self.g[k];
            }
        }
        out
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    fn sub(mut self, c: f64) -> Self {
        self.v -= c;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(mut self, c: f64) -> Self {
        self.v *= c;
        for i in 0..N {
            self.g[i] *= c;
            for k in 0..N {
                self.h[i][k] *= c;
            }
        }
        self
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self * (1.0 / c)
    }
}

impl<const N: usize> Sub<Jet<N>> for f64 {
    type Output = Jet<N>;
    fn sub(self, j: Jet<N>) -> Jet<N> {
        -j + self
    }
}

impl<const N: usize> Mul<Jet<N>> for f64 {
    type Output = Jet<N>;
    fn mul(self, j: Jet<N>) -> Jet<N> {
        j * self
    }
}

impl<const N: usize> Div<Jet<N>> for f64 {
    type Output = Jet<N>;
    fn div(self, j: Jet<N>) -> Jet<N> {
        j.recip() * self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        // f(a, b) = a^2 / b at (3, 2)
        let a = Jet::<2>::variable(0, 3.0);
        let b = Jet::<2>::variable(1, 2.0);
        let f = a.square() / b;
        assert!((f.v - 4.5).abs() < 1e-15);
        assert!((f.g[0] - 3.0).abs() < 1e-15);
        assert!((f.g[1] + 2.25).abs() < 1e-15);
        assert!((f.h[0][0] - 1.0).abs() < 1e-15);
        assert!((f.h[0][1] + 1.5).abs() < 1e-15);
        assert!((f.h[1][0] + 1.5).abs() < 1e-15);
        assert!((f.h[1][1] - 2.25).abs() < 1e-15);
    }

    #[test]
    fn sqrt_matches_closed_form() {
        let x = Jet::<1>::variable(0, 4.0);
        let s = x.sqrt();
        assert_eq!(s.v, 2.0);
        assert!((s.g[0] - 0.25).abs() < 1e-15);
        assert!((s.h[0][0] + 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn compose_agrees_with_direct_evaluation() {
        // outer(u, w) = u * w, inner u = t^2, w = t + 1
        let t = Jet::<1>::variable(0, 1.5);
        let u = t.square();
        let w = t + 1.0;
        let direct = u * w;
        let composed = Jet::compose(
            u.v * w.v,
            &[w.v, u.v],
            &[[0.0, 1.0], [1.0, 0.0]],
            &[u, w],
        );
        assert!((direct.v - composed.v).abs() < 1e-14);
        assert!((direct.g[0] - composed.g[0]).abs() < 1e-14);
        assert!((direct.h[0][0] - composed.h[0][0]).abs() < 1e-14);
    }
}
