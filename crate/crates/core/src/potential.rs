//! Power-law interaction potential `V(x) = |x|^p / p - |x|^q / q`.
//!
//! `p` is the attractive exponent and `q` the repulsive one. In the mildly
//! repulsive regime `p > q >= 2` the potential is `C^1` at the origin, has its
//! minimum at `|x| = 1` with value `1/p - 1/q`, a unique inflection radius `r`
//! and a unique zero `R`, with `r < 1 < R`.

use crate::error::{invalid, Error, Result};
use crate::roots;
use crate::scalar::Scalar;

/// A power-law potential together with its structural radii.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Potential<T> {
    p: T,
    q: T,
    inflection: T,
    zero: T,
    relaxed: bool,
}

/// Radii derived from `(p, q)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Radii<T> {
    /// Inflection radius: `V''(r) = 0`.
    pub r: T,
    /// Zero radius: `V(R) = 0`.
    pub big_r: T,
    /// Gap `R - r`.
    pub l: T,
}

impl<T: Scalar> Potential<T> {
    /// Mildly repulsive potential; requires `p > q >= 2`.
    pub fn new(p: T, q: T) -> Result<Self> {
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::NonFinite("potential exponent"));
        }
        if q < T::of(2.0) {
            return Err(Error::InvalidPotential { p: p.as_f64(), q: q.as_f64(), reason: "q must be at least 2" });
        }
        Self::build(p, q, false)
    }

    /// Potential with `p > q > 0`.
    ///
    /// Only the threshold computations for `q` below 2 need this; the rest of
    /// the crate assumes the mildly repulsive regime. Check [`Self::is_relaxed`]
    /// before relying on `C^1` behaviour at the origin.
    pub fn relaxed(p: T, q: T) -> Result<Self> {
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::NonFinite("potential exponent"));
        }
        if q <= T::zero() {
            return Err(Error::InvalidPotential { p: p.as_f64(), q: q.as_f64(), reason: "q must be positive" });
        }
        Self::build(p, q, q < T::of(2.0))
    }

    fn build(p: T, q: T, relaxed: bool) -> Result<Self> {
        if p <= q {
            return Err(Error::InvalidPotential { p: p.as_f64(), q: q.as_f64(), reason: "p must exceed q" });
        }
        let one = T::one();
        let e = one / (p - q);
        let inflection = ((q - one) / (p - one)).abs().powf(e);
        let zero = (p / q).powf(e);
        let pot = Self { p, q, inflection, zero, relaxed };
        if !(inflection.is_finite() && zero.is_finite()) || zero <= one {
            return Err(Error::InvalidPotential { p: p.as_f64(), q: q.as_f64(), reason: "radii overflow" });
        }
        // Defining identities V(R) = 0 and V''(r) = 0, relative to the size of the terms.
        let tol = T::tol(1e-12);
        let scale_r = zero.powf(p) / p;
        if pot.value(zero).abs() > tol * scale_r.max(one) {
            return Err(Error::InvalidPotential { p: p.as_f64(), q: q.as_f64(), reason: "V(R) self-check failed" });
        }
        if q > one {
            let scale = (p - one) * inflection.powf(p - T::of(2.0));
            let v2 = (p - one) * inflection.powf(p - T::of(2.0)) - (q - one) * inflection.powf(q - T::of(2.0));
            if v2.abs() > tol * scale.max(one) {
                return Err(Error::InvalidPotential { p: p.as_f64(), q: q.as_f64(), reason: "V''(r) self-check failed" });
            }
        }
        Ok(pot)
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }

    pub fn radii(&self) -> Radii<T> {
        Radii { r: self.inflection, big_r: self.zero, l: self.zero - self.inflection }
    }

    /// `V(x)`; always defined since `V(0) = 0`.
    pub fn value(&self, x: T) -> T {
        let a = x.abs();
        a.powf(self.p) / self.p - a.powf(self.q) / self.q
    }

    /// `V'(x)` with the symmetric convention `V'(0) = 0`.
    pub fn slope(&self, x: T) -> T {
        if x == T::zero() {
            return T::zero();
        }
        let a = x.abs();
        let one = T::one();
        x.signum() * (a.powf(self.p - one) - a.powf(self.q - one))
    }

    /// `V(1 + h) - V(1)` without cancellation for small `h` (`h > -1`).
    pub fn value_offset_from_one(&self, h: T) -> T {
        let l = h.ln_1p();
        (self.p * l).exp_m1() / self.p - (self.q * l).exp_m1() / self.q
    }

    /// `V(1) = 1/p - 1/q`, the minimum of `V`.
    pub fn min_value(&self) -> T {
        self.p.recip() - self.q.recip()
    }

    /// Derivative of the given order (0 to 3) at `x`.
    ///
    /// At `x = 0` derivatives are defined by their limits. A derivative is
    /// `Undefined` there when a one-sided limit diverges or the two one-sided
    /// limits differ.
    pub fn eval(&self, x: T, order: u32) -> Result<T> {
        if !x.is_finite() {
            return Err(Error::NonFinite("evaluation point"));
        }
        let one = T::one();
        let two = T::of(2.0);
        let three = T::of(3.0);
        let (p, q) = (self.p, self.q);
        let (cp, cq, ep, eq) = match order {
            0 => return Ok(self.value(x)),
            1 => (one, one, p - one, q - one),
            2 => (p - one, q - one, p - two, q - two),
            3 => ((p - one) * (p - two), (q - one) * (q - two), p - three, q - three),
            _ => return Err(Error::OrderOutOfRange(order)),
        };
        let a = x.abs();
        let undefined = || Error::Undefined { order, p: p.as_f64(), q: q.as_f64() };
        let term = |c: T, e: T| -> Result<T> {
            if c == T::zero() {
                Ok(T::zero())
            } else if a > T::zero() {
                Ok(c * a.powf(e))
            } else if e > T::zero() {
                Ok(T::zero())
            } else if e == T::zero() {
                Ok(c)
            } else {
                Err(undefined())
            }
        };
        let radial = term(cp, ep)? - term(cq, eq)?;
        if order.is_multiple_of(2) {
            return Ok(radial);
        }
        if a > T::zero() {
            Ok(x.signum() * radial)
        } else if radial == T::zero() {
            Ok(T::zero())
        } else {
            // odd derivative with a nonzero radial limit jumps across 0
            Err(undefined())
        }
    }

    /// Root `c` in `(0, 1)` of `x^(q+k) - x^(q-1) = k (x - 1)`.
    ///
    /// For `p >= q + k + 1` the potential satisfies
    /// `(x - 1) V'(x) >= k (x - 1)^2` on `[c, inf)`.
    pub fn lemma_c(&self, k: T) -> Result<T> {
        if !(k > T::zero()) || !k.is_finite() {
            return Err(invalid("k must be positive and finite"));
        }
        let one = T::one();
        let q = self.q;
        let h = |x: T| x.powf(q + k) - x.powf(q - one) - k * (x - one);
        let eps = T::of(1e-9);
        roots::bisect_checked(h, eps, one - eps, 60, T::tol(1e-12))
    }

    /// Upper bound on the mass ratio of the two clusters of a local
    /// minimizer, `V(1) / (V(1 - 3l) + l^q / q)`, when the denominator is
    /// negative.
    pub fn mass_ratio_bound(&self) -> Option<T> {
        let l = self.radii().l;
        let den = self.value(T::one() - T::of(3.0) * l) + l.powf(self.q) / self.q;
        (den < T::zero()).then(|| self.min_value() / den)
    }
}
