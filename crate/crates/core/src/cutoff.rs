//! Smooth radial cutoff with exact derivatives.
//!
//! `chi(r) = 1` for `|r| <= inner`, `0` for `|r| >= outer`, and in between the
//! standard `C^inf` transition `a / (a + b)` built from `psi(x) = exp(-1/x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of Taylor coefficients carried by [`Jet`].
pub const JET_ORDER: usize = 5;

/// Truncated Taylor series `sum c[i] t^i` about a base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet(pub [f64; JET_ORDER]);

impl Jet {
    pub fn constant(c: f64) -> Self {
        let mut a = [0.0; JET_ORDER];
        a[0] = c;
        Jet(a)
    }

    pub fn variable(x: f64) -> Self {
        let mut a = [0.0; JET_ORDER];
        a[0] = x;
        a[1] = 1.0;
        Jet(a)
    }

    pub fn add(self, o: Jet) -> Jet {
        let mut c = self.0;
        for (ci, oi) in c.iter_mut().zip(o.0) {
            *ci += oi;
        }
        Jet(c)
    }

    pub fn neg(self) -> Jet {
        Jet(self.0.map(|v| -v))
    }

    pub fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; JET_ORDER];
        for n in 0..JET_ORDER {
            for i in 0..=n {
                c[n] += self.0[i] * o.0[n - i];
            }
        }
        Jet(c)
    }

    pub fn recip(self) -> Jet {
        let a = self.0;
        let mut b = [0.0; JET_ORDER];
        b[0] = 1.0 / a[0];
        for n in 1..JET_ORDER {
            let s: f64 = (1..=n).map(|i| a[i] * b[n - i]).sum();
            b[n] = -s / a[0];
        }
        Jet(b)
    }

    pub fn div(self, o: Jet) -> Jet {
        self.mul(o.recip())
    }

    pub fn exp(self) -> Jet {
        let a = self.0;
        let mut e = [0.0; JET_ORDER];
        e[0] = a[0].exp();
        for n in 1..JET_ORDER {
            let s: f64 = (1..=n).map(|k| k as f64 * a[k] * e[n - k]).sum();
            e[n] = s / n as f64;
        }
        Jet(e)
    }

    /// `j`-th derivative at the base point.
    pub fn derivative(&self, j: usize) -> f64 {
        let fact: f64 = (1..=j).map(|i| i as f64).product();
        self.0[j] * fact
    }
}

fn psi(x: Jet) -> Jet {
    if x.0[0] <= 0.0 {
        Jet::constant(0.0)
    } else {
        x.recip().neg().exp()
    }
}

/// Radii of the flat core and of the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    pub inner: f64,
    pub outer: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        CutoffSpec {
            inner: 1.0,
            outer: 2.0,
        }
    }
}

impl CutoffSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner >= 1.0 && self.inner.is_finite()) {
            return Err(Error::config("cutoff.inner", "must be >= 1"));
        }
        if !(self.outer > self.inner && self.outer.is_finite()) {
            return Err(Error::config("cutoff.outer", "must exceed cutoff.inner"));
        }
        Ok(())
    }

    /// Taylor jet of `chi` at `r`.
    pub fn jet(&self, r: f64) -> Jet {
        let s = r.abs();
        let out = if s <= self.inner {
            Jet::constant(1.0)
        } else if s >= self.outer {
            Jet::constant(0.0)
        } else {
            let x = Jet::variable(s);
            let a = psi(Jet::constant(self.outer).add(x.neg()));
            let b = psi(x.add(Jet::constant(-self.inner)));
            a.div(a.add(b))
        };
        if r < 0.0 {
            let mut c = out.0;
            for (i, ci) in c.iter_mut().enumerate() {
                if i % 2 == 1 {
                    *ci = -*ci;
                }
            }
            Jet(c)
        } else {
            out
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.jet(r).0[0]
    }

    /// Derivatives `chi^(j)(r)` for `j = 0..JET_ORDER`.
    pub fn derivatives(&self, r: f64) -> [f64; JET_ORDER] {
        let jet = self.jet(r);
        let mut d = [0.0; JET_ORDER];
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = jet.derivative(j);
        }
        d
    }
}
