//! Orlicz functions used to express tail control of `y - mu` beyond the
//! subgaussian case.

use std::fmt;

use crate::error::{PosiError, Result};

/// A convex, nondecreasing `psi` with `psi(0) = 0` and `psi(x) -> inf`.
#[derive(Clone, Copy)]
pub enum OrliczFunction {
    /// `exp(x^2) - 1`.
    Subgaussian,
    /// `exp(x) - 1`.
    Subexponential,
    /// `exp(x^p) - 1`, `p >= 1`.
    ExpPower(f64),
    /// `x^p`, `p >= 1`.
    Power(f64),
    /// Any other Orlicz function; inverted numerically by bracketing.
    Custom {
        name: &'static str,
        psi: fn(f64) -> f64,
    },
}

impl fmt::Debug for OrliczFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl PartialEq for OrliczFunction {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

impl OrliczFunction {
    /// Looks up a registered function by name: `subgaussian`, `subexponential`,
    /// `exp-power:<p>` or `power:<p>`.
    pub fn from_name(name: &str) -> Result<Self> {
        let unregistered = || PosiError::UnregisteredOrlicz(name.to_string());
        let parse_p = |s: &str| -> Result<f64> {
            let p: f64 = s.trim().parse().map_err(|_| unregistered())?;
            if p >= 1.0 && p.is_finite() {
                Ok(p)
            } else {
                Err(unregistered())
            }
        };
        match name.trim() {
            "subgaussian" => Ok(Self::Subgaussian),
            "subexponential" => Ok(Self::Subexponential),
            other => {
                if let Some(p) = other.strip_prefix("exp-power:") {
                    Ok(Self::ExpPower(parse_p(p)?))
                } else if let Some(p) = other.strip_prefix("power:") {
                    Ok(Self::Power(parse_p(p)?))
                } else {
                    Err(unregistered())
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Subgaussian => "subgaussian".into(),
            Self::Subexponential => "subexponential".into(),
            Self::ExpPower(p) => format!("exp-power:{p}"),
            Self::Power(p) => format!("power:{p}"),
            Self::Custom { name, .. } => (*name).to_string(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match *self {
            Self::Subgaussian => (x * x).exp_m1(),
            Self::Subexponential => x.exp_m1(),
            Self::ExpPower(p) => x.powf(p).exp_m1(),
            Self::Power(p) => x.powf(p),
            Self::Custom { psi, .. } => psi(x),
        }
    }

    /// `psi^{-1}(u)` for `u >= 0`.
    pub fn inverse(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        self.inverse_ln(u.ln())
    }

    /// `psi^{-1}(exp(ln_u))`, usable when `u` itself overflows.
    pub fn inverse_ln(&self, ln_u: f64) -> f64 {
        match *self {
            Self::Subgaussian => ln_one_plus_exp(ln_u).sqrt(),
            Self::Subexponential => ln_one_plus_exp(ln_u),
            Self::ExpPower(p) => ln_one_plus_exp(ln_u).powf(1.0 / p),
            Self::Power(p) => (ln_u / p).exp(),
            Self::Custom { psi, .. } => bracket_inverse(psi, ln_u.exp()),
        }
    }
}

/// `ln(1 + e^a)` without overflow.
fn ln_one_plus_exp(a: f64) -> f64 {
    if a > 35.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn bracket_inverse(psi: fn(f64) -> f64, u: f64) -> f64 {
    if u.is_infinite() {
        return f64::INFINITY;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while psi(hi) < u {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
