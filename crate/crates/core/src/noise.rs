//! Seeded randomness, Laplace draws and the calibrated noise scales used by the
//! stable selectors.

use num_bigint::BigUint;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{invalid, Result};
use crate::linmodel::DesignMatrix;
use crate::stability::{quantile, OrliczFunction, StabilityBudget};

/// A position in a tree of reproducible random streams.
///
/// The generator for a stream depends only on `(master_seed, path)`, so work
/// can be split across threads in any order without changing any draw.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub path: Vec<u64>,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    pub fn descend(&self, indices: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(indices);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    /// ChaCha20 generator keyed by the stream position.
    pub fn rng(&self) -> ChaCha20Rng {
        // Absorb the seed, the path length and each element in turn, so that
        // e.g. [1] and [1, 0] get unrelated keys.
        let mut state = self.master_seed;
        let mut acc = splitmix(&mut state);
        state ^= (self.path.len() as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
        acc ^= splitmix(&mut state);
        for &p in &self.path {
            state = state.rotate_left(17) ^ p.wrapping_mul(0xA076_1D64_78BD_642F) ^ acc;
            acc = splitmix(&mut state);
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
        }
        ChaCha20Rng::from_seed(seed)
    }
}

/// Inverse-CDF Laplace transform of a uniform `u` on `(-1/2, 1/2)`.
pub fn laplace_from_uniform(b: f64, u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    -b * u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// One draw from the zero-mean Laplace distribution with scale `b`.
///
/// Consumes exactly one uniform, so the number of draws taken from `rng` never
/// depends on the values drawn. `b = 0` returns 0 after consuming the uniform.
pub fn laplace_sample<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    laplace_from_uniform(b, u)
}

pub fn laplace_cdf(b: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

/// Tail assumption on `y - mu`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseFamily {
    /// `sigma`-subgaussian noise.
    Subgaussian { sigma: f64 },
    /// Bounded Orlicz norm `||y - mu||_psi <= g`.
    Orlicz { psi: OrliczFunction, g: f64 },
}

/// Noise family, failure probability `delta` and the per-step `eta` a stable
/// selector is calibrated to.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePolicy {
    pub family: NoiseFamily,
    pub delta: f64,
    pub eta_step: f64,
}

impl NoisePolicy {
    pub fn subgaussian(sigma: f64, delta: f64, eta_step: f64) -> Result<Self> {
        let p = Self {
            family: NoiseFamily::Subgaussian { sigma },
            delta,
            eta_step,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn orlicz(psi: OrliczFunction, g: f64, delta: f64, eta_step: f64) -> Result<Self> {
        let p = Self {
            family: NoiseFamily::Orlicz { psi, g },
            delta,
            eta_step,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_step > 0.0) || !self.eta_step.is_finite() {
            return Err(invalid(format!("eta_step must be positive, got {}", self.eta_step)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        let mag = match self.family {
            NoiseFamily::Subgaussian { sigma } => sigma,
            NoiseFamily::Orlicz { g, .. } => g,
        };
        if !(mag > 0.0) || !mag.is_finite() {
            return Err(invalid(format!("noise magnitude must be positive, got {mag}")));
        }
        Ok(())
    }

    /// Same policy with a different per-step `eta`.
    pub fn with_eta_step(&self, eta_step: f64) -> Result<Self> {
        let p = Self {
            eta_step,
            ..self.clone()
        };
        p.validate()?;
        Ok(p)
    }

    /// `c * sqrt(ln(count / delta)) * sigma` or `c/2 * psi^{-1}(1/delta) * G`,
    /// with `ln_count = ln(count)`.
    fn tail_factor(&self, c: f64, ln_count: f64) -> Result<f64> {
        match &self.family {
            NoiseFamily::Subgaussian { sigma } => {
                let arg = ln_count - self.delta.ln();
                if !(arg > 0.0) {
                    return Err(invalid(format!(
                        "log argument must exceed 1 (got exp({arg})); delta is too large"
                    )));
                }
                Ok(c * arg.sqrt() * sigma)
            }
            NoiseFamily::Orlicz { psi, g } => Ok(0.5 * c * psi.inverse(1.0 / self.delta) * g),
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Per-coordinate Laplace scale for the Frank–Wolfe LASSO scores.
pub fn scale_lasso(d: usize, c1: f64, x: &DesignMatrix, policy: &NoisePolicy) -> Result<f64> {
    policy.validate()?;
    if d == 0 {
        return Err(invalid("d must be >= 1"));
    }
    check_positive("C1", c1)?;
    let f = policy.tail_factor(8.0, (4.0 * d as f64).ln())?;
    Ok(f * c1 * x.l2inf_norm() / (x.n() as f64 * policy.eta_step))
}

/// Laplace scale for the marginal-correlation screening scores.
pub fn scale_screening(d: usize, x: &DesignMatrix, policy: &NoisePolicy) -> Result<f64> {
    policy.validate()?;
    if d == 0 {
        return Err(invalid("d must be >= 1"));
    }
    let f = policy.tail_factor(4.0, (2.0 * d as f64).ln())?;
    Ok(f * x.l2inf_norm() / (x.n() as f64 * policy.eta_step))
}

/// Laplace scale for the (unnormalized) forward-stepwise scores.
pub fn scale_forward_stepwise(d: usize, k: usize, policy: &NoisePolicy) -> Result<f64> {
    policy.validate()?;
    if k == 0 || k > d {
        return Err(invalid(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    let ln_count = 2f64.ln() + ln_descending_factorial(d as u64, k as u64);
    let f = policy.tail_factor(4.0, ln_count)?;
    Ok(f / policy.eta_step)
}

/// `(d)_k = d (d-1) ... (d-k+1)` exactly, together with its natural log.
pub fn descending_factorial(d: u64, k: u64) -> Result<(BigUint, f64)> {
    if k > d {
        return Err(invalid(format!("need k <= d, got k = {k}, d = {d}")));
    }
    let exact = (0..k).fold(BigUint::from(1u32), |acc, i| acc * BigUint::from(d - i));
    Ok((exact, ln_descending_factorial(d, k)))
}

pub fn ln_descending_factorial(d: u64, k: u64) -> f64 {
    (0..k.min(d)).map(|i| ((d - i) as f64).ln()).sum()
}

/// Laplace scale that makes `w^T y + Lap(b)` `(eta, 0, nu)`-stable.
pub fn linear_functional_scale(w_norm: f64, sigma: f64, eta: f64, nu: f64) -> Result<f64> {
    check_positive("eta", eta)?;
    check_positive("sigma", sigma)?;
    if !(nu > 0.0 && nu < 1.0) {
        return Err(invalid(format!("nu must lie in (0, 1), got {nu}")));
    }
    Ok(quantile::normal_quantile(1.0 - nu / 2.0) * 2f64.sqrt() * sigma * w_norm / eta)
}

/// `w^T y` plus calibrated Laplace noise, with the budget it certifies.
pub fn stable_linear_functional<R: Rng + ?Sized>(
    w: &[f64],
    y: &[f64],
    sigma: f64,
    eta: f64,
    nu: f64,
    rng: &mut R,
) -> Result<(f64, StabilityBudget)> {
    crate::linmodel::check_len("y", w.len(), y.len())?;
    let dot: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let b = linear_functional_scale(norm, sigma, eta, nu)?;
    Ok((dot + laplace_sample(b, rng), StabilityBudget { eta, tau: 0.0, nu }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn unit_l2inf(n: usize, d: usize) -> DesignMatrix {
        // Columns with unit norm.
        let v = 1.0 / (n as f64).sqrt();
        DesignMatrix::new(DMatrix::from_element(n, d, v)).unwrap()
    }

    #[test]
    fn laplace_inverse_cdf() {
        assert_eq!(laplace_from_uniform(1.0, 0.0), 0.0);
        assert!((laplace_from_uniform(1.0, 0.25) + 0.5f64.ln()).abs() < 1e-15);
        assert!((laplace_from_uniform(1.0, -0.25) - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(laplace_from_uniform(0.0, 0.3), 0.0);
    }

    #[test]
    fn streams_are_path_keyed() {
        let root = RngStream::new(7);
        let a: u64 = root.child(3).rng().random();
        let b: u64 = root.child(3).rng().random();
        let c: u64 = root.child(4).rng().random();
        let d: u64 = root.descend(&[3, 0]).rng().random();
        let e: u64 = RngStream::new(8).child(3).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }

    #[test]
    fn scale_examples() {
        let p = NoisePolicy::subgaussian(1.0, 0.05, 1.0).unwrap();
        let x = unit_l2inf(1000, 3);
        let l = scale_lasso(500, 1.0, &x, &p).unwrap();
        assert!((l - 8.0 * 40000f64.ln().sqrt() / 1000.0).abs() < 1e-12);
        assert!((l - 0.026_042).abs() < 1e-6);
        let s = scale_screening(500, &x, &p).unwrap();
        assert!((s - 4.0 * 20000f64.ln().sqrt() / 1000.0).abs() < 1e-15);
        assert!((s - 0.012_588).abs() < 1e-6);
        let f1 = scale_forward_stepwise(500, 1, &p).unwrap();
        assert!((f1 - 4.0 * 20000f64.ln().sqrt()).abs() < 1e-12);
        assert!(scale_forward_stepwise(5, 6, &p).is_err());

        // 2d / delta > 2 for any admissible delta, so the log is always positive.
        let loose = NoisePolicy::subgaussian(1.0, 0.99, 1.0).unwrap();
        assert!(scale_screening(1, &unit_l2inf(4, 1), &loose).unwrap() > 0.0);
        assert!(NoisePolicy::subgaussian(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn orlicz_scales() {
        let p = NoisePolicy::orlicz(OrliczFunction::Subgaussian, 2.0, 0.05, 0.5).unwrap();
        let x = unit_l2inf(100, 2);
        let inv = 21f64.ln().sqrt();
        let l = scale_lasso(2, 3.0, &x, &p).unwrap();
        assert!((l - 4.0 * inv * 3.0 * 2.0 / (100.0 * 0.5)).abs() < 1e-12);
        let s = scale_screening(2, &x, &p).unwrap();
        assert!((s - 2.0 * inv * 2.0 / (100.0 * 0.5)).abs() < 1e-12);
        let f = scale_forward_stepwise(7, 3, &p).unwrap();
        assert!((f - 2.0 * inv * 2.0 / 0.5).abs() < 1e-12);
    }

    #[test]
    fn descending_factorials() {
        assert_eq!(descending_factorial(5, 2).unwrap().0, BigUint::from(20u32));
        assert_eq!(descending_factorial(9, 0).unwrap().0, BigUint::from(1u32));
        assert!(descending_factorial(3, 4).is_err());
    }

    #[test]
    fn linear_functional() {
        let b = linear_functional_scale(1.0, 1.0, 1.0, 0.05).unwrap();
        assert!((b - 1.959_964 * 2f64.sqrt()).abs() < 1e-5);
        let mut rng = RngStream::new(1).rng();
        let (v, budget) = stable_linear_functional(&[0.0; 3], &[1.0; 3], 1.0, 1.0, 0.05, &mut rng).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(budget, StabilityBudget { eta: 1.0, tau: 0.0, nu: 0.05 });
        assert!(linear_functional_scale(1.0, 1.0, 1e-12, 0.05).unwrap() > 1e11);
    }
}
