//! Summary statistics and the three models fitted to sweep results.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    Gaussian,
    Cosine,
    PowerLaw,
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitModel::Gaussian => "gaussian",
            FitModel::Cosine => "cosine",
            FitModel::PowerLaw => "power-law",
        })
    }
}

/// Model-independent view of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Gaussian: `[mean, std, skewness, excess kurtosis]`;
    /// cosine: `[amplitude, phase, offset]`;
    /// power law: `[exponent, prefactor]`.
    pub coefficients: Vec<f64>,
    pub residual_rms: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    /// Unbiased (n - 1) standard deviation.
    pub std: f64,
    /// Sample skewness `m₃ / m₂^{3/2}`; zero for degenerate samples.
    pub skewness: f64,
    /// Sample excess kurtosis `m₄ / m₂² - 3`; zero for degenerate samples.
    pub excess_kurtosis: f64,
    pub n: usize,
    /// All samples equal.
    pub degenerate: bool,
}

impl GaussianFit {
    pub fn to_fit_result(&self) -> FitResult {
        FitResult {
            model: FitModel::Gaussian,
            coefficients: vec![self.mean, self.std, self.skewness, self.excess_kurtosis],
            residual_rms: self.std,
            n: self.n,
        }
    }
}

/// Minimum sample count for [`fit_gaussian`].
pub const GAUSSIAN_MIN_SAMPLES: usize = 8;

pub fn fit_gaussian(samples: &[f64]) -> Result<GaussianFit> {
    let n = samples.len();
    if n < GAUSSIAN_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: GAUSSIAN_MIN_SAMPLES,
            got: n,
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let degenerate = m2 == 0.0;
    let (skewness, excess_kurtosis) = if degenerate { (0.0, 0.0) } else { (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0) };
    Ok(GaussianFit {
        mean,
        std,
        skewness,
        excess_kurtosis,
        n,
        degenerate,
    })
}

/// `values ≈ A cos(θ + φ₀) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineFit {
    pub amplitude: f64,
    /// Phase in `(-π, π]`.
    pub phase: f64,
    pub offset: f64,
    pub residual_rms: f64,
    pub n: usize,
}

impl CosineFit {
    pub fn eval(&self, theta: f64) -> f64 {
        self.amplitude * (theta + self.phase).cos() + self.offset
    }

    pub fn to_fit_result(&self) -> FitResult {
        FitResult {
            model: FitModel::Cosine,
            coefficients: vec![self.amplitude, self.phase, self.offset],
            residual_rms: self.residual_rms,
            n: self.n,
        }
    }
}

/// Linear least squares on `{cos θ, sin θ, 1}`; with coefficients `p, q`
/// the amplitude is `√(p² + q²)` and the phase `atan2(-q, p)`.
pub fn fit_cosine(thetas: &[f64], values: &[f64]) -> Result<CosineFit> {
    let n = thetas.len();
    if values.len() != n {
        return Err(Error::InvalidArgument(format!("{n} angles but {} values", values.len())));
    }
    let mut distinct: Vec<f64> = thetas.iter().map(|t| t.rem_euclid(std::f64::consts::TAU)).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() < 4 {
        return Err(Error::InsufficientSamples {
            needed: 4,
            got: distinct.len(),
        });
    }
    let a = DMatrix::from_fn(n, 3, |i, k| match k {
        0 => thetas[i].cos(),
        1 => thetas[i].sin(),
        _ => 1.0,
    });
    let b = DVector::from_column_slice(values);
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let (p, q, c) = (x[0], x[1], x[2]);
    let resid = &a * &x - &b;
    let amplitude = p.hypot(q);
    Ok(CosineFit {
        amplitude,
        phase: if amplitude == 0.0 { 0.0 } else { (-q).atan2(p) },
        offset: c,
        residual_rms: (resid.norm_squared() / n as f64).sqrt(),
        n,
    })
}

/// `y ≈ prefactor · x^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS residual of `ln y`.
    pub residual_rms: f64,
    pub n: usize,
}

impl PowerLawFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }

    pub fn to_fit_result(&self) -> FitResult {
        FitResult {
            model: FitModel::PowerLaw,
            coefficients: vec![self.exponent, self.prefactor],
            residual_rms: self.residual_rms,
            n: self.n,
        }
    }
}

/// Ordinary least squares of `ln y` against `ln x`.
pub fn fit_powerlaw(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    let n = xs.len();
    if ys.len() != n {
        return Err(Error::InvalidArgument(format!("{n} abscissae but {} ordinates", ys.len())));
    }
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("power-law fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let nf = n as f64;
    let mx = lx.iter().sum::<f64>() / nf;
    let my = ly.iter().sum::<f64>() / nf;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::IllConditioned("all abscissae equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum();
    Ok(PowerLawFit {
        exponent,
        prefactor: intercept.exp(),
        residual_rms: (ss / nf).sqrt(),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::{FRAC_PI_4, TAU};

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| TAU * k as f64 / n as f64).collect()
    }

    #[test]
    fn gaussian_of_symmetric_pair_pattern() {
        let s: Vec<f64> = (0..8).map(|k| if k % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let g = fit_gaussian(&s).unwrap();
        assert_eq!(g.mean, 0.0);
        assert!((g.std - (8.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!(g.skewness, 0.0);
        assert!(!g.degenerate);
    }

    #[test]
    fn gaussian_recovers_sigma_and_flags_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 2.5).unwrap();
        let s: Vec<f64> = (0..180).map(|_| normal.sample(&mut rng)).collect();
        let g = fit_gaussian(&s).unwrap();
        assert!((g.std / 2.5 - 1.0).abs() < 0.1, "{}", g.std);
        assert!(g.skewness.abs() < 0.5);

        let c = fit_gaussian(&[3.0; 10]).unwrap();
        assert!(c.degenerate && c.std == 0.0);
        assert!(fit_gaussian(&[1.0; 7]).is_err());
    }

    #[test]
    fn cosine_exact_recovery() {
        let th = grid(36);
        let v: Vec<f64> = th.iter().map(|t| (t + FRAC_PI_4).cos()).collect();
        let f = fit_cosine(&th, &v).unwrap();
        assert!((f.amplitude - 1.0).abs() < 1e-12);
        assert!((f.phase - FRAC_PI_4).abs() < 1e-12);
        assert!(f.offset.abs() < 1e-12);
        assert!(f.residual_rms < 1e-12);
    }

    #[test]
    fn cosine_of_constant_has_zero_amplitude() {
        let th = grid(12);
        let f = fit_cosine(&th, &[0.7; 12]).unwrap();
        assert!(f.amplitude < 1e-14);
        assert!((f.offset - 0.7).abs() < 1e-14);
    }

    #[test]
    fn cosine_noisy_amplitude_within_five_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let th = grid(180);
        let v: Vec<f64> = th.iter().map(|t| (t + 2.34).cos() + noise.sample(&mut rng)).collect();
        let f = fit_cosine(&th, &v).unwrap();
        assert!((f.amplitude - 1.0).abs() < 0.05);
        assert!((f.phase - 2.34).abs() < 0.05);
    }

    #[test]
    fn cosine_needs_four_distinct_angles() {
        assert!(fit_cosine(&[0.0, 1.0, 2.0, 0.0], &[1.0; 4]).is_err());
        assert!(fit_cosine(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn powerlaw_exact_and_noisy() {
        let xs = [0.1, 0.2, 0.5, 1.0, 2.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 2.0 * x.powf(1.5)).collect();
        let f = fit_powerlaw(&xs, &ys).unwrap();
        assert!((f.exponent - 1.5).abs() < 1e-12);
        assert!((f.prefactor - 2.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let xs: Vec<f64> = (0..8).map(|k| 10f64.powf(-1.0 + k as f64 / 7.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(1.3) * f64::exp(noise.sample(&mut rng))).collect();
        let f = fit_powerlaw(&xs, &ys).unwrap();
        assert!((f.exponent - 1.3).abs() < 0.2, "{}", f.exponent);
    }

    #[test]
    fn powerlaw_rejects_nonpositive_input() {
        assert!(fit_powerlaw(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_powerlaw(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]).is_err());
        assert!(fit_powerlaw(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fit_results_carry_model_tags() {
        let g = fit_gaussian(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap().to_fit_result();
        assert_eq!(g.model, FitModel::Gaussian);
        assert_eq!(g.coefficients.len(), 4);
    }
}
