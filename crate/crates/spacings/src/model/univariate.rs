//! Univariate built-in families.

use rand::Rng;
use rand_chacha::rand_core::RngCore;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::{std_normal_cdf, std_normal_pdf, LrtSupport, ParametricModel};
use crate::error::{Result, SpacingsError};

/// Exponential distribution with failure-rate parameter theta.
pub struct Exponential;

impl ParametricModel for Exponential {
    fn name(&self) -> &'static str {
        "exp"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn param_bounds(&self) -> Vec<(f64, f64)> {
        vec![(1e-12, f64::INFINITY)]
    }

    fn pdf(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let rate = theta[0];
        Ok(if x[0] < 0.0 { 0.0 } else { rate * (-rate * x[0]).exp() })
    }

    fn cdf(&self, theta: &[f64], x: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(if x <= 0.0 { 0.0 } else { -(-theta[0] * x).exp_m1() })
    }

    fn sample(&self, theta: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let rate = theta[0];
        Ok((0..n)
            .map(|_| {
                let z: f64 = Exp1.sample(&mut *rng);
                z / rate
            })
            .collect())
    }

    fn fisher_information(&self, theta: &[f64]) -> Result<super::FisherMatrix> {
        self.check_theta(theta)?;
        let info = nalgebra::DMatrix::from_element(1, 1, 1.0 / (theta[0] * theta[0]));
        super::FisherMatrix::from_matrix(info, None)
    }

    fn support_hint(&self, theta: &[f64]) -> (f64, f64) {
        (0.0, 40.0 / theta[0])
    }

    fn default_start(&self, data: &[f64]) -> Vec<f64> {
        let mean = data.iter().sum::<f64>() / data.len().max(1) as f64;
        vec![if mean > 0.0 { 1.0 / mean } else { 1.0 }]
    }

    fn lrt_support(&self) -> LrtSupport {
        LrtSupport::ClosedForm
    }

    fn max_log_likelihood(&self, data: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        if !(mean > 0.0) {
            return Err(SpacingsError::Model("exponential data must be positive".into()));
        }
        let mle = 1.0 / mean;
        Ok((n * (mle.ln() - 1.0), vec![mle]))
    }
}

/// Normal distribution with parameters (mu, sigma).
pub struct Normal;

impl ParametricModel for Normal {
    fn name(&self) -> &'static str {
        "normal"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn param_bounds(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY), (1e-9, f64::INFINITY)]
    }

    fn pdf(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let z = (x[0] - theta[0]) / theta[1];
        Ok(std_normal_pdf(z) / theta[1])
    }

    fn cdf(&self, theta: &[f64], x: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(std_normal_cdf((x - theta[0]) / theta[1]))
    }

    fn sample(&self, theta: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok((0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut *rng);
                theta[0] + theta[1] * z
            })
            .collect())
    }

    fn fisher_information(&self, theta: &[f64]) -> Result<super::FisherMatrix> {
        self.check_theta(theta)?;
        let s2 = theta[1] * theta[1];
        let info = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[
            1.0 / s2,
            2.0 / s2,
        ]));
        super::FisherMatrix::from_matrix(info, None)
    }

    fn support_hint(&self, theta: &[f64]) -> (f64, f64) {
        (theta[0] - 12.0 * theta[1], theta[0] + 12.0 * theta[1])
    }

    fn default_start(&self, data: &[f64]) -> Vec<f64> {
        let (mean, sd) = mean_sd(data);
        vec![mean, sd.max(1e-3)]
    }

    fn lrt_support(&self) -> LrtSupport {
        LrtSupport::ClosedForm
    }

    fn max_log_likelihood(&self, data: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let ss = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
        let sigma = (ss / n).sqrt().max(1e-12);
        let ll = -n / 2.0 * (2.0 * std::f64::consts::PI).ln() - n * sigma.ln() - n / 2.0;
        Ok((ll, vec![mean, sigma]))
    }
}

/// Scale mixture of normals: F(x) = Phi(x - mu)/2 + Phi((x - mu)/sigma)/2.
///
/// The likelihood of this family is unbounded (send one component's scale to
/// zero at a data point), so no likelihood-ratio baseline exists; the
/// spacings tests remain applicable.
pub struct NormalScaleMixture;

impl ParametricModel for NormalScaleMixture {
    fn name(&self) -> &'static str {
        "normal-scale-mix"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn param_bounds(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY), (1e-6, f64::INFINITY)]
    }

    fn pdf(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let (mu, sigma) = (theta[0], theta[1]);
        let z = x[0] - mu;
        Ok(0.5 * std_normal_pdf(z) + 0.5 * std_normal_pdf(z / sigma) / sigma)
    }

    fn cdf(&self, theta: &[f64], x: f64) -> Result<f64> {
        self.check_theta(theta)?;
        let (mu, sigma) = (theta[0], theta[1]);
        Ok(0.5 * std_normal_cdf(x - mu) + 0.5 * std_normal_cdf((x - mu) / sigma))
    }

    fn sample(&self, theta: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let (mu, sigma) = (theta[0], theta[1]);
        Ok((0..n)
            .map(|_| {
                // Component indicator first, then the component draw.
                let narrow = rng.random::<bool>();
                let z: f64 = StandardNormal.sample(&mut *rng);
                mu + if narrow { z } else { sigma * z }
            })
            .collect())
    }

    fn support_hint(&self, theta: &[f64]) -> (f64, f64) {
        let spread = 12.0 * theta[1].max(1.0);
        (theta[0] - spread, theta[0] + spread)
    }

    fn default_start(&self, data: &[f64]) -> Vec<f64> {
        let (mean, sd) = mean_sd(data);
        // Mixture variance is (1 + sigma^2)/2.
        let sigma = (2.0 * sd * sd - 1.0).max(0.25).sqrt();
        vec![mean, sigma]
    }
}

/// Uniform distribution on [0, 1] with no free parameters. Useful as the
/// reference model for transformed samples and in tests; it is not part of
/// the estimation registry.
pub struct Uniform01;

impl ParametricModel for Uniform01 {
    fn name(&self) -> &'static str {
        "uniform01"
    }

    fn param_dim(&self) -> usize {
        0
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn param_bounds(&self) -> Vec<(f64, f64)> {
        Vec::new()
    }

    fn pdf(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(if (0.0..=1.0).contains(&x[0]) { 1.0 } else { 0.0 })
    }

    fn cdf(&self, theta: &[f64], x: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(x.clamp(0.0, 1.0))
    }

    fn sample(&self, theta: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok((0..n).map(|_| rng.random::<f64>()).collect())
    }

    fn support_hint(&self, _theta: &[f64]) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn default_start(&self, _data: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

fn mean_sd(data: &[f64]) -> (f64, f64) {
    let n = data.len().max(1) as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}
