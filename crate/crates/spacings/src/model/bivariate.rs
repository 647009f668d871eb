//! Planar built-in families and their closed-form ball probabilities.

use rand::Rng;
use rand_chacha::rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{std_normal_cdf, std_normal_pdf, LrtSupport, ParametricModel};
use crate::error::{Result, SpacingsError};
use crate::special::gauss_legendre;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// P(chi^2_2(delta) <= x) by a single forward pass over the Poisson-mixture
/// terms, using the closed central chi-square CDF with even degrees of
/// freedom. This sits in every nearest-neighbour-ball evaluation for the
/// Gaussian families; the general [`crate::special::chisq_cdf`] is the slow
/// reference and takes over for extreme noncentralities.
fn noncentral_chisq2_cdf(x: f64, delta: f64) -> f64 {
    debug_assert!(x >= 0.0 && delta >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    let lambda = delta / 2.0;
    if lambda > 600.0 {
        let spec = crate::special::ChiSquareSpec::new(2, delta).expect("valid spec");
        return crate::special::chisq_cdf(x, &spec).expect("finite arguments");
    }
    let y = x / 2.0;
    let e_y = (-y).exp();
    // pois: Poisson(lambda) weight at k; tail: e^{-y} y^k / k!;
    // partial: P(chi^2_{2k+2} <= x) = 1 - sum_{j<=k} tail_j.
    let mut pois = (-lambda).exp();
    let mut tail_term = e_y;
    let mut tail_sum = e_y;
    let mut weight_acc = 0.0;
    let mut cdf = 0.0;
    let mut k = 0u32;
    loop {
        cdf += pois * (1.0 - tail_sum);
        weight_acc += pois;
        if weight_acc >= 1.0 - 1e-14 || k > 20_000 {
            break;
        }
        k += 1;
        pois *= lambda / f64::from(k);
        tail_term *= y / f64::from(k);
        tail_sum += tail_term;
    }
    cdf.clamp(0.0, 1.0)
}

/// Bivariate normal with unknown mean and identity covariance.
pub struct BivariateNormalMean;

impl ParametricModel for BivariateNormalMean {
    fn name(&self) -> &'static str {
        "bvn-mean"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn param_bounds(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); 2]
    }

    fn pdf(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let u = x[0] - theta[0];
        let v = x[1] - theta[1];
        Ok((-0.5 * (u * u + v * v)).exp() / TWO_PI)
    }

    fn log_pdf(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let u = x[0] - theta[0];
        let v = x[1] - theta[1];
        Ok(-0.5 * (u * u + v * v) - TWO_PI.ln())
    }

    fn sample(&self, theta: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let mut out = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let z1: f64 = StandardNormal.sample(&mut *rng);
            let z2: f64 = StandardNormal.sample(&mut *rng);
            out.push(theta[0] + z1);
            out.push(theta[1] + z2);
        }
        Ok(out)
    }

    fn fisher_information(&self, theta: &[f64]) -> Result<super::FisherMatrix> {
        self.check_theta(theta)?;
        super::FisherMatrix::from_matrix(nalgebra::DMatrix::identity(2, 2), None)
    }

    fn ball_probability(&self, theta: &[f64], center: &[f64], radius: f64) -> Result<f64> {
        self.check_theta(theta)?;
        if !radius.is_finite() || radius < 0.0 {
            return Err(SpacingsError::Domain(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        // |X - c|^2 is noncentral chi-square with 2 df.
        let du = center[0] - theta[0];
        let dv = center[1] - theta[1];
        Ok(noncentral_chisq2_cdf(radius * radius, du * du + dv * dv))
    }

    fn default_start(&self, data: &[f64]) -> Vec<f64> {
        column_means(data, 2)
    }

    fn lrt_support(&self) -> LrtSupport {
        LrtSupport::ClosedForm
    }

    fn max_log_likelihood(&self, data: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mle = column_means(data, 2);
        let ll = self.log_likelihood(&mle, data)?;
        Ok((ll, mle))
    }
}

/// Equal-weight mixture of two bivariate normals sharing a mean: one with
/// identity covariance and one with unit variances and correlation rho.
///
/// Near rho^2 = 1 the likelihood is unbounded, which rules out the
/// likelihood-ratio test for this family; spacings tests still apply.
pub struct BivariateNormalCorrMixture;

impl BivariateNormalCorrMixture {
    fn component_pdf(u: f64, v: f64, rho: f64) -> f64 {
        let om = 1.0 - rho * rho;
        ((-0.5 * (u * u - 2.0 * rho * u * v + v * v) / om).exp()) / (TWO_PI * om.sqrt())
    }
}

impl ParametricModel for BivariateNormalCorrMixture {
    fn name(&self) -> &'static str {
        "bvn-corr-mix"
    }

    fn param_dim(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn param_bounds(&self) -> Vec<(f64, f64)> {
        vec![
            (f64::NEG_INFINITY, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
            (-0.999, 0.999),
        ]
    }

    fn pdf(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let u = x[0] - theta[0];
        let v = x[1] - theta[1];
        let standard = (-0.5 * (u * u + v * v)).exp() / TWO_PI;
        Ok(0.5 * standard + 0.5 * Self::component_pdf(u, v, theta[2]))
    }

    fn sample(&self, theta: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let rho = theta[2];
        let s = (1.0 - rho * rho).sqrt();
        let mut out = Vec::with_capacity(2 * n);
        for _ in 0..n {
            // Component indicator first, then the component draw.
            let correlated = rng.random::<bool>();
            let z1: f64 = StandardNormal.sample(&mut *rng);
            let z2: f64 = StandardNormal.sample(&mut *rng);
            let (x, y) = if correlated { (z1, rho * z1 + s * z2) } else { (z1, z2) };
            out.push(theta[0] + x);
            out.push(theta[1] + y);
        }
        Ok(out)
    }

    fn ball_probability(&self, theta: &[f64], center: &[f64], radius: f64) -> Result<f64> {
        self.check_theta(theta)?;
        if !radius.is_finite() || radius < 0.0 {
            return Err(SpacingsError::Domain(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        let du = center[0] - theta[0];
        let dv = center[1] - theta[1];
        let identity_part = noncentral_chisq2_cdf(radius * radius, du * du + dv * dv);
        let corr_part = gaussian_disk_probability(du, dv, theta[2], radius);
        Ok(0.5 * identity_part + 0.5 * corr_part)
    }

    fn default_start(&self, data: &[f64]) -> Vec<f64> {
        let means = column_means(data, 2);
        let n = data.len() / 2;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        let mut sxy = 0.0;
        for row in data.chunks_exact(2) {
            let u = row[0] - means[0];
            let v = row[1] - means[1];
            sxx += u * u;
            syy += v * v;
            sxy += u * v;
        }
        // Mixture correlation is rho/2.
        let corr = if n > 1 { sxy / (sxx * syy).sqrt() } else { 0.0 };
        vec![means[0], means[1], (2.0 * corr).clamp(-0.9, 0.9)]
    }
}

/// P(N(0, Sigma_rho) ball) for the unit-variance correlated Gaussian: the
/// 45-degree rotation decouples the components into independent normals with
/// variances 1 +- rho, and the disk integral reduces to one dimension. The
/// sine substitution removes the square-root endpoints, so Gauss-Legendre
/// converges spectrally.
fn gaussian_disk_probability(du: f64, dv: f64, rho: f64, radius: f64) -> f64 {
    if radius == 0.0 {
        return 0.0;
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let a = (du + dv) * inv_sqrt2;
    let b = (du - dv) * inv_sqrt2;
    let su = (1.0 + rho).sqrt();
    let sv = (1.0 - rho).sqrt();
    let (gx, gw) = gauss_legendre(48);
    let mut total = 0.0;
    for (xi, wi) in gx.iter().zip(gw) {
        let psi = std::f64::consts::FRAC_PI_2 * xi;
        let (sin_psi, cos_psi) = psi.sin_cos();
        let u = a + radius * sin_psi;
        let h = radius * cos_psi;
        let width = std_normal_cdf((b + h) / sv) - std_normal_cdf((b - h) / sv);
        total += wi * std_normal_pdf(u / su) / su * width * radius * cos_psi;
    }
    (total * std::f64::consts::FRAC_PI_2).clamp(0.0, 1.0)
}

fn column_means(data: &[f64], d: usize) -> Vec<f64> {
    let n = (data.len() / d).max(1) as f64;
    let mut means = vec![0.0; d];
    for row in data.chunks_exact(d) {
        for (m, x) in means.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    means
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{chisq_cdf, ChiSquareSpec};

    #[test]
    fn fast_noncentral_cdf_matches_reference_series() {
        for (x, delta) in [(0.5, 0.0), (2.0, 1.0), (1.3, 13.5), (9.0, 4.0), (25.0, 30.0)] {
            let fast = noncentral_chisq2_cdf(x, delta);
            let slow = chisq_cdf(x, &ChiSquareSpec::new(2, delta).unwrap()).unwrap();
            assert!((fast - slow).abs() < 1e-12, "x={x} delta={delta}: {fast} vs {slow}");
        }
    }

    #[test]
    fn corr_mixture_sampling_has_mixture_correlation() {
        let m = BivariateNormalCorrMixture;
        let mut rng = crate::rng::stream(12, 0, "sample");
        let rho = 0.8;
        let data = m.sample(&[0.0, 0.0, rho], 200_000, &mut rng).unwrap();
        let start = m.default_start(&data);
        // default_start inverts the mixture correlation rho/2.
        assert!((start[2] - rho).abs() < 0.03, "estimated {}", start[2]);
    }
}
