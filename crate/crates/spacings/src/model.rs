//! Parametric families: densities, CDFs, sampling, Fisher information and
//! ball probabilities behind a single interface.
//!
//! The built-in registry covers the families used by the simulation studies;
//! generic models plug in through the same trait. Numeric fallbacks exist for
//! everything a family does not supply in closed form: quadrature Fisher
//! information for one-dimensional models, score-outer-product Monte-Carlo
//! for higher dimensions, and polar quadrature for planar ball probabilities.

mod bivariate;
mod univariate;

pub use bivariate::{BivariateNormalCorrMixture, BivariateNormalMean};
pub use univariate::{Exponential, Normal, NormalScaleMixture, Uniform01};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::RngCore;

use crate::error::{Result, SpacingsError};
use crate::special::gauss_legendre;

/// Pointwise evaluation of a model density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub pdf: f64,
    pub log_pdf: f64,
    /// Only available for one-dimensional observations.
    pub cdf: Option<f64>,
}

/// Fisher information with an optional Monte-Carlo error when the matrix was
/// estimated by simulation.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    matrix: DMatrix<f64>,
    mc_error: Option<f64>,
}

impl FisherMatrix {
    pub fn from_matrix(matrix: DMatrix<f64>, mc_error: Option<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(SpacingsError::InformationSingular("matrix is not square".into()));
        }
        let sym_defect = (&matrix - matrix.transpose()).abs().max();
        if sym_defect > 1e-8 * (1.0 + matrix.abs().max()) {
            return Err(SpacingsError::InformationSingular(format!(
                "matrix asymmetric by {sym_defect}"
            )));
        }
        let symmetrized = (&matrix + matrix.transpose()) * 0.5;
        let eigen = symmetrized.clone().symmetric_eigen();
        let min_eig = eigen.eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(SpacingsError::InformationSingular(format!(
                "minimum eigenvalue {min_eig} is not positive"
            )));
        }
        Ok(Self { matrix: symmetrized, mc_error })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mc_error(&self) -> Option<f64> {
        self.mc_error
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigen().eigenvalues.min()
    }

    /// delta' I delta.
    pub fn quadratic_form(&self, delta: &[f64]) -> f64 {
        let p = self.dim();
        assert_eq!(delta.len(), p);
        let mut sum = 0.0;
        for i in 0..p {
            for j in 0..p {
                sum += delta[i] * self.matrix[(i, j)] * delta[j];
            }
        }
        sum
    }
}

/// Whether the likelihood-ratio baseline is available for a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrtSupport {
    /// Closed-form maximum likelihood exists and the likelihood is bounded.
    ClosedForm,
    /// Likelihood is unbounded over the parameter space; no LRT.
    Unbounded,
}

/// A parametric family {F_theta}.
pub trait ParametricModel: Send + Sync {
    fn name(&self) -> &'static str;
    /// Dimension p of the parameter vector.
    fn param_dim(&self) -> usize;
    /// Dimension d of one observation.
    fn obs_dim(&self) -> usize;
    /// Box constraints on the parameter space.
    fn param_bounds(&self) -> Vec<(f64, f64)>;

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(SpacingsError::ParameterDomain(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                self.param_dim(),
                theta.len()
            )));
        }
        for (j, (t, (lo, hi))) in theta.iter().zip(self.param_bounds()).enumerate() {
            if !t.is_finite() || *t < lo || *t > hi {
                return Err(SpacingsError::ParameterDomain(format!(
                    "{}: parameter {j} = {t} outside [{lo}, {hi}]",
                    self.name()
                )));
            }
        }
        Ok(())
    }

    fn pdf(&self, theta: &[f64], x: &[f64]) -> Result<f64>;

    fn log_pdf(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.pdf(theta, x)?.max(f64::MIN_POSITIVE).ln())
    }

    /// Distribution function; a capability error unless obs_dim() == 1.
    fn cdf(&self, theta: &[f64], x: f64) -> Result<f64> {
        let _ = (theta, x);
        Err(SpacingsError::Capability(format!(
            "{}: CDF is only defined for univariate observations",
            self.name()
        )))
    }

    /// Draws n iid observations, row-major flat (n * obs_dim values).
    fn sample(&self, theta: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>>;

    fn fisher_information(&self, theta: &[f64]) -> Result<FisherMatrix> {
        self.check_theta(theta)?;
        if self.obs_dim() == 1 {
            fisher_by_quadrature(self, theta)
        } else {
            fisher_by_monte_carlo(self, theta, 200_000)
        }
    }

    /// P_theta(B(center, radius)); a capability error for univariate models.
    fn ball_probability(&self, theta: &[f64], center: &[f64], radius: f64) -> Result<f64> {
        check_radius(radius)?;
        if self.obs_dim() != 2 {
            return Err(SpacingsError::Capability(format!(
                "{}: no ball-probability path for dimension {}",
                self.name(),
                self.obs_dim()
            )));
        }
        ball_probability_quadrature(self, theta, center, radius, 64)
    }

    /// Integration window that carries all but a negligible tail of the mass
    /// (univariate models only; used by quadrature fallbacks).
    fn support_hint(&self, theta: &[f64]) -> (f64, f64) {
        let _ = theta;
        (-60.0, 60.0)
    }

    /// Heuristic starting point for estimation from row-major data.
    fn default_start(&self, data: &[f64]) -> Vec<f64>;

    fn lrt_support(&self) -> LrtSupport {
        LrtSupport::Unbounded
    }

    /// Maximized log-likelihood and maximizer, for the LRT baseline.
    fn max_log_likelihood(&self, data: &[f64]) -> Result<(f64, Vec<f64>)> {
        let _ = data;
        Err(SpacingsError::Capability(format!(
            "{}: likelihood ratio baseline unavailable (unbounded likelihood)",
            self.name()
        )))
    }

    fn log_likelihood(&self, theta: &[f64], data: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let d = self.obs_dim();
        let mut total = 0.0;
        for row in data.chunks_exact(d) {
            total += self.log_pdf(theta, row)?;
        }
        Ok(total)
    }
}

/// Consistent (pdf, log_pdf, cdf) triple at one point.
pub fn evaluate(model: &dyn ParametricModel, theta: &[f64], x: &[f64]) -> Result<Evaluation> {
    model.check_theta(theta)?;
    let pdf = model.pdf(theta, x)?;
    let log_pdf = model.log_pdf(theta, x)?;
    let cdf = if model.obs_dim() == 1 { Some(model.cdf(theta, x[0])?) } else { None };
    Ok(Evaluation { pdf, log_pdf, cdf })
}

fn check_radius(radius: f64) -> Result<()> {
    if !radius.is_finite() || radius < 0.0 {
        return Err(SpacingsError::Domain(format!("ball radius must be finite and >= 0, got {radius}")));
    }
    Ok(())
}

/// Planar ball probability by polar tensor quadrature (radial x angular
/// Gauss-Legendre). This is the generic route; families with closed forms
/// override [`ParametricModel::ball_probability`] and are cross-checked
/// against this one in tests.
pub fn ball_probability_quadrature(
    model: &(impl ParametricModel + ?Sized),
    theta: &[f64],
    center: &[f64],
    radius: f64,
    nodes: usize,
) -> Result<f64> {
    check_radius(radius)?;
    model.check_theta(theta)?;
    if radius == 0.0 {
        return Ok(0.0);
    }
    let (rx, rw) = gauss_legendre(nodes);
    let (ax, aw) = gauss_legendre(nodes);
    let mut total = 0.0;
    for (ri, wi) in rx.iter().zip(rw) {
        let rho = 0.5 * radius * (ri + 1.0);
        let mut ang = 0.0;
        for (aj, wj) in ax.iter().zip(aw) {
            let alpha = std::f64::consts::PI * (aj + 1.0);
            let x = [center[0] + rho * alpha.cos(), center[1] + rho * alpha.sin()];
            ang += wj * model.pdf(theta, &x)?;
        }
        total += wi * rho * ang;
    }
    // Jacobians of the two affine node maps.
    Ok((total * 0.5 * radius * std::f64::consts::PI).min(1.0))
}

/// Monte-Carlo ball probability for dimensions without an exact path.
/// Returns the estimate and its standard error.
pub fn ball_probability_mc(
    model: &dyn ParametricModel,
    theta: &[f64],
    center: &[f64],
    radius: f64,
    rng: &mut dyn RngCore,
    samples: usize,
) -> Result<(f64, f64)> {
    check_radius(radius)?;
    model.check_theta(theta)?;
    let d = self_dim(model, center)?;
    if radius == 0.0 {
        return Ok((0.0, 0.0));
    }
    // Uniform sampling in the ball, importance weight = ball volume.
    let vol = ball_volume(d, radius);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut point = vec![0.0; d];
    for _ in 0..samples {
        sample_in_ball(center, radius, &mut point, rng);
        let f = model.pdf(theta, &point)?;
        sum += f;
        sum_sq += f * f;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    Ok((vol * mean, vol * (var / samples as f64).sqrt()))
}

fn self_dim(model: &dyn ParametricModel, center: &[f64]) -> Result<usize> {
    let d = model.obs_dim();
    if center.len() != d {
        return Err(SpacingsError::Domain(format!(
            "center has dimension {}, model expects {d}",
            center.len()
        )));
    }
    Ok(d)
}

fn ball_volume(d: usize, radius: f64) -> f64 {
    let half = d as f64 / 2.0;
    (std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half + 1.0)) * radius.powi(d as i32)
}

fn sample_in_ball(center: &[f64], radius: f64, out: &mut [f64], rng: &mut dyn RngCore) {
    let d = out.len();
    loop {
        let mut norm2 = 0.0;
        for v in out.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
            norm2 += *v * *v;
        }
        if norm2 <= 1.0 {
            for (v, c) in out.iter_mut().zip(center) {
                *v = c + radius * *v;
            }
            return;
        }
        let _ = d;
    }
}

/// Central-difference score of the log density.
pub fn score(model: &dyn ParametricModel, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let p = theta.len();
    let mut s = vec![0.0; p];
    for j in 0..p {
        let h = 1e-5 * (1.0 + theta[j].abs());
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[j] += h;
        dn[j] -= h;
        s[j] = (model.log_pdf(&up, x)? - model.log_pdf(&dn, x)?) / (2.0 * h);
    }
    Ok(s)
}

/// Fisher information of a univariate model by adaptive panel quadrature of
/// the score outer product.
pub fn fisher_by_quadrature(model: &(impl ParametricModel + ?Sized), theta: &[f64]) -> Result<FisherMatrix> {
    model.check_theta(theta)?;
    let p = theta.len();
    let (lo, hi) = model.support_hint(theta);
    let panels = 16;
    let (gx, gw) = gauss_legendre(48);
    let mut info = DMatrix::zeros(p, p);
    let width = (hi - lo) / panels as f64;
    for k in 0..panels {
        let a = lo + k as f64 * width;
        for (xi, wi) in gx.iter().zip(gw) {
            let x = a + 0.5 * width * (xi + 1.0);
            let f = model.pdf(theta, &[x])?;
            if f < 1e-300 {
                continue;
            }
            let mut s = vec![0.0; p];
            for j in 0..p {
                let h = 1e-5 * (1.0 + theta[j].abs());
                let mut up = theta.to_vec();
                let mut dn = theta.to_vec();
                up[j] += h;
                dn[j] -= h;
                s[j] = (model.pdf(&up, &[x])? - model.pdf(&dn, &[x])?) / (2.0 * h * f);
            }
            let w = wi * 0.5 * width * f;
            for i in 0..p {
                for j in 0..p {
                    info[(i, j)] += w * s[i] * s[j];
                }
            }
        }
    }
    FisherMatrix::from_matrix(info, None)
}

/// Fisher information by Monte-Carlo score outer products, with the largest
/// entrywise standard error reported.
pub fn fisher_by_monte_carlo(
    model: &(impl ParametricModel + ?Sized),
    theta: &[f64],
    draws: usize,
) -> Result<FisherMatrix> {
    model.check_theta(theta)?;
    let p = theta.len();
    let d = model.obs_dim();
    let mut rng = crate::rng::stream(0x5C0_7E11, 0, "fisher-mc");
    let data = model.sample(theta, draws, &mut rng)?;
    let mut mean = DMatrix::zeros(p, p);
    let mut mean_sq = DMatrix::zeros(p, p);
    let mut s = vec![0.0; p];
    for row in data.chunks_exact(d) {
        for j in 0..p {
            let h = 1e-5 * (1.0 + theta[j].abs());
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[j] += h;
            dn[j] -= h;
            s[j] = (model.log_pdf(&up, row)? - model.log_pdf(&dn, row)?) / (2.0 * h);
        }
        for i in 0..p {
            for j in 0..p {
                let v = s[i] * s[j];
                mean[(i, j)] += v;
                mean_sq[(i, j)] += v * v;
            }
        }
    }
    let n = draws as f64;
    mean /= n;
    let mut max_se = 0.0_f64;
    for i in 0..p {
        for j in 0..p {
            let var = (mean_sq[(i, j)] / n - mean[(i, j)] * mean[(i, j)]).max(0.0);
            max_se = max_se.max((var / n).sqrt());
        }
    }
    FisherMatrix::from_matrix(mean, Some(max_se))
}

/// Resolves a model by its command-line name.
pub fn model_from_name(name: &str) -> Result<Box<dyn ParametricModel>> {
    match name {
        "exp" => Ok(Box::new(Exponential)),
        "normal" => Ok(Box::new(Normal)),
        "normal-scale-mix" => Ok(Box::new(NormalScaleMixture)),
        "bvn-mean" => Ok(Box::new(BivariateNormalMean)),
        "bvn-corr-mix" => Ok(Box::new(BivariateNormalCorrMixture)),
        "uniform-scale" | "uniform:theta" => Err(SpacingsError::Capability(
            "uniform(0, theta) is not registered: its support depends on the parameter, \
             which the spacings asymptotics exclude"
                .into(),
        )),
        other => Err(SpacingsError::Configuration(format!("unknown model '{other}'"))),
    }
}

/// Standard normal CDF.
pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
