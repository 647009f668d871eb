//! m-step spacings, the spacings statistic, generalized spacings estimation
//! and the univariate tests calibrated against chi-square limits.
//!
//! Writing M = floor((n+1)/m), the j-th m-step disjoint spacing under theta is
//! the F_theta mass between order statistics j*m steps apart, with the lower
//! boundary mapped to CDF value 0 and indices beyond n mapped to 1. The
//! statistic is the phi-average of the scaled spacings, S = mean phi(M D_j);
//! its infimum over theta is attained at the generalized spacings estimator
//! and the scaled gap at a hypothesized theta0 is the test statistic.

use crate::error::{Result, SpacingsError};
use crate::model::ParametricModel;
use crate::optimize::{minimize, minimize_constrained, OptimizeResult};
use crate::phi::{spacing_constants, PhiFunction};
use crate::report::{Decision, Diagnostics, TestReport};
use crate::special::{chisq_cdf, chisq_quantile_cached, ChiSquareSpec};

/// Spacings below this are floored before entering phi; continuous models
/// make exact ties measure-zero but real data may collide in floating point.
pub const SPACING_FLOOR: f64 = 1e-12;

/// Observations sorted ascending.
#[derive(Debug, Clone)]
pub struct SortedSample {
    values: Vec<f64>,
}

impl SortedSample {
    /// Sorts and validates the observations (all finite, at least two).
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(SpacingsError::Model(format!(
                "need at least 2 observations, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SpacingsError::Model("observations must all be finite".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The m-step disjoint spacings of one (sample, model, theta) triple.
#[derive(Debug, Clone)]
pub struct SpacingsVector {
    pub m: u32,
    /// D_j, floored at [`SPACING_FLOOR`].
    pub values: Vec<f64>,
    /// How many spacings were floored (ties or CDF underflow).
    pub floored: usize,
}

impl SpacingsVector {
    /// M = floor((n+1)/m).
    pub fn count(&self) -> usize {
        self.values.len()
    }
}

fn block_count(n: usize, m: u32) -> usize {
    (n + 1) / m as usize
}

fn check_step(n: usize, m: u32) -> Result<()> {
    if m < 1 || m as usize > n {
        return Err(SpacingsError::Configuration(format!(
            "step size m = {m} must satisfy 1 <= m <= n = {n}"
        )));
    }
    Ok(())
}

/// CDF evaluated at the order statistic with 1-based index `idx`, under the
/// boundary conventions F(X_0) = 0 and F(X_j) = 1 for j >= n + 1.
#[inline]
fn cdf_at_index(
    model: &dyn ParametricModel,
    theta: &[f64],
    sorted: &[f64],
    idx: usize,
) -> Result<f64> {
    if idx == 0 {
        Ok(0.0)
    } else if idx >= sorted.len() + 1 {
        Ok(1.0)
    } else {
        model.cdf(theta, sorted[idx - 1])
    }
}

/// D_j = F_theta(X_{jm}) - F_theta(X_{(j-1)m}) for j = 1..M.
pub fn compute_spacings(
    sample: &SortedSample,
    model: &dyn ParametricModel,
    theta: &[f64],
    m: u32,
) -> Result<SpacingsVector> {
    check_step(sample.n(), m)?;
    model.check_theta(theta)?;
    let big_m = block_count(sample.n(), m);
    let mut values = Vec::with_capacity(big_m);
    let mut floored = 0;
    let mut prev = 0.0;
    for j in 1..=big_m {
        let cur = cdf_at_index(model, theta, sample.values(), j * m as usize)?;
        let mut d = cur - prev;
        if d < SPACING_FLOOR {
            d = SPACING_FLOOR;
            floored += 1;
        }
        values.push(d);
        prev = cur;
    }
    Ok(SpacingsVector { m, values, floored })
}

/// S = (1/M) sum phi(M D_j).
pub fn spacing_statistic(spacings: &SpacingsVector, phi: &PhiFunction) -> Result<f64> {
    let big_m = spacings.count() as f64;
    let mut sum = 0.0;
    for d in &spacings.values {
        let v = phi.eval(big_m * d);
        if !v.is_finite() {
            return Err(SpacingsError::InvalidPhi(format!(
                "phi '{}' is not finite at scaled spacing {}",
                phi.label(),
                big_m * d
            )));
        }
        sum += v;
    }
    Ok(sum / big_m)
}

/// Single-pass evaluation of the statistic without materializing the
/// spacings; the optimizer calls this in its inner loop.
fn statistic_at(
    sample: &SortedSample,
    model: &dyn ParametricModel,
    theta: &[f64],
    phi: &PhiFunction,
    m: u32,
) -> Result<f64> {
    let big_m = block_count(sample.n(), m);
    let big_m_f = big_m as f64;
    let mut prev = 0.0;
    let mut sum = 0.0;
    for j in 1..=big_m {
        let cur = cdf_at_index(model, theta, sample.values(), j * m as usize)?;
        let d = (cur - prev).max(SPACING_FLOOR);
        sum += phi.eval(big_m_f * d);
        prev = cur;
    }
    if !sum.is_finite() {
        return Err(SpacingsError::InvalidPhi(format!(
            "phi '{}' produced a non-finite statistic",
            phi.label()
        )));
    }
    Ok(sum / big_m_f)
}

/// A fitted generalized spacings estimate.
#[derive(Debug, Clone)]
pub struct GseFit {
    pub theta: Vec<f64>,
    /// Value of the spacings objective at `theta`.
    pub objective: f64,
    pub optimizer: OptimizeResult,
    /// Floored spacings at the estimate.
    pub floored: usize,
}

fn perturbation_scales(model: &dyn ParametricModel, init: &[f64]) -> Vec<f64> {
    model
        .param_bounds()
        .iter()
        .zip(init)
        .map(|((lo, hi), x)| {
            let range = hi - lo;
            if range.is_finite() {
                0.05 * range
            } else {
                0.05 * (1.0 + x.abs())
            }
        })
        .collect()
}

fn multi_start_minimize(
    objective: &dyn Fn(&[f64]) -> f64,
    model: &dyn ParametricModel,
    init: &[f64],
) -> Result<OptimizeResult> {
    let bounds = model.param_bounds();
    let scales = perturbation_scales(model, init);
    let mut starts = vec![init.to_vec()];
    for k in 1..=4u32 {
        let mut s = init.to_vec();
        for (j, v) in s.iter_mut().enumerate() {
            let sign = if (k >> (j % 31)) & 1 == 0 { 1.0 } else { -1.0 };
            *v += sign * scales[j] * f64::from(k) / 4.0;
            *v = v.clamp(bounds[j].0, bounds[j].1);
        }
        starts.push(s);
    }

    let mut best: Option<OptimizeResult> = None;
    let mut evaluations = 0;
    let mut failures = Vec::new();
    for start in &starts {
        if !objective(start).is_finite() {
            continue;
        }
        match minimize(objective, start, &bounds) {
            Ok(mut r) => {
                evaluations += r.iterations;
                r.iterations = evaluations;
                if best.as_ref().is_none_or(|b| r.value < b.value) {
                    best = Some(r);
                }
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    match best {
        Some(mut b) => {
            b.iterations = evaluations;
            Ok(b)
        }
        None => Err(SpacingsError::EstimationFailure(format!(
            "no optimizer start converged: [{}]",
            failures.join("; ")
        ))),
    }
}

/// Generalized spacings estimator: the minimizer of theta -> S over the
/// parameter space, from `init` plus four perturbed starts.
pub fn estimate_gse(
    sample: &SortedSample,
    model: &dyn ParametricModel,
    phi: &PhiFunction,
    m: u32,
    init: &[f64],
) -> Result<GseFit> {
    check_step(sample.n(), m)?;
    model.check_theta(init)?;
    if model.param_dim() == 0 {
        return Err(SpacingsError::Configuration(
            "model has no free parameters to estimate".into(),
        ));
    }
    if !phi.is_calibratable() {
        return Err(SpacingsError::UnsupportedPhi(format!(
            "'{}' is restricted to descriptive statistics",
            phi.label()
        )));
    }
    let objective =
        |theta: &[f64]| statistic_at(sample, model, theta, phi, m).unwrap_or(f64::INFINITY);
    let optimizer = multi_start_minimize(&objective, model, init)?;
    let floored = compute_spacings(sample, model, &optimizer.minimizer, m)?.floored;
    Ok(GseFit {
        theta: optimizer.minimizer.clone(),
        objective: optimizer.value,
        optimizer,
        floored,
    })
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(SpacingsError::Configuration(format!(
            "significance level must lie in (0,1), got {level}"
        )));
    }
    Ok(())
}

fn chi_square_report(
    raw_t: f64,
    scaled: f64,
    df: u32,
    estimate: Vec<f64>,
    m: u32,
    phi_label: String,
    sigma2: f64,
    e2: f64,
    level: f64,
    diagnostics: Diagnostics,
) -> Result<TestReport> {
    let spec = ChiSquareSpec::central(df)?;
    let p_value = 1.0 - chisq_cdf(scaled, &spec)?;
    let critical = chisq_quantile_cached(1.0 - level, &spec)?;
    Ok(TestReport {
        schema: crate::report::SCHEMA_VERSION,
        raw_t,
        t_tilde: scaled,
        df,
        p_value,
        estimate,
        m,
        phi: phi_label,
        sigma2: Some(sigma2),
        e2: Some(e2),
        b_phi: None,
        sigma_q2: None,
        dimension: None,
        decision: if scaled > critical { Decision::Reject } else { Decision::Accept },
        level,
        diagnostics,
    })
}

/// Tests H0: eta = theta0 with the scaled infimum-gap statistic
/// 2n (S(theta0) - S(theta_hat)) / (e2 sigma^2), referred to chi-square with
/// p degrees of freedom.
pub fn test_simple(
    sample: &SortedSample,
    model: &dyn ParametricModel,
    theta0: &[f64],
    phi: &PhiFunction,
    m: u32,
    level: f64,
) -> Result<TestReport> {
    check_level(level)?;
    model.check_theta(theta0)?;
    let constants = spacing_constants(phi, m)?;
    let s0 = statistic_at(sample, model, theta0, phi, m)?;
    let fit = estimate_gse(sample, model, phi, m, theta0)?;
    let raw_t = s0 - fit.objective;
    if raw_t < -1e-8 {
        return Err(SpacingsError::InternalConsistency(format!(
            "gap statistic is negative ({raw_t}): optimizer failed to dominate theta0"
        )));
    }
    let n = sample.n() as f64;
    let scaled = 2.0 * n * raw_t.max(0.0) / (constants.e2 * constants.sigma2);
    chi_square_report(
        raw_t,
        scaled,
        model.param_dim() as u32,
        fit.theta.clone(),
        m,
        phi.label().to_owned(),
        constants.sigma2,
        constants.e2,
        level,
        Diagnostics {
            optimizer_evaluations: fit.optimizer.iterations,
            optimizer_restarts: fit.optimizer.restarts,
            stationarity: fit.optimizer.stationarity,
            floored_count: fit.floored,
            mc_reps: None,
        },
    )
}

/// Two-function variant: estimate with phi2, measure the gap with phi1,
/// scale by E[zeta^2 phi1''] and sigma^2 of the estimating phi2.
///
/// Unlike [`test_simple`], the gap here is not an infimum gap: S_phi1 at the
/// phi2-estimate may fall below S_phi1(theta0) in finite samples, so negative
/// values are clamped to zero rather than treated as failures.
pub fn test_two_phi(
    sample: &SortedSample,
    model: &dyn ParametricModel,
    theta0: &[f64],
    phi1: &PhiFunction,
    phi2: &PhiFunction,
    m: u32,
    level: f64,
) -> Result<TestReport> {
    check_level(level)?;
    model.check_theta(theta0)?;
    let c1 = spacing_constants(phi1, m)?;
    let c2 = spacing_constants(phi2, m)?;
    let s0 = statistic_at(sample, model, theta0, phi1, m)?;
    let fit = estimate_gse(sample, model, phi2, m, theta0)?;
    let s_at_fit = statistic_at(sample, model, &fit.theta, phi1, m)?;
    let raw_t = s0 - s_at_fit;
    let n = sample.n() as f64;
    let scaled = 2.0 * n * raw_t.max(0.0) / (c1.e2 * c2.sigma2);
    let label = if phi1.label() == phi2.label() {
        phi1.label().to_owned()
    } else {
        format!("{}/{}", phi1.label(), phi2.label())
    };
    chi_square_report(
        raw_t,
        scaled,
        model.param_dim() as u32,
        fit.theta.clone(),
        m,
        label,
        c2.sigma2,
        c1.e2,
        level,
        Diagnostics {
            optimizer_evaluations: fit.optimizer.iterations,
            optimizer_restarts: fit.optimizer.restarts,
            stationarity: fit.optimizer.stationarity,
            floored_count: fit.floored,
            mc_reps: None,
        },
    )
}

/// Affine null constraint A theta = c with full row rank.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

impl AffineConstraint {
    /// Fixes a single coordinate: theta[index] = value.
    pub fn fix_coordinate(p: usize, index: usize, value: f64) -> Self {
        let mut row = vec![0.0; p];
        row[index] = 1.0;
        Self { a: vec![row], c: vec![value] }
    }

    pub fn rank_rows(&self) -> usize {
        self.a.len()
    }
}

/// Composite test of H0: A eta = c by restricted versus unrestricted
/// generalized spacings fits; the scaled gap is referred to chi-square with
/// r degrees of freedom.
pub fn test_composite(
    sample: &SortedSample,
    model: &dyn ParametricModel,
    constraint: &AffineConstraint,
    phi: &PhiFunction,
    m: u32,
    level: f64,
    init: Option<&[f64]>,
) -> Result<TestReport> {
    check_level(level)?;
    check_step(sample.n(), m)?;
    let constants = spacing_constants(phi, m)?;
    let p = model.param_dim();
    let r = constraint.rank_rows();
    if r > p {
        return Err(SpacingsError::Constraint(format!(
            "constraint has {r} rows but the model has {p} parameters"
        )));
    }
    let start = match init {
        Some(v) => {
            model.check_theta(v)?;
            v.to_vec()
        }
        None => model.default_start(sample.values()),
    };
    let objective =
        |theta: &[f64]| statistic_at(sample, model, theta, phi, m).unwrap_or(f64::INFINITY);
    let restricted =
        minimize_constrained(&objective, &constraint.a, &constraint.c, &start, &model.param_bounds())?;

    // Starting the free fit from the restricted optimum guarantees the gap
    // is nonnegative up to optimizer tolerance.
    let fit = estimate_gse(sample, model, phi, m, &restricted.minimizer)?;
    let raw_t = restricted.value - fit.objective;
    if raw_t < -1e-8 {
        return Err(SpacingsError::InternalConsistency(format!(
            "restricted optimum beats the unrestricted one by {raw_t}"
        )));
    }
    let n = sample.n() as f64;
    let scaled = 2.0 * n * raw_t.max(0.0) / (constants.e2 * constants.sigma2);
    chi_square_report(
        raw_t,
        scaled,
        r as u32,
        fit.theta.clone(),
        m,
        phi.label().to_owned(),
        constants.sigma2,
        constants.e2,
        level,
        Diagnostics {
            optimizer_evaluations: fit.optimizer.iterations + restricted.iterations,
            optimizer_restarts: fit.optimizer.restarts + restricted.restarts,
            stationarity: fit.optimizer.stationarity,
            floored_count: fit.floored,
            mc_reps: None,
        },
    )
}

/// Nonparametric uniformity reduction: tests H0: F = F0 for a fully
/// specified continuous F0 by transforming to U_i = F0(X_i) and referring
/// S - phi(1) to its simulated null distribution (no chi-square limit is
/// claimed here).
pub fn test_uniformity(
    sample: &SortedSample,
    f0: &dyn Fn(f64) -> f64,
    phi: &PhiFunction,
    m: u32,
    mc_reps: usize,
    level: f64,
    seed: u64,
) -> Result<TestReport> {
    check_level(level)?;
    check_step(sample.n(), m)?;
    if mc_reps < 100 {
        return Err(SpacingsError::Configuration(format!(
            "uniformity calibration needs at least 100 Monte-Carlo replicates, got {mc_reps}"
        )));
    }
    let n = sample.n();
    let mut u = Vec::with_capacity(n);
    let mut prev = f64::NEG_INFINITY;
    for &x in sample.values() {
        let v = f0(x);
        if !(0.0..=1.0).contains(&v) || v < prev {
            return Err(SpacingsError::Model(format!(
                "F0 is not a CDF on the data range (F0({x}) = {v})"
            )));
        }
        prev = v;
        u.push(v);
    }

    let uniform = crate::model::Uniform01;
    let observed = uniformity_statistic(&u, &uniform, phi, m)?;

    let mut at_least = 0usize;
    for b in 0..mc_reps {
        let mut rng = crate::rng::stream(seed, b as u64, "uniformity-null");
        let mut sim = uniform.sample(&[], n, &mut rng)?;
        sim.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let t = uniformity_statistic(&sim, &uniform, phi, m)?;
        if t >= observed {
            at_least += 1;
        }
    }
    let p_value = (1.0 + at_least as f64) / (mc_reps as f64 + 1.0);
    Ok(TestReport {
        schema: crate::report::SCHEMA_VERSION,
        raw_t: observed,
        t_tilde: observed,
        df: 0,
        p_value,
        estimate: Vec::new(),
        m,
        phi: phi.label().to_owned(),
        sigma2: None,
        e2: None,
        b_phi: None,
        sigma_q2: None,
        dimension: None,
        decision: if p_value <= level { Decision::Reject } else { Decision::Accept },
        level,
        diagnostics: Diagnostics { mc_reps: Some(mc_reps), ..Default::default() },
    })
}

fn uniformity_statistic(
    sorted_u: &[f64],
    uniform: &crate::model::Uniform01,
    phi: &PhiFunction,
    m: u32,
) -> Result<f64> {
    let sample = SortedSample { values: sorted_u.to_vec() };
    Ok(statistic_at(&sample, uniform, &[], phi, m)? - phi.eval(1.0))
}

/// Convenience wrapper: uniformity test against a named model at a fixed
/// parameter.
pub fn test_uniformity_model(
    sample: &SortedSample,
    model: &dyn ParametricModel,
    theta: &[f64],
    phi: &PhiFunction,
    m: u32,
    mc_reps: usize,
    level: f64,
    seed: u64,
) -> Result<TestReport> {
    model.check_theta(theta)?;
    let f0 = |x: f64| model.cdf(theta, x).unwrap_or(f64::NAN);
    test_uniformity(sample, &f0, phi, m, mc_reps, level, seed)
}

/// Asymptotic power against the local alternative theta0 + Delta/sqrt(n):
/// 1 - F_{chi2_p(delta)}(c_alpha) with delta = Delta' I(theta0) Delta / sigma^2.
pub fn local_power(
    model: &dyn ParametricModel,
    theta0: &[f64],
    delta: &[f64],
    phi: &PhiFunction,
    m: u32,
    level: f64,
) -> Result<f64> {
    check_level(level)?;
    model.check_theta(theta0)?;
    if delta.len() != model.param_dim() {
        return Err(SpacingsError::Configuration(format!(
            "Delta has dimension {}, model has {}",
            delta.len(),
            model.param_dim()
        )));
    }
    let constants = spacing_constants(phi, m)?;
    let info = model.fisher_information(theta0)?;
    let noncentrality = info.quadratic_form(delta) / constants.sigma2;
    let p = model.param_dim() as u32;
    let critical = chisq_quantile_cached(1.0 - level, &ChiSquareSpec::central(p)?)?;
    let alt = ChiSquareSpec::new(p, noncentrality)?;
    Ok(1.0 - chisq_cdf(critical, &alt)?)
}

/// Noncentrality of the local alternative law for a univariate test.
pub fn noncentrality(
    model: &dyn ParametricModel,
    theta0: &[f64],
    delta: &[f64],
    phi: &PhiFunction,
    m: u32,
) -> Result<f64> {
    let constants = spacing_constants(phi, m)?;
    let info = model.fisher_information(theta0)?;
    Ok(info.quadratic_form(delta) / constants.sigma2)
}
