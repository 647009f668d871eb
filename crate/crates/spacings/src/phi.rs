//! Convex functions driving the spacings statistics, together with the
//! calibration constants derived from them.
//!
//! Every statistic in this crate has the shape `mean of phi(scaled spacing)`;
//! the asymptotic calibration of the resulting tests only needs a handful of
//! Gamma-weighted moments of phi and its derivatives. Those moments are
//! evaluated by [`crate::special::gamma_expectation`] and cached per
//! `(phi, m)` because the Monte-Carlo harness requests the same configuration
//! millions of times.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Result, SpacingsError};
use crate::special::gamma_expectation;

type RealFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

struct PhiInner {
    label: String,
    eval: RealFn,
    d1: RealFn,
    d2: RealFn,
    d3: RealFn,
    /// Derivative of q(x) = x phi'(x), supplied analytically so that exact
    /// cancellations (q' identically zero for -log x) survive in floating
    /// point.
    q_prime: RealFn,
    /// Limit of q(x) = x phi'(x) as x -> 0+, `None` when divergent.
    q_zero: Option<f64>,
    /// False for functions outside assumption-backed calibration (currently
    /// the |x-1|^r family, whose curvature vanishes at x = 1).
    calibratable: bool,
}

/// A convex function phi on (0, oo) with derivatives up to order three.
#[derive(Clone)]
pub struct PhiFunction {
    inner: Arc<PhiInner>,
}

impl fmt::Debug for PhiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhiFunction").field("label", &self.inner.label).finish()
    }
}

impl PhiFunction {
    /// Builds a phi from closures. The label must uniquely identify the
    /// function: it keys the constants cache.
    pub fn custom(
        label: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d3: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let d1_arc = Arc::new(d1);
        let d2_arc = Arc::new(d2);
        let d1c = Arc::clone(&d1_arc);
        let d2c = Arc::clone(&d2_arc);
        Self {
            inner: Arc::new(PhiInner {
                label: label.into(),
                eval: Box::new(eval),
                d1: Box::new(move |x| d1_arc(x)),
                d2: Box::new(move |x| d2_arc(x)),
                d3: Box::new(d3),
                q_prime: Box::new(move |x| d1c(x) + x * d2c(x)),
                q_zero: None,
                calibratable: true,
            }),
        }
    }

    pub fn label(&self) -> &str {
        &self.inner.label
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.inner.eval)(x)
    }

    pub fn d1(&self, x: f64) -> f64 {
        (self.inner.d1)(x)
    }

    pub fn d2(&self, x: f64) -> f64 {
        (self.inner.d2)(x)
    }

    pub fn d3(&self, x: f64) -> f64 {
        (self.inner.d3)(x)
    }

    /// q(x) = x phi'(x).
    pub fn q(&self, x: f64) -> f64 {
        x * self.d1(x)
    }

    /// Analytic derivative of q.
    pub fn q_prime(&self, x: f64) -> f64 {
        (self.inner.q_prime)(x)
    }

    /// Analytic limit q(0+), when finite.
    pub fn q_zero(&self) -> Option<f64> {
        self.inner.q_zero
    }

    pub fn is_calibratable(&self) -> bool {
        self.inner.calibratable
    }

    /// Checks derivative consistency by central finite differences and strict
    /// convexity at the probe points used throughout the crate.
    pub fn validate(&self) -> Result<()> {
        let h = 1e-6;
        for x in [0.5, 1.0, 2.0] {
            let fd1 = (self.eval(x + h) - self.eval(x - h)) / (2.0 * h);
            let fd2 = (self.eval(x + h) - 2.0 * self.eval(x) + self.eval(x - h)) / (h * h);
            let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
            if rel(fd1, self.d1(x)) > 1e-5 || rel(fd2, self.d2(x)) > 1e-3 {
                return Err(SpacingsError::InvalidPhi(format!(
                    "derivatives of '{}' inconsistent with finite differences at x={x}",
                    self.label()
                )));
            }
        }
        for x in [0.5, 2.0] {
            if self.d2(x) <= 0.0 {
                return Err(SpacingsError::InvalidPhi(format!(
                    "'{}' is not strictly convex (phi''({x}) <= 0)",
                    self.label()
                )));
            }
        }
        Ok(())
    }

    fn with_q(mut self, q_prime: impl Fn(f64) -> f64 + Send + Sync + 'static, q_zero: Option<f64>) -> Self {
        let inner = Arc::get_mut(&mut self.inner).expect("phi builder must own its inner");
        inner.q_prime = Box::new(q_prime);
        inner.q_zero = q_zero;
        self
    }

    fn non_calibratable(mut self) -> Self {
        Arc::get_mut(&mut self.inner).expect("phi builder must own its inner").calibratable = false;
        self
    }

    /// Resolves a phi by its command-line name: `neglog`, `greenwood`,
    /// `xlogx`, `neglog1`, `gamma:<value>`, `kimball:<r>` (r > 1) or
    /// `rao:<r>` (r > 3, descriptive statistics only).
    pub fn from_name(name: &str) -> Result<Self> {
        let phi = if let Some(v) = name.strip_prefix("gamma:") {
            let g: f64 = v
                .parse()
                .map_err(|_| SpacingsError::Configuration(format!("bad gamma value in phi name '{name}'")))?;
            make_phi_gamma(g)
        } else if let Some(v) = name.strip_prefix("kimball:") {
            let r: f64 = v
                .parse()
                .map_err(|_| SpacingsError::Configuration(format!("bad exponent in phi name '{name}'")))?;
            phi_kimball(r)?
        } else if let Some(v) = name.strip_prefix("rao:") {
            let r: f64 = v
                .parse()
                .map_err(|_| SpacingsError::Configuration(format!("bad exponent in phi name '{name}'")))?;
            phi_rao(r)?
        } else {
            match name {
                "neglog" => phi_neglog(),
                "greenwood" => phi_greenwood(),
                "xlogx" => phi_xlogx(),
                "neglog1" => phi_neglog_linear(),
                other => {
                    return Err(SpacingsError::Configuration(format!("unknown phi name '{other}'")))
                }
            }
        };
        Ok(phi)
    }
}

/// phi(x) = -log x. The maximum-spacings-product choice; its tests are
/// asymptotically locally most powerful for fixed m.
pub fn phi_neglog() -> PhiFunction {
    PhiFunction::custom(
        "neglog",
        |x: f64| -x.ln(),
        |x| -1.0 / x,
        |x| 1.0 / (x * x),
        |x| -2.0 / (x * x * x),
    )
    .with_q(|_| 0.0, Some(-1.0))
}

/// phi(x) = x^2 (Greenwood).
pub fn phi_greenwood() -> PhiFunction {
    PhiFunction::custom("greenwood", |x: f64| x * x, |x| 2.0 * x, |_| 2.0, |_| 0.0)
        .with_q(|x| 4.0 * x, Some(0.0))
}

/// phi(x) = x log x (relative entropy).
pub fn phi_xlogx() -> PhiFunction {
    PhiFunction::custom(
        "xlogx",
        |x: f64| x * x.ln(),
        |x| x.ln() + 1.0,
        |x| 1.0 / x,
        |x| -1.0 / (x * x),
    )
    .with_q(|x| x.ln() + 2.0, Some(0.0))
}

/// phi(x) = -log x + x - 1: nonnegative with minimum at 1, the standard
/// choice for nearest-neighbour-ball statistics.
pub fn phi_neglog_linear() -> PhiFunction {
    PhiFunction::custom(
        "neglog1",
        |x: f64| -x.ln() + x - 1.0,
        |x| 1.0 - 1.0 / x,
        |x| 1.0 / (x * x),
        |x| -2.0 / (x * x * x),
    )
    .with_q(|_| 1.0, Some(-1.0))
}

/// The power divergence family: (x^{gamma+1} - 1)/(gamma (gamma+1)) with the
/// limits -log x at gamma = -1 and x log x at gamma = 0.
pub fn make_phi_gamma(gamma: f64) -> PhiFunction {
    if gamma == -1.0 {
        return phi_neglog();
    }
    if gamma == 0.0 {
        return phi_xlogx();
    }
    let g = gamma;
    let c = 1.0 / (g * (1.0 + g));
    let q_zero = if g > -1.0 { Some(0.0) } else { None };
    PhiFunction::custom(
        format!("gamma:{g}"),
        move |x: f64| c * (x.powf(g + 1.0) - 1.0),
        move |x| x.powf(g) / g,
        move |x| x.powf(g - 1.0),
        move |x| (g - 1.0) * x.powf(g - 2.0),
    )
    .with_q(move |x| (g + 1.0) / g * x.powf(g), q_zero)
}

/// phi(x) = x^r (Kimball). Strict convexity needs r > 1.
pub fn phi_kimball(r: f64) -> Result<PhiFunction> {
    if !(r > 1.0) {
        return Err(SpacingsError::InvalidPhi(format!(
            "kimball exponent must be > 1 for strict convexity, got {r}"
        )));
    }
    Ok(PhiFunction::custom(
        format!("kimball:{r}"),
        move |x: f64| x.powf(r),
        move |x| r * x.powf(r - 1.0),
        move |x| r * (r - 1.0) * x.powf(r - 2.0),
        move |x| r * (r - 1.0) * (r - 2.0) * x.powf(r - 3.0),
    )
    .with_q(move |x| r * r * x.powf(r - 1.0), Some(0.0)))
}

/// phi(x) = |x-1|^r. Three continuous derivatives need r > 3, and even then
/// the curvature vanishes at x = 1, so the function is exposed for
/// descriptive statistics only and rejected by every calibrated path.
pub fn phi_rao(r: f64) -> Result<PhiFunction> {
    if !(r > 3.0) {
        return Err(SpacingsError::InvalidPhi(format!(
            "|x-1|^r needs r > 3 for three continuous derivatives, got {r}"
        )));
    }
    Ok(PhiFunction::custom(
        format!("rao:{r}"),
        move |x: f64| (x - 1.0).abs().powf(r),
        move |x| r * (x - 1.0).abs().powf(r - 1.0) * (x - 1.0).signum(),
        move |x| r * (r - 1.0) * (x - 1.0).abs().powf(r - 2.0),
        move |x| r * (r - 1.0) * (r - 2.0) * (x - 1.0).abs().powf(r - 3.0) * (x - 1.0).signum(),
    )
    .non_calibratable())
}

/// Gamma-moment constants of one (phi, m) pair.
///
/// `sigma2` is the variance inflation of the spacings estimator relative to
/// the Fisher bound; it equals 1 exactly when phi is -log x up to affine
/// terms, and decreases towards 1 as m grows for the power family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingConstants {
    pub m: u32,
    /// E[zeta phi'(zeta)].
    pub mu_phi_m: f64,
    /// E[zeta^2 phi''(zeta)].
    pub e2: f64,
    /// Var[zeta phi'(zeta)].
    pub var_q: f64,
    /// E[zeta^2 phi'(zeta)].
    pub e_cross: f64,
    /// Variance inflation constant; >= 1.
    pub sigma2: f64,
}

/// Constants of phi for the nearest-neighbour-ball statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvPhiConstants {
    /// E[Z^2 phi''(Z)] with Z standard exponential.
    pub b_phi: f64,
    /// q(0+), with q(x) = x phi'(x).
    pub q0: f64,
}

/// Computes (and caches) the calibration constants of `phi` at step size `m`.
pub fn spacing_constants(phi: &PhiFunction, m: u32) -> Result<SpacingConstants> {
    if m < 1 {
        return Err(SpacingsError::Configuration("step size m must be >= 1".into()));
    }
    if !phi.is_calibratable() {
        return Err(SpacingsError::UnsupportedPhi(format!(
            "'{}' is excluded from calibrated statistics",
            phi.label()
        )));
    }
    static CACHE: OnceLock<Mutex<HashMap<(String, u32), SpacingConstants>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (phi.label().to_owned(), m);
    if let Some(hit) = cache.lock().expect("constants cache poisoned").get(&key) {
        return Ok(*hit);
    }

    let mu = gamma_expectation(&|z| z * phi.d1(z), m)?;
    let e2 = gamma_expectation(&|z| z * z * phi.d2(z), m)?;
    let q_sq = gamma_expectation(&|z| (z * phi.d1(z)).powi(2), m)?;
    let e_cross = gamma_expectation(&|z| z * z * phi.d1(z), m)?;
    if e2 <= 0.0 {
        return Err(SpacingsError::InvalidPhi(format!(
            "E[zeta^2 phi''] = {e2} <= 0 for '{}'",
            phi.label()
        )));
    }
    let var_q = q_sq - mu * mu;
    let mf = f64::from(m);
    let sigma2 = (mf * var_q + (2.0 * mf + 1.0) * mu * mu - 2.0 * mf * mu * e_cross) / (e2 * e2);
    let constants = SpacingConstants { m, mu_phi_m: mu, e2, var_q, e_cross, sigma2 };
    cache.lock().expect("constants cache poisoned").insert(key, constants);
    Ok(constants)
}

/// Computes (and caches) the nearest-neighbour-ball constants of `phi`.
pub fn mv_constants(phi: &PhiFunction) -> Result<MvPhiConstants> {
    if !phi.is_calibratable() {
        return Err(SpacingsError::UnsupportedPhi(format!(
            "'{}' is excluded from calibrated statistics",
            phi.label()
        )));
    }
    let q0 = phi.q_zero().ok_or_else(|| {
        SpacingsError::UnsupportedPhi(format!("x phi'(x) diverges at 0 for '{}'", phi.label()))
    })?;
    static CACHE: OnceLock<Mutex<HashMap<String, MvPhiConstants>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("constants cache poisoned").get(phi.label()) {
        return Ok(*hit);
    }
    let b_phi = gamma_expectation(&|z| z * z * phi.d2(z), 1)?;
    if b_phi <= 0.0 {
        return Err(SpacingsError::InvalidPhi(format!(
            "E[Z^2 phi''(Z)] = {b_phi} <= 0 for '{}'",
            phi.label()
        )));
    }
    let constants = MvPhiConstants { b_phi, q0 };
    cache
        .lock()
        .expect("constants cache poisoned")
        .insert(phi.label().to_owned(), constants);
    Ok(constants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn phi_gamma_limit_cases() {
        let neglog = make_phi_gamma(-1.0);
        assert_abs_diff_eq!(neglog.eval(1.0), 0.0);
        assert_abs_diff_eq!(neglog.d1(1.0), -1.0);
        assert_abs_diff_eq!(neglog.d2(1.0), 1.0);

        let xlogx = make_phi_gamma(0.0);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(xlogx.eval(e), e, epsilon = 1e-14);
        assert_abs_diff_eq!(xlogx.d1(e), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(xlogx.d2(e), 1.0 / e, epsilon = 1e-14);
    }

    #[test]
    fn phi_gamma_one_is_affine_greenwood() {
        // (x^2 - 1)/2 = x^2/2 - 1/2.
        let p = make_phi_gamma(1.0);
        for x in [0.3, 1.0, 2.5] {
            assert_abs_diff_eq!(p.eval(x), (x * x - 1.0) / 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(p.d2(x), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn named_set_validates() {
        for name in ["neglog", "greenwood", "xlogx", "neglog1", "gamma:0.5", "gamma:-0.5", "kimball:3", "rao:4"] {
            let phi = PhiFunction::from_name(name).unwrap();
            phi.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(PhiFunction::from_name("nope").is_err());
        assert!(PhiFunction::from_name("gamma:x").is_err());
        // Non-smooth or non-convex exponents are rejected at construction.
        assert!(PhiFunction::from_name("rao:2").is_err());
        assert!(PhiFunction::from_name("kimball:0.5").is_err());
    }

    #[test]
    fn neglog_constants_are_exactly_calibrated() {
        for m in [1u32, 2, 3, 10] {
            let c = spacing_constants(&phi_neglog(), m).unwrap();
            assert_abs_diff_eq!(c.sigma2, 1.0, epsilon = 1e-8);
            assert_abs_diff_eq!(c.e2, 1.0, epsilon = 1e-8);
            assert_abs_diff_eq!(c.mu_phi_m, -1.0, epsilon = 1e-8);
            assert!(c.var_q.abs() < 1e-10);
        }
    }

    #[test]
    fn greenwood_constants_match_exponential_moments() {
        // E Z^2 = 2, E Z^3 = 6, E Z^4 = 24 give (80 + 48 - 96)/16 = 2.
        let c = spacing_constants(&phi_greenwood(), 1).unwrap();
        assert_abs_diff_eq!(c.sigma2, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(c.mu_phi_m, 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(c.e_cross, 12.0, epsilon = 1e-7);
        // And m=2 has the closed form 15/9.
        let c2 = spacing_constants(&phi_greenwood(), 2).unwrap();
        assert_abs_diff_eq!(c2.sigma2, 5.0 / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn xlogx_constants_match_digamma_closed_forms() {
        // Frozen from Gamma-function derivatives at m = 1:
        // mu = 2 - gammaE, e_cross = 5 - 2 gammaE, e2 = 1.
        let c = spacing_constants(&phi_xlogx(), 1).unwrap();
        assert_abs_diff_eq!(c.mu_phi_m, 1.422_784_335_098_467_1, epsilon = 1e-9);
        assert_abs_diff_eq!(c.e_cross, 3.845_568_670_196_934_3, epsilon = 1e-8);
        assert_abs_diff_eq!(c.e2, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.var_q, 6.159_752_068_094_974, epsilon = 1e-7);
        assert_abs_diff_eq!(c.sigma2, 1.289_868_133_696_452_9, epsilon = 1e-7);
    }

    #[test]
    fn sigma2_never_below_one() {
        let named = ["neglog", "greenwood", "xlogx", "neglog1", "gamma:-0.5", "gamma:0.5", "gamma:2", "kimball:3"];
        for name in named {
            let phi = PhiFunction::from_name(name).unwrap();
            for m in 1..=10 {
                let c = spacing_constants(&phi, m).unwrap();
                assert!(c.sigma2 >= 1.0 - 1e-6, "{name} m={m}: sigma2 = {}", c.sigma2);
            }
        }
    }

    #[test]
    fn sigma2_decreases_towards_one_in_m() {
        for gamma in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let phi = make_phi_gamma(gamma);
            let mut prev = f64::INFINITY;
            for m in [1u32, 2, 5, 10, 25, 50] {
                let c = spacing_constants(&phi, m).unwrap();
                assert!(
                    c.sigma2 <= prev + 1e-9,
                    "gamma={gamma} m={m}: sigma2 {} > previous {prev}",
                    c.sigma2
                );
                prev = c.sigma2;
            }
            assert!(prev < 1.05, "gamma={gamma}: sigma2 at m=50 still {prev}");
        }
    }

    #[test]
    fn mv_constants_examples() {
        // -log x + x - 1: Z^2 phi'' = 1 so b = 1; q = x - 1 so q0 = -1.
        let c = mv_constants(&phi_neglog_linear()).unwrap();
        assert_abs_diff_eq!(c.b_phi, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.q0, -1.0);

        let c = mv_constants(&phi_neglog()).unwrap();
        assert_abs_diff_eq!(c.b_phi, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.q0, -1.0);

        // x log x: Z^2 phi''(Z) = Z, so b = E Z = 1.
        let c = mv_constants(&phi_xlogx()).unwrap();
        assert_abs_diff_eq!(c.b_phi, 1.0, epsilon = 1e-9);

        // gamma < -1 has divergent q near 0.
        assert!(matches!(
            mv_constants(&make_phi_gamma(-1.5)),
            Err(SpacingsError::UnsupportedPhi(_))
        ));
    }

    #[test]
    fn rao_is_rejected_by_calibrated_paths() {
        let rao = phi_rao(4.0).unwrap();
        assert!(matches!(spacing_constants(&rao, 1), Err(SpacingsError::UnsupportedPhi(_))));
        assert!(matches!(mv_constants(&rao), Err(SpacingsError::UnsupportedPhi(_))));
        // Descriptive evaluation still works.
        assert_abs_diff_eq!(rao.eval(2.0), 1.0);
    }

    #[test]
    fn kimball_below_threshold_fails_calibration_gate() {
        // r in (1, 2) keeps d2 > 0 but E[zeta^2 phi'''] style moments still
        // exist; construction succeeds and calibration works.
        let phi = phi_kimball(1.5).unwrap();
        let c = spacing_constants(&phi, 1).unwrap();
        assert!(c.sigma2 >= 1.0 - 1e-6);
    }

    #[test]
    fn q_prime_of_neglog_is_identically_zero() {
        let phi = phi_neglog();
        for x in [0.1, 0.37, 1.0, 3.0, 10.0] {
            assert_eq!(phi.q_prime(x), 0.0);
        }
    }
}
