//! Jump coefficients c(s, z, x), their envelopes, the small-jump drift and
//! variance functionals, and the smooth test functions used for weak errors.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measures::{LevyMeasureModel, MeasureFamily};

pub type CoefFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Envelope c̄(z) ≥ sup_{s,x} |c(s,z,x)| in μ-coordinates.
#[derive(Clone)]
pub enum Envelope {
    /// c̄(z) = scale·z.
    Linear { scale: f64 },
    /// Arbitrary envelope with c̄(z) ≤ K·z^order near 0.
    Custom { f: ScalarFn, order: f64 },
}

impl Envelope {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, order: f64) -> Self {
        Envelope::Custom {
            f: Arc::new(f),
            order,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Envelope::Linear { scale } => scale * z,
            Envelope::Custom { f, .. } => f(z),
        }
    }

    /// Power of z that the envelope decays with at the origin.
    pub fn order(&self) -> f64 {
        match self {
            Envelope::Linear { .. } => 1.0,
            Envelope::Custom { order, .. } => *order,
        }
    }
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Envelope::Linear { scale } => write!(f, "Linear({scale})"),
            Envelope::Custom { order, .. } => write!(f, "Custom(order={order})"),
        }
    }
}

/// σ with c(s,z,x) = σ(x)·z and bounds σ̲ ≤ σ ≤ σ̄.
#[derive(Clone)]
pub struct SigmaFactor {
    pub sigma: ScalarFn,
    pub dsigma: ScalarFn,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone)]
pub struct JumpCoefficient {
    name: String,
    c: CoefFn,
    dx: Option<CoefFn>,
    dz: Option<CoefFn>,
    envelope: Envelope,
    factor: Option<SigmaFactor>,
}

impl fmt::Debug for JumpCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpCoefficient")
            .field("name", &self.name)
            .field("envelope", &self.envelope)
            .field("factorized", &self.factor.is_some())
            .finish()
    }
}

impl JumpCoefficient {
    /// c(s,z,x) = σ(x)·z with envelope c̄(z) = max(|σ̲|, |σ̄|)·z.
    pub fn factorized(
        name: impl Into<String>,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dsigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lower: f64,
        upper: f64,
    ) -> Self {
        let sigma: ScalarFn = Arc::new(sigma);
        let dsigma: ScalarFn = Arc::new(dsigma);
        let (s1, s2, s3) = (sigma.clone(), dsigma.clone(), sigma.clone());
        Self {
            name: name.into(),
            c: Arc::new(move |_s, z, x| s1(x) * z),
            dx: Some(Arc::new(move |_s, z, x| s2(x) * z)),
            dz: Some(Arc::new(move |_s, _z, x| s3(x))),
            envelope: Envelope::Linear {
                scale: lower.abs().max(upper.abs()),
            },
            factor: Some(SigmaFactor {
                sigma,
                dsigma,
                lower,
                upper,
            }),
        }
    }

    pub fn general(
        name: impl Into<String>,
        c: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        envelope: Envelope,
    ) -> Self {
        Self {
            name: name.into(),
            c: Arc::new(c),
            dx: None,
            dz: None,
            envelope,
            factor: None,
        }
    }

    pub fn with_dx(mut self, dx: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.dx = Some(Arc::new(dx));
        self
    }

    pub fn with_dz(mut self, dz: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.dz = Some(Arc::new(dz));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, s: f64, z: f64, x: f64) -> f64 {
        (self.c)(s, z, x)
    }

    pub fn dx(&self, s: f64, z: f64, x: f64) -> Option<f64> {
        self.dx.as_ref().map(|d| d(s, z, x))
    }

    pub fn dz(&self, s: f64, z: f64, x: f64) -> Option<f64> {
        self.dz.as_ref().map(|d| d(s, z, x))
    }

    pub fn envelope(&self) -> &Envelope {
        &self.envelope
    }

    pub fn factor(&self) -> Option<&SigmaFactor> {
        self.factor.as_ref()
    }

    pub fn sigma_bounds(&self) -> Option<(f64, f64)> {
        self.factor.as_ref().map(|f| (f.lower, f.upper))
    }
}

/// Names accepted by [`coefficient_preset`].
pub const COEFFICIENT_PRESETS: &[&str] = &["sigma-tanh", "identity", "zero"];

/// Builds a named coefficient: `sigma-tanh` (σ = 2 + tanh x, bounds [1,3]),
/// `identity` (additive c = z) or `zero` (c ≡ 0).
pub fn coefficient_preset(name: &str) -> Result<JumpCoefficient> {
    match name {
        "sigma-tanh" => Ok(JumpCoefficient::factorized(
            name,
            |x: f64| 2.0 + x.tanh(),
            |x: f64| {
                let sech = 1.0 / x.cosh();
                sech * sech
            },
            1.0,
            3.0,
        )),
        "identity" => Ok(JumpCoefficient::factorized(
            name,
            |_| 1.0,
            |_| 0.0,
            1.0,
            1.0,
        )),
        "zero" => Ok(JumpCoefficient::factorized(
            name,
            |_| 0.0,
            |_| 0.0,
            0.0,
            0.0,
        )),
        _ => Err(Error::Lookup {
            kind: "coefficient preset",
            name: name.to_string(),
        }),
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("eps must lie in (0,1], got {eps}")))
    }
}

fn closed_form_available(coef: &JumpCoefficient, measure: &LevyMeasureModel) -> bool {
    coef.factor.is_some() && matches!(measure.family(), MeasureFamily::PowerLaw { .. })
}

/// b_ε(s,x) = ∫_{(0,ε]} c(s,z,x) μ(dz).
pub fn drift_b_eps(
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
    s: f64,
    x: f64,
    eps: f64,
) -> Result<f64> {
    check_eps(eps)?;
    match coef.factor() {
        Some(f) if closed_form_available(coef, measure) => {
            Ok((f.sigma)(x) * measure.moment(1.0, eps)?)
        }
        _ => drift_b_eps_by_quadrature(coef, measure, s, x, eps),
    }
}

pub fn drift_b_eps_by_quadrature(
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
    s: f64,
    x: f64,
    eps: f64,
) -> Result<f64> {
    check_eps(eps)?;
    measure.integrate_mu_near_zero(|z| coef.eval(s, z, x), coef.envelope.order(), eps)
}

/// a_ε(s,x) = ∫_{(0,ε]} |c(s,z,x)|² μ(dz).
pub fn diffusion_a_eps(
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
    s: f64,
    x: f64,
    eps: f64,
) -> Result<f64> {
    check_eps(eps)?;
    match coef.factor() {
        Some(f) if closed_form_available(coef, measure) => {
            let sig = (f.sigma)(x);
            Ok(sig * sig * measure.moment(2.0, eps)?)
        }
        _ => diffusion_a_eps_by_quadrature(coef, measure, s, x, eps),
    }
}

pub fn diffusion_a_eps_by_quadrature(
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
    s: f64,
    x: f64,
    eps: f64,
) -> Result<f64> {
    check_eps(eps)?;
    measure.integrate_mu_near_zero(
        |z| {
            let c = coef.eval(s, z, x);
            c * c
        },
        2.0 * coef.envelope.order(),
        eps,
    )
}

/// A smooth test function with analytic derivatives and declared norms
/// ‖φ‖_{l,∞} = Σ_{j≤l} sup|φ^{(j)}|.
#[derive(Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub f: fn(f64) -> f64,
    pub d1: fn(f64) -> f64,
    pub d2: fn(f64) -> f64,
    pub d3: fn(f64) -> f64,
    pub norm1: f64,
    pub norm3: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({})", self.name)
    }
}

impl TestFunction {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, order: usize, x: f64) -> f64 {
        match order {
            0 => (self.f)(x),
            1 => (self.d1)(x),
            2 => (self.d2)(x),
            3 => (self.d3)(x),
            _ => panic!("derivatives above order 3 are not provided"),
        }
    }

    /// Σ_{j≤order} max over an n-point grid on [lo, hi] of |φ^{(j)}|.
    pub fn sampled_norm(&self, order: usize, lo: f64, hi: f64, n: usize) -> f64 {
        (0..=order)
            .map(|j| {
                (0..n)
                    .map(|i| {
                        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                        self.derivative(j, x).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .sum()
    }

    /// True when the declared ‖φ‖_{3,∞} dominates the sup sampled on [−20, 20].
    pub fn declared_norm_dominates(&self) -> bool {
        self.norm3 >= self.sampled_norm(3, -20.0, 20.0, 400_001)
            && self.norm1 >= self.sampled_norm(1, -20.0, 20.0, 400_001)
    }

    /// Central-difference check of φ′, φ″, φ‴ on a grid, with step h.
    pub fn derivatives_consistent(&self, grid: &[f64], h: f64, tol: f64) -> bool {
        grid.iter().all(|&x| {
            (1..=3).all(|j| {
                let fd =
                    (self.derivative(j - 1, x + h) - self.derivative(j - 1, x - h)) / (2.0 * h);
                let d = self.derivative(j, x);
                (d - fd).abs() <= tol * (1.0 + d.abs())
            })
        })
    }
}

fn gauss(x: f64) -> f64 {
    (-0.5 * x * x).exp()
}
fn sech2(x: f64) -> f64 {
    let s = 1.0 / x.cosh();
    s * s
}

const SIN: TestFunction = TestFunction {
    name: "sin",
    f: f64::sin,
    d1: f64::cos,
    d2: |x| -x.sin(),
    d3: |x| -x.cos(),
    norm1: 2.0,
    norm3: 4.0,
};

const COS: TestFunction = TestFunction {
    name: "cos",
    f: f64::cos,
    d1: |x| -x.sin(),
    d2: |x| -x.cos(),
    d3: f64::sin,
    norm1: 2.0,
    norm3: 4.0,
};

// sups: 1, e^{-1/2}, 1, 1.380119046…
const GAUSS: TestFunction = TestFunction {
    name: "gauss",
    f: gauss,
    d1: |x| -x * gauss(x),
    d2: |x| (x * x - 1.0) * gauss(x),
    d3: |x| (3.0 * x - x * x * x) * gauss(x),
    norm1: 1.606_530_7,
    norm3: 3.986_650,
};

// sups: 1, 3√3/8, 2, 4.668559…
const CAUCHY: TestFunction = TestFunction {
    name: "cauchy",
    f: |x| 1.0 / (1.0 + x * x),
    d1: |x| -2.0 * x / (1.0 + x * x).powi(2),
    d2: |x| (6.0 * x * x - 2.0) / (1.0 + x * x).powi(3),
    d3: |x| 24.0 * x * (1.0 - x * x) / (1.0 + x * x).powi(4),
    norm1: 1.649_519_1,
    norm3: 8.318_079,
};

// sups: 1, 1, 4/(3√3), 2
const TANH: TestFunction = TestFunction {
    name: "tanh",
    f: f64::tanh,
    d1: sech2,
    d2: |x| -2.0 * x.tanh() * sech2(x),
    d3: |x| -2.0 * sech2(x) * (sech2(x) - 2.0 * x.tanh().powi(2)),
    norm1: 2.0,
    norm3: 4.769_800_4,
};

// Unbounded polynomials: exactness probes for the generator checks, not C³_b.
const IDENTITY: TestFunction = TestFunction {
    name: "identity",
    f: |x| x,
    d1: |_| 1.0,
    d2: |_| 0.0,
    d3: |_| 0.0,
    norm1: f64::INFINITY,
    norm3: f64::INFINITY,
};

const SQUARE: TestFunction = TestFunction {
    name: "square",
    f: |x| x * x,
    d1: |x| 2.0 * x,
    d2: |_| 2.0,
    d3: |_| 0.0,
    norm1: f64::INFINITY,
    norm3: f64::INFINITY,
};

const ALL_TEST_FUNCTIONS: [TestFunction; 7] = [SIN, COS, GAUSS, CAUCHY, TANH, IDENTITY, SQUARE];

/// The five bounded functions used for weak-error experiments.
pub fn standard_bank() -> Vec<TestFunction> {
    vec![SIN, COS, GAUSS, CAUCHY, TANH]
}

pub fn test_function(name: &str) -> Result<TestFunction> {
    ALL_TEST_FUNCTIONS
        .iter()
        .find(|t| t.name == name)
        .copied()
        .ok_or_else(|| Error::Lookup {
            kind: "test function",
            name: name.to_string(),
        })
}

/// Spot-check grid in ν-coordinates.
#[derive(Debug, Clone)]
pub struct SpotGrid {
    pub times: Vec<f64>,
    /// Marks y = 1/z ≥ 1.
    pub marks: Vec<f64>,
    pub states: Vec<f64>,
}

impl Default for SpotGrid {
    fn default() -> Self {
        Self {
            times: vec![0.0, 0.5, 1.0],
            marks: vec![1.0, 1.5, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0],
            states: (0..41).map(|i| -10.0 + 0.5 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotPoint {
    pub s: f64,
    pub y: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    /// Worst violation: the point and how far the inequality missed.
    Fail {
        worst: SpotPoint,
        shortfall: f64,
    },
    Skipped(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    pub points: usize,
}

impl HypothesisCheck {
    pub fn passed(&self) -> bool {
        matches!(self.status, CheckStatus::Pass)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Evaluates `margin` (≥ 0 means satisfied) on every grid point.
fn run_check<F>(name: &'static str, grid: &SpotGrid, mut margin: F) -> HypothesisCheck
where
    F: FnMut(SpotPoint) -> f64,
{
    let mut worst: Option<(SpotPoint, f64)> = None;
    let mut points = 0;
    for &s in &grid.times {
        for &y in &grid.marks {
            for &x in &grid.states {
                let p = SpotPoint { s, y, x };
                let m = margin(p);
                points += 1;
                if m < 0.0 && worst.is_none_or(|(_, w)| m < w) {
                    worst = Some((p, m));
                }
            }
        }
    }
    let status = match worst {
        None => CheckStatus::Pass,
        Some((worst, m)) => CheckStatus::Fail {
            worst,
            shortfall: -m,
        },
    };
    HypothesisCheck {
        name,
        status,
        points,
    }
}

/// Advisory check of the envelope, derivative and ellipticity hypotheses in
/// ν-coordinates, c̃(s,y,x) = c(s,1/y,x). `lower` is the ellipticity floor c̲(y).
pub fn hypothesis_spot_check(
    coef: &JumpCoefficient,
    grid: &SpotGrid,
    lower: Option<&dyn Fn(f64) -> f64>,
) -> HypothesisReport {
    const SLACK: f64 = 1e-12;
    let tilde = |p: SpotPoint| coef.eval(p.s, 1.0 / p.y, p.x);
    let bound = |p: SpotPoint| coef.envelope.eval(1.0 / p.y);
    let mut checks = vec![run_check("envelope", grid, |p| {
        bound(p) * (1.0 + SLACK) - tilde(p).abs()
    })];

    if coef.dx.is_some() {
        let dx = |p: SpotPoint| coef.dx(p.s, 1.0 / p.y, p.x).unwrap_or(0.0);
        checks.push(run_check("derivative-envelope", grid, |p| {
            bound(p) * (1.0 + SLACK) - dx(p).abs()
        }));
        checks.push(run_check("ratio-envelope", grid, |p| {
            let d = dx(p);
            bound(p) * (1.0 + SLACK) - (d / (1.0 + d)).abs()
        }));
    } else {
        checks.push(HypothesisCheck {
            name: "derivative-envelope",
            status: CheckStatus::Skipped("no x-derivative supplied"),
            points: 0,
        });
        checks.push(HypothesisCheck {
            name: "ratio-envelope",
            status: CheckStatus::Skipped("no x-derivative supplied"),
            points: 0,
        });
    }

    match (lower, coef.dz.is_some()) {
        (Some(lower), true) => checks.push(run_check("ellipticity", grid, |p| {
            // ∂_y c̃ = ∂_z c · (−1/y²)
            let dy = coef.dz(p.s, 1.0 / p.y, p.x).unwrap_or(0.0) / (p.y * p.y);
            let floor = lower(p.y);
            (dy * dy - floor).min(tilde(p).powi(2) - floor)
        })),
        (None, _) => checks.push(HypothesisCheck {
            name: "ellipticity",
            status: CheckStatus::Skipped("no lower bound supplied"),
            points: 0,
        }),
        (_, false) => checks.push(HypothesisCheck {
            name: "ellipticity",
            status: CheckStatus::Skipped("no z-derivative supplied"),
            points: 0,
        }),
    }
    HypothesisReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pl(b: f64) -> LevyMeasureModel {
        LevyMeasureModel::power_law(b).unwrap()
    }

    #[test]
    fn drift_examples() {
        let m = pl(0.5);
        let tanh = coefficient_preset("sigma-tanh").unwrap();
        assert_relative_eq!(
            drift_b_eps(&tanh, &m, 0.0, 0.0, 0.01).unwrap(),
            0.4,
            max_relative = 1e-12
        );
        let zero = coefficient_preset("zero").unwrap();
        assert_eq!(drift_b_eps(&zero, &m, 0.3, 1.7, 0.2).unwrap(), 0.0);
        let id = coefficient_preset("identity").unwrap();
        assert_relative_eq!(
            drift_b_eps(&id, &m, 0.0, 5.0, 1.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        assert!(drift_b_eps(&id, &m, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn diffusion_examples() {
        let m = pl(0.5);
        let tanh = coefficient_preset("sigma-tanh").unwrap();
        assert_relative_eq!(
            diffusion_a_eps(&tanh, &m, 0.0, 0.0, 0.01).unwrap(),
            2.666_666_666_666_667e-3,
            max_relative = 1e-12
        );
        let zero = coefficient_preset("zero").unwrap();
        assert_eq!(diffusion_a_eps(&zero, &m, 0.0, 0.0, 0.5).unwrap(), 0.0);
        let id = coefficient_preset("identity").unwrap();
        assert_relative_eq!(
            diffusion_a_eps(&id, &m, 0.0, 0.0, 1.0).unwrap(),
            2.0 / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn closed_form_matches_quadrature_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let m = pl(0.5);
        let tanh = coefficient_preset("sigma-tanh").unwrap();
        for _ in 0..20 {
            let x: f64 = rng.random_range(-5.0..5.0);
            let eps: f64 = rng.random_range(1e-4..1.0);
            let b = drift_b_eps(&tanh, &m, 0.0, x, eps).unwrap();
            let bq = drift_b_eps_by_quadrature(&tanh, &m, 0.0, x, eps).unwrap();
            assert_relative_eq!(b, bq, max_relative = 1e-8);
            let a = diffusion_a_eps(&tanh, &m, 0.0, x, eps).unwrap();
            let aq = diffusion_a_eps_by_quadrature(&tanh, &m, 0.0, x, eps).unwrap();
            assert_relative_eq!(a, aq, max_relative = 1e-8);
        }
    }

    #[test]
    fn functionals_monotone_in_eps() {
        let m = pl(0.5);
        let tanh = coefficient_preset("sigma-tanh").unwrap();
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        for w in grid.windows(2) {
            for x in [-3.0, 0.0, 2.0] {
                assert!(
                    drift_b_eps(&tanh, &m, 0.0, x, w[0]).unwrap()
                        <= drift_b_eps(&tanh, &m, 0.0, x, w[1]).unwrap()
                );
                let a0 = diffusion_a_eps(&tanh, &m, 0.0, x, w[0]).unwrap();
                assert!(a0 >= 0.0);
                assert!(a0 <= diffusion_a_eps(&tanh, &m, 0.0, x, w[1]).unwrap());
            }
        }
    }

    #[test]
    fn general_coefficient_uses_quadrature() {
        let m = pl(0.3);
        let c = JumpCoefficient::general(
            "sq",
            |_, z, x: f64| z * (1.0 + x.sin().powi(2)),
            Envelope::Linear { scale: 2.0 },
        );
        let x: f64 = 0.7;
        let sig = 1.0 + x.sin().powi(2);
        assert_relative_eq!(
            drift_b_eps(&c, &m, 0.0, x, 0.4).unwrap(),
            sig * 0.4f64.powf(0.7) / 0.7,
            max_relative = 1e-10
        );
    }

    #[test]
    fn preset_lookup() {
        for name in COEFFICIENT_PRESETS {
            assert_eq!(coefficient_preset(name).unwrap().name(), *name);
        }
        assert!(matches!(
            coefficient_preset("cubic").unwrap_err(),
            Error::Lookup { .. }
        ));
    }

    #[test]
    fn spot_check_sigma_tanh_envelope() {
        let c = coefficient_preset("sigma-tanh").unwrap();
        let r = hypothesis_spot_check(&c, &SpotGrid::default(), None);
        assert!(r.check("envelope").unwrap().passed());
        assert!(r.check("derivative-envelope").unwrap().passed());
        assert!(r.check("ratio-envelope").unwrap().passed());
        assert!(matches!(
            r.check("ellipticity").unwrap().status,
            CheckStatus::Skipped(_)
        ));
    }

    #[test]
    fn spot_check_zero_fails_ellipticity_everywhere() {
        let c = coefficient_preset("zero").unwrap();
        let floor = |_y: f64| 0.1;
        let grid = SpotGrid::default();
        let r = hypothesis_spot_check(&c, &grid, Some(&floor));
        let e = r.check("ellipticity").unwrap();
        match e.status {
            CheckStatus::Fail { shortfall, .. } => assert_relative_eq!(shortfall, 0.1),
            ref other => panic!("expected failure, got {other:?}"),
        }
        // every point violates: a positive floor above zero cannot be met
        let mut n = 0;
        for &y in &grid.marks {
            let one = SpotGrid {
                times: vec![0.0],
                marks: vec![y],
                states: vec![0.0],
            };
            if !hypothesis_spot_check(&c, &one, Some(&floor))
                .check("ellipticity")
                .unwrap()
                .passed()
            {
                n += 1;
            }
        }
        assert_eq!(n, grid.marks.len());
    }

    #[test]
    fn spot_check_identity_ellipticity_at_unit_mark() {
        let c = coefficient_preset("identity").unwrap();
        let floor = |y: f64| (-y.powf(0.25)).exp();
        let grid = SpotGrid {
            times: vec![0.0, 1.0],
            marks: vec![1.0],
            states: vec![-1.0, 0.0, 1.0],
        };
        let r = hypothesis_spot_check(&c, &grid, Some(&floor));
        assert!(r.check("ellipticity").unwrap().passed());
    }

    #[test]
    fn declared_norms_dominate_and_derivatives_match() {
        let grid: Vec<f64> = (0..81).map(|i| -4.0 + 0.1 * i as f64).collect();
        for phi in standard_bank() {
            assert!(phi.declared_norm_dominates(), "{}", phi.name);
            assert!(
                phi.derivatives_consistent(&grid, 1e-4, 1e-6),
                "{}",
                phi.name
            );
            // the declarations are tight
            assert!(
                phi.norm3 < phi.sampled_norm(3, -20.0, 20.0, 400_001) * (1.0 + 1e-5),
                "{}",
                phi.name
            );
        }
        for name in ["identity", "square"] {
            assert!(test_function(name)
                .unwrap()
                .derivatives_consistent(&grid, 1e-4, 1e-6));
        }
        assert!(test_function("cube").is_err());
    }
}
