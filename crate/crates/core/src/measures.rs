//! Lévy measures on (0,1], their image under z ↦ 1/z, and band decompositions.
//!
//! Jump marks live in two coordinate systems. The "μ-coordinate" z ∈ (0,1] is
//! the physical jump mark; the "ν-coordinate" y = 1/z ∈ [1,∞) is where the
//! band decomposition I_k = [k, k+1) and the splitting sampler operate.
//! A threshold ε in μ-coordinates corresponds to the cutoff 1/ε in ν-coordinates.

use std::fmt;
use std::sync::Arc;

use log::{info, warn};

use crate::coeffs::Envelope;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadSettings};
use crate::sampling::m_psi;

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Safety margin keeping the Bernoulli parameter ε_k·m(ψ) strictly below 1.
pub const SPLIT_GUARD: f64 = 1e-6;

/// Number of equal subintervals used to verify the band minorization.
const MINORIZATION_GRID: usize = 64;

#[derive(Clone)]
pub enum MeasureFamily {
    /// μ(dz) = z^{-1-b} dz on (0,1], 0 ≤ b < 1.
    PowerLaw { b: f64 },
    /// User density on (0,1]. `singularity_index` β declares the blow-up
    /// rate near 0: density(z)·z^{1+β} must stay bounded as z → 0.
    Custom {
        name: String,
        density: DensityFn,
        singularity_index: f64,
    },
}

impl fmt::Debug for MeasureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureFamily::PowerLaw { b } => f.debug_struct("PowerLaw").field("b", b).finish(),
            MeasureFamily::Custom {
                name,
                singularity_index,
                ..
            } => f
                .debug_struct("Custom")
                .field("name", name)
                .field("singularity_index", singularity_index)
                .finish_non_exhaustive(),
        }
    }
}

/// The small-jump intensity μ on (0,1].
#[derive(Debug, Clone)]
pub struct LevyMeasureModel {
    family: MeasureFamily,
    quad: QuadSettings,
}

impl LevyMeasureModel {
    pub fn power_law(b: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&b) {
            return Err(Error::domain(format!(
                "power-law exponent must lie in [0,1), got {b}"
            )));
        }
        Ok(Self {
            family: MeasureFamily::PowerLaw { b },
            quad: QuadSettings::default(),
        })
    }

    pub fn custom(
        name: impl Into<String>,
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        singularity_index: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&singularity_index) {
            return Err(Error::domain(format!(
                "singularity index must lie in [0,1) for a finite first moment, got {singularity_index}"
            )));
        }
        let density: DensityFn = Arc::new(density);
        for i in 1..=256 {
            let z = i as f64 / 256.0;
            let d = density(z);
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::domain(format!(
                    "density({z}) = {d} is not a finite nonnegative value"
                )));
            }
        }
        Ok(Self {
            family: MeasureFamily::Custom {
                name: name.into(),
                density,
                singularity_index,
            },
            quad: QuadSettings::default(),
        })
    }

    pub fn with_quadrature(mut self, quad: QuadSettings) -> Self {
        self.quad = quad;
        self
    }

    pub fn family(&self) -> &MeasureFamily {
        &self.family
    }

    pub fn quadrature(&self) -> &QuadSettings {
        &self.quad
    }

    pub fn family_name(&self) -> &str {
        match &self.family {
            MeasureFamily::PowerLaw { .. } => "power-law",
            MeasureFamily::Custom { name, .. } => name,
        }
    }

    /// The exponent b when the family is the power law.
    pub fn power_law_exponent(&self) -> Option<f64> {
        match self.family {
            MeasureFamily::PowerLaw { b } => Some(b),
            MeasureFamily::Custom { .. } => None,
        }
    }

    /// Blow-up index β of the density at 0 (b for the power law).
    pub fn singularity_index(&self) -> f64 {
        match &self.family {
            MeasureFamily::PowerLaw { b } => *b,
            MeasureFamily::Custom {
                singularity_index, ..
            } => *singularity_index,
        }
    }

    /// dμ/dz; zero outside (0,1].
    pub fn density(&self, z: f64) -> f64 {
        if !(z > 0.0 && z <= 1.0) {
            return 0.0;
        }
        match &self.family {
            MeasureFamily::PowerLaw { b } => z.powf(-1.0 - b),
            MeasureFamily::Custom { density, .. } => density(z),
        }
    }

    /// density(z)·z^{1+β}, bounded near 0 by construction.
    fn regularized_density(&self, z: f64) -> f64 {
        match &self.family {
            MeasureFamily::PowerLaw { .. } => 1.0,
            MeasureFamily::Custom {
                density,
                singularity_index,
                ..
            } => density(z) * z.powf(1.0 + singularity_index),
        }
    }

    /// ∫_{(a,b]} f(z) μ(dz) for 0 < a ≤ b ≤ 1.
    ///
    /// Integrates in u = ln z, where the power-law integrand becomes
    /// f(e^u)·e^{-bu} and the steep growth near small a disappears.
    pub fn integrate_mu<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if !(a > 0.0) {
            return Err(Error::domain(format!(
                "integrate_mu lower bound must be > 0 (measure may be infinite at 0), got {a}"
            )));
        }
        if !(a <= b && b <= 1.0) {
            return Err(Error::domain(format!(
                "integrate_mu needs 0 < a <= b <= 1, got ({a}, {b}]"
            )));
        }
        if a == b {
            return Ok(0.0);
        }
        let beta = self.singularity_index();
        let g = |u: f64| {
            let z = u.exp();
            f(z) * self.regularized_density(z) * z.powf(-beta)
        };
        Ok(integrate(g, a.ln(), b.ln(), &self.quad)?.value)
    }

    /// ∫_{(0,upper]} f(z) μ(dz) for an integrand with |f(z)| ≤ K·z^order near 0.
    ///
    /// Substitutes w = z^q with q = order − β, under which the integrand is
    /// [f(z)/z^order]·[density(z)·z^{1+β}]/q: bounded, so the quadrature runs
    /// all the way to w = 0 without a floor.
    pub fn integrate_mu_near_zero<F: Fn(f64) -> f64>(
        &self,
        f: F,
        order: f64,
        upper: f64,
    ) -> Result<f64> {
        if !(0.0..=1.0).contains(&upper) {
            return Err(Error::domain(format!(
                "upper limit must lie in [0,1], got {upper}"
            )));
        }
        let beta = self.singularity_index();
        let q = order - beta;
        if !(q > 0.0) {
            return Err(Error::Divergence { order, index: beta });
        }
        if upper == 0.0 {
            return Ok(0.0);
        }
        let inv_q = 1.0 / q;
        let g = |w: f64| {
            let z = w.powf(inv_q).max(1e-300);
            f(z) * z.powf(-order) * self.regularized_density(z) * inv_q
        };
        Ok(integrate(g, 0.0, upper.powf(q), &self.quad)?.value)
    }

    /// ∫_{(0,eps]} z^p μ(dz).
    pub fn moment(&self, p: f64, eps: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::domain(format!("eps must lie in [0,1], got {eps}")));
        }
        match self.family {
            MeasureFamily::PowerLaw { b } => {
                if p <= b {
                    return Err(Error::Divergence { order: p, index: b });
                }
                if eps == 0.0 {
                    return Ok(0.0);
                }
                Ok(eps.powf(p - b) / (p - b))
            }
            MeasureFamily::Custom { .. } => self.integrate_mu_near_zero(|z| z.powf(p), p, eps),
        }
    }

    /// η_p(ε) = ∫_{(0,ε]} c̄(z)^p μ(dz) for the μ-coordinate envelope c̄.
    pub fn eta_p(&self, p: f64, eps: f64, envelope: &Envelope) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::domain(format!("eta_p needs p >= 1, got {p}")));
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::domain(format!("eps must lie in [0,1], got {eps}")));
        }
        let order = p * envelope.order();
        if order <= self.singularity_index() {
            return Err(Error::Divergence {
                order,
                index: self.singularity_index(),
            });
        }
        if eps == 0.0 {
            return Ok(0.0);
        }
        match (&self.family, envelope) {
            (MeasureFamily::PowerLaw { .. }, Envelope::Linear { scale }) => {
                Ok(scale.powf(p) * self.moment(p, eps)?)
            }
            _ => self.integrate_mu_near_zero(|z| envelope.eval(z).abs().powf(p), order, eps),
        }
    }

    /// η_p evaluated by quadrature even when a closed form exists.
    pub fn eta_p_by_quadrature(&self, p: f64, eps: f64, envelope: &Envelope) -> Result<f64> {
        let order = p * envelope.order();
        self.integrate_mu_near_zero(|z| envelope.eval(z).abs().powf(p), order, eps)
    }

    /// dν/dy = density(1/y)/y² on [1,∞).
    pub fn nu_density(&self, y: f64) -> Result<f64> {
        if !(y >= 1.0) {
            return Err(Error::domain(format!("nu_density needs y >= 1, got {y}")));
        }
        Ok(match self.family {
            MeasureFamily::PowerLaw { b } => y.powf(b - 1.0),
            MeasureFamily::Custom { .. } => self.density(1.0 / y) / (y * y),
        })
    }

    /// ν([lo, hi)) for 1 ≤ lo ≤ hi.
    pub fn nu_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::domain(format!(
                "nu_mass needs 1 <= lo <= hi < inf, got [{lo}, {hi})"
            )));
        }
        if lo == hi {
            return Ok(0.0);
        }
        match self.family {
            MeasureFamily::PowerLaw { b } => Ok(if b == 0.0 {
                (hi / lo).ln()
            } else {
                (hi.powf(b) - lo.powf(b)) / b
            }),
            MeasureFamily::Custom { .. } => self.integrate_mu(|_| 1.0, 1.0 / hi, 1.0 / lo),
        }
    }

    /// m_k = ν(I_k), I_k = [k, k+1).
    pub fn band_mass(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::domain("band index starts at 1"));
        }
        self.nu_mass(k as f64, k as f64 + 1.0)
    }
}

/// ε_k = ε_*/(k+1)^{1−α₁}, clamped so that ε_k·m(ψ) ≤ 1 − 10⁻⁶.
pub fn splitting_epsilon(k: u64, eps_star: f64, alpha1: f64) -> f64 {
    let raw = eps_star / ((k + 1) as f64).powf(1.0 - alpha1);
    let cap = (1.0 - SPLIT_GUARD) / m_psi();
    if raw > cap {
        info!("splitting epsilon for band {k} clamped from {raw} to {cap}");
        cap
    } else {
        raw
    }
}

/// One band I_k ∩ [1, cutoff) of the ν-coordinate decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub k: u64,
    pub lower: f64,
    pub upper: f64,
    /// ν([lower, upper)).
    pub mass: f64,
    /// Splitting constant ε_k; zero on a partial band, where splitting is not used.
    pub split_eps: f64,
}

impl Band {
    pub fn is_full(&self) -> bool {
        self.upper == self.lower + 1.0
    }
}

/// Bands I_1, …, covering [1, cutoff) in ν-coordinates (marks z > 1/cutoff).
#[derive(Debug, Clone)]
pub struct BandDecomposition {
    cutoff: f64,
    eps_star: f64,
    alpha1: f64,
    bands: Vec<Band>,
}

impl BandDecomposition {
    /// Decomposes [1, cutoff). An integer cutoff M gives bands k = 1, …, M−1;
    /// otherwise the last band is the partial band [⌊cutoff⌋, cutoff).
    pub fn new(
        measure: &LevyMeasureModel,
        cutoff: f64,
        eps_star: f64,
        alpha1: f64,
    ) -> Result<Self> {
        if !(cutoff >= 1.0 && cutoff.is_finite()) {
            return Err(Error::domain(format!(
                "band cutoff must be >= 1, got {cutoff}"
            )));
        }
        if !(eps_star > 0.0) {
            return Err(Error::domain(format!(
                "eps_star must be > 0, got {eps_star}"
            )));
        }
        if !(alpha1 > 0.0 && alpha1 <= 1.0) {
            return Err(Error::domain(format!(
                "alpha1 must lie in (0,1], got {alpha1}"
            )));
        }
        let last = cutoff.ceil() as u64;
        let mut bands = Vec::with_capacity(last.saturating_sub(1) as usize);
        for k in 1..last {
            let lower = k as f64;
            let upper = (lower + 1.0).min(cutoff);
            let mass = measure.nu_mass(lower, upper)?;
            let mut band = Band {
                k,
                lower,
                upper,
                mass,
                split_eps: 0.0,
            };
            if band.is_full() {
                let formula = splitting_epsilon(k, eps_star, alpha1);
                let floor = minorization_constant(measure, &band)?;
                band.split_eps = if formula > floor {
                    let reduced = floor * (1.0 - 1e-9);
                    warn!(
                        "band {k}: splitting epsilon {formula} violates the minorization, reduced to {reduced}"
                    );
                    reduced
                } else {
                    formula
                };
            }
            bands.push(band);
        }
        Ok(Self {
            cutoff,
            eps_star,
            alpha1,
            bands,
        })
    }

    /// Decomposition of the marks z > eps.
    pub fn above_threshold(
        measure: &LevyMeasureModel,
        eps: f64,
        eps_star: f64,
        alpha1: f64,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::domain(format!(
                "threshold must lie in (0,1], got {eps}"
            )));
        }
        Self::new(measure, 1.0 / eps, eps_star, alpha1)
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn eps_star(&self) -> f64 {
        self.eps_star
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band(&self, k: u64) -> Option<&Band> {
        self.bands.get((k as usize).checked_sub(1)?)
    }

    pub fn total_mass(&self) -> f64 {
        self.bands.iter().map(|b| b.mass).sum()
    }
}

/// Largest ε with ν(a,b) ≥ ε·m·(b−a) on a grid of subintervals of a full band,
/// also checked pointwise against the normalized density at the grid nodes.
pub fn minorization_constant(measure: &LevyMeasureModel, band: &Band) -> Result<f64> {
    let width = band.upper - band.lower;
    let h = width / MINORIZATION_GRID as f64;
    let mut best = f64::INFINITY;
    for i in 0..MINORIZATION_GRID {
        let a = band.lower + i as f64 * h;
        let b = if i + 1 == MINORIZATION_GRID {
            band.upper
        } else {
            a + h
        };
        let ratio = measure.nu_mass(a, b)? / (band.mass * (b - a));
        best = best.min(ratio);
    }
    for i in 0..=MINORIZATION_GRID {
        let y = band.lower + i as f64 * h;
        best = best.min(measure.nu_density(y)? / band.mass);
    }
    Ok(best)
}
