//! Reproducible random streams and the elementary samplers: Poisson counts,
//! band marks, the bump-function splitting of a band law, Gaussian increments.

use std::sync::OnceLock;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measures::{Band, BandDecomposition, LevyMeasureModel, MeasureFamily};
use crate::quadrature::{integrate, QuadSettings};
use crate::registry::Registry;

/// Cap on rejection loops before reporting a sampler failure.
pub const REJECTION_CAP: u64 = 1_000_000;

/// Tolerance on the U-law acceptance probability before it is treated as a
/// minorization violation.
const ACCEPTANCE_SLACK: f64 = 1e-12;

/// What a stream is used for; part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Poisson counts, jump times and marks of the big jumps.
    Jumps,
    /// Unit normals driving the Gaussian small-jump replacement.
    Noise,
    /// Stand-alone sampler checks (splitting identity, moment tests).
    Check,
    Custom(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Jumps => 1,
            Purpose::Noise => 2,
            Purpose::Check => 3,
            Purpose::Custom(t) => 0x100 + t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamLabel {
    pub experiment: u64,
    pub path: u64,
    pub purpose: Purpose,
}

/// Stable 64-bit id for an experiment name.
pub fn experiment_id(name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Counter-based random stream: ChaCha8 keyed by SHA-256(seed, experiment,
/// purpose) with the path index as the ChaCha stream id. A stream depends on
/// nothing but its (seed, label), so paths can be simulated in any order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: StreamLabel,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: StreamLabel) -> Self {
        let mut h = Sha256::new();
        h.update(b"jumpgauss/stream/v1");
        h.update(seed.to_le_bytes());
        h.update(label.experiment.to_le_bytes());
        h.update(label.purpose.tag().to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(label.path);
        Self { seed, label, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> StreamLabel {
        self.label
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Bump ψ: 1 on |t| ≤ 1/4, exp(1 − 1/(1−(4|t|−1)²)) on 1/4 < |t| < 1/2, 0 beyond.
pub fn psi(t: f64) -> f64 {
    let a = t.abs();
    if a <= 0.25 {
        1.0
    } else if a < 0.5 {
        let u = 4.0 * a - 1.0;
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

/// m(ψ) = ∫ψ, computed once by adaptive quadrature.
pub fn m_psi() -> f64 {
    static M_PSI: OnceLock<f64> = OnceLock::new();
    *M_PSI.get_or_init(|| {
        let settings = QuadSettings {
            abs_tol: 1e-15,
            rel_tol: 1e-13,
            limit: 2000,
        };
        let shoulder = integrate(psi, 0.25, 0.5, &settings)
            .expect("bump integral converges")
            .value;
        0.5 + 2.0 * shoulder
    })
}

/// Poisson count with the given mean: sequential inversion below 10,
/// rejection sampling (rand_distr) above.
pub fn sample_poisson(mean: f64, stream: &mut RngStream) -> Result<u64> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::domain(format!(
            "Poisson mean must be finite and >= 0, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean < 10.0 {
        let u = stream.uniform();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u >= cdf {
            k += 1;
            p *= mean / k as f64;
            if p == 0.0 {
                break;
            }
            cdf += p;
        }
        return Ok(k);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::domain(e.to_string()))?;
    let draw: f64 = dist.sample(stream);
    Ok(draw as u64)
}

/// Inverse CDF of the normalized power-law band law on [lower, upper).
/// `None` for families without a closed form.
pub fn band_inverse_cdf(measure: &LevyMeasureModel, band: &Band, u: f64) -> Option<f64> {
    let MeasureFamily::PowerLaw { b } = *measure.family() else {
        return None;
    };
    let (lo, hi) = (band.lower, band.upper);
    let y = if b == 0.0 {
        lo * (hi / lo).powf(u)
    } else {
        let (lb, hb) = (lo.powf(b), hi.powf(b));
        (lb + u * (hb - lb)).powf(1.0 / b)
    };
    Some(y.clamp(lo, hi))
}

/// One draw from 1_{band}(y) ν(dy) / ν(band).
pub fn sample_band_size(
    measure: &LevyMeasureModel,
    band: &Band,
    stream: &mut RngStream,
) -> Result<f64> {
    let u = stream.uniform();
    if let Some(y) = band_inverse_cdf(measure, band, u) {
        // keep the band half-open even if rounding lands on the right end
        return Ok(if y >= band.upper {
            band.upper.next_down()
        } else {
            y
        });
    }
    let width = band.upper - band.lower;
    let sup = (0..=256)
        .map(|i| measure.nu_density(band.lower + width * i as f64 / 256.0))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max)
        * 1.05;
    for _ in 0..REJECTION_CAP {
        let y = band.lower + width * stream.uniform();
        if stream.uniform() * sup < measure.nu_density(y)? {
            return Ok(y);
        }
    }
    Err(Error::SamplerFailure {
        what: "band mark rejection",
        iterations: REJECTION_CAP,
    })
}

/// One realization of Z = ξV + (1−ξ)U on a band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDraw {
    pub xi: bool,
    pub v: f64,
    pub u: f64,
    pub composite: f64,
}

/// Splitting of the band law: ξ ~ Bernoulli(ε_k m(ψ)), V with density
/// ψ(t−(k+½))/m(ψ), U with density (p_Z(t) − ε_k ψ(t−(k+½)))/(1 − ε_k m(ψ)).
///
/// V is drawn by rejection from the uniform law on the band; U by rejection
/// from the band law itself, accepting with probability 1 − ε_k ψ / p_Z.
pub fn sample_split(
    measure: &LevyMeasureModel,
    band: &Band,
    stream: &mut RngStream,
) -> Result<SplitDraw> {
    if !band.is_full() {
        return Err(Error::domain(format!(
            "splitting needs a full unit band, got [{}, {})",
            band.lower, band.upper
        )));
    }
    let eps_k = band.split_eps;
    let p_xi = eps_k * m_psi();
    if !(p_xi < 1.0) {
        return Err(Error::domain(format!(
            "band {}: eps_k * m(psi) = {p_xi} must be < 1",
            band.k
        )));
    }
    let center = band.lower + 0.5;
    let xi = stream.uniform() < p_xi;

    let mut v = None;
    for _ in 0..REJECTION_CAP {
        let t = band.lower + stream.uniform();
        if stream.uniform() < psi(t - center) {
            v = Some(t);
            break;
        }
    }
    let v = v.ok_or(Error::SamplerFailure {
        what: "bump law V",
        iterations: REJECTION_CAP,
    })?;

    let mut u = None;
    for _ in 0..REJECTION_CAP {
        let z = sample_band_size(measure, band, stream)?;
        let density = measure.nu_density(z)? / band.mass;
        let ratio = eps_k * psi(z - center) / density;
        if ratio > 1.0 + ACCEPTANCE_SLACK {
            return Err(Error::MinorizationViolation {
                band: band.k,
                mark: z,
                probability: 1.0 - ratio,
            });
        }
        if stream.uniform() < 1.0 - ratio {
            u = Some(z);
            break;
        }
    }
    let u = u.ok_or(Error::SamplerFailure {
        what: "residual law U",
        iterations: REJECTION_CAP,
    })?;

    Ok(SplitDraw {
        xi,
        v,
        u,
        composite: if xi { v } else { u },
    })
}

/// N(0, variance). Always consumes one normal so coupled streams stay aligned.
pub fn gaussian_increment(variance: f64, stream: &mut RngStream) -> Result<f64> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::domain(format!(
            "variance must be finite and >= 0, got {variance}"
        )));
    }
    let n = stream.standard_normal();
    Ok(if variance == 0.0 {
        0.0
    } else {
        variance.sqrt() * n
    })
}

/// Strategy for drawing big-jump marks within a band.
pub trait MarkSampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(
        &self,
        measure: &LevyMeasureModel,
        band: &Band,
        stream: &mut RngStream,
    ) -> Result<f64>;
}

/// Direct draw from the band law.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectMarks;

impl MarkSampler for DirectMarks {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn sample(
        &self,
        measure: &LevyMeasureModel,
        band: &Band,
        stream: &mut RngStream,
    ) -> Result<f64> {
        sample_band_size(measure, band, stream)
    }
}

/// Marks realized through the splitting decomposition (same law, different
/// construction); partial bands fall back to the direct draw.
#[derive(Debug, Clone, Copy, Default)]
pub struct SplitMarks;

impl MarkSampler for SplitMarks {
    fn name(&self) -> &'static str {
        "split"
    }

    fn sample(
        &self,
        measure: &LevyMeasureModel,
        band: &Band,
        stream: &mut RngStream,
    ) -> Result<f64> {
        if band.is_full() {
            Ok(sample_split(measure, band, stream)?.composite)
        } else {
            sample_band_size(measure, band, stream)
        }
    }
}

pub type MarkSamplerFactory = fn() -> Box<dyn MarkSampler>;

/// Registry holding `direct` and `split`.
pub fn mark_samplers() -> Registry<MarkSamplerFactory> {
    let mut r: Registry<MarkSamplerFactory> = Registry::new("mark sampler");
    r.register("direct", || Box::new(DirectMarks));
    r.register("split", || Box::new(SplitMarks));
    r
}

/// Jumps of one band over [0, t]: Poisson(m_k t) events at uniform times.
#[derive(Debug, Clone, PartialEq)]
pub struct BandJumpSet {
    pub k: u64,
    /// Sorted jump times in [0, t].
    pub times: Vec<f64>,
    /// ν-coordinate marks in the band.
    pub sizes: Vec<f64>,
}

pub fn sample_band_jumps(
    measure: &LevyMeasureModel,
    band: &Band,
    t: f64,
    marks: &dyn MarkSampler,
    stream: &mut RngStream,
) -> Result<BandJumpSet> {
    let n = sample_poisson(band.mass * t, stream)? as usize;
    let mut times: Vec<f64> = (0..n).map(|_| t * stream.uniform()).collect();
    times.sort_by(f64::total_cmp);
    let sizes = (0..n)
        .map(|_| marks.sample(measure, band, stream))
        .collect::<Result<Vec<_>>>()?;
    Ok(BandJumpSet {
        k: band.k,
        times,
        sizes,
    })
}

/// One big-jump event: time and ν-coordinate mark y = 1/z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub band: u64,
    pub mark: f64,
}

impl JumpEvent {
    /// Jump size coordinate z = 1/y ∈ (0, 1].
    pub fn z(&self) -> f64 {
        1.0 / self.mark
    }
}

/// Sampler for all jumps of a band decomposition over [0, t].
///
/// The superposition of the independent band processes is drawn as one
/// Poisson(Σm_k t) count with each event assigned to band k with probability
/// m_k / Σm_j, which has the same law and avoids one Poisson draw per band.
pub struct JumpLaw<'a> {
    measure: &'a LevyMeasureModel,
    bands: &'a [Band],
    cumulative: Vec<f64>,
}

impl<'a> JumpLaw<'a> {
    pub fn new(measure: &'a LevyMeasureModel, decomposition: &'a BandDecomposition) -> Self {
        let bands = decomposition.bands();
        let mut acc = 0.0;
        let cumulative = bands
            .iter()
            .map(|b| {
                acc += b.mass;
                acc
            })
            .collect();
        Self {
            measure,
            bands,
            cumulative,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Events sorted by time.
    pub fn sample(
        &self,
        t: f64,
        marks: &dyn MarkSampler,
        stream: &mut RngStream,
    ) -> Result<Vec<JumpEvent>> {
        let total = self.total_mass();
        let n = sample_poisson(total * t, stream)? as usize;
        let mut times: Vec<f64> = (0..n).map(|_| t * stream.uniform()).collect();
        times.sort_by(f64::total_cmp);
        let last = self.bands.len().saturating_sub(1);
        times
            .into_iter()
            .map(|time| {
                let target = total * stream.uniform();
                let i = self.cumulative.partition_point(|&c| c <= target).min(last);
                let band = &self.bands[i];
                Ok(JumpEvent {
                    time,
                    band: band.k,
                    mark: marks.sample(self.measure, band, stream)?,
                })
            })
            .collect()
    }
}
