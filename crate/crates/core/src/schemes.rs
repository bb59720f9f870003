//! Path simulation of the truncation scheme, the Gaussian substitution scheme
//! and a fine Gaussian reference, with common-random-number coupling.
//!
//! Between jump events the state follows an Euler step on a uniform grid;
//! each big jump is applied to the left limit at its event time.

use std::sync::Arc;

use log::{debug, warn};
use rayon::prelude::*;

use crate::coeffs::{diffusion_a_eps, drift_b_eps, JumpCoefficient};
use crate::error::{Error, Result};
use crate::measures::{BandDecomposition, LevyMeasureModel, MeasureFamily};
use crate::registry::Registry;
use crate::sampling::{
    experiment_id, mark_samplers, JumpEvent, JumpLaw, MarkSampler, Purpose, RngStream, StreamLabel,
};

/// |X| beyond this aborts the path.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// Default ratio min(ε-list) / eps_ref.
pub const REFERENCE_RATIO: f64 = 16.0;

/// Measure and jump coefficient of one SDE.
#[derive(Clone)]
pub struct Model {
    pub measure: Arc<LevyMeasureModel>,
    pub coef: Arc<JumpCoefficient>,
}

impl Model {
    pub fn new(measure: LevyMeasureModel, coef: JumpCoefficient) -> Self {
        Self {
            measure: Arc::new(measure),
            coef: Arc::new(coef),
        }
    }
}

/// A time-stepping scheme: which jumps it keeps, and how it moves between them.
pub trait Scheme: Send + Sync {
    fn name(&self) -> &str;

    /// Jumps with mark z > threshold are applied.
    fn threshold(&self) -> f64;

    /// State after a jump-free stretch [s, s+dt] driven by the unit normal `noise`.
    fn continuous_step(&self, s: f64, x: f64, dt: f64, noise: f64) -> Result<f64>;
}

/// X̃^ε: big jumps only, constant in between.
#[derive(Debug, Clone, Copy)]
pub struct Truncation {
    eps: f64,
}

impl Truncation {
    pub fn new(eps: f64) -> Result<Self> {
        check_threshold(eps)?;
        Ok(Self { eps })
    }
}

impl Scheme for Truncation {
    fn name(&self) -> &str {
        "truncation"
    }

    fn threshold(&self) -> f64 {
        self.eps
    }

    fn continuous_step(&self, _s: f64, x: f64, _dt: f64, _noise: f64) -> Result<f64> {
        Ok(x)
    }
}

/// X^ε: big jumps, plus drift b_ε and a Gaussian term of variance rate a_ε.
pub struct GaussianSubstitution {
    name: &'static str,
    eps: f64,
    model: Model,
    /// (∫_{(0,ε]} z dμ, ∫_{(0,ε]} z² dμ) when c = σ(x)·z on a power law.
    moments: Option<(f64, f64)>,
}

impl GaussianSubstitution {
    pub fn new(model: &Model, eps: f64) -> Result<Self> {
        Self::named("gaussian", model, eps)
    }

    /// The same scheme at the fine threshold eps_ref.
    pub fn reference(model: &Model, eps_ref: f64) -> Result<Self> {
        Self::named("reference", model, eps_ref)
    }

    fn named(name: &'static str, model: &Model, eps: f64) -> Result<Self> {
        check_threshold(eps)?;
        let moments = match (model.coef.factor(), model.measure.family()) {
            (Some(_), MeasureFamily::PowerLaw { .. }) => Some((
                model.measure.moment(1.0, eps)?,
                model.measure.moment(2.0, eps)?,
            )),
            _ => None,
        };
        Ok(Self {
            name,
            eps,
            model: model.clone(),
            moments,
        })
    }

    /// (b_ε(s,x), a_ε(s,x)).
    pub fn coefficients(&self, s: f64, x: f64) -> Result<(f64, f64)> {
        match (self.moments, self.model.coef.factor()) {
            (Some((m1, m2)), Some(f)) => {
                let sig = (f.sigma)(x);
                Ok((sig * m1, sig * sig * m2))
            }
            _ => Ok((
                drift_b_eps(&self.model.coef, &self.model.measure, s, x, self.eps)?,
                diffusion_a_eps(&self.model.coef, &self.model.measure, s, x, self.eps)?,
            )),
        }
    }
}

impl Scheme for GaussianSubstitution {
    fn name(&self) -> &str {
        self.name
    }

    fn threshold(&self) -> f64 {
        self.eps
    }

    fn continuous_step(&self, s: f64, x: f64, dt: f64, noise: f64) -> Result<f64> {
        let (b, a) = self.coefficients(s, x)?;
        let var = a * dt;
        if !(var >= 0.0) {
            return Err(Error::domain(format!(
                "negative step variance {var} at s={s}, x={x}"
            )));
        }
        Ok(x + b * dt + var.sqrt() * noise)
    }
}

fn check_threshold(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "threshold must lie in (0,1], got {eps}"
        )))
    }
}

pub type SchemeFactory = fn(&Model, f64) -> Result<Box<dyn Scheme>>;

pub const SCHEME_NAMES: &[&str] = &["truncation", "gaussian", "reference"];

/// Registry holding `truncation`, `gaussian` and `reference`; each factory
/// takes the model and the scheme's own threshold.
pub fn scheme_registry() -> Registry<SchemeFactory> {
    let mut r: Registry<SchemeFactory> = Registry::new("scheme");
    r.register("truncation", |_, eps| Ok(Box::new(Truncation::new(eps)?)));
    r.register("gaussian", |m, eps| {
        Ok(Box::new(GaussianSubstitution::new(m, eps)?))
    });
    r.register("reference", |m, eps| {
        Ok(Box::new(GaussianSubstitution::reference(m, eps)?))
    });
    r
}

pub fn build_scheme(name: &str, model: &Model, eps: f64) -> Result<Box<dyn Scheme>> {
    (scheme_registry().get(name)?)(model, eps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub x0: f64,
    pub t_final: f64,
    pub eps: f64,
    pub eps_ref: f64,
    pub steps_per_unit: u32,
    pub kind: String,
    pub seed: u64,
    pub paths: u64,
    /// Name hashed into every stream key.
    pub experiment: String,
    pub mark_sampler: String,
    pub eps_star: f64,
    pub alpha1: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            x0: 0.0,
            t_final: 1.0,
            eps: 0.1,
            eps_ref: 0.1 / REFERENCE_RATIO,
            steps_per_unit: 64,
            kind: "gaussian".into(),
            seed: 1,
            paths: 1000,
            experiment: "simulate".into(),
            mark_sampler: "direct".into(),
            eps_star: 0.5,
            alpha1: 1.0,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !self.x0.is_finite() {
            return bad(format!("x0 must be finite, got {}", self.x0));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!(
                "t_final must be finite and > 0, got {}",
                self.t_final
            ));
        }
        if !(self.eps_ref > 0.0 && self.eps_ref <= self.eps && self.eps <= 1.0) {
            return bad(format!(
                "need 0 < eps_ref <= eps <= 1, got eps_ref={} eps={}",
                self.eps_ref, self.eps
            ));
        }
        if self.steps_per_unit == 0 {
            return bad("steps_per_unit must be >= 1".into());
        }
        if self.paths == 0 {
            return bad("paths must be >= 1".into());
        }
        if !scheme_registry().contains(&self.kind) {
            return bad(format!("unknown scheme '{}'", self.kind));
        }
        if !mark_samplers().contains(&self.mark_sampler) {
            return bad(format!("unknown mark sampler '{}'", self.mark_sampler));
        }
        Ok(())
    }
}

/// Jump and noise streams of one path.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub jumps: RngStream,
    pub noise: RngStream,
}

impl PathStreams {
    pub fn new(seed: u64, experiment: &str, path: u64) -> Self {
        let experiment = experiment_id(experiment);
        let label = |purpose| StreamLabel {
            experiment,
            path,
            purpose,
        };
        Self {
            jumps: RngStream::new(seed, label(Purpose::Jumps)),
            noise: RngStream::new(seed, label(Purpose::Noise)),
        }
    }
}

/// Count and FNV-1a checksum of a set of jump events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventDigest {
    pub count: u64,
    pub checksum: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl Default for EventDigest {
    fn default() -> Self {
        Self {
            count: 0,
            checksum: FNV_OFFSET,
        }
    }
}

impl EventDigest {
    pub fn absorb(&mut self, e: &JumpEvent) {
        self.count += 1;
        self.checksum = fnv(self.checksum, &e.time.to_bits().to_le_bytes());
        self.checksum = fnv(self.checksum, &e.mark.to_bits().to_le_bytes());
    }

    /// Order-dependent merge, used to fold per-path digests in path order.
    pub fn chain(&mut self, other: &EventDigest) {
        self.count += other.count;
        self.checksum = fnv(self.checksum, &other.count.to_le_bytes());
        self.checksum = fnv(self.checksum, &other.checksum.to_le_bytes());
    }
}

struct Lane<'a> {
    scheme: &'a dyn Scheme,
    /// Marks y < mark_cut (z > threshold) are applied.
    mark_cut: f64,
    x: f64,
    digest: EventDigest,
}

/// Samples the jumps above one base threshold and drives a set of schemes
/// with them and with one shared unit normal per Euler sub-interval.
pub struct PathEngine {
    model: Model,
    decomposition: BandDecomposition,
    marks: Box<dyn MarkSampler>,
    schemes: Vec<Box<dyn Scheme>>,
    x0: f64,
    t_final: f64,
    steps_per_unit: u32,
    /// Jumps with y below this count toward the coupling digest.
    digest_cut: f64,
}

impl PathEngine {
    pub fn new(
        model: &Model,
        config: &SchemeConfig,
        base_threshold: f64,
        schemes: Vec<Box<dyn Scheme>>,
    ) -> Result<Self> {
        if schemes.iter().any(|s| s.threshold() < base_threshold) {
            return Err(Error::InvalidConfig(
                "every scheme threshold must be at least the sampled threshold".into(),
            ));
        }
        let decomposition = BandDecomposition::above_threshold(
            &model.measure,
            base_threshold,
            config.eps_star,
            config.alpha1,
        )?;
        let marks = (mark_samplers().get(&config.mark_sampler)?)();
        let largest = schemes
            .iter()
            .map(|s| s.threshold())
            .fold(base_threshold, f64::max);
        Ok(Self {
            model: model.clone(),
            decomposition,
            marks,
            schemes,
            x0: config.x0,
            t_final: config.t_final,
            steps_per_unit: config.steps_per_unit,
            digest_cut: 1.0 / largest,
        })
    }

    pub fn schemes(&self) -> &[Box<dyn Scheme>] {
        &self.schemes
    }

    pub fn sample_events(&self, streams: &mut PathStreams) -> Result<Vec<JumpEvent>> {
        JumpLaw::new(&self.model.measure, &self.decomposition).sample(
            self.t_final,
            self.marks.as_ref(),
            &mut streams.jumps,
        )
    }

    /// Terminal values (one per scheme) and the coupling digest of one path.
    pub fn run(&self, streams: &mut PathStreams, path: u64) -> Result<(Vec<f64>, EventDigest)> {
        let events = self.sample_events(streams)?;
        self.run_with_events(&events, &mut streams.noise, path)
    }

    pub fn run_with_events(
        &self,
        events: &[JumpEvent],
        noise: &mut RngStream,
        path: u64,
    ) -> Result<(Vec<f64>, EventDigest)> {
        let mut lanes: Vec<Lane> = self
            .schemes
            .iter()
            .map(|s| Lane {
                scheme: s.as_ref(),
                mark_cut: 1.0 / s.threshold(),
                x: self.x0,
                digest: EventDigest::default(),
            })
            .collect();
        let coef = &self.model.coef;
        let delta = 1.0 / self.steps_per_unit as f64;
        let blowup = |lane: &Lane, time: f64, upto: usize| Error::NumericalBlowup {
            scheme: lane.scheme.name().to_string(),
            path,
            time,
            value: lane.x,
            events: events[..upto].iter().map(|e| (e.time, e.z())).collect(),
        };

        let mut s = 0.0;
        let mut next_grid = 1u64;
        let mut ev = 0usize;
        loop {
            let grid_time = (next_grid as f64 * delta).min(self.t_final);
            let (stop, is_event) = match events.get(ev) {
                Some(e) if e.time <= grid_time => (e.time, true),
                _ => (grid_time, false),
            };
            let dt = stop - s;
            if dt > 0.0 {
                let w = noise.standard_normal();
                for lane in lanes.iter_mut() {
                    lane.x = lane.scheme.continuous_step(s, lane.x, dt, w)?;
                    if !(lane.x.abs() <= BLOWUP_THRESHOLD) {
                        return Err(blowup(lane, stop, ev));
                    }
                }
            }
            s = stop;
            if is_event {
                let e = &events[ev];
                let z = e.z();
                for lane in lanes.iter_mut() {
                    if e.mark < lane.mark_cut {
                        lane.x += coef.eval(e.time, z, lane.x);
                        if !(lane.x.abs() <= BLOWUP_THRESHOLD) {
                            return Err(blowup(lane, e.time, ev + 1));
                        }
                        if e.mark < self.digest_cut {
                            lane.digest.absorb(e);
                        }
                    }
                }
                ev += 1;
            } else if grid_time >= self.t_final {
                break;
            } else {
                next_grid += 1;
            }
        }

        let digest = lanes[0].digest;
        if lanes.iter().any(|l| l.digest != digest) {
            return Err(Error::CouplingIntegrity { path });
        }
        Ok((lanes.iter().map(|l| l.x).collect(), digest))
    }
}

fn single(
    kind: &str,
    eps: f64,
    config: &SchemeConfig,
    model: &Model,
    streams: &mut PathStreams,
    path: u64,
) -> Result<f64> {
    let scheme = build_scheme(kind, model, eps)?;
    let engine = PathEngine::new(model, config, eps, vec![scheme])?;
    Ok(engine.run(streams, path)?.0[0])
}

/// One terminal value of X̃^ε at `config.eps`.
pub fn simulate_truncation(
    config: &SchemeConfig,
    model: &Model,
    streams: &mut PathStreams,
    path: u64,
) -> Result<f64> {
    single("truncation", config.eps, config, model, streams, path)
}

/// One terminal value of X^ε at `config.eps`.
pub fn simulate_gaussian(
    config: &SchemeConfig,
    model: &Model,
    streams: &mut PathStreams,
    path: u64,
) -> Result<f64> {
    single("gaussian", config.eps, config, model, streams, path)
}

/// One terminal value of the Gaussian scheme at `config.eps_ref`.
pub fn simulate_reference(
    config: &SchemeConfig,
    model: &Model,
    streams: &mut PathStreams,
    path: u64,
) -> Result<f64> {
    if config.eps_ref > config.eps / 8.0 {
        debug!(
            "reference threshold {} is not far below eps {}",
            config.eps_ref, config.eps
        );
    }
    single("reference", config.eps_ref, config, model, streams, path)
}

/// Terminal values of `config.kind` at `config.eps` over all paths, in path order.
pub fn simulate_paths(config: &SchemeConfig, model: &Model) -> Result<Vec<f64>> {
    config.validate()?;
    let eps = if config.kind == "reference" {
        config.eps_ref
    } else {
        config.eps
    };
    let scheme = build_scheme(&config.kind, model, eps)?;
    let engine = PathEngine::new(model, config, eps, vec![scheme])?;
    (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let mut streams = PathStreams::new(config.seed, &config.experiment, p);
            Ok(engine.run(&mut streams, p)?.0[0])
        })
        .collect()
}

/// Column key of a coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub scheme: String,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledResult {
    pub runs: Vec<SchemeRun>,
    /// terminals[run][path].
    pub terminals: Vec<Vec<f64>>,
    /// Jumps above the largest threshold, chained over paths in order.
    pub digest: EventDigest,
    pub seed: u64,
    pub paths: u64,
    pub eps_ref: f64,
    pub x0: f64,
}

impl CoupledResult {
    pub fn column(&self, scheme: &str, eps: f64) -> Result<&[f64]> {
        self.runs
            .iter()
            .position(|r| r.scheme == scheme && (r.eps - eps).abs() <= 1e-12 * eps.abs())
            .map(|i| self.terminals[i].as_slice())
            .ok_or_else(|| Error::Lookup {
                kind: "scheme run",
                name: format!("{scheme}@{eps}"),
            })
    }

    pub fn reference(&self) -> Result<&[f64]> {
        self.column("reference", self.eps_ref)
    }
}

/// Runs every scheme in `kinds` on one shared realization of the jumps above
/// `config.eps_ref` per path. Truncation and Gaussian schemes run at every ε
/// in `eps_list`; the reference runs once at eps_ref. All Gaussian lanes share
/// the same unit normals per Euler sub-interval.
pub fn simulate_coupled(
    eps_list: &[f64],
    kinds: &[&str],
    config: &SchemeConfig,
    model: &Model,
) -> Result<CoupledResult> {
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("eps list is empty".into()));
    }
    if eps_list.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidConfig(format!(
            "eps list must be strictly descending, got {eps_list:?}"
        )));
    }
    let smallest = *eps_list.last().expect("non-empty");
    let probe = SchemeConfig {
        eps: eps_list[0],
        ..config.clone()
    };
    probe.validate()?;
    if config.eps_ref > smallest {
        return Err(Error::InvalidConfig(format!(
            "eps_ref {} must not exceed the smallest eps {smallest}",
            config.eps_ref
        )));
    }
    if config.eps_ref > smallest / 8.0 {
        warn!(
            "eps_ref {} is within a factor 8 of eps {smallest}",
            config.eps_ref
        );
    }

    let registry = scheme_registry();
    let mut runs = Vec::new();
    let mut schemes = Vec::new();
    for &kind in kinds {
        let factory = registry.get(kind)?;
        let thresholds: Vec<f64> = if kind == "reference" {
            vec![config.eps_ref]
        } else {
            eps_list.to_vec()
        };
        for eps in thresholds {
            schemes.push(factory(model, eps)?);
            runs.push(SchemeRun {
                scheme: kind.to_string(),
                eps,
            });
        }
    }
    if schemes.is_empty() {
        return Err(Error::InvalidConfig("no schemes selected".into()));
    }
    let engine = PathEngine::new(model, config, config.eps_ref, schemes)?;

    let per_path: Vec<(Vec<f64>, EventDigest)> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let mut streams = PathStreams::new(config.seed, &config.experiment, p);
            engine.run(&mut streams, p)
        })
        .collect::<Result<_>>()?;

    let mut terminals = vec![Vec::with_capacity(per_path.len()); runs.len()];
    let mut digest = EventDigest::default();
    for (values, d) in &per_path {
        for (col, v) in terminals.iter_mut().zip(values) {
            col.push(*v);
        }
        digest.chain(d);
    }
    Ok(CoupledResult {
        runs,
        terminals,
        digest,
        seed: config.seed,
        paths: config.paths,
        eps_ref: config.eps_ref,
        x0: config.x0,
    })
}
