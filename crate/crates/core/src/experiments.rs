//! Experiment drivers shared by the command-line harness and the acceptance
//! suite. Each returns plain rows; formatting and I/O live in the CLI.

use rayon::prelude::*;

use crate::coeffs::{diffusion_a_eps, drift_b_eps, JumpCoefficient, TestFunction};
use crate::error::{Error, Result};
use crate::generators::{remainder_check, GeneratorReport};
use crate::measures::{BandDecomposition, LevyMeasureModel};
use crate::sampling::{
    experiment_id, m_psi, sample_band_size, sample_split, Purpose, RngStream, StreamLabel,
};
use crate::schemes::CoupledResult;
use crate::stats::{
    kde, ks_two_sample, paired_weak_error, rate_fit, raw_moments, tv_from_kde, Bandwidth,
    ErrorEstimate, RateFit,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EtaRow {
    pub eps: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    /// b_ε(0, x).
    pub drift: f64,
    /// a_ε(0, x).
    pub diffusion: f64,
    /// Largest relative gap between closed-form and quadrature η₁, η₂, η₃.
    pub quadrature_rel_gap: f64,
}

pub fn eta_table(
    measure: &LevyMeasureModel,
    coef: &JumpCoefficient,
    eps_list: &[f64],
    x: f64,
) -> Result<Vec<EtaRow>> {
    let env = coef.envelope();
    eps_list
        .iter()
        .map(|&eps| {
            let mut gap: f64 = 0.0;
            let mut eta = [0.0; 3];
            for (i, p) in [1.0, 2.0, 3.0].into_iter().enumerate() {
                eta[i] = measure.eta_p(p, eps, env)?;
                let q = measure.eta_p_by_quadrature(p, eps, env)?;
                if eta[i] != 0.0 {
                    gap = gap.max(((q - eta[i]) / eta[i]).abs());
                }
            }
            Ok(EtaRow {
                eps,
                eta1: eta[0],
                eta2: eta[1],
                eta3: eta[2],
                drift: drift_b_eps(coef, measure, 0.0, x, eps)?,
                diffusion: diffusion_a_eps(coef, measure, 0.0, x, eps)?,
                quadrature_rel_gap: gap,
            })
        })
        .collect()
}

/// One generator report per test function.
pub fn generator_check(
    measure: &LevyMeasureModel,
    coef: &JumpCoefficient,
    bank: &[TestFunction],
    eps_list: &[f64],
    grid: &[(f64, f64)],
    slack: f64,
) -> Result<Vec<GeneratorReport>> {
    bank.iter()
        .map(|phi| remainder_check(phi, eps_list, grid, coef, measure, slack))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentComparison {
    pub order: u32,
    pub composite: f64,
    pub direct: f64,
    /// √(se_composite² + se_direct²).
    pub combined_stderr: f64,
}

impl MomentComparison {
    pub fn within(&self, sigmas: f64) -> bool {
        (self.composite - self.direct).abs() <= sigmas * self.combined_stderr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRow {
    pub band: u64,
    pub split_eps: f64,
    pub xi_rate: f64,
    pub xi_expected: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub ks_reject: bool,
    pub moments: Vec<MomentComparison>,
}

/// Compares `draws` composite splitting draws against `draws` direct band
/// draws on bands 1..=bands: ξ rate, two-sample KS, first four raw moments.
pub fn split_check(
    measure: &LevyMeasureModel,
    bands: u64,
    eps_star: f64,
    alpha1: f64,
    draws: usize,
    seed: u64,
    alpha: f64,
) -> Result<Vec<SplitRow>> {
    if bands == 0 {
        return Err(Error::InvalidConfig(
            "split-check needs at least one band".into(),
        ));
    }
    let decomposition = BandDecomposition::new(measure, (bands + 1) as f64, eps_star, alpha1)?;
    let experiment = experiment_id("split-check");
    decomposition
        .bands()
        .par_iter()
        .map(|band| {
            let label = |tag| StreamLabel {
                experiment,
                path: band.k,
                purpose: Purpose::Custom(tag),
            };
            let mut split_stream = RngStream::new(seed, label(1));
            let mut direct_stream = RngStream::new(seed, label(2));
            let mut composite = Vec::with_capacity(draws);
            let mut ones = 0usize;
            for _ in 0..draws {
                let d = sample_split(measure, band, &mut split_stream)?;
                ones += d.xi as usize;
                composite.push(d.composite);
            }
            let direct = (0..draws)
                .map(|_| sample_band_size(measure, band, &mut direct_stream))
                .collect::<Result<Vec<_>>>()?;
            let ks = ks_two_sample(&composite, &direct, alpha)?;
            let mc = raw_moments(&composite, 4)?;
            let md = raw_moments(&direct, 4)?;
            Ok(SplitRow {
                band: band.k,
                split_eps: band.split_eps,
                xi_rate: ones as f64 / draws as f64,
                xi_expected: band.split_eps * m_psi(),
                ks_statistic: ks.statistic,
                ks_critical: ks.critical,
                ks_reject: ks.reject,
                moments: mc
                    .iter()
                    .zip(&md)
                    .map(|(c, d)| MomentComparison {
                        order: c.order,
                        composite: c.mean,
                        direct: d.mean,
                        combined_stderr: c.stderr.hypot(d.stderr),
                    })
                    .collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakRow {
    pub scheme: String,
    pub eps: f64,
    pub error: ErrorEstimate,
}

/// max over the test bank of |E φ(scheme) − E φ(reference)|: a lower-bound
/// proxy for the d₃ distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyRow {
    pub scheme: String,
    pub eps: f64,
    pub value: f64,
    pub stderr: f64,
    pub argmax: String,
    pub above_floor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeFit {
    pub scheme: String,
    pub fit: std::result::Result<RateFit, Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakRateReport {
    pub rows: Vec<WeakRow>,
    pub proxies: Vec<ProxyRow>,
    pub fits: Vec<SchemeFit>,
}

impl WeakRateReport {
    pub fn proxy(&self, scheme: &str, eps: f64) -> Option<&ProxyRow> {
        self.proxies
            .iter()
            .find(|p| p.scheme == scheme && p.eps == eps)
    }

    pub fn fit(&self, scheme: &str) -> Option<&std::result::Result<RateFit, Error>> {
        self.fits
            .iter()
            .find(|f| f.scheme == scheme)
            .map(|f| &f.fit)
    }
}

/// Weak errors of each scheme against the reference, per ε and test function,
/// with a log-log rate fit of the bank-max proxy per scheme.
pub fn weak_rate(
    coupled: &CoupledResult,
    schemes: &[&str],
    eps_list: &[f64],
    bank: &[TestFunction],
) -> Result<WeakRateReport> {
    let reference = coupled.reference()?;
    let mut rows = Vec::new();
    let mut proxies = Vec::new();
    let mut fits = Vec::new();
    for &scheme in schemes {
        let mut values = Vec::new();
        let mut stderrs = Vec::new();
        for &eps in eps_list {
            let column = coupled.column(scheme, eps)?;
            let errors = bank
                .iter()
                .map(|phi| paired_weak_error(phi, column, reference))
                .collect::<Result<Vec<_>>>()?;
            let best = errors
                .iter()
                .max_by(|a, b| a.estimate.abs().total_cmp(&b.estimate.abs()))
                .ok_or_else(|| Error::InvalidConfig("empty test-function bank".into()))?;
            proxies.push(ProxyRow {
                scheme: scheme.to_string(),
                eps,
                value: best.estimate.abs(),
                stderr: best.stderr,
                argmax: best.test_function.clone(),
                above_floor: best.above_noise_floor(),
            });
            values.push(best.estimate.abs());
            stderrs.push(best.stderr);
            rows.extend(errors.into_iter().map(|error| WeakRow {
                scheme: scheme.to_string(),
                eps,
                error,
            }));
        }
        fits.push(SchemeFit {
            scheme: scheme.to_string(),
            fit: rate_fit(eps_list, &values, Some(&stderrs)),
        });
    }
    Ok(WeakRateReport {
        rows,
        proxies,
        fits,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvRow {
    pub scheme: String,
    pub eps: f64,
    pub tv: f64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvRateReport {
    pub rows: Vec<TvRow>,
    pub reference_bandwidth: f64,
    pub fits: Vec<SchemeFit>,
}

impl TvRateReport {
    pub fn tv(&self, scheme: &str, eps: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.eps == eps)
            .map(|r| r.tv)
    }
}

/// KDE-based total variation between each scheme and the reference.
pub fn tv_rate(
    coupled: &CoupledResult,
    schemes: &[&str],
    eps_list: &[f64],
    grid: usize,
    bandwidth: Bandwidth,
) -> Result<TvRateReport> {
    let reference = kde(coupled.reference()?, bandwidth, grid)?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &scheme in schemes {
        let mut tvs = Vec::new();
        for &eps in eps_list {
            let density = kde(coupled.column(scheme, eps)?, bandwidth, grid)?;
            let tv = tv_from_kde(&density, &reference);
            tvs.push(tv);
            rows.push(TvRow {
                scheme: scheme.to_string(),
                eps,
                tv,
                bandwidth: density.bandwidth,
            });
        }
        fits.push(SchemeFit {
            scheme: scheme.to_string(),
            fit: rate_fit(eps_list, &tvs, None),
        });
    }
    Ok(TvRateReport {
        rows,
        reference_bandwidth: reference.bandwidth,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{coefficient_preset, standard_bank};
    use crate::schemes::{simulate_coupled, Model, SchemeConfig, SCHEME_NAMES};

    #[test]
    fn eta_rows_match_closed_forms() {
        let m = LevyMeasureModel::power_law(0.5).unwrap();
        let c = coefficient_preset("identity").unwrap();
        let rows = eta_table(&m, &c, &[0.1, 0.2], 0.0).unwrap();
        assert!((rows[0].eta3 - 1.264_911_064_067_35e-3).abs() < 1e-15);
        assert!((rows[0].drift - 2.0 * 0.1f64.sqrt()).abs() < 1e-14);
        assert!((rows[0].diffusion - 0.1f64.powf(1.5) / 1.5).abs() < 1e-14);
        assert!(rows.iter().all(|r| r.quadrature_rel_gap < 1e-8));
    }

    #[test]
    fn split_check_small() {
        let m = LevyMeasureModel::power_law(0.5).unwrap();
        let rows = split_check(&m, 2, 0.5, 1.0, 20_000, 3, 0.01).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.moments.iter().all(|mc| mc.within(5.0)), "{r:?}");
            assert!((r.xi_rate - r.xi_expected).abs() < 0.02);
        }
    }

    #[test]
    fn weak_and_tv_reports_have_expected_shape() {
        let model = Model::new(
            LevyMeasureModel::power_law(0.5).unwrap(),
            coefficient_preset("sigma-tanh").unwrap(),
        );
        let eps = [0.2, 0.1, 0.05];
        let cfg = SchemeConfig {
            eps_ref: 0.05 / 16.0,
            paths: 4000,
            steps_per_unit: 8,
            ..SchemeConfig::default()
        };
        let coupled = simulate_coupled(&eps, SCHEME_NAMES, &cfg, &model).unwrap();
        let bank = standard_bank();
        let w = weak_rate(&coupled, &["truncation", "gaussian"], &eps, &bank).unwrap();
        assert_eq!(w.rows.len(), 2 * 3 * 5);
        assert_eq!(w.proxies.len(), 6);
        for &e in &eps {
            assert!(
                w.proxy("truncation", e).unwrap().value > w.proxy("gaussian", e).unwrap().value
            );
        }
        let t = tv_rate(
            &coupled,
            &["truncation", "gaussian"],
            &eps,
            512,
            Bandwidth::Silverman,
        )
        .unwrap();
        assert_eq!(t.rows.len(), 6);
        assert!(t.tv("truncation", 0.2).unwrap() > t.tv("gaussian", 0.2).unwrap());
        assert!(weak_rate(&coupled, &["milstein"], &eps, &bank).is_err());
    }
}
