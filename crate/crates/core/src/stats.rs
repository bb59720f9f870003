//! Monte Carlo estimators: weak errors, kernel densities, total variation and
//! Kolmogorov–Smirnov distances, moments, log-log rate regression.
//!
//! Everything here is a deterministic function of its input samples.

use crate::coeffs::TestFunction;
use crate::error::{Error, Result};
use crate::schemes::CoupledResult;

/// Fewest paths accepted by the weak-error estimators.
pub const MIN_PATHS: usize = 100;
pub const KDE_GRID: usize = 2048;
pub const KDE_MIN_SAMPLES: usize = 1000;
/// Kernel evaluated out to this many bandwidths.
const KDE_REACH: f64 = 8.0;
/// Points with |error| below this multiple of their stderr are left out of rate fits.
pub const NOISE_FLOOR: f64 = 2.0;
/// Cap on the merged TV grid.
const TV_GRID_CAP: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub test_function: String,
}

impl ErrorEstimate {
    /// |estimate| ≥ NOISE_FLOOR·stderr.
    pub fn above_noise_floor(&self) -> bool {
        self.estimate.abs() >= NOISE_FLOOR * self.stderr && self.estimate != 0.0
    }
}

fn mean_and_var(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mean, var)
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "paired samples need equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < MIN_PATHS {
        return Err(Error::InsufficientData {
            usable: a.len(),
            needed: MIN_PATHS,
        });
    }
    Ok(())
}

/// E φ(A) − E φ(B) from paired samples: mean of φ(A_i) − φ(B_i) with its stderr.
pub fn paired_weak_error(phi: &TestFunction, a: &[f64], b: &[f64]) -> Result<ErrorEstimate> {
    check_pair(a, b)?;
    let n = a.len();
    let diffs = a.iter().zip(b).map(|(&x, &y)| phi.eval(x) - phi.eval(y));
    let (estimate, var) = mean_and_var(diffs, n);
    Ok(ErrorEstimate {
        estimate,
        stderr: (var / n as f64).sqrt(),
        n,
        test_function: phi.name.to_string(),
    })
}

/// Same point estimate, stderr computed as if the two samples were independent.
pub fn unpaired_weak_error(phi: &TestFunction, a: &[f64], b: &[f64]) -> Result<ErrorEstimate> {
    check_pair(a, b)?;
    let n = a.len();
    let (ma, va) = mean_and_var(a.iter().map(|&x| phi.eval(x)), n);
    let (mb, vb) = mean_and_var(b.iter().map(|&x| phi.eval(x)), n);
    Ok(ErrorEstimate {
        estimate: ma - mb,
        stderr: ((va + vb) / n as f64).sqrt(),
        n,
        test_function: phi.name.to_string(),
    })
}

/// Weak error between two columns of a coupled run, keyed by (scheme, ε).
pub fn weak_error(
    phi: &TestFunction,
    coupled: &CoupledResult,
    a: (&str, f64),
    b: (&str, f64),
) -> Result<ErrorEstimate> {
    paired_weak_error(phi, coupled.column(a.0, a.1)?, coupled.column(b.0, b.1)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub order: u32,
    pub mean: f64,
    pub stderr: f64,
}

/// Raw moments E[X^p], p = 1..=max_order.
pub fn raw_moments(samples: &[f64], max_order: u32) -> Result<Vec<MomentEstimate>> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            usable: samples.len(),
            needed: 2,
        });
    }
    Ok((1..=max_order)
        .map(|p| {
            let (mean, var) = mean_and_var(samples.iter().map(|x| x.powi(p as i32)), samples.len());
            MomentEstimate {
                order: p,
                mean,
                stderr: (var / samples.len() as f64).sqrt(),
            }
        })
        .collect())
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// 0.9·min(sd, IQR/1.34)·N^{−1/5}.
    Silverman,
    Fixed(f64),
}

impl Bandwidth {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "silverman" => Ok(Bandwidth::Silverman),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|h| *h > 0.0 && h.is_finite())
                .map(Bandwidth::Fixed)
                .ok_or_else(|| Error::InvalidConfig(format!("bad bandwidth policy '{other}'"))),
        }
    }
}

/// Gaussian kernel density on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeDensity {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeDensity {
    pub fn grid_point(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn end(&self) -> f64 {
        self.grid_point(self.values.len() - 1)
    }

    /// Linear interpolation, zero off the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let pos = (x - self.start) / self.step;
        if !(pos >= 0.0) || pos > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        let n = self.values.len();
        self.step * (self.values.iter().sum::<f64>() - 0.5 * (self.values[0] + self.values[n - 1]))
    }
}

/// KDE on `grid_size` points over [min − 3h, max + 3h]: linear binning
/// followed by a discrete convolution with the Gaussian kernel.
pub fn kde(samples: &[f64], bandwidth: Bandwidth, grid_size: usize) -> Result<KdeDensity> {
    let n = samples.len();
    if n < KDE_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            usable: n,
            needed: KDE_MIN_SAMPLES,
        });
    }
    if grid_size < 16 {
        return Err(Error::domain(format!(
            "KDE grid needs at least 16 points, got {grid_size}"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("KDE samples must be finite"));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
            (l.min(x), h.max(x))
        });
    if !(hi > lo) {
        return Err(Error::DegenerateSample(format!(
            "all {n} samples equal {lo}"
        )));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Silverman => {
            let (_, var) = mean_and_var(samples.iter().copied(), n);
            let sd = var.sqrt();
            let mut sorted = samples.to_vec();
            sorted.sort_by(f64::total_cmp);
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            0.9 * spread * (n as f64).powf(-0.2)
        }
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::DegenerateSample(format!("bandwidth {h}")));
    }

    let start = lo - 3.0 * h;
    let step = (hi + 3.0 * h - start) / (grid_size - 1) as f64;
    let mut counts = vec![0.0; grid_size];
    for &x in samples {
        let pos = (x - start) / step;
        let i = (pos.floor() as usize).min(grid_size - 2);
        let frac = pos - i as f64;
        counts[i] += 1.0 - frac;
        counts[i + 1] += frac;
    }

    let reach = ((KDE_REACH * h / step).ceil() as usize).min(grid_size - 1);
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let kernel: Vec<f64> = (0..=reach)
        .map(|j| {
            let u = j as f64 * step / h;
            (-0.5 * u * u).exp() * norm
        })
        .collect();
    let mut values = vec![0.0; grid_size];
    for (i, &c) in counts.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let from = i.saturating_sub(reach);
        let to = (i + reach).min(grid_size - 1);
        for (k, v) in values[from..=to].iter_mut().enumerate() {
            *v += c * kernel[(from + k).abs_diff(i)];
        }
    }
    Ok(KdeDensity {
        start,
        step,
        values,
        bandwidth: h,
    })
}

/// ½∫|p − q| on a merged uniform grid (trapezoid rule, linear interpolation).
pub fn tv_from_kde(p: &KdeDensity, q: &KdeDensity) -> f64 {
    let lo = p.start.min(q.start);
    let hi = p.end().max(q.end());
    let mut step = p.step.min(q.step);
    let mut n = ((hi - lo) / step).ceil() as usize + 1;
    if n > TV_GRID_CAP {
        n = TV_GRID_CAP;
        step = (hi - lo) / (n - 1) as f64;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let x = lo + step * i as f64;
        let d = (p.eval(x) - q.eval(x)).abs();
        acc += if i == 0 || i == n - 1 { 0.5 * d } else { d };
    }
    0.5 * acc * step
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    /// statistic > critical.
    pub reject: bool,
}

/// Asymptotic two-sample critical value √(−½ln(α/2))·√((n+m)/(nm)).
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-0.5 * (alpha / 2.0).ln()).sqrt() * ((n + m) / (n * m)).sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic, tested at level `alpha`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData {
            usable: a.len().min(b.len()),
            needed: 1,
        });
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::domain("KS samples contain NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut stat: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        stat = stat.max((i as f64 / na - j as f64 / nb).abs());
    }
    let critical = ks_critical(a.len(), b.len(), alpha);
    Ok(KsResult {
        statistic: stat,
        critical,
        reject: stat > critical,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// ln|error| − fitted value; `None` where the point was excluded.
    pub residuals: Vec<Option<f64>>,
    pub used: Vec<bool>,
}

impl RateFit {
    pub fn usable(&self) -> usize {
        self.used.iter().filter(|&&u| u).count()
    }
}

/// Least squares of ln|error| on ln ε. Non-positive or non-finite errors, and
/// errors with |error| < NOISE_FLOOR·stderr when stderrs are given, are excluded.
pub fn rate_fit(eps: &[f64], errors: &[f64], stderrs: Option<&[f64]>) -> Result<RateFit> {
    if eps.len() != errors.len() || stderrs.is_some_and(|s| s.len() != eps.len()) {
        return Err(Error::domain("rate_fit inputs must have equal lengths"));
    }
    let used: Vec<bool> = (0..eps.len())
        .map(|i| {
            let e = errors[i].abs();
            let floor = stderrs.map_or(0.0, |s| NOISE_FLOOR * s[i]);
            eps[i] > 0.0 && e.is_finite() && e > 0.0 && e >= floor
        })
        .collect();
    let pts: Vec<(f64, f64)> = (0..eps.len())
        .filter(|&i| used[i])
        .map(|i| (eps[i].ln(), errors[i].abs().ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            usable: pts.len(),
            needed: 3,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain(
            "rate_fit needs at least two distinct eps values",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let residuals = (0..eps.len())
        .map(|i| used[i].then(|| errors[i].abs().ln() - intercept - slope * eps[i].ln()))
        .collect();
    Ok(RateFit {
        slope,
        intercept,
        r2,
        residuals,
        used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::test_function;
    use crate::sampling::{experiment_id, Purpose, RngStream, StreamLabel};
    use approx::assert_abs_diff_eq;

    fn normals(n: usize, shift: f64, path: u64) -> Vec<f64> {
        let mut s = RngStream::new(
            99,
            StreamLabel {
                experiment: experiment_id("stats"),
                path,
                purpose: Purpose::Check,
            },
        );
        (0..n).map(|_| shift + s.standard_normal()).collect()
    }

    #[test]
    fn weak_error_identities() {
        let sin = test_function("sin").unwrap();
        let a = normals(1000, 0.0, 0);
        let e = paired_weak_error(&sin, &a, &a).unwrap();
        assert_eq!((e.estimate, e.stderr, e.n), (0.0, 0.0, 1000));
        assert!(!e.above_noise_floor());
        assert!(matches!(
            paired_weak_error(&sin, &a[..50], &a[..50]),
            Err(Error::InsufficientData { .. })
        ));
        assert!(paired_weak_error(&sin, &a, &a[..999]).is_err());
    }

    #[test]
    fn pairing_reduces_stderr() {
        let id = test_function("identity").unwrap();
        let a = normals(10_000, 0.0, 1);
        let noise = normals(10_000, 0.0, 2);
        let b: Vec<f64> = a
            .iter()
            .zip(&noise)
            .map(|(x, n)| x + 0.1 * n + 0.05)
            .collect();
        let paired = paired_weak_error(&id, &b, &a).unwrap();
        let unpaired = unpaired_weak_error(&id, &b, &a).unwrap();
        assert_abs_diff_eq!(paired.estimate, unpaired.estimate, epsilon = 1e-12);
        assert!(paired.stderr < unpaired.stderr / 5.0);
        assert!((paired.estimate - 0.05).abs() < 4.0 * paired.stderr);
    }

    #[test]
    fn stderr_scales_with_sample_size() {
        let cos = test_function("cos").unwrap();
        let a = normals(200_000, 0.0, 3);
        let b = normals(200_000, 0.3, 4);
        let full = paired_weak_error(&cos, &a, &b).unwrap();
        let half = paired_weak_error(&cos, &a[..100_000], &b[..100_000]).unwrap();
        let ratio = half.stderr / full.stderr;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn raw_moments_of_normals() {
        let x = normals(200_000, 0.0, 5);
        let m = raw_moments(&x, 4).unwrap();
        let exact = [0.0, 1.0, 0.0, 3.0];
        for (est, ex) in m.iter().zip(exact) {
            assert!((est.mean - ex).abs() < 4.0 * est.stderr, "{est:?}");
        }
        assert!(raw_moments(&[1.0], 2).is_err());
    }

    #[test]
    fn kde_standard_normal() {
        let x = normals(100_000, 0.0, 6);
        let k = kde(&x, Bandwidth::Silverman, KDE_GRID).unwrap();
        assert_eq!(k.values.len(), KDE_GRID);
        assert!((k.eval(0.0) - 0.398_942_28).abs() < 0.02);
        assert!((k.integral() - 1.0).abs() < 1e-3, "{}", k.integral());
        assert!(k.values.iter().all(|&v| v >= 0.0));
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(k.start, lo - 3.0 * k.bandwidth, epsilon = 1e-12);
    }

    #[test]
    fn kde_translation_equivariance() {
        let x = normals(5000, 0.0, 7);
        let shifted: Vec<f64> = x.iter().map(|v| v + 2.5).collect();
        let a = kde(&x, Bandwidth::Silverman, 512).unwrap();
        let b = kde(&shifted, Bandwidth::Silverman, 512).unwrap();
        assert_abs_diff_eq!(b.start, a.start + 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a.bandwidth, b.bandwidth, epsilon = 1e-12);
        for (u, v) in a.values.iter().zip(&b.values) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-9);
        }
    }

    #[test]
    fn kde_rejects_bad_input() {
        assert!(matches!(
            kde(&[1.0; 5000], Bandwidth::Silverman, 64),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(
            kde(&[1.0; 10], Bandwidth::Silverman, 64),
            Err(Error::InsufficientData { .. })
        ));
        assert!(Bandwidth::parse("silverman").is_ok());
        assert_eq!(Bandwidth::parse("0.25").unwrap(), Bandwidth::Fixed(0.25));
        assert!(Bandwidth::parse("-1").is_err());
    }

    #[test]
    fn tv_examples() {
        let a = kde(&normals(100_000, 0.0, 8), Bandwidth::Silverman, KDE_GRID).unwrap();
        assert_eq!(tv_from_kde(&a, &a), 0.0);
        let b = kde(&normals(100_000, 0.5, 9), Bandwidth::Silverman, KDE_GRID).unwrap();
        let tv = tv_from_kde(&a, &b);
        // 2Φ(1/4) − 1
        assert!((tv - 0.197_412_651_365_847).abs() < 0.015, "{tv}");
        assert_eq!(tv, tv_from_kde(&b, &a));
        let far = kde(&normals(10_000, 10.0, 10), Bandwidth::Silverman, KDE_GRID).unwrap();
        let tv_far = tv_from_kde(&a, &far);
        assert!((0.99..=1.0 + 2e-3).contains(&tv_far), "{tv_far}");
    }

    #[test]
    fn ks_examples() {
        let a = normals(10_000, 0.0, 11);
        let same = ks_two_sample(&a, &a, 0.01).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert!(!same.reject);
        let b = normals(10_000, 1.0, 12);
        let r = ks_two_sample(&a, &b, 0.01).unwrap();
        // sup_x Φ(x) − Φ(x−1) = 2Φ(1/2) − 1
        assert!(r.statistic > 0.3 && r.reject);
        assert!((r.statistic - 0.382_924_922_548_026).abs() < 0.03);
        assert_abs_diff_eq!(
            ks_critical(1_000_000, 1_000_000, 0.01),
            1.6276 * (2e-6f64).sqrt(),
            epsilon = 1e-6
        );
        assert!(ks_two_sample(&[], &a, 0.01).is_err());
        assert_eq!(
            ks_two_sample(&[0.0, 1.0], &[0.0, 1.0, 1.0, 0.0], 0.01)
                .unwrap()
                .statistic,
            0.0
        );
    }

    #[test]
    fn ks_same_law_mostly_accepts() {
        let accepted = (0..10)
            .filter(|&s| {
                let a = normals(100_000, 0.0, 100 + s);
                let b = normals(100_000, 0.0, 200 + s);
                !ks_two_sample(&a, &b, 0.01).unwrap().reject
            })
            .count();
        assert!(accepted >= 9);
    }

    #[test]
    fn rate_fit_exact_power_laws() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        let e: Vec<f64> = eps.iter().map(|x: &f64| x.powf(2.5)).collect();
        let f = rate_fit(&eps, &e, None).unwrap();
        assert!((f.slope - 2.5).abs() <= 1e-12);
        assert!((f.r2 - 1.0).abs() <= 1e-12);
        let e: Vec<f64> = eps.iter().map(|x: &f64| 3.0 * x.sqrt()).collect();
        let f = rate_fit(&eps, &e, None).unwrap();
        assert!((f.slope - 0.5).abs() <= 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() <= 1e-12);
        assert!(f.residuals.iter().all(|r| r.unwrap().abs() < 1e-12));
    }

    #[test]
    fn rate_fit_noisy_and_floor() {
        let eps: Vec<f64> = (0..8).map(|i| 0.2 * 0.7f64.powi(i)).collect();
        let noise = normals(8, 0.0, 13);
        let e: Vec<f64> = eps
            .iter()
            .zip(&noise)
            .map(|(x, n)| x.powf(2.5) * (1.0 + 0.1 * n))
            .collect();
        let f = rate_fit(&eps, &e, None).unwrap();
        assert!((f.slope - 2.5).abs() < 0.3, "{}", f.slope);
        let se = vec![1e-3; 8];
        let g = rate_fit(&eps, &e, Some(&se)).unwrap_or_else(|err| panic!("{err}"));
        assert!(g.usable() < 8 && g.used[0] && !g.used[7]);
        assert!(g.residuals[7].is_none());
        let all_noise = vec![1.0; 8];
        assert!(matches!(
            rate_fit(&eps, &e, Some(&all_noise)),
            Err(Error::InsufficientData { usable: 0, .. })
        ));
        assert!(rate_fit(&[0.1, 0.1, 0.1], &[1.0, 2.0, 3.0], None).is_err());
    }
}
