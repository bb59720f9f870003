//! Subcommand drivers.

use std::fmt;
use std::path::PathBuf;

use serde_json::{json, Value};

use jumpgauss_core::experiments::{
    eta_table, generator_check, split_check, tv_rate, weak_rate, SchemeFit,
};
use jumpgauss_core::generators::default_grid;
use jumpgauss_core::schemes::{simulate_coupled, CoupledResult};

use crate::config::ExperimentConfig;
use crate::output::{num, RunOutput};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Eta,
    GenCheck,
    SplitCheck,
    Simulate,
    WeakRate,
    TvRate,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Eta => "eta",
            Subcommand::GenCheck => "gen-check",
            Subcommand::SplitCheck => "split-check",
            Subcommand::Simulate => "simulate",
            Subcommand::WeakRate => "weak-rate",
            Subcommand::TvRate => "tv-rate",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Runs one subcommand; returns the manifest path.
pub fn run(cmd: Subcommand, config: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let mut out = RunOutput::new(config, cmd.name())?;
    match cmd {
        Subcommand::Eta => eta(config, &mut out)?,
        Subcommand::GenCheck => gen_check(config, &mut out)?,
        Subcommand::SplitCheck => split(config, &mut out)?,
        Subcommand::Simulate => simulate(config, &mut out)?,
        Subcommand::WeakRate => weak(config, &mut out)?,
        Subcommand::TvRate => tv(config, &mut out)?,
    }
    out.finish()
}

fn eta(c: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let rows = eta_table(&c.measure(), &c.coefficient(), &c.eps_list, c.x0)?;
    out.csv(
        "eta.csv",
        &[
            "eps",
            "eta1",
            "eta2",
            "eta3",
            "drift_b",
            "diffusion_a",
            "quadrature_rel_gap",
        ],
        rows.iter().map(|r| {
            vec![
                num(r.eps),
                num(r.eta1),
                num(r.eta2),
                num(r.eta3),
                num(r.drift),
                num(r.diffusion),
                num(r.quadrature_rel_gap),
            ]
        }),
        json!({ "x": c.x0, "b": c.b }),
    )?;
    Ok(())
}

fn gen_check(c: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let reports = generator_check(
        &c.measure(),
        &c.coefficient(),
        &c.test_functions,
        &c.eps_list,
        &default_grid(),
        c.slack,
    )?;
    let summary: Vec<Value> = reports
        .iter()
        .zip(&c.test_functions)
        .map(|(r, phi)| {
            json!({
                "phi": phi.name,
                "all_pass": r.all_pass(),
                "truncation_all_pass": r.truncation_all_pass(),
                "max_gap": r.max_gap(),
                "max_ratio": r.max_ratio(),
            })
        })
        .collect();
    for (r, phi) in reports.iter().zip(&c.test_functions) {
        if !r.all_pass() {
            log::warn!(
                "{}: generator gap exceeds its bound at some grid point",
                phi.name
            );
        }
    }
    out.csv(
        "gen_check.csv",
        &[
            "phi",
            "eps",
            "s",
            "x",
            "full",
            "approx",
            "gap",
            "bound",
            "pass",
            "truncation_gap",
            "truncation_bound",
            "truncation_pass",
        ],
        reports.iter().flat_map(|r| &r.points).map(|p| {
            vec![
                p.phi.to_string(),
                num(p.eps),
                num(p.s),
                num(p.x),
                num(p.full),
                num(p.approx),
                num(p.gap),
                num(p.bound),
                p.pass.to_string(),
                num(p.truncation_gap),
                num(p.truncation_bound),
                p.truncation_pass.to_string(),
            ]
        }),
        json!({ "slack": c.slack, "summary": summary }),
    )?;
    Ok(())
}

fn split(c: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let rows = split_check(
        &c.measure(),
        c.split_bands,
        c.eps_star,
        c.alpha1,
        c.split_draws,
        c.seed,
        c.split_alpha,
    )?;
    let mut header = vec![
        "band",
        "split_eps",
        "xi_rate",
        "xi_expected",
        "ks_statistic",
        "ks_critical",
        "ks_reject",
    ];
    const MOMENT_COLUMNS: [[&str; 3]; 4] = [
        ["m1_composite", "m1_direct", "m1_stderr"],
        ["m2_composite", "m2_direct", "m2_stderr"],
        ["m3_composite", "m3_direct", "m3_stderr"],
        ["m4_composite", "m4_direct", "m4_stderr"],
    ];
    header.extend(MOMENT_COLUMNS.iter().flatten());
    out.csv(
        "split_check.csv",
        &header,
        rows.iter().map(|r| {
            let mut row = vec![
                r.band.to_string(),
                num(r.split_eps),
                num(r.xi_rate),
                num(r.xi_expected),
                num(r.ks_statistic),
                num(r.ks_critical),
                r.ks_reject.to_string(),
            ];
            for m in &r.moments {
                row.extend([num(m.composite), num(m.direct), num(m.combined_stderr)]);
            }
            row
        }),
        json!({ "draws": c.split_draws, "alpha": c.split_alpha }),
    )?;
    Ok(())
}

fn coupled(c: &ExperimentConfig, need_reference: bool) -> Result<CoupledResult, CliError> {
    let mut kinds: Vec<&str> = c.schemes.iter().map(String::as_str).collect();
    if need_reference && !kinds.contains(&"reference") {
        kinds.push("reference");
    }
    let started = std::time::Instant::now();
    let result = simulate_coupled(&c.eps_list, &kinds, &c.scheme_config(), &c.model())?;
    log::info!(
        "{} paths x {} runs in {:.1?}",
        result.paths,
        result.runs.len(),
        started.elapsed()
    );
    Ok(result)
}

fn coupling_record(c: &ExperimentConfig, r: &CoupledResult) -> Value {
    json!({
        "paths": r.paths,
        "eps_ref": r.eps_ref,
        "x0": r.x0,
        "steps_per_unit": c.steps_per_unit,
        "mark_sampler": c.mark_sampler,
        "event_digest": { "count": r.digest.count, "checksum": format!("{:016x}", r.digest.checksum) },
    })
}

/// Schemes compared against the reference.
fn compared(c: &ExperimentConfig) -> Result<Vec<&str>, CliError> {
    let v: Vec<&str> = c
        .schemes
        .iter()
        .map(String::as_str)
        .filter(|s| *s != "reference")
        .collect();
    if v.is_empty() {
        return Err(CliError::Config(
            "scheme.schemes must name at least one scheme besides the reference".into(),
        ));
    }
    Ok(v)
}

fn simulate(c: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let r = coupled(c, false)?;
    let rows = (0..r.paths as usize).flat_map(|p| {
        r.runs.iter().zip(&r.terminals).map(move |(run, col)| {
            vec![p.to_string(), run.scheme.clone(), num(run.eps), num(col[p])]
        })
    });
    out.csv(
        "terminals.csv",
        &["path", "scheme", "eps", "terminal"],
        rows,
        coupling_record(c, &r),
    )?;
    Ok(())
}

fn fit_rows(fits: &[SchemeFit]) -> Vec<Vec<String>> {
    fits.iter()
        .map(|f| match &f.fit {
            Ok(fit) => vec![
                f.scheme.clone(),
                "ok".into(),
                num(fit.slope),
                num(fit.intercept),
                num(fit.r2),
                fit.usable().to_string(),
                String::new(),
            ],
            Err(e) => vec![
                f.scheme.clone(),
                e.kind().into(),
                String::new(),
                String::new(),
                String::new(),
                match e {
                    jumpgauss_core::Error::InsufficientData { usable, .. } => usable.to_string(),
                    _ => String::new(),
                },
                e.to_string(),
            ],
        })
        .collect()
}

const FIT_HEADER: [&str; 7] = [
    "scheme",
    "status",
    "slope",
    "intercept",
    "r2",
    "used_points",
    "detail",
];

fn weak(c: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let schemes = compared(c)?;
    let r = coupled(c, true)?;
    let report = weak_rate(&r, &schemes, &c.eps_list, &c.test_functions)?;
    let meta = coupling_record(c, &r);
    out.csv(
        "weak_errors.csv",
        &[
            "scheme",
            "eps",
            "test_function",
            "estimate",
            "stderr",
            "n",
            "above_floor",
        ],
        report.rows.iter().map(|w| {
            vec![
                w.scheme.clone(),
                num(w.eps),
                w.error.test_function.clone(),
                num(w.error.estimate),
                num(w.error.stderr),
                w.error.n.to_string(),
                w.error.above_noise_floor().to_string(),
            ]
        }),
        meta.clone(),
    )?;
    out.csv(
        "weak_proxy.csv",
        &["scheme", "eps", "proxy", "stderr", "argmax", "above_floor"],
        report.proxies.iter().map(|p| {
            vec![
                p.scheme.clone(),
                num(p.eps),
                num(p.value),
                num(p.stderr),
                p.argmax.clone(),
                p.above_floor.to_string(),
            ]
        }),
        meta.clone(),
    )?;
    out.csv("weak_fit.csv", &FIT_HEADER, fit_rows(&report.fits), meta)?;
    Ok(())
}

fn tv(c: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let schemes = compared(c)?;
    let r = coupled(c, true)?;
    let report = tv_rate(&r, &schemes, &c.eps_list, c.kde_grid, c.bandwidth)?;
    let mut meta = coupling_record(c, &r);
    meta["kde_grid"] = json!(c.kde_grid);
    meta["reference_bandwidth"] = json!(report.reference_bandwidth);
    out.csv(
        "tv.csv",
        &["scheme", "eps", "tv", "bandwidth"],
        report
            .rows
            .iter()
            .map(|t| vec![t.scheme.clone(), num(t.eps), num(t.tv), num(t.bandwidth)]),
        meta.clone(),
    )?;
    out.csv("tv_fit.csv", &FIT_HEADER, fit_rows(&report.fits), meta)?;
    Ok(())
}
