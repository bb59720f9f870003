//! Experiment configuration: INI-style file, defaults, command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ini::Ini;
use sha2::{Digest, Sha256};

use jumpgauss_core::coeffs::{coefficient_preset, test_function, JumpCoefficient, TestFunction};
use jumpgauss_core::measures::LevyMeasureModel;
use jumpgauss_core::quadrature::QuadSettings;
use jumpgauss_core::sampling::mark_samplers;
use jumpgauss_core::schemes::{scheme_registry, Model, SchemeConfig, REFERENCE_RATIO};
use jumpgauss_core::stats::Bandwidth;

use crate::CliError;

/// Every recognized key with its default. Root keys have no section prefix.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("experiment", ""),
    ("out", "results"),
    ("measure.family", "power-law"),
    ("measure.b", "0.5"),
    ("measure.eps_star", "0.5"),
    ("measure.alpha1", "1.0"),
    ("measure.abs_tol", "1e-14"),
    ("measure.rel_tol", "1e-12"),
    ("measure.quad_limit", "4000"),
    ("coefficient.preset", "identity"),
    ("scheme.x0", "0.0"),
    ("scheme.t_final", "1.0"),
    ("scheme.eps_list", "0.2, 0.1, 0.05, 0.025"),
    ("scheme.eps_ref", "auto"),
    ("scheme.steps_per_unit", "64"),
    ("scheme.paths", "10000"),
    ("scheme.schemes", "truncation, gaussian, reference"),
    ("scheme.mark_sampler", "direct"),
    ("stats.test_functions", "sin, cos, gauss, cauchy, tanh"),
    ("stats.kde_grid", "2048"),
    ("stats.bandwidth", "silverman"),
    ("generators.slack", "1e-6"),
    ("split.bands", "5"),
    ("split.draws", "1000000"),
    ("split.alpha", "0.01"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Default,
    File,
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Default => "default",
            Origin::File => "file",
            Origin::Flag => "flag",
        })
    }
}

/// Values given on the command line; `None` leaves the file/default value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<u64>,
    pub eps_list: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Final key → (value, origin), keys as `section.key`.
    entries: BTreeMap<String, (String, Origin)>,
    pub seed: u64,
    pub experiment: String,
    pub out: PathBuf,
    pub b: f64,
    pub eps_star: f64,
    pub alpha1: f64,
    pub quad: QuadSettings,
    pub coefficient: String,
    pub x0: f64,
    pub t_final: f64,
    pub eps_list: Vec<f64>,
    pub eps_ref: f64,
    pub steps_per_unit: u32,
    pub paths: u64,
    pub schemes: Vec<String>,
    pub mark_sampler: String,
    pub test_functions: Vec<TestFunction>,
    pub kde_grid: usize,
    pub bandwidth: Bandwidth,
    pub slack: f64,
    pub split_bands: u64,
    pub split_draws: usize,
    pub split_alpha: f64,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|x| x.trim().to_string())
        .filter(|x| !x.is_empty())
        .collect()
}

struct Reader<'a>(&'a BTreeMap<String, (String, Origin)>);

impl Reader<'_> {
    fn raw(&self, key: &str) -> &str {
        &self.0[key].0
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.raw(key);
        v.trim()
            .parse()
            .map_err(|_| bad(format!("{key}: cannot parse '{v}'")))
    }

    fn finite(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad(format!("{key}: must be finite, got {v}")))
        }
    }
}

impl ExperimentConfig {
    /// Loads `path` (if any) over the defaults and applies `overrides`.
    /// `subcommand` names the experiment when the file does not.
    pub fn load(
        path: Option<&Path>,
        overrides: &Overrides,
        subcommand: &str,
    ) -> Result<Self, CliError> {
        let mut entries: BTreeMap<String, (String, Origin)> = DEFAULTS
            .iter()
            .map(|(k, v)| (k.to_string(), (v.to_string(), Origin::Default)))
            .collect();
        if let Some(path) = path {
            let ini = Ini::load_from_file(path)
                .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
            for (section, props) in ini.iter() {
                for (key, value) in props.iter() {
                    let full = match section {
                        Some(s) => format!("{s}.{key}"),
                        None => key.to_string(),
                    };
                    let slot = entries
                        .get_mut(&full)
                        .ok_or_else(|| bad(format!("unknown config key '{full}'")))?;
                    *slot = (value.to_string(), Origin::File);
                }
            }
        }
        let mut set = |k: &str, v: String| {
            entries.insert(k.to_string(), (v, Origin::Flag));
        };
        if let Some(seed) = overrides.seed {
            set("seed", seed.to_string());
        }
        if let Some(paths) = overrides.paths {
            set("scheme.paths", paths.to_string());
        }
        if let Some(eps) = &overrides.eps_list {
            set("scheme.eps_list", eps.clone());
        }
        if let Some(out) = &overrides.out {
            set("out", out.display().to_string());
        }
        if entries["experiment"].0.trim().is_empty() {
            let origin = entries["experiment"].1;
            entries.insert("experiment".into(), (subcommand.to_string(), origin));
        }
        Self::from_entries(entries)
    }

    fn from_entries(entries: BTreeMap<String, (String, Origin)>) -> Result<Self, CliError> {
        let r = Reader(&entries);

        let family = r.raw("measure.family").trim().to_string();
        if family != "power-law" {
            return Err(bad(format!(
                "measure.family: only 'power-law' is configurable, got '{family}'"
            )));
        }
        let b = r.finite("measure.b")?;
        if !(0.0..1.0).contains(&b) {
            return Err(bad(format!("measure.b must lie in [0,1), got {b}")));
        }
        let quad = QuadSettings {
            abs_tol: r.finite("measure.abs_tol")?,
            rel_tol: r.finite("measure.rel_tol")?,
            limit: r.parse("measure.quad_limit")?,
        };
        if !(quad.abs_tol > 0.0 || quad.rel_tol > 0.0) || quad.limit == 0 {
            return Err(bad(
                "quadrature tolerances must be positive with a nonzero limit",
            ));
        }
        let eps_star = r.finite("measure.eps_star")?;
        let alpha1 = r.finite("measure.alpha1")?;
        if eps_star.is_nan() || eps_star <= 0.0 || alpha1.is_nan() || alpha1 <= 0.0 || alpha1 > 1.0
        {
            return Err(bad(format!(
                "need eps_star > 0 and alpha1 in (0,1], got {eps_star}, {alpha1}"
            )));
        }

        let coefficient = r.raw("coefficient.preset").trim().to_string();
        coefficient_preset(&coefficient).map_err(|e| bad(format!("coefficient.preset: {e}")))?;

        let mut eps_list = list(r.raw("scheme.eps_list"))
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| bad(format!("scheme.eps_list: cannot parse '{v}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if eps_list.is_empty() {
            return Err(bad("scheme.eps_list is empty"));
        }
        if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(bad(format!("scheme.eps_list: {e} is outside (0,1]")));
        }
        eps_list.sort_by(|a, b| b.total_cmp(a));
        if eps_list.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("scheme.eps_list has duplicates"));
        }
        let smallest = *eps_list.last().expect("non-empty");
        let eps_ref = match r.raw("scheme.eps_ref").trim() {
            "auto" => smallest / REFERENCE_RATIO,
            _ => r.finite("scheme.eps_ref")?,
        };
        if !(eps_ref > 0.0 && eps_ref <= smallest) {
            return Err(bad(format!(
                "scheme.eps_ref must lie in (0, {smallest}], got {eps_ref}"
            )));
        }

        let schemes = list(r.raw("scheme.schemes"));
        let registry = scheme_registry();
        if schemes.is_empty() {
            return Err(bad("scheme.schemes is empty"));
        }
        if let Some(s) = schemes.iter().find(|s| !registry.contains(s)) {
            return Err(bad(format!(
                "scheme.schemes: unknown scheme '{s}' (known: {})",
                registry.names().collect::<Vec<_>>().join(", ")
            )));
        }
        let mark_sampler = r.raw("scheme.mark_sampler").trim().to_string();
        if !mark_samplers().contains(&mark_sampler) {
            return Err(bad(format!(
                "scheme.mark_sampler: unknown sampler '{mark_sampler}'"
            )));
        }

        let test_functions = list(r.raw("stats.test_functions"))
            .iter()
            .map(|n| test_function(n).map_err(|e| bad(format!("stats.test_functions: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if test_functions.is_empty() {
            return Err(bad("stats.test_functions is empty"));
        }
        let bandwidth =
            Bandwidth::parse(r.raw("stats.bandwidth")).map_err(|e| bad(e.to_string()))?;
        let kde_grid: usize = r.parse("stats.kde_grid")?;
        if kde_grid < 16 {
            return Err(bad(format!("stats.kde_grid must be >= 16, got {kde_grid}")));
        }

        let slack = r.finite("generators.slack")?;
        if slack < 0.0 {
            return Err(bad("generators.slack must be >= 0"));
        }
        let split_bands: u64 = r.parse("split.bands")?;
        let split_draws: usize = r.parse("split.draws")?;
        let split_alpha = r.finite("split.alpha")?;
        if split_bands == 0 || split_draws < 2 || !(split_alpha > 0.0 && split_alpha < 1.0) {
            return Err(bad("split: need bands >= 1, draws >= 2, alpha in (0,1)"));
        }

        let cfg = Self {
            seed: r.parse("seed")?,
            experiment: r.raw("experiment").trim().to_string(),
            out: PathBuf::from(r.raw("out").trim()),
            b,
            eps_star,
            alpha1,
            quad,
            coefficient,
            x0: r.finite("scheme.x0")?,
            t_final: r.finite("scheme.t_final")?,
            eps_ref,
            steps_per_unit: r.parse("scheme.steps_per_unit")?,
            paths: r.parse("scheme.paths")?,
            schemes,
            mark_sampler,
            eps_list,
            test_functions,
            kde_grid,
            bandwidth,
            slack,
            split_bands,
            split_draws,
            split_alpha,
            entries,
        };
        cfg.scheme_config()
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    pub fn measure(&self) -> LevyMeasureModel {
        LevyMeasureModel::power_law(self.b)
            .expect("exponent validated")
            .with_quadrature(self.quad)
    }

    pub fn coefficient(&self) -> JumpCoefficient {
        coefficient_preset(&self.coefficient).expect("preset validated")
    }

    pub fn model(&self) -> Model {
        Model::new(self.measure(), self.coefficient())
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            x0: self.x0,
            t_final: self.t_final,
            eps: self.eps_list[0],
            eps_ref: self.eps_ref,
            steps_per_unit: self.steps_per_unit,
            kind: "gaussian".into(),
            seed: self.seed,
            paths: self.paths,
            experiment: self.experiment.clone(),
            mark_sampler: self.mark_sampler.clone(),
            eps_star: self.eps_star,
            alpha1: self.alpha1,
        }
    }

    /// Canonical `key = value` lines, sorted by key; the hashed echo.
    pub fn canonical(&self) -> String {
        self.entries
            .iter()
            .map(|(k, (v, _))| format!("{k} = {}\n", v.trim()))
            .collect()
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, Origin)> {
        self.entries
            .iter()
            .map(|(k, (v, o))| (k.as_str(), v.trim(), *o))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults_load() {
        let c = ExperimentConfig::load(None, &Overrides::default(), "eta").unwrap();
        assert_eq!(c.experiment, "eta");
        assert_eq!(c.eps_list, [0.2, 0.1, 0.05, 0.025]);
        assert_eq!(c.eps_ref, 0.025 / 16.0);
        assert_eq!(c.test_functions.len(), 5);
        assert!(c.entries().all(|(_, _, o)| o == Origin::Default));
    }

    #[test]
    fn file_and_flags_layer_in_order() {
        let f = write("seed = 5\n[scheme]\npaths = 77\neps_list = 0.05, 0.2\n[coefficient]\npreset = sigma-tanh\n");
        let o = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let c = ExperimentConfig::load(Some(f.path()), &o, "simulate").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.paths, 77);
        assert_eq!(c.eps_list, [0.2, 0.05]);
        assert_eq!(c.coefficient, "sigma-tanh");
        let origins: BTreeMap<&str, Origin> = c.entries().map(|(k, _, o)| (k, o)).collect();
        assert_eq!(origins["seed"], Origin::Flag);
        assert_eq!(origins["scheme.paths"], Origin::File);
        assert_eq!(origins["scheme.x0"], Origin::Default);
    }

    #[test]
    fn hash_tracks_values() {
        let a = ExperimentConfig::load(None, &Overrides::default(), "eta").unwrap();
        let b = ExperimentConfig::load(None, &Overrides::default(), "eta").unwrap();
        let c = ExperimentConfig::load(
            None,
            &Overrides {
                seed: Some(2),
                ..Overrides::default()
            },
            "eta",
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for body in [
            "[scheme]\nbogus = 1\n",
            "[measure]\nb = 1.0\n",
            "[measure]\nfamily = tempered\n",
            "[scheme]\neps_list = 0.1, 0.1\n",
            "[scheme]\neps_list = 1.5\n",
            "[scheme]\neps_ref = 0.5\n",
            "[scheme]\nschemes = truncation, milstein\n",
            "[scheme]\npaths = 0\n",
            "[scheme]\nt_final = -1\n",
            "[stats]\ntest_functions = sin, sinc\n",
            "[stats]\nbandwidth = wide\n",
            "[coefficient]\npreset = cubic\n",
            "seed = minus-one\n",
        ] {
            let f = write(body);
            let r = ExperimentConfig::load(Some(f.path()), &Overrides::default(), "x");
            assert!(matches!(r, Err(CliError::Config(_))), "{body}");
        }
        let missing = ExperimentConfig::load(
            Some(Path::new("/nonexistent/x.ini")),
            &Overrides::default(),
            "x",
        );
        assert!(matches!(missing, Err(CliError::Config(_))));
    }
}
