//! Run configuration: a config file (JSON or TOML) merged with command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use finlap_core::metric::MetricSpec;
use finlap_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Symbol,
    Volume,
    Spectrum,
    Geodesic,
    Verify,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lmax: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// Everything a run needs. Unset options take task-specific defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmax: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qmax: Option<usize>,
    /// Base point `[u, v]` for `symbol` and `geodesic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<[f64; 2]>,
    /// Initial direction angle for `geodesic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub csv: bool,
}

#[derive(Debug, Parser)]
#[command(
    name = "finlap",
    version,
    about = "Finsler-Laplace symbols, volumes, spectra and verification suites"
)]
pub struct Cli {
    /// Task to run; may instead come from the config file.
    #[arg(value_enum)]
    pub task: Option<Task>,
    /// JSON or TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Metric kind, e.g. kz-torus, kz-sphere, randers, riemannian.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Grid size n for finite differences and base quadrature.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub lmax: Option<usize>,
    /// Number of eigenvalues.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "fiber-n")]
    pub fiber_n: Option<usize>,
    /// Verification suite name, or `all`.
    #[arg(long)]
    pub suite: Option<String>,
    /// Also write tables as CSV next to the result file.
    #[arg(long)]
    pub csv: bool,
    /// Result file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pmax: Option<usize>,
    #[arg(long)]
    pub qmax: Option<usize>,
    /// Base point as `u,v`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub at: Option<[f64; 2]>,
    #[arg(long, allow_hyphen_values = true)]
    pub direction: Option<f64>,
    #[arg(long)]
    pub time: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// List metric kinds and verification suites, then exit.
    #[arg(long)]
    pub list: bool,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `u,v`, got {s:?}"));
    }
    let f = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([f(parts[0])?, f(parts[1])?])
}

pub fn read_config(path: &Path) -> Result<RunConfig, Error> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    if is_toml {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

impl Cli {
    /// Loads the config file, if any, and applies the flags on top.
    pub fn resolve(&self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(p) => read_config(p)?,
            None => RunConfig::default(),
        };
        if let Some(t) = self.task {
            c.task = Some(t);
        }
        if let Some(kind) = &self.metric {
            match &mut c.metric {
                Some(m) if &m.kind == kind => {}
                _ => c.metric = Some(MetricSpec::named(kind)),
            }
        }
        if let Some(eps) = self.eps {
            c.metric
                .get_or_insert_with(|| MetricSpec::named("kz-torus"))
                .eps = Some(eps);
        }
        let r = &mut c.resolution;
        r.grid_n = self.grid.or(r.grid_n);
        r.lmax = self.lmax.or(r.lmax);
        r.k = self.k.or(r.k);
        r.fiber_n = self.fiber_n.or(r.fiber_n);
        c.suite = self.suite.clone().or(c.suite);
        c.output = self.out.clone().or(c.output);
        c.seed = self.seed.or(c.seed);
        c.pmax = self.pmax.or(c.pmax);
        c.qmax = self.qmax.or(c.qmax);
        c.at = self.at.or(c.at);
        c.direction = self.direction.or(c.direction);
        c.time = self.time.or(c.time);
        c.dt = self.dt.or(c.dt);
        c.csv |= self.csv;
        if c.task.is_none() {
            return Err(Error::Config(
                "no task given; pass one of symbol, volume, spectrum, geodesic, verify".into(),
            ));
        }
        if c.csv && c.output.is_none() {
            return Err(Error::Config("--csv needs --out".into()));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(
            &p,
            "task = \"spectrum\"\n[metric]\nkind = \"kz-sphere\"\neps = 0.3\n[resolution]\nlmax = 8\nk = 5\n",
        )
        .unwrap();
        let cli = Cli::parse_from(["finlap", "--config", p.to_str().unwrap(), "--lmax", "10"]);
        let c = cli.resolve().unwrap();
        assert_eq!(c.task, Some(Task::Spectrum));
        assert_eq!(c.resolution.lmax, Some(10));
        assert_eq!(c.resolution.k, Some(5));
        assert_eq!(c.metric.unwrap().eps, Some(0.3));
    }

    #[test]
    fn switching_kind_drops_file_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        fs::write(
            &p,
            r#"{"task":"symbol","metric":{"kind":"randers","theta":[0.3,0.4]}}"#,
        )
        .unwrap();
        let c = Cli::parse_from([
            "finlap",
            "--config",
            p.to_str().unwrap(),
            "--metric",
            "kz-torus",
            "--eps",
            "0.6",
        ])
        .resolve()
        .unwrap();
        let m = c.metric.unwrap();
        assert_eq!(m.kind, "kz-torus");
        assert!(m.theta.is_none());
    }

    #[test]
    fn rejects_unknown_keys_and_missing_task() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        fs::write(&p, r#"{"task":"symbol","resolutoin":{}}"#).unwrap();
        assert!(matches!(read_config(&p), Err(Error::Config(_))));
        assert!(Cli::parse_from(["finlap"]).resolve().is_err());
        assert_eq!(parse_point("0.25,-1").unwrap(), [0.25, -1.0]);
        assert!(parse_point("1").is_err());
    }
}
