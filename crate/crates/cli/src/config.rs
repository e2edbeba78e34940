//! Experiment configuration: a flat `key = value` file with the sections
//! [experiment], [covariance], [solver] and [quadrature]. Missing keys take
//! the default setup (example 1 at desk scale); unknown keys are rejected
//! with a full list.

use std::fmt::Write as _;

use aduq::covariance::CovarianceModel;
use aduq::quadrature::Method;
use aduq::uq::{ExampleKind, StudyConfig};

use crate::CliError;

/// Everything the `converge` subcommand needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub example: ExampleKind,
    pub levels: Vec<u32>,
    pub methods: Vec<Method>,
    pub reference_level: u32,
    pub reference_samples: usize,
    pub fit_min_level: u32,
    pub output_dir: String,
    pub write_reference_vtk: bool,
    pub a: f64,
    pub amplitude: f64,
    pub length_scale_denominator: f64,
    pub multipliers: [f64; 3],
    pub boundary_damping: bool,
    pub mean: [f64; 3],
    pub cg_rtol: f64,
    pub cg_max_iter: usize,
    /// 0 means: take ADUQ_THREADS or the available parallelism.
    pub threads: usize,
    pub delta: f64,
    pub mc_seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            example: ExampleKind::One,
            levels: vec![0, 1, 2, 3],
            methods: vec![Method::Mc, Method::Qmc, Method::Sg],
            reference_level: 4,
            reference_samples: 1000,
            fit_min_level: 1,
            output_dir: "aduq-out".into(),
            write_reference_vtk: false,
            a: 0.12,
            amplitude: 0.01,
            length_scale_denominator: 50.0,
            multipliers: [1.0, 9.0, 9.0],
            boundary_damping: true,
            mean: [1.0, 0.0, 0.0],
            cg_rtol: 1e-10,
            cg_max_iter: 50_000,
            threads: 0,
            delta: 0.2,
            mc_seeds: vec![101, 202, 303, 404, 505],
        }
    }
}

impl ExperimentConfig {
    pub fn covariance_model(&self) -> CovarianceModel<f64> {
        CovarianceModel {
            amplitude: self.amplitude,
            length_scale_denominator: self.length_scale_denominator,
            diagonal_multipliers: self.multipliers,
            boundary_damping: self.boundary_damping,
            mean_vector: self.mean,
        }
    }

    pub fn resolved_threads(&self) -> usize {
        if self.threads > 0 {
            return self.threads;
        }
        if let Ok(v) = std::env::var("ADUQ_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                if n > 0 {
                    return n;
                }
            }
        }
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    }

    pub fn study_config(&self) -> StudyConfig<f64> {
        StudyConfig {
            example: self.example,
            levels: self.levels.clone(),
            methods: self.methods.clone(),
            reference_level: self.reference_level,
            reference_samples: self.reference_samples,
            delta: self.delta,
            mc_seeds: self.mc_seeds.clone(),
            a: self.a,
            model: self.covariance_model(),
            cg_rtol: self.cg_rtol,
            cg_max_iter: self.cg_max_iter,
            threads: self.resolved_threads(),
            fit_min_level: self.fit_min_level,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.study_config()
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if self.amplitude <= 0.0 {
            return Err(CliError::Validation(format!(
                "covariance amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        if self.length_scale_denominator <= 0.0 {
            return Err(CliError::Validation(format!(
                "length scale denominator must be positive, got {}",
                self.length_scale_denominator
            )));
        }
        if self.reference_samples == 0 {
            return Err(CliError::Validation(
                "reference_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Canonical text form; `parse` reads it back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "example = {}", self.example.id());
        let _ = writeln!(s, "levels = {}", join_list(self.levels.iter()));
        let _ = writeln!(
            s,
            "methods = {}",
            join_list(self.methods.iter().map(|m| m.label()))
        );
        let _ = writeln!(s, "reference_level = {}", self.reference_level);
        let _ = writeln!(s, "reference_samples = {}", self.reference_samples);
        let _ = writeln!(s, "fit_min_level = {}", self.fit_min_level);
        let _ = writeln!(s, "output_dir = {}", self.output_dir);
        let _ = writeln!(s, "write_reference_vtk = {}", self.write_reference_vtk);
        let _ = writeln!(s, "a = {}", self.a);
        let _ = writeln!(s);
        let _ = writeln!(s, "[covariance]");
        let _ = writeln!(s, "amplitude = {}", self.amplitude);
        let _ = writeln!(
            s,
            "length_scale_denominator = {}",
            self.length_scale_denominator
        );
        let _ = writeln!(s, "multipliers = {}", join_list(self.multipliers.iter()));
        let _ = writeln!(s, "boundary_damping = {}", self.boundary_damping);
        let _ = writeln!(s, "mean = {}", join_list(self.mean.iter()));
        let _ = writeln!(s);
        let _ = writeln!(s, "[solver]");
        let _ = writeln!(s, "cg_rtol = {}", self.cg_rtol);
        let _ = writeln!(s, "cg_max_iter = {}", self.cg_max_iter);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s);
        let _ = writeln!(s, "[quadrature]");
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "mc_seeds = {}", join_list(self.mc_seeds.iter()));
        s
    }
}

fn join_list<I: IntoIterator<Item = T>, T: ToString>(items: I) -> String {
    let inner = items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    format!("[{inner}]")
}

fn strip_brackets(value: &str) -> &str {
    let v = value.trim();
    v.strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .unwrap_or(v)
        .trim()
}

fn parse_list<T, E>(value: &str, line: usize) -> Result<Vec<T>, CliError>
where
    T: std::str::FromStr<Err = E>,
    E: std::fmt::Display,
{
    let inner = strip_brackets(value);
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|item| {
            item.trim().parse::<T>().map_err(|e| {
                CliError::Validation(format!("line {line}: bad list item `{}`: {e}", item.trim()))
            })
        })
        .collect()
}

fn parse_scalar<T, E>(value: &str, line: usize) -> Result<T, CliError>
where
    T: std::str::FromStr<Err = E>,
    E: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| {
        CliError::Validation(format!("line {line}: bad value `{}`: {e}", value.trim()))
    })
}

fn parse_triple(value: &str, line: usize) -> Result<[f64; 3], CliError> {
    let v: Vec<f64> = parse_list(value, line)?;
    if v.len() != 3 {
        return Err(CliError::Validation(format!(
            "line {line}: expected 3 values, got {}",
            v.len()
        )));
    }
    Ok([v[0], v[1], v[2]])
}

/// Parses the config text, applying defaults for missing keys. The fully
/// resolved config still has to pass `validate`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    let mut section = String::new();
    let mut unknown: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| {
                CliError::Validation(format!("line {line_no}: unterminated section header"))
            })?;
            section = name.trim().to_string();
            if !matches!(
                section.as_str(),
                "experiment" | "covariance" | "solver" | "quadrature"
            ) {
                unknown.push(format!("[{section}] (line {line_no})"));
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Validation(format!(
                "line {line_no}: expected `key = value`, got `{line}`"
            ))
        })?;
        let key = key.trim();
        let value = value.trim();

        match (section.as_str(), key) {
            ("experiment", "example") => {
                let id: u32 = parse_scalar(value, line_no)?;
                cfg.example = ExampleKind::from_id(id).ok_or_else(|| {
                    CliError::Validation(format!(
                        "line {line_no}: example must be 1 or 2, got {id}"
                    ))
                })?;
            }
            ("experiment", "levels") => cfg.levels = parse_list(value, line_no)?,
            ("experiment", "methods") => {
                cfg.methods = strip_brackets(value)
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim()
                            .parse::<Method>()
                            .map_err(|e| CliError::Validation(format!("line {line_no}: {e}")))
                    })
                    .collect::<Result<_, _>>()?;
            }
            ("experiment", "reference_level") => {
                cfg.reference_level = parse_scalar(value, line_no)?
            }
            ("experiment", "reference_samples") => {
                cfg.reference_samples = parse_scalar(value, line_no)?
            }
            ("experiment", "fit_min_level") => cfg.fit_min_level = parse_scalar(value, line_no)?,
            ("experiment", "output_dir") => cfg.output_dir = value.to_string(),
            ("experiment", "write_reference_vtk") => {
                cfg.write_reference_vtk = parse_scalar(value, line_no)?
            }
            ("experiment", "a") => cfg.a = parse_scalar(value, line_no)?,
            ("covariance", "amplitude") => cfg.amplitude = parse_scalar(value, line_no)?,
            ("covariance", "length_scale_denominator") => {
                cfg.length_scale_denominator = parse_scalar(value, line_no)?
            }
            ("covariance", "multipliers") => cfg.multipliers = parse_triple(value, line_no)?,
            ("covariance", "boundary_damping") => {
                cfg.boundary_damping = parse_scalar(value, line_no)?
            }
            ("covariance", "mean") => cfg.mean = parse_triple(value, line_no)?,
            ("solver", "cg_rtol") => cfg.cg_rtol = parse_scalar(value, line_no)?,
            ("solver", "cg_max_iter") => cfg.cg_max_iter = parse_scalar(value, line_no)?,
            ("solver", "threads") => cfg.threads = parse_scalar(value, line_no)?,
            ("quadrature", "delta") => cfg.delta = parse_scalar(value, line_no)?,
            ("quadrature", "mc_seeds") => cfg.mc_seeds = parse_list(value, line_no)?,
            _ => unknown.push(format!("{section}.{key} (line {line_no})")),
        }
    }

    if !unknown.is_empty() {
        return Err(CliError::Validation(format!(
            "unknown configuration keys: {}",
            unknown.join(", ")
        )));
    }
    cfg.validate()?;
    Ok(cfg)
}
