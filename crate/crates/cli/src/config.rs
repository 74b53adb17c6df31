//! Sectioned TOML run configuration with aggregated validation.

use std::path::PathBuf;

use csl_core::sweeplab::SweepConfig;
use csl_core::synthkit::{DEFAULT_OVERSAMPLE, DEFAULT_WINDOW_WIDTH};
use csl_core::{CurveKind, CurveSpec, GridPolicy};
use serde::Serialize;
use toml::{Table, Value};

pub const DEFAULT_MEMORY_CAP: u128 = 8 << 30;
pub const MEMORY_CAP_ENV: &str = "CSL_MEMORY_CAP";

const SECTIONS: &[(&str, &[&str])] = &[
    ("curve", &["kind", "n", "perturbation", "domain"]),
    ("construction", &["rho", "c0", "aperture", "cutoff_delta"]),
    ("grid", &["policy", "side", "width", "oversample", "memory_cap"]),
    (
        "experiment",
        &[
            "p",
            "lambda",
            "short_nodes",
            "full_nodes",
            "epsilon",
            "ball_points",
            "t",
            "decay_lambda",
            "tau_samples",
            "jobs",
            "seed",
        ],
    ),
    ("output", &["dir", "svg", "snapshot"]),
];

/// Every violation found while parsing, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration:\n  {}", .violations.join("\n  "))]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl ConfigError {
    pub fn single(msg: impl Into<String>) -> Self {
        Self { violations: vec![msg.into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub policy: GridPolicy,
    /// Torus side `L`; the windowed policy treats it as a minimum.
    pub side: f64,
    pub memory_cap: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub curve: CurveSpec,
    pub ps: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub rho: f64,
    pub c0: f64,
    pub aperture: f64,
    pub cutoff_delta: f64,
    pub grid: GridConfig,
    pub short_nodes: usize,
    pub full_nodes: usize,
    pub epsilon: f64,
    pub ball_points: usize,
    /// Times for `multiplier-verify`.
    pub t_values: Vec<f64>,
    pub decay_lambdas: Vec<f64>,
    pub tau_samples: usize,
    pub jobs: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub svg: bool,
    pub snapshot: bool,
    pub warnings: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("empty configuration is valid")
    }
}

struct Reader<'a> {
    root: &'a Table,
    violations: Vec<String>,
}

impl<'a> Reader<'a> {
    fn get(&self, section: &str, key: &str) -> Option<&'a Value> {
        self.root.get(section).and_then(Value::as_table).and_then(|t| t.get(key))
    }

    fn bad(&mut self, section: &str, key: &str, want: &str, got: &Value) {
        self.violations.push(format!("[{section}] {key}: expected {want}, got {}", got.type_str()));
    }

    fn float(&mut self, section: &str, key: &str, default: f64) -> f64 {
        match self.get(section, key) {
            None => default,
            Some(v) => as_f64(v).unwrap_or_else(|| {
                self.bad(section, key, "a number", v);
                default
            }),
        }
    }

    fn int(&mut self, section: &str, key: &str, default: i64) -> i64 {
        match self.get(section, key) {
            None => default,
            Some(Value::Integer(i)) => *i,
            Some(v) => {
                self.bad(section, key, "an integer", v);
                default
            }
        }
    }

    fn boolean(&mut self, section: &str, key: &str, default: bool) -> bool {
        match self.get(section, key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                self.bad(section, key, "true or false", v);
                default
            }
        }
    }

    fn string(&mut self, section: &str, key: &str, default: &str) -> String {
        match self.get(section, key) {
            None => default.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => {
                self.bad(section, key, "a string", v);
                default.to_string()
            }
        }
    }

    fn floats(&mut self, section: &str, key: &str, default: &[f64]) -> Vec<f64> {
        match self.get(section, key) {
            None => default.to_vec(),
            Some(v) => match float_list(v) {
                Some(xs) => xs,
                None => {
                    self.bad(section, key, "a list of numbers", v);
                    default.to_vec()
                }
            },
        }
    }

    fn float_lists(&mut self, section: &str, key: &str) -> Option<Vec<Vec<f64>>> {
        let v = self.get(section, key)?;
        let lists = v.as_array().and_then(|a| a.iter().map(float_list).collect::<Option<Vec<_>>>());
        if lists.is_none() {
            self.bad(section, key, "a list of coefficient lists", v);
        }
        lists
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(msg());
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn float_list(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(as_f64).collect()
}

fn nearest<'b>(word: &str, candidates: impl IntoIterator<Item = &'b str>) -> Option<&'b str> {
    candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|(d, c)| *d <= 3.max(c.len() / 2))
        .min()
        .map(|(_, c)| c)
}

fn unknown_keys(root: &Table) -> Vec<String> {
    let mut out = Vec::new();
    for (name, value) in root {
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == name) else {
            let hint = nearest(name, SECTIONS.iter().map(|(s, _)| *s))
                .map(|s| format!(" (did you mean [{s}]?)"))
                .unwrap_or_default();
            out.push(format!("unknown section [{name}]{hint}"));
            continue;
        };
        let Some(table) = value.as_table() else {
            out.push(format!("[{name}] must be a section, got {}", value.type_str()));
            continue;
        };
        for key in table.keys() {
            if keys.contains(&key.as_str()) {
                continue;
            }
            let hint = match nearest(key, keys.iter().copied()) {
                Some(k) => format!(" (did you mean `{k}`?)"),
                None => match SECTIONS.iter().find(|(_, ks)| ks.contains(&key.as_str())) {
                    Some((s, _)) => format!(" (`{key}` belongs in [{s}])"),
                    None => String::new(),
                },
            };
            out.push(format!("unknown key `{key}` in [{name}]{hint}"));
        }
    }
    out
}

fn is_dyadic(x: f64) -> bool {
    x >= 1.0 && x.fract() == 0.0 && (x as u64).is_power_of_two()
}

/// Parses and validates a run configuration; absent keys take the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::single(format!("syntax: {e}")))?;
    let mut r = Reader { root: &root, violations: unknown_keys(&root) };
    let mut warnings = Vec::new();

    let kind = r.string("curve", "kind", "moment");
    let n = r.int("curve", "n", 3);
    let domain = r.floats("curve", "domain", &[-1.0, 1.0]);
    let perturbation = r.float_lists("curve", "perturbation");
    r.check((2..=6).contains(&n), || format!("[curve] n = {n} outside 2..=6"));
    r.check(domain.len() == 2 && domain[0] <= -1.0 && domain[1] >= 1.0, || {
        format!("[curve] domain = {domain:?} must be [a, b] with a ≤ -1 and b ≥ 1")
    });
    let n = n.clamp(2, 6) as usize;
    let curve_kind = match kind.as_str() {
        "moment" => {
            r.check(perturbation.is_none(), || "[curve] perturbation needs kind = \"perturbed-moment\"".into());
            Some(CurveKind::Moment)
        }
        "perturbed-moment" => match perturbation {
            Some(p) if p.len() == n => Some(CurveKind::PerturbedMoment(p)),
            Some(p) => {
                r.violations.push(format!("[curve] perturbation has {} component lists, n = {n}", p.len()));
                None
            }
            None => {
                r.violations.push("[curve] kind = \"perturbed-moment\" needs a perturbation list".into());
                None
            }
        },
        other => {
            let hint = nearest(other, ["moment", "perturbed-moment"]).map(|k| format!(" (did you mean \"{k}\"?)"));
            r.violations.push(format!("[curve] unknown kind \"{other}\"{}", hint.unwrap_or_default()));
            None
        }
    };
    let curve = match curve_kind {
        Some(k) if domain.len() == 2 => match CurveSpec::new(n, k, (domain[0], domain[1])) {
            Ok(c) => Some(c),
            Err(e) => {
                r.violations.push(format!("[curve] {e}"));
                None
            }
        },
        _ => None,
    };

    let rho = r.float("construction", "rho", 0.25);
    let c0 = r.float("construction", "c0", 0.25);
    let aperture = r.float("construction", "aperture", 0.5);
    let cutoff_delta = r.float("construction", "cutoff_delta", 0.5);
    r.check(rho > 0.0 && rho < 1.0, || format!("[construction] rho = {rho} must lie in ρ ∈ (0,1)"));
    r.check(aperture > 0.0 && aperture <= 1.0, || format!("[construction] aperture = {aperture} must lie in (0,1]"));
    r.check(cutoff_delta > 0.0 && cutoff_delta < 1.0, || {
        format!("[construction] cutoff_delta = {cutoff_delta} must lie in (0,1)")
    });
    r.check(c0 > 0.0 && c0 < aperture && c0 < cutoff_delta, || {
        format!("[construction] c0 = {c0} must be positive and below both aperture ({aperture}) and cutoff_delta ({cutoff_delta})")
    });

    let policy_name = r.string("grid", "policy", "windowed");
    let side = r.float("grid", "side", 2.0);
    let width = r.float("grid", "width", DEFAULT_WINDOW_WIDTH);
    let oversample = r.int("grid", "oversample", DEFAULT_OVERSAMPLE as i64);
    let memory_cap = r.int("grid", "memory_cap", DEFAULT_MEMORY_CAP as i64);
    r.check(side > 0.0 && side.is_finite(), || format!("[grid] side = {side} must be positive"));
    r.check(width > 0.0, || format!("[grid] width = {width} must be positive"));
    r.check(oversample >= 1, || format!("[grid] oversample = {oversample} must be at least 1"));
    r.check(memory_cap > 0, || format!("[grid] memory_cap = {memory_cap} must be positive"));
    let policy = match policy_name.as_str() {
        "windowed" => GridPolicy::Windowed { width, oversample: oversample.max(1) as usize },
        "full" => GridPolicy::Full,
        other => {
            r.violations.push(format!("[grid] unknown policy \"{other}\" (expected \"windowed\" or \"full\")"));
            GridPolicy::default()
        }
    };

    let ps = r.floats("experiment", "p", &[4.0, 6.0, 8.0]);
    let lambdas = r.floats("experiment", "lambda", &[32.0, 64.0, 128.0, 256.0]);
    let short_nodes = r.int("experiment", "short_nodes", 9);
    let full_nodes = r.int("experiment", "full_nodes", 17);
    let epsilon = r.float("experiment", "epsilon", 0.3);
    let ball_points = r.int("experiment", "ball_points", 48);
    let t_values = r.floats("experiment", "t", &[1.0, 1.5, 2.0]);
    let default_decay: Vec<f64> = (6..=12).map(|k| 2f64.powi(k)).collect();
    let decay_lambdas = r.floats("experiment", "decay_lambda", &default_decay);
    let tau_samples = r.int("experiment", "tau_samples", 100);
    let jobs = r.int("experiment", "jobs", 1);
    let seed = r.int("experiment", "seed", 0);
    r.check(!ps.is_empty() && ps.iter().all(|p| *p >= 2.0), || format!("[experiment] p = {ps:?}: every p must be ≥ 2"));
    r.check(!lambdas.is_empty() && lambdas.iter().all(|l| *l >= 1.0), || {
        format!("[experiment] lambda = {lambdas:?}: every λ must be ≥ 1")
    });
    r.check(short_nodes >= 5, || format!("[experiment] short_nodes = {short_nodes} must be at least 5"));
    r.check(full_nodes >= 5, || format!("[experiment] full_nodes = {full_nodes} must be at least 5"));
    r.check(epsilon > 0.0 && epsilon < 1.0, || format!("[experiment] epsilon = {epsilon} must lie in (0,1)"));
    r.check(ball_points >= 4, || format!("[experiment] ball_points = {ball_points} must be at least 4"));
    r.check(!t_values.is_empty() && t_values.iter().all(|t| (1.0..=2.0).contains(t)), || {
        format!("[experiment] t = {t_values:?}: every t must lie in [1,2]")
    });
    r.check(!decay_lambdas.is_empty() && decay_lambdas.iter().all(|l| *l >= 1.0), || {
        format!("[experiment] decay_lambda = {decay_lambdas:?}: every λ must be ≥ 1")
    });
    r.check(tau_samples >= 2, || format!("[experiment] tau_samples = {tau_samples} must be at least 2"));
    r.check(jobs >= 1, || format!("[experiment] jobs = {jobs} must be at least 1"));
    r.check(seed >= 0, || format!("[experiment] seed = {seed} must be nonnegative"));

    for l in lambdas.iter().filter(|l| **l >= 1.0 && !is_dyadic(**l)) {
        warnings.push(format!("lambda = {l} is not a power of two"));
    }
    if let Some(l) = decay_lambdas.iter().find(|l| **l < 64.0) {
        warnings.push(format!("decay_lambda = {l} is below 64; no derivative rows are produced there"));
    }

    let out_dir = PathBuf::from(r.string("output", "dir", "out"));
    let svg = r.boolean("output", "svg", true);
    let snapshot = r.boolean("output", "snapshot", true);

    if !r.violations.is_empty() {
        return Err(ConfigError { violations: r.violations });
    }
    Ok(RunConfig {
        curve: curve.expect("curve is valid when no violation was recorded"),
        ps,
        lambdas,
        rho,
        c0,
        aperture,
        cutoff_delta,
        grid: GridConfig { policy, side, memory_cap: memory_cap as u128 },
        short_nodes: short_nodes as usize,
        full_nodes: full_nodes as usize,
        epsilon,
        ball_points: ball_points as usize,
        t_values,
        decay_lambdas,
        tau_samples: tau_samples as usize,
        jobs: jobs as usize,
        seed: seed as u64,
        out_dir,
        svg,
        snapshot,
        warnings,
    })
}

/// Bytes from `"8589934592"`, `"512MiB"` or `"8GiB"`.
pub fn parse_memory_cap(text: &str) -> Result<u128, ConfigError> {
    let t = text.trim();
    let (digits, scale) = [("GiB", 1u128 << 30), ("MiB", 1 << 20), ("KiB", 1 << 10)]
        .iter()
        .find_map(|(suffix, scale)| t.strip_suffix(suffix).map(|d| (d.trim(), *scale)))
        .unwrap_or((t, 1));
    match digits.parse::<u128>() {
        Ok(v) if v > 0 => Ok(v * scale),
        _ => Err(ConfigError::single(format!("{MEMORY_CAP_ENV} = \"{text}\" is not a positive byte count"))),
    }
}

impl RunConfig {
    pub fn dimension(&self) -> usize {
        self.curve.dimension()
    }

    /// Applies command-line and environment overrides on top of the file.
    pub fn apply_overrides(
        &mut self,
        jobs: Option<usize>,
        lambda_max: Option<f64>,
        out: Option<PathBuf>,
        memory_cap_env: Option<&str>,
    ) -> Result<(), ConfigError> {
        if let Some(j) = jobs {
            if j == 0 {
                return Err(ConfigError::single("--jobs must be at least 1"));
            }
            self.jobs = j;
        }
        if let Some(max) = lambda_max {
            self.lambdas.retain(|l| *l <= max);
            self.decay_lambdas.retain(|l| *l <= max);
        }
        if let Some(dir) = out {
            self.out_dir = dir;
        }
        if let Some(cap) = memory_cap_env {
            self.grid.memory_cap = parse_memory_cap(cap)?;
        }
        Ok(())
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let mut c = SweepConfig::new(self.curve.clone());
        c.ps = self.ps.clone();
        c.lambdas = self.lambdas.clone();
        c.rho = self.rho;
        c.c0 = self.c0;
        c.aperture = self.aperture;
        c.cutoff_half_width = self.cutoff_delta;
        c.grid_policy = self.grid.policy;
        c.min_side = self.grid.side;
        c.short_nodes = self.short_nodes;
        c.full_nodes = self.full_nodes;
        c.epsilon = self.epsilon;
        c.ball_points = self.ball_points;
        c.jobs = self.jobs;
        c.memory_cap = Some(self.grid.memory_cap);
        c
    }

    /// Rejects the run up front if any λ needs a grid above the memory cap
    /// (two complex fields, `2·16·ΠN_k` bytes).
    pub fn check_memory(&self) -> Result<(), ConfigError> {
        let sweep = SweepConfig { memory_cap: None, ..self.sweep_config() };
        let mut violations = Vec::new();
        for &lambda in &self.lambdas {
            let Ok(spec) = sweep.spec(lambda) else { continue };
            let Ok(grid) = sweep.grid(&spec) else { continue };
            if grid.memory_bytes() > self.grid.memory_cap {
                violations.push(format!(
                    "lambda = {lambda}: grid {:?} needs {} bytes, above the memory cap of {} bytes",
                    grid.dims(),
                    grid.memory_bytes(),
                    self.grid.memory_cap
                ));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { violations })
        }
    }
}
