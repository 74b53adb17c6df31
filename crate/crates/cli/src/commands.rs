//! Subcommand bodies. Each returns its tables and checks; writing files is
//! left to [`crate::app`].

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use csl_core::avgop::lp_norms_space;
use csl_core::curvekit::factorial;
use csl_core::oscillator::{deficit_rate, Oscillator};
use csl_core::sweeplab::{evaluate_checks, fit_slope, sharpness_sweep, CheckResult, SweepReport, Thresholds};
use csl_core::synthkit::{build_f, parseval_defect, write_snapshot};
use csl_core::{alpha_n, ConeChart, CurveKind, CutoffSpec, GridPolicy};

use crate::artifacts::{num, opt_num, CsvTable};
use crate::config::RunConfig;

pub type CoreResult<T> = csl_core::Result<T>;

fn chart(cfg: &RunConfig) -> ConeChart {
    ConeChart::new(cfg.curve.clone()).with_aperture(cfg.aperture)
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed, detail }
}

/// `τ_i` evenly spaced on `[-c₀, c₀]`.
pub fn tau_grid(c0: f64, samples: usize) -> Vec<f64> {
    (0..samples).map(|i| -c0 + 2.0 * c0 * i as f64 / (samples - 1) as f64).collect()
}

/// Closed form for the moment curve: `Γ(τ)_k = τ^{n-k}/(n-k)!`, `θ(Γ(τ)) = -τ`.
pub fn moment_gamma(n: usize, tau: f64) -> Vec<f64> {
    (1..=n).map(|k| tau.powi((n - k) as i32) / factorial(n - k)).collect()
}

#[derive(Debug, Clone)]
pub struct ConeVerification {
    pub cone: CsvTable,
    pub homogeneity: CsvTable,
    pub max_residual: f64,
    pub max_closed_form_error: Option<f64>,
    pub max_homogeneity_error: f64,
    pub checks: Vec<CheckResult>,
}

pub fn cone_verify(cfg: &RunConfig) -> CoreResult<ConeVerification> {
    let chart = chart(cfg);
    let n = cfg.dimension();
    let moment = matches!(cfg.curve.kind(), CurveKind::Moment);
    let mut header: Vec<String> = vec!["tau".into(), "theta".into()];
    header.extend((1..=n).map(|k| format!("xi_{k}")));
    header.extend(["residual".into(), "closed_form_error".into()]);
    let mut cone = CsvTable::new(&header);
    let mut max_residual: f64 = 0.0;
    let mut max_closed: Option<f64> = None;
    for tau in tau_grid(cfg.c0, cfg.tau_samples) {
        let (xi, theta) = chart.solve_gamma(tau)?;
        let residual = (1..n).map(|j| cfg.curve.pairing(theta, j, &xi).abs()).fold(0.0, f64::max);
        max_residual = max_residual.max(residual);
        let closed = moment.then(|| {
            let g = moment_gamma(n, tau);
            g.iter().zip(&xi).map(|(a, b)| (a - b).abs()).fold((theta + tau).abs(), f64::max)
        });
        if let Some(e) = closed {
            max_closed = Some(max_closed.unwrap_or(0.0).max(e));
        }
        let mut row = vec![num(tau), num(theta)];
        row.extend(xi.iter().map(|x| num(*x)));
        row.extend([num(residual), opt_num(closed)]);
        cone.push(row);
    }

    let mut homogeneity =
        CsvTable::new(&["point", "scale", "theta_error", "phi_error", "u_n_error", "tolerance"]);
    let tol = 10.0 * chart.tolerance();
    let mut max_hom: f64 = 0.0;
    let mut hom_ok = true;
    for (i, tau) in [-0.2, -0.05, 0.1, 0.2].into_iter().map(|t: f64| t * cfg.c0 / 0.25).enumerate() {
        let (mut xi, _) = chart.solve_gamma(tau)?;
        xi[0] += 0.01;
        let base = chart.cone_point(&xi)?;
        for scale in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = xi.iter().map(|x| x * scale).collect();
            let p = chart.cone_point(&scaled)?;
            let errs = [
                (p.theta - base.theta).abs(),
                (p.phi - scale * base.phi).abs() / scale,
                (p.u_n - scale * base.u_n).abs() / scale,
            ];
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            max_hom = max_hom.max(worst);
            hom_ok &= worst <= tol;
            homogeneity.push(vec![i.to_string(), num(scale), num(errs[0]), num(errs[1]), num(errs[2]), num(tol)]);
        }
    }

    let mut checks = vec![check(
        "cone residuals",
        max_residual <= 1e-12,
        format!("max |<γ^(j)(θ), Γ(τ)>| = {max_residual:.3e} (limit 1e-12)"),
    )];
    if let Some(e) = max_closed {
        checks.push(check("closed forms", e <= 1e-10, format!("max error {e:.3e} (limit 1e-10)")));
    }
    checks.push(check(
        "homogeneity",
        hom_ok,
        format!("max scaled error {max_hom:.3e} (limit {tol:.0e})"),
    ));
    Ok(ConeVerification {
        cone,
        homogeneity,
        max_residual,
        max_closed_form_error: max_closed,
        max_homogeneity_error: max_hom,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub lambda: f64,
    pub t: f64,
    pub direction: String,
    pub abs_mu_hat: f64,
    pub deficit: f64,
    pub ratio_to_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSeries {
    pub multi_index: Vec<usize>,
    /// `(λ, |∂^α m| / λ^{-(1+|α|)/n})`
    pub ratios: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct MultiplierVerification {
    pub rows: Vec<DecayRow>,
    pub derivatives: Vec<DerivativeSeries>,
    pub decay: CsvTable,
    pub derivative_table: CsvTable,
    pub checks: Vec<CheckResult>,
}

/// Slope above which a derivative ratio sequence counts as growing.
pub const GROWTH_SLOPE: f64 = 0.1;

/// The larger half of a λ-ordered series, at least three points. Odd moments
/// such as `∫ s e^{-iλs³/6} χ` cancel at small λ, so ratios climb before they
/// settle; the trend is read where they have settled.
fn upper_half(series: &[(f64, f64)]) -> &[(f64, f64)] {
    let keep = series.len().div_ceil(2).max(3).min(series.len());
    &series[series.len() - keep..]
}

pub fn multiplier_verify(cfg: &RunConfig) -> CoreResult<MultiplierVerification> {
    let n = cfg.dimension();
    let nf = n as f64;
    let chart = chart(cfg);
    let cutoff = CutoffSpec::new(cfg.cutoff_delta)?;
    let osc = Oscillator::new(cfg.curve.clone(), cutoff)?;
    let mut e_n = vec![0.0; n];
    e_n[n - 1] = 1.0;
    let tau = cfg.c0 / 2.0;
    let (g, _) = chart.solve_gamma(tau)?;
    let g_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cone_dir: Vec<f64> = g.iter().map(|x| x / g_norm).collect();
    let directions = [(format!("e{n}"), e_n.clone()), (format!("gamma({tau})"), cone_dir)];

    let mut rows = Vec::new();
    for &t in &cfg.t_values {
        for (label, dir) in &directions {
            for &lambda in &cfg.decay_lambdas {
                let xi: Vec<f64> = dir.iter().map(|d| d * lambda).collect();
                let s = osc.multiplier_sample(&chart, t, &xi)?;
                rows.push(DecayRow {
                    lambda,
                    t,
                    direction: label.clone(),
                    abs_mu_hat: s.mu_hat.norm(),
                    deficit: s.deficit,
                    ratio_to_rate: s.deficit / deficit_rate(n, cfg.rho, lambda),
                });
            }
        }
    }
    let mut decay = CsvTable::new(&["lambda", "t", "direction", "abs_mu_hat", "deficit", "ratio_to_rate"]);
    for r in &rows {
        decay.push(vec![
            num(r.lambda),
            num(r.t),
            r.direction.clone(),
            num(r.abs_mu_hat),
            num(r.deficit),
            num(r.ratio_to_rate),
        ]);
    }

    let mut derivative_table =
        CsvTable::new(&["lambda", "t", "multi_index", "magnitude", "bound", "ratio"]);
    let mut derivatives: Vec<DerivativeSeries> = Vec::new();
    for &lambda in cfg.decay_lambdas.iter().filter(|l| **l >= 64.0) {
        let xi: Vec<f64> = e_n.iter().map(|d| d * lambda).collect();
        let table = osc.derivative_bound_check(&chart, 1.0, &xi, 2, cfg.rho)?;
        for row in table {
            let label = row.multi_index.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
            derivative_table.push(vec![
                num(lambda),
                num(1.0),
                label,
                num(row.magnitude),
                num(row.bound),
                num(row.ratio),
            ]);
            match derivatives.iter_mut().find(|d| d.multi_index == row.multi_index) {
                Some(d) => d.ratios.push((lambda, row.ratio)),
                None => derivatives.push(DerivativeSeries { multi_index: row.multi_index, ratios: vec![(lambda, row.ratio)] }),
            }
        }
    }

    let mut checks = Vec::new();
    let alpha = alpha_n(n)?.norm();
    let target = alpha * osc.cutoff().eval(0.0);
    let limit = alpha * factorial(n).powf(1.0 / nf);
    let e_label = format!("e{n}");
    let normalized: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t == 1.0 && r.direction == e_label)
        .map(|r| (r.lambda, r.abs_mu_hat * r.lambda.powf(1.0 / nf)))
        .collect();
    if let Some(&(top, last)) = normalized.last() {
        let rel = (last - target).abs() / target;
        let devs: Vec<f64> = normalized.iter().map(|(_, v)| (v - target).abs()).collect();
        let shrinking = devs.windows(2).all(|w| w[1] <= w[0]);
        checks.push(check(
            "multiplier decay constant",
            rel <= 0.1 && shrinking,
            format!(
                "|μ̂₁(λe{n})|λ^(1/{n}) = {last:.4} at λ = {top} vs |α_{n}|χ(0) = {target:.4} ({:.1}% off, limit 10%; deviation {}shrinking); limit of the sequence is |α_{n}|({n}!)^(1/{n}) = {limit:.4}",
                100.0 * rel,
                if shrinking { "" } else { "not " }
            ),
        ));
    }
    for &t in &cfg.t_values {
        let seq: Vec<f64> = rows
            .iter()
            .filter(|r| r.t == t && r.direction == e_label)
            .map(|r| r.deficit * r.lambda.powf(1.0 / nf))
            .collect();
        if seq.len() >= 2 {
            let hi = seq.iter().cloned().fold(0.0, f64::max);
            let lo = seq.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.push(check(
                format!("deficit rate t={t}"),
                lo > 0.0 && hi / lo <= 3.0,
                format!("deficit·λ^(1/{n}) in [{lo:.4}, {hi:.4}], max/min {:.3} (limit 3)", hi / lo),
            ));
        }
    }
    if derivatives.first().is_some_and(|d| d.ratios.len() >= 3) {
        let mut worst = (f64::NEG_INFINITY, Vec::new());
        for d in &derivatives {
            // ratios that vanish identically carry no trend
            if d.ratios.iter().all(|(_, r)| *r > 0.0) {
                if let Ok(fit) = fit_slope(upper_half(&d.ratios)) {
                    if fit.slope > worst.0 {
                        worst = (fit.slope, d.multi_index.clone());
                    }
                }
            }
        }
        let from = upper_half(&derivatives[0].ratios)[0].0;
        checks.push(check(
            "derivative ratios",
            worst.0 <= GROWTH_SLOPE,
            format!(
                "largest log-log trend over lambda >= {from} is {:.3} at α = {:?} (limit {GROWTH_SLOPE})",
                worst.0, worst.1
            ),
        ));
    }
    Ok(MultiplierVerification { rows, derivatives, decay, derivative_table, checks })
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub norms: CsvTable,
    pub snapshots: Vec<PathBuf>,
    pub checks: Vec<CheckResult>,
}

/// Builds `f` for every λ, tabulates its norms and optionally writes snapshots into `dir`.
pub fn synthesize(cfg: &RunConfig, dir: Option<&Path>) -> CoreResult<Synthesis> {
    let sweep = cfg.sweep_config();
    let mut header: Vec<String> =
        ["lambda", "pieces", "side", "dims", "lattice_points", "l2_norm", "parseval_defect"].map(String::from).to_vec();
    header.extend(cfg.ps.iter().map(|p| format!("norm_p{p}")));
    let mut norms = CsvTable::new(&header);
    let mut snapshots = Vec::new();
    let mut worst: f64 = 0.0;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| csl_core::Error::Configuration(e.to_string()))?;
    for &lambda in &cfg.lambdas {
        let spec = sweep.spec(lambda)?;
        let grid = sweep.grid(&spec)?;
        let (f, spatial) = pool.install(|| -> CoreResult<_> {
            let f = build_f(&spec, &grid)?;
            let spatial = f.to_spatial();
            Ok((f, spatial))
        })?;
        let defect = parseval_defect(&f, &spatial);
        worst = worst.max(defect);
        let lp = lp_norms_space(&spatial, &cfg.ps)?;
        let mut row = vec![
            num(lambda),
            spec.nu_range().len().to_string(),
            num(grid.side()),
            grid.dims().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x"),
            f.len().to_string(),
            num(f.l2_norm()),
            num(defect),
        ];
        row.extend(lp.iter().map(|v| num(*v)));
        norms.push(row);
        if let Some(dir) = dir {
            let path = dir.join(format!("field_lambda{lambda}.bin"));
            write_snapshot(BufWriter::new(File::create(&path)?), &spatial, lambda)?;
            snapshots.push(path);
        }
    }
    let checks = vec![check("parseval", worst <= 1e-10, format!("max relative defect {worst:.3e} (limit 1e-10)"))];
    Ok(Synthesis { norms, snapshots, checks })
}

pub fn run_sweep(cfg: &RunConfig) -> CoreResult<SweepReport> {
    sharpness_sweep(&cfg.sweep_config())
}

pub fn sweep_checks(report: &SweepReport) -> Vec<CheckResult> {
    let lambdas: Vec<f64> = report.surviving().map(|(l, _)| l).collect();
    evaluate_checks(report, &Thresholds::for_lambdas(&lambdas))
}

/// `sweep.csv`: one row per (λ, p); failed cells keep their reason in `status`.
pub fn sweep_table(report: &SweepReport) -> CsvTable {
    let mut t = CsvTable::new(&[
        "lambda",
        "p",
        "input_norm",
        "output_short",
        "output_full",
        "quotient",
        "pieces",
        "orthogonality_defect",
        "piece_min_ratio",
        "piece_min_normalized",
        "concentration_min",
        "concentration_max",
        "status",
    ]);
    for cell in &report.cells {
        for (j, &p) in report.ps.iter().enumerate() {
            let row = match &cell.metrics {
                Some(m) => {
                    let lo = m.concentration.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = m.concentration.iter().cloned().fold(0.0, f64::max);
                    vec![
                        num(cell.lambda),
                        num(p),
                        num(m.input_norms[j]),
                        num(m.output_short[j]),
                        num(m.output_full[j]),
                        num(m.quotient[j]),
                        m.pieces.to_string(),
                        num(m.orthogonality_defect),
                        num(m.piece_min_ratio),
                        num(m.piece_min_normalized),
                        num(lo),
                        num(hi),
                        "ok".into(),
                    ]
                }
                None => {
                    let mut r = vec![num(cell.lambda), num(p)];
                    r.extend(std::iter::repeat_n(String::new(), 10));
                    r.push(cell.error.clone().unwrap_or_default());
                    r
                }
            };
            t.push(row);
        }
    }
    t
}

pub fn slopes_table(report: &SweepReport) -> CsvTable {
    let lambdas: Vec<f64> = report.surviving().map(|(l, _)| l).collect();
    let th = Thresholds::for_lambdas(&lambdas);
    let mut t = CsvTable::new(&[
        "p",
        "quantity",
        "slope",
        "intercept",
        "max_residual",
        "points",
        "expected",
        "tolerance",
    ]);
    for row in &report.slopes {
        t.push(vec![
            num(row.p),
            row.quantity.name().into(),
            num(row.fit.slope),
            num(row.fit.intercept),
            num(row.fit.max_residual),
            row.fit.points.to_string(),
            opt_num(row.expected),
            opt_num(th.slope_tolerance(row.quantity).filter(|_| row.expected.is_some())),
        ]);
    }
    t
}

pub fn checks_table(checks: &[CheckResult]) -> CsvTable {
    let mut t = CsvTable::new(&["check", "passed", "detail"]);
    for c in checks {
        t.push(vec![c.name.clone(), c.passed.to_string(), c.detail.clone()]);
    }
    t
}

/// Human-readable summary of a finished sweep.
pub fn render_summary(report: &SweepReport, checks: &[CheckResult]) -> String {
    let mut s = String::new();
    let policy = match report.config.grid_policy {
        GridPolicy::Full => "full".to_string(),
        GridPolicy::Windowed { width, oversample } => format!("windowed (width {width}, oversample {oversample})"),
    };
    s.push_str(&format!(
        "n = {}, p = {:?}, lambda = {:?}\nrho = {}, c0 = {}, aperture = {}, cutoff delta = {}, grid {policy}\n",
        report.n, report.ps, report.lambdas, report.config.rho, report.config.c0, report.config.aperture,
        report.config.cutoff_half_width
    ));
    for cell in &report.cells {
        match (&cell.metrics, &cell.error) {
            (Some(m), _) => s.push_str(&format!(
                "  lambda {:>6}: grid {:?} side {:.3}, {} piece(s)\n",
                cell.lambda, m.grid_dims, m.grid_side, m.pieces
            )),
            (None, Some(e)) => s.push_str(&format!("  lambda {:>6}: skipped ({e})\n", cell.lambda)),
            (None, None) => {}
        }
    }
    let lambdas: Vec<f64> = report.surviving().map(|(l, _)| l).collect();
    let th = Thresholds::for_lambdas(&lambdas);
    for row in &report.slopes {
        if let (Some(e), Some(tol)) = (row.expected, th.slope_tolerance(row.quantity)) {
            s.push_str(&format!(
                "  p = {}: {} slope {:.3} (expected {:.3} ± {tol})\n",
                row.p,
                row.quantity.name(),
                row.fit.slope,
                e
            ));
        }
    }
    for c in checks {
        s.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn moment_closed_form_matches_n3() {
        let g = moment_gamma(3, 0.2);
        assert!((g[0] - 0.02).abs() < 1e-15 && (g[1] - 0.2).abs() < 1e-15 && g[2] == 1.0);
        let taus = tau_grid(0.25, 100);
        assert_eq!(taus.len(), 100);
        assert_eq!((taus[0], taus[99]), (-0.25, 0.25));
    }

    #[test]
    fn cone_verify_moment_passes() {
        let cfg = RunConfig::default();
        let v = cone_verify(&cfg).unwrap();
        assert!(v.checks.iter().all(|c| c.passed), "{:?}", v.checks);
        assert_eq!(v.cone.rows().len(), 100);
        assert!(v.max_closed_form_error.unwrap() <= 1e-10);
    }

    #[test]
    fn cone_verify_perturbed_has_no_closed_form() {
        let cfg = parse_config("[curve]\nkind = \"perturbed-moment\"\nperturbation = [[], [], [0, 0, 0, 0, 0.001]]\n[experiment]\ntau_samples = 5\n").unwrap();
        let v = cone_verify(&cfg).unwrap();
        assert!(v.max_closed_form_error.is_none());
        assert!(v.cone.rows().iter().all(|r| r.last().unwrap().is_empty()));
        assert!(v.max_residual <= 1e-12);
    }

    #[test]
    fn multiplier_verify_small() {
        let cfg = parse_config("[experiment]\nt = [1.0]\ndecay_lambda = [64, 128, 256]\n").unwrap();
        let v = multiplier_verify(&cfg).unwrap();
        assert_eq!(v.rows.len(), 6);
        assert_eq!(v.decay.header()[3], "abs_mu_hat");
        assert_eq!(v.derivatives.len(), 10);
        assert!(v.checks.iter().any(|c| c.name == "deficit rate t=1" && c.passed));
    }

    #[test]
    fn synthesize_small_lambda() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config("[experiment]\nlambda = [8]\np = [4]\n").unwrap();
        let s = synthesize(&cfg, Some(dir.path())).unwrap();
        assert!(s.checks[0].passed, "{:?}", s.checks);
        assert_eq!(s.snapshots.len(), 1);
        assert!(s.snapshots[0].exists());
        assert_eq!(s.norms.header().last().unwrap(), "norm_p4");
    }
}
