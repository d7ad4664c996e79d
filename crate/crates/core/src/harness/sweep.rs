//! Grid evaluation and file output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use super::config::{AxisKind, Check, SweepConfig};
use super::HarnessError;
use crate::eigen::eigensolve_with;
use crate::error::Error;
use crate::model::{build_bundle, build_fiber, decompose};
use crate::onebody::{masses, validate_hypotheses, HypothesisReport, ModelParams};
use crate::pullthrough::{moment_stability, pull_through_residual, pull_through_second_order, MomentTable, PullThroughReport, SecondOrderReport};
use crate::spectra::{
    analyze_bundle, convergence_in_cutoff, excited_state_from_report, hvz_threshold_diagnostic, ConvergenceTable,
    ExcitedStateCheck, GroundStateReport, HvzReport,
};

/// Tolerance on `|E_full − min(E_minus, E_plus)|`, relative to `1 + |E|`.
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// Maximal cross-block weight of the full ground state.
pub const LEAKAGE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub check: Check,
    /// Machine-readable reason.
    pub code: &'static str,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Fail,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionSummary {
    pub offblock: f64,
    pub block_defect: f64,
}

/// Everything computed at one grid point.
#[derive(Clone, Debug, Serialize)]
pub struct PointResult {
    pub index: usize,
    pub coords: Vec<(String, f64)>,
    pub eta: f64,
    pub n_max: usize,
    pub status: PointStatus,
    pub failures: Vec<Failure>,
    pub hypotheses: Option<HypothesisReport>,
    pub decomposition: Option<DecompositionSummary>,
    pub ground: Option<GroundStateReport>,
    pub excited: Option<ExcitedStateCheck>,
    pub hvz: Option<HvzReport>,
    pub pullthrough: Option<PullThroughReport>,
    pub second_order: Option<SecondOrderReport>,
    pub convergence: Option<ConvergenceTable>,
    pub moments: Option<MomentTable>,
    pub elapsed_ms: f64,
}

impl PointResult {
    fn new(index: usize, coords: Vec<(String, f64)>, eta: f64, n_max: usize) -> Self {
        Self {
            index,
            coords,
            eta,
            n_max,
            status: PointStatus::Ok,
            failures: Vec::new(),
            hypotheses: None,
            decomposition: None,
            ground: None,
            excited: None,
            hvz: None,
            pullthrough: None,
            second_order: None,
            convergence: None,
            moments: None,
            elapsed_ms: 0.0,
        }
    }

    fn fail(&mut self, check: Check, code: &'static str, detail: impl Into<String>) {
        self.failures.push(Failure {
            check,
            code,
            detail: detail.into(),
        });
    }

    fn error(&mut self, check: Check, err: &Error) {
        self.fail(check, reason_code(err), err.to_string());
    }
}

/// Reason code for a numerical error.
pub fn reason_code(err: &Error) -> &'static str {
    match err {
        Error::Capacity { .. } => "capacity",
        Error::NoConvergence { .. } => "no_convergence",
        Error::Singular { .. } => "singular_resolvent",
        Error::Decomposition { .. } => "decomposition",
        Error::NotHermitian { .. } => "not_hermitian",
        Error::Model(_) | Error::Precondition(_) => "precondition",
        _ => "numerical_error",
    }
}

/// Grid coordinates in row-major order, last axis fastest.
pub fn grid(cfg: &SweepConfig) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in &cfg.axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Model at the given coordinates.
pub fn point_params(cfg: &SweepConfig, coords: &[f64]) -> Result<ModelParams, Error> {
    let mut p = cfg.base.clone();
    for (axis, &v) in cfg.axes.iter().zip(coords) {
        p = match axis.kind {
            AxisKind::Eta => p.with_eta(v),
            AxisKind::Scale => p.with_coupling_scale(v),
            AxisKind::Alpha(i) => {
                let mut a = p.alpha().to_vec();
                a[i - 1] = v;
                p.with_alpha(a)?
            }
        };
    }
    Ok(p)
}

/// Run the configured checks on one model. `detailed` adds the second-order
/// pull-through residuals and the moment table.
pub fn evaluate_point(
    cfg: &SweepConfig,
    index: usize,
    coords: &[f64],
    detailed: bool,
) -> PointResult {
    let start = Instant::now();
    let labelled = cfg.axes.iter().zip(coords).map(|(a, &v)| (a.label.clone(), v)).collect();
    let mut r = PointResult::new(index, labelled, cfg.base.eta, cfg.n_max);
    let params = match point_params(cfg, coords) {
        Ok(p) => p,
        Err(e) => {
            r.fail(Check::Ground, "invalid_parameters", e.to_string());
            r.status = PointStatus::Fail;
            return r;
        }
    };
    r.eta = params.eta;
    let hyp = validate_hypotheses(&params);
    let hyp_ok = hyp.all_pass(4);
    if let Some(f) = hyp.failures().find(|c| c.number <= 4) {
        r.fail(Check::Ground, "hypothesis", format!("hypothesis {}: {}", f.number, f.reason));
    }
    r.hypotheses = Some(hyp);
    let acfg = cfg.analysis(cfg.n_max);

    if hyp_ok {
        evaluate_structure(cfg, &params, &acfg, &mut r);
    }
    if hyp_ok && cfg.has(Check::Hvz) {
        match hvz_threshold_diagnostic(&params, &acfg) {
            Ok(h) => {
                if !h.all_found() {
                    let missing: Vec<String> = h
                        .entries
                        .iter()
                        .filter(|e| !e.found)
                        .map(|e| format!("mode {} q={}", e.mode, e.q))
                        .collect();
                    r.fail(Check::Hvz, "hvz_lattice", format!("lattice points not found: {}", missing.join(" ")));
                }
                r.hvz = Some(h);
            }
            Err(Error::Unavailable(_)) => {}
            Err(e) => r.error(Check::Hvz, &e),
        }
    }
    if hyp_ok && cfg.has(Check::Pullthrough) {
        match pull_through_residual(&params, &acfg) {
            Ok(p) => {
                if !(p.relative <= cfg.pullthrough_tol) {
                    r.fail(
                        Check::Pullthrough,
                        "pullthrough_residual",
                        format!("relative residual {:.3e} above {:.1e}", p.relative, cfg.pullthrough_tol),
                    );
                }
                r.pullthrough = Some(p);
            }
            Err(e) => r.error(Check::Pullthrough, &e),
        }
        if detailed {
            match pull_through_second_order(&params, &acfg) {
                Ok(s) => r.second_order = Some(s),
                Err(e) => r.error(Check::Pullthrough, &e),
            }
        }
    }
    if hyp_ok && cfg.has(Check::Convergence) {
        match convergence_in_cutoff(&params, &cfg.cutoffs, &cfg.eigen_options()) {
            Ok(t) => {
                if t.non_cauchy {
                    r.fail(Check::Convergence, "non_cauchy", "successive cutoff differences grow");
                }
                r.convergence = Some(t);
            }
            Err(e) => r.error(Check::Convergence, &e),
        }
        if detailed {
            let schedule: Vec<_> = cfg.cutoffs.iter().map(|&n| (params.clone(), n)).collect();
            match moment_stability(&schedule, &[1.0, 2.0], &acfg) {
                Ok(m) => r.moments = Some(m),
                Err(e) => r.error(Check::Convergence, &e),
            }
        }
    }
    if !r.failures.is_empty() {
        r.status = PointStatus::Fail;
    }
    r.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    r
}

fn evaluate_structure(cfg: &SweepConfig, params: &ModelParams, acfg: &crate::spectra::AnalysisConfig, r: &mut PointResult) {
    let wants_spectrum = cfg.has(Check::Ground) || cfg.has(Check::Excited);
    if !(wants_spectrum || cfg.has(Check::Decompose)) {
        return;
    }
    let bundle = match acfg.basis(params.modes().len()).and_then(|b| build_bundle(params, &b)) {
        Ok(b) => b,
        Err(e) => {
            let check = if cfg.has(Check::Decompose) { Check::Decompose } else { Check::Ground };
            r.error(check, &e);
            return;
        }
    };
    if cfg.has(Check::Decompose) {
        match decompose(&bundle) {
            Ok(d) => {
                r.decomposition = Some(DecompositionSummary {
                    offblock: d.offblock,
                    block_defect: d.block_defect,
                })
            }
            Err(e) => {
                if let Error::Decomposition { offblock, block_defect } = e {
                    r.decomposition = Some(DecompositionSummary { offblock, block_defect });
                }
                r.error(Check::Decompose, &e);
            }
        }
    }
    if !wants_spectrum {
        return;
    }
    let report = match analyze_bundle(params, &bundle, acfg) {
        Ok(rep) => rep,
        Err(e) => {
            r.error(Check::Ground, &e);
            return;
        }
    };
    if cfg.has(Check::Ground) {
        if report.degeneracy != report.degeneracy_expected() {
            r.fail(
                Check::Ground,
                "degeneracy",
                format!("degeneracy {} (expected {})", report.degeneracy, report.degeneracy_expected()),
            );
        }
        if let Some(l) = report.leakage {
            if !(l <= LEAKAGE_TOL) {
                r.fail(Check::Ground, "leakage", format!("cross-block weight {l:.3e}"));
            }
        }
        if !report.ordering_holds() {
            r.fail(
                Check::Ground,
                "ordering",
                format!("E_plus - E_minus = {:.6e} outside [0, 2|eta|]", report.fiber_gap()),
            );
        }
        if report.strict_gap() == Some(false) {
            r.fail(Check::Ground, "strict_gap", format!("E_plus - E_minus = {:.3e}", report.fiber_gap()));
        }
        if !(report.consistency <= CONSISTENCY_TOL * (1.0 + report.e_full.abs())) {
            r.fail(Check::Ground, "consistency", format!("|E_full - min fiber| = {:.3e}", report.consistency));
        }
    }
    if cfg.has(Check::Excited) {
        let ex = excited_state_from_report(&report);
        if ex.in_window == Some(false) {
            r.fail(
                Check::Excited,
                "excited_window",
                format!("E_plus = {:.12e} outside ({:.12e}, {:.12e}]", ex.e_plus, ex.window.0, ex.window.1),
            );
        }
        r.excited = Some(ex);
    }
    r.ground = Some(report);
}

/// Worker count: explicit value, else the config, else available parallelism.
pub fn resolve_workers(explicit: Option<usize>, cfg: &SweepConfig) -> usize {
    explicit
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1)
}

/// Evaluate `job` on every index with a queue of `workers` threads. Each
/// worker runs inside its own single-threaded pool so nothing inside a point
/// fans out further.
fn run_queue<T: Send>(n: usize, workers: usize, job: impl Fn(usize) -> T + Sync) -> Result<Vec<T>, HarnessError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    let workers = workers.min(n.max(1));
    std::thread::scope(|s| -> Result<(), HarnessError> {
        let mut handles = Vec::with_capacity(workers);
        for _ in 0..workers {
            handles.push(s.spawn(|| -> Result<(), HarnessError> {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(1)
                    .build()
                    .map_err(|e| HarnessError::Internal(e.to_string()))?;
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        return Ok(());
                    }
                    let out = pool.install(|| job(i));
                    slots.lock().expect("result slots poisoned")[i] = Some(out);
                }
            }));
        }
        for h in handles {
            h.join().map_err(|_| HarnessError::Internal("worker panicked".into()))??;
        }
        Ok(())
    })?;
    Ok(slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|s| s.expect("every grid point evaluated"))
        .collect())
}

/// Evaluate every grid point.
pub fn evaluate_grid(cfg: &SweepConfig, workers: usize) -> Result<Vec<PointResult>, HarnessError> {
    let points = grid(cfg);
    run_queue(points.len(), workers, |i| evaluate_point(cfg, i, &points[i], false))
}

/// Paths written by [`run_sweep`].
#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub results: Vec<PointResult>,
}

impl SweepOutput {
    pub fn failure_count(&self) -> usize {
        self.results.iter().filter(|r| r.status == PointStatus::Fail).count()
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn opt_bool(x: Option<bool>) -> String {
    x.map(|b| b.to_string()).unwrap_or_default()
}

/// Fixed column order of the results table, after the grid-axis columns.
pub const RESULT_COLUMNS: [&str; 19] = [
    "eta",
    "n_max",
    "status",
    "e_full",
    "e_minus",
    "e_plus",
    "fiber_gap",
    "spectral_gap",
    "degeneracy",
    "excited_flag",
    "excited_in_window",
    "offblock",
    "block_defect",
    "leakage",
    "max_residual",
    "hvz_found",
    "pullthrough_relative",
    "non_cauchy",
    "failures",
];

/// Results table as CSV text.
pub fn results_csv(cfg: &SweepConfig, rows: &[PointResult]) -> String {
    let axis_labels: Vec<String> = cfg.axes.iter().map(|a| format!("grid.{}", a.label)).collect();
    let mut header = vec!["index"];
    header.extend(axis_labels.iter().map(String::as_str));
    header.extend(RESULT_COLUMNS);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {}: one row per grid point in grid order; columns: {}; numbers in 17-digit scientific notation, empty cells for checks not run; failures are check:code pairs separated by ';'",
        cfg.name,
        header.join(" ")
    );
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        let g = r.ground.as_ref();
        let mut cells = vec![r.index.to_string()];
        cells.extend(r.coords.iter().map(|(_, v)| num(*v)));
        cells.push(num(r.eta));
        cells.push(r.n_max.to_string());
        cells.push(match r.status {
            PointStatus::Ok => "ok".into(),
            PointStatus::Fail => "fail".into(),
        });
        cells.push(opt_num(g.map(|g| g.e_full)));
        cells.push(opt_num(g.map(|g| g.e_minus)));
        cells.push(opt_num(g.map(|g| g.e_plus)));
        cells.push(opt_num(g.map(|g| g.fiber_gap())));
        cells.push(opt_num(g.and_then(|g| g.gap)));
        cells.push(g.map(|g| g.degeneracy.to_string()).unwrap_or_default());
        cells.push(opt_bool(g.map(|g| g.excited_state_flag)));
        cells.push(opt_bool(r.excited.as_ref().and_then(|e| e.in_window)));
        cells.push(opt_num(r.decomposition.as_ref().map(|d| d.offblock)));
        cells.push(opt_num(r.decomposition.as_ref().map(|d| d.block_defect)));
        cells.push(opt_num(g.and_then(|g| g.leakage)));
        cells.push(opt_num(g.map(|g| g.max_residual)));
        cells.push(opt_bool(r.hvz.as_ref().map(|h| h.all_found())));
        cells.push(opt_num(r.pullthrough.as_ref().map(|p| p.relative)));
        cells.push(opt_bool(r.convergence.as_ref().map(|c| c.non_cauchy)));
        cells.push(
            r.failures
                .iter()
                .map(|f| format!("{}:{}", f.check.name(), f.code))
                .collect::<Vec<_>>()
                .join(";"),
        );
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Sidecar<'a> {
    name: &'a str,
    seed: u64,
    n_max: usize,
    cutoffs: &'a [usize],
    checks: &'a [Check],
    axes: &'a [super::config::Axis],
    workers: usize,
    grid_size: usize,
    failures: usize,
    total_ms: f64,
    rows: &'a [PointResult],
}

/// Write `contents` to each path, removing everything written so far if any
/// write fails.
fn write_all(files: &[(&Path, &str)]) -> Result<(), HarnessError> {
    let mut written: Vec<&Path> = Vec::new();
    for (path, contents) in files {
        if let Err(e) = fs::write(path, contents) {
            let _ = fs::remove_file(path);
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(HarnessError::Io {
                path: path.to_path_buf(),
                source: e,
            });
        }
        written.push(path);
    }
    Ok(())
}

/// Evaluate the grid and write `results.csv` and `results.json` into `dir`.
pub fn run_sweep(cfg: &SweepConfig, dir: &Path, workers: usize) -> Result<SweepOutput, HarnessError> {
    if cfg.axes.is_empty() {
        return Err(HarnessError::Usage("sweep needs at least one axis in [sweep]".into()));
    }
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let start = Instant::now();
    let results = evaluate_grid(cfg, workers)?;
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    let csv = results_csv(cfg, &results);
    let failures = results.iter().filter(|r| r.status == PointStatus::Fail).count();
    let sidecar = Sidecar {
        name: &cfg.name,
        seed: cfg.seed,
        n_max: cfg.n_max,
        cutoffs: &cfg.cutoffs,
        checks: &cfg.checks,
        axes: &cfg.axes,
        workers,
        grid_size: results.len(),
        failures,
        total_ms,
        rows: &results,
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| HarnessError::Internal(e.to_string()))?;
    let csv_path = dir.join("results.csv");
    let json_path = dir.join("results.json");
    write_all(&[(&csv_path, &csv), (&json_path, &json)])?;
    Ok(SweepOutput {
        csv: csv_path,
        json: json_path,
        results,
    })
}

/// One row of the spectral picture.
#[derive(Clone, Debug, Serialize)]
pub struct FigureRow {
    pub eta: f64,
    pub e_minus: f64,
    pub e_plus: f64,
    pub threshold: f64,
}

/// Ground energies of both fibers along the `eta` axis; other axes stay at
/// their base values.
pub fn figure_rows(cfg: &SweepConfig, workers: usize) -> Result<Vec<FigureRow>, HarnessError> {
    let axis = cfg
        .axes
        .iter()
        .find(|a| a.kind == AxisKind::Eta)
        .ok_or_else(|| HarnessError::Usage("figure data needs an eta axis in [sweep]".into()))?;
    let (_, m_ess) = masses(cfg.base.modes());
    let acfg = cfg.analysis(cfg.n_max);
    let basis = acfg.basis(cfg.base.modes().len()).map_err(HarnessError::Compute)?;
    let rows = run_queue(axis.values.len(), workers, |i| -> Result<FigureRow, Error> {
        let params = cfg.base.with_eta(axis.values[i]);
        let low = if params.eta >= 0.0 { -1 } else { 1 };
        let e_minus = eigensolve_with(&build_fiber(&params, &basis, low)?, 1, &acfg.eigen)?.ground_energy();
        let e_plus = eigensolve_with(&build_fiber(&params, &basis, -low)?, 1, &acfg.eigen)?.ground_energy();
        Ok(FigureRow {
            eta: params.eta,
            e_minus,
            e_plus,
            threshold: e_minus + m_ess,
        })
    })?;
    rows.into_iter().collect::<Result<_, _>>().map_err(HarnessError::Compute)
}

pub fn figure_csv(cfg: &SweepConfig, rows: &[FigureRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {}: fiber ground energies against eta at n_max = {}; threshold = e_minus + m_ess",
        cfg.name, cfg.n_max
    );
    out.push_str("eta,e_minus,e_plus,threshold\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", num(r.eta), num(r.e_minus), num(r.e_plus), num(r.threshold));
    }
    out
}

/// Write the η-sweep plot data to `path`.
pub fn emit_figure_data(cfg: &SweepConfig, path: &Path, workers: usize) -> Result<Vec<FigureRow>, HarnessError> {
    let rows = figure_rows(cfg, workers)?;
    write_all(&[(path, &figure_csv(cfg, &rows))])?;
    Ok(rows)
}

/// Cutoff study of the base model together with `⟨N⟩` and `⟨N²⟩`.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceOutput {
    pub table: ConvergenceTable,
    pub moments: MomentTable,
}

impl ConvergenceOutput {
    pub fn flagged(&self) -> bool {
        self.table.non_cauchy || !self.moments.unbounded.is_empty()
    }
}

pub fn convergence_report(cfg: &SweepConfig) -> Result<ConvergenceOutput, HarnessError> {
    let table = convergence_in_cutoff(&cfg.base, &cfg.cutoffs, &cfg.eigen_options()).map_err(HarnessError::Compute)?;
    let schedule: Vec<_> = cfg.cutoffs.iter().map(|&n| (cfg.base.clone(), n)).collect();
    let moments = moment_stability(&schedule, &[1.0, 2.0], &cfg.analysis(cfg.n_max)).map_err(HarnessError::Compute)?;
    Ok(ConvergenceOutput { table, moments })
}

pub fn convergence_csv(cfg: &SweepConfig, out: &ConvergenceOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# {}: fiber ground energies along the cutoff schedule; non_cauchy = {}; unbounded moments = {:?}",
        cfg.name, out.table.non_cauchy, out.moments.unbounded
    );
    s.push_str("n_max,dim,e_minus,e_plus,delta_minus,delta_plus,boundary_weight,mean_n,mean_n2\n");
    for (row, m) in out.table.rows.iter().zip(&out.moments.rows) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            row.n_max,
            row.dim,
            num(row.e_minus),
            num(row.e_plus),
            opt_num(row.delta_minus),
            opt_num(row.delta_plus),
            num(row.boundary_weight),
            num(m.moments[0].1),
            num(m.moments[1].1)
        );
    }
    s
}

pub fn emit_convergence(cfg: &SweepConfig, path: &Path) -> Result<ConvergenceOutput, HarnessError> {
    let out = convergence_report(cfg)?;
    write_all(&[(path, &convergence_csv(cfg, &out))])?;
    Ok(out)
}
