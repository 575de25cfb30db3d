//! Test-case configuration and the atomize → evolve → reconstruct → measure pipeline.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atomize::{atomize, atomize_count, ParticleSystem};
use crate::dynamics::{evolve, spacing_report, IntegratorOptions, Trajectory};
use crate::error::{Error, Result, StageExt};
use crate::exec::{self, Execution};
use crate::fields::{density_field, velocity_field};
use crate::initial_data::{InitialDatum, State};
use crate::metrics::{
    c_v_bound, d1_time_lipschitz_ratio, l1_errors, weak_residual, weak_residual_bound, window_cdf_distance, CvBound,
    L1Errors, WeakTestFunction,
};
use crate::pressure::PressureLaw;
use crate::riemann::{solve_riemann, RiemannFan};

/// Built-in convergence-table configuration.
pub const TABLE1_TOML: &str = include_str!("../configs/table1.toml");

/// Tolerances of the invariant checks attached to every run.
pub mod tolerance {
    /// Spacing slack, relative to `κ`.
    pub const SLACK: f64 = 1e-9;
    /// Excess over the upper spacing bound, absolute.
    pub const UPPER: f64 = 1e-9;
    /// Growth of `TV[V]` between snapshots, relative to `C_v`.
    pub const TV: f64 = 1e-6;
    /// Mass defect, relative to `M`.
    pub const MASS: f64 = 1e-12;
    /// Slack on the `d₁` time-Lipschitz constant.
    pub const D1_LIPSCHITZ: f64 = 0.05;
    /// Absolute L¹ differences below this count as ties in monotonicity checks.
    pub const L1_FLOOR: f64 = 1e-12;
}

fn default_quad_order() -> usize {
    8
}

fn default_snapshots() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub id: String,
    pub law: PressureLaw,
    pub left: State,
    pub right: State,
    /// Support `[a, b]` of the truncated Riemann datum.
    pub truncation: [f64; 2],
    #[serde(default)]
    pub jump: f64,
    /// Evaluation window for all error norms.
    pub window: [f64; 2],
    pub t_final: f64,
    pub particles: Vec<usize>,
    /// Reference errors aligned with `particles`, if any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_l1: Vec<f64>,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
    /// Number of stored snapshots after `t = 0`.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
}

impl TestCase {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("case '{}': {msg}", self.id)));
        if self.id.is_empty() {
            return Err(Error::Config("case id must not be empty".into()));
        }
        self.law.validate()?;
        let [a, b] = self.truncation;
        let [wa, wb] = self.window;
        if !(a.is_finite() && b.is_finite() && a < self.jump && self.jump < b) {
            return bad(format!("jump {} must lie strictly inside [{a}, {b}]", self.jump));
        }
        if !(wa.is_finite() && wb.is_finite() && a < wa && wa < wb && wb < b) {
            return bad(format!("window [{wa}, {wb}] must lie strictly inside [{a}, {b}]"));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if self.particles.is_empty() || self.particles.iter().any(|n| *n < 2) {
            return bad("particle counts must be at least 2".into());
        }
        if !self.reference_l1.is_empty() && self.reference_l1.len() != self.particles.len() {
            return bad("reference_l1 must align with particles".into());
        }
        if self.quad_order == 0 || self.quad_order > 64 {
            return bad(format!("quad_order {} outside 1..=64", self.quad_order));
        }
        if self.snapshots == 0 {
            return bad("need at least one snapshot".into());
        }
        self.integrator.validate()?;
        Ok(())
    }

    /// The truncated datum as given.
    pub fn datum(&self) -> Result<InitialDatum> {
        let [a, b] = self.truncation;
        InitialDatum::riemann(self.law, self.left, self.right, a, b, self.jump)
    }

    /// First 16 hex digits of the SHA-256 of the case's canonical TOML form.
    pub fn config_hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        Sha256::digest(text.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn reference_for(&self, n: usize) -> Option<f64> {
        self.particles
            .iter()
            .position(|p| *p == n)
            .and_then(|k| self.reference_l1.get(k).copied())
    }
}

fn default_time_quad() -> usize {
    200
}

/// Weak-residual decay study on one case at power-of-two resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualConfig {
    pub case: String,
    pub levels: Vec<u32>,
    #[serde(default = "default_time_quad")]
    pub time_quad: usize,
    #[serde(default = "default_quad_order")]
    pub space_order: usize,
    pub phi: WeakTestFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(rename = "case")]
    pub cases: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<ResidualConfig>,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml_str(&text)
    }

    pub fn table1() -> Self {
        Config::from_toml_str(TABLE1_TOML).expect("built-in configuration is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(Error::Config("no [[case]] entries".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.cases {
            c.validate()?;
            if !seen.insert(c.id.as_str()) {
                return Err(Error::Config(format!("duplicate case id '{}'", c.id)));
            }
        }
        if let Some(r) = &self.residual {
            if !seen.contains(r.case.as_str()) {
                return Err(Error::Config(format!("residual study names unknown case '{}'", r.case)));
            }
            if r.levels.is_empty() || r.levels.iter().any(|l| *l == 0 || *l > 24) {
                return Err(Error::Config("residual levels must lie in 1..=24".into()));
            }
            if r.time_quad < 2 {
                return Err(Error::Config("time_quad must be at least 2".into()));
            }
            r.phi.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn case(&self, id: &str) -> Result<&TestCase> {
        self.cases
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Config(format!("unknown case '{id}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall time; when off `runtime_ms` is written as 0.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { timing: true }
    }
}

/// Verdicts of the invariant suite on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantSummary {
    /// `min (gap − κ/R) / κ` over all snapshots.
    pub min_slack_over_kappa: f64,
    pub max_upper_excess: f64,
    pub c_v: CvBound,
    pub tv_initial: f64,
    /// Largest increase of `TV[V]` between consecutive snapshots.
    pub tv_max_increase: f64,
    /// `max |∫ρ(t) − M| / M`.
    pub mass_defect: f64,
    pub markers_constant: bool,
    /// `max d₁(ρ(t_k), ρ(t_{k+1})) / (M·max|w|·Δt)`.
    pub d1_lipschitz_ratio: f64,
}

impl InvariantSummary {
    pub fn spacing_ok(&self) -> bool {
        self.min_slack_over_kappa >= -tolerance::SLACK && self.max_upper_excess <= tolerance::UPPER
    }

    pub fn tv_ok(&self) -> bool {
        self.tv_max_increase <= tolerance::TV * self.c_v.value && self.tv_initial <= self.c_v.value
    }

    pub fn conservation_ok(&self) -> bool {
        self.mass_defect <= tolerance::MASS && self.markers_constant
    }

    pub fn d1_ok(&self) -> bool {
        self.d1_lipschitz_ratio <= 1.0 + tolerance::D1_LIPSCHITZ
    }

    pub fn all_ok(&self) -> bool {
        self.spacing_ok() && self.tv_ok() && self.conservation_ok() && self.d1_ok()
    }

    /// Names of the failed checks.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.spacing_ok() {
            out.push("spacing");
        }
        if !self.tv_ok() {
            out.push("total-variation");
        }
        if !self.conservation_ok() {
            out.push("conservation");
        }
        if !self.d1_ok() {
            out.push("d1-lipschitz");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub test_id: String,
    pub n: usize,
    pub t: f64,
    pub kappa: f64,
    pub l1: L1Errors,
    pub d1: f64,
    pub runtime_ms: f64,
    /// Constant added to `p` (and every marker) before integration.
    pub gauge_offset: f64,
    pub window: [f64; 2],
    pub truncation: [f64; 2],
    pub quad_order: usize,
    pub config_hash: String,
    pub steps: usize,
    pub rejected_steps: usize,
    pub invariants: InvariantSummary,
    pub reference_l1: Option<f64>,
}

/// Everything produced by one pipeline run.
pub struct RunArtifacts {
    pub report: RunReport,
    pub datum: InitialDatum,
    pub trajectory: Trajectory,
    pub fan: RiemannFan,
}

fn prepare(case: &TestCase) -> Result<(InitialDatum, f64, RiemannFan)> {
    case.validate().stage("config")?;
    let datum = case.datum().stage("initial data")?;
    let (gauged, offset) = datum.with_nonnegative_markers().stage("initial data")?;
    let fan = solve_riemann(gauged.law(), case.left, case.right)
        .stage("exact solution")?
        .centred_at(case.jump);
    Ok((gauged, offset, fan))
}

fn invariants(datum: &InitialDatum, traj: &Trajectory) -> Result<InvariantSummary> {
    let sp = spacing_report(traj);
    let (mut lo, mut hi) = datum.density_range().unwrap_or((0.0, 0.0));
    let mut tv = Vec::with_capacity(traj.snapshots.len());
    let mass = datum.mass();
    let mut mass_defect = 0.0f64;
    let markers0 = traj.initial().markers();
    let mut markers_constant = true;
    for snap in &traj.snapshots {
        let s = &snap.system;
        let rho = density_field(s);
        for y in rho.values() {
            lo = lo.min(*y);
            hi = hi.max(*y);
        }
        mass_defect = mass_defect.max((rho.cell_integral() - mass).abs() / mass);
        tv.push(velocity_field(s).total_variation());
        markers_constant &= s
            .markers()
            .iter()
            .zip(markers0)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let c_v = c_v_bound(datum, (lo, hi))?;
    let tv_max_increase = tv.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(InvariantSummary {
        min_slack_over_kappa: sp.min_slack_over_kappa,
        max_upper_excess: sp.max_upper_excess,
        c_v,
        tv_initial: tv[0],
        tv_max_increase: if tv.len() > 1 { tv_max_increase } else { 0.0 },
        mass_defect,
        markers_constant,
        d1_lipschitz_ratio: d1_time_lipschitz_ratio(traj)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_system(
    case: &TestCase,
    datum: InitialDatum,
    offset: f64,
    fan: RiemannFan,
    system: ParticleSystem,
    n: usize,
    started: Instant,
    opts: RunOptions,
) -> Result<RunArtifacts> {
    let every = case.t_final / case.snapshots as f64;
    let traj = evolve(&system, case.t_final, every, &case.integrator).stage("evolve")?;
    let last = &traj.last().system;
    let t = traj.t_final();
    let window = (case.window[0], case.window[1]);
    let l1 = l1_errors(last, &fan, t, window, case.quad_order).stage("metrics")?;
    let d1 = window_cdf_distance(&density_field(last), &fan, t, window, case.quad_order).stage("metrics")?;
    let inv = invariants(&datum, &traj).stage("invariants")?;
    let runtime_ms = if opts.timing {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let report = RunReport {
        test_id: case.id.clone(),
        n,
        t,
        kappa: system.kappa(),
        l1,
        d1,
        runtime_ms,
        gauge_offset: offset,
        window: case.window,
        truncation: case.truncation,
        quad_order: case.quad_order,
        config_hash: case.config_hash(),
        steps: traj.stats.steps,
        rejected_steps: traj.stats.rejected,
        invariants: inv,
        reference_l1: case.reference_for(n),
    };
    Ok(RunArtifacts {
        report,
        datum,
        trajectory: traj,
        fan,
    })
}

/// Full pipeline for one case with `n` gaps of mass `M / n`.
pub fn run_case_full(case: &TestCase, n: usize, opts: RunOptions) -> Result<RunArtifacts> {
    let started = Instant::now();
    if n < 2 {
        return Err(Error::Config(format!("particle count {n} below 2")));
    }
    let (datum, offset, fan) = prepare(case)?;
    let system = atomize_count(&datum, n).stage("atomize")?;
    run_system(case, datum, offset, fan, system, n, started, opts)
}

/// Full pipeline at level `n`, i.e. `2ⁿ` gaps.
pub fn run_case_level(case: &TestCase, level: u32, opts: RunOptions) -> Result<RunArtifacts> {
    let started = Instant::now();
    let (datum, offset, fan) = prepare(case)?;
    let system = atomize(&datum, level).stage("atomize")?;
    let n = system.gaps();
    run_system(case, datum, offset, fan, system, n, started, opts)
}

pub fn run_case(case: &TestCase, n: usize, opts: RunOptions) -> Result<RunReport> {
    run_case_full(case, n, opts).map(|a| a.report)
}

/// Least-squares slope of `ln e` against `ln N`; `None` when undefined (fewer
/// than two points or an error at the round-off floor).
pub fn fitted_slope(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|(_, e)| !(*e > 1e-14)) {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub test_id: String,
    pub rows: Vec<RunReport>,
    pub slope: Option<f64>,
    /// `l1_rho` non-increasing in `N`, up to [`tolerance::L1_FLOOR`].
    pub monotone: bool,
}

fn summarize(test_id: &str, rows: Vec<RunReport>) -> SweepResult {
    let mut pts: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.l1.rho)).collect();
    pts.sort_by_key(|p| p.0);
    let monotone = pts.windows(2).all(|w| w[1].1 <= w[0].1 + tolerance::L1_FLOOR);
    SweepResult {
        test_id: test_id.to_string(),
        slope: fitted_slope(&pts),
        monotone,
        rows,
    }
}

/// One run per particle count of `case`.
pub fn convergence_sweep(case: &TestCase, exec: Execution, opts: RunOptions) -> Result<SweepResult> {
    let rows = exec::map(exec, &case.particles, |n| run_case(case, *n, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&case.id, rows))
}

/// Every `(case, N)` pair of the configuration; output ordered by case then `N`.
pub fn run_table(cfg: &Config, exec: Execution, opts: RunOptions) -> Result<Vec<SweepResult>> {
    let jobs: Vec<(usize, usize)> = cfg
        .cases
        .iter()
        .enumerate()
        .flat_map(|(k, c)| c.particles.iter().map(move |n| (k, *n)))
        .collect();
    let mut results = exec::map(exec, &jobs, |(k, n)| run_case(&cfg.cases[*k], *n, opts)).into_iter();
    let mut out = Vec::with_capacity(cfg.cases.len());
    for c in &cfg.cases {
        let rows = results.by_ref().take(c.particles.len()).collect::<Result<Vec<_>>>()?;
        out.push(summarize(&c.id, rows));
    }
    Ok(out)
}

pub const REPORT_HEADER: [&str; 8] = ["test_id", "N", "t", "l1_rho", "l1_v", "l1_w", "d1", "runtime_ms"];

/// Rows `test_id,N,t,l1_rho,l1_v,l1_w,d1,runtime_ms`.
pub fn write_report_csv<'a, W: Write>(rows: impl IntoIterator<Item = &'a RunReport>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(REPORT_HEADER)?;
    for r in rows {
        wtr.write_record(&[
            r.test_id.clone(),
            r.n.to_string(),
            r.t.to_string(),
            r.l1.rho.to_string(),
            r.l1.v.to_string(),
            r.l1.w.to_string(),
            r.d1.to_string(),
            r.runtime_ms.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-run provenance: hash, window, truncation, quadrature, gauge and verdicts.
pub fn write_audit_csv<'a, W: Write>(rows: impl IntoIterator<Item = &'a RunReport>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "test_id",
        "N",
        "config_hash",
        "truncation_lo",
        "truncation_hi",
        "window_lo",
        "window_hi",
        "quad_order",
        "gauge_offset",
        "reference_l1",
        "min_slack_over_kappa",
        "max_upper_excess",
        "c_v",
        "tv_initial",
        "tv_max_increase",
        "mass_defect",
        "markers_constant",
        "d1_lipschitz_ratio",
        "steps",
        "rejected_steps",
    ])?;
    for r in rows {
        let i = &r.invariants;
        wtr.write_record(&[
            r.test_id.clone(),
            r.n.to_string(),
            r.config_hash.clone(),
            r.truncation[0].to_string(),
            r.truncation[1].to_string(),
            r.window[0].to_string(),
            r.window[1].to_string(),
            r.quad_order.to_string(),
            r.gauge_offset.to_string(),
            r.reference_l1.map(|v| v.to_string()).unwrap_or_default(),
            i.min_slack_over_kappa.to_string(),
            i.max_upper_excess.to_string(),
            i.c_v.value.to_string(),
            i.tv_initial.to_string(),
            i.tv_max_increase.to_string(),
            i.mass_defect.to_string(),
            i.markers_constant.to_string(),
            i.d1_lipschitz_ratio.to_string(),
            r.steps.to_string(),
            r.rejected_steps.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub level: u32,
    pub n: usize,
    pub kappa: f64,
    pub residual_mass: f64,
    pub residual_momentum: f64,
    pub bound: f64,
}

impl ResidualRow {
    pub fn within_bound(&self) -> bool {
        self.residual_mass.abs() <= self.bound && self.residual_momentum.abs() <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualStudy {
    pub test_id: String,
    pub rows: Vec<ResidualRow>,
}

impl ResidualStudy {
    /// `|r(2N)| / |r(N)|` for both components, consecutive levels.
    pub fn ratios(&self) -> Vec<(f64, f64)> {
        self.rows
            .windows(2)
            .map(|w| {
                (
                    w[1].residual_mass.abs() / w[0].residual_mass.abs(),
                    w[1].residual_momentum.abs() / w[0].residual_momentum.abs(),
                )
            })
            .collect()
    }
}

/// Weak residual of the configured test function at each level. Both the
/// residual and its bound are expressed in the original marker variable, so
/// the momentum component is `r_w − c·r_1` for a gauge offset `c`.
pub fn residual_study(cfg: &Config, exec: Execution) -> Result<ResidualStudy> {
    let rc = cfg
        .residual
        .as_ref()
        .ok_or_else(|| Error::Config("no [residual] section".into()))?;
    let case = cfg.case(&rc.case)?;
    let mut case = case.clone();
    case.snapshots = rc.time_quad;
    let original = case.datum().stage("initial data")?;
    let (datum, offset, _) = prepare(&case)?;
    let rows = exec::map(exec, &rc.levels, |level| -> Result<ResidualRow> {
        let system = atomize(&datum, *level).stage("atomize")?;
        let traj = evolve(&system, case.t_final, case.t_final / rc.time_quad as f64, &case.integrator).stage("evolve")?;
        let (r1, rw) = weak_residual(&traj, &rc.phi, rc.space_order).stage("residual")?;
        let (lo, hi) = density_bounds(&datum, &traj);
        let c_v = c_v_bound(&original, (lo, hi))?;
        Ok(ResidualRow {
            level: *level,
            n: system.gaps(),
            kappa: system.kappa(),
            residual_mass: r1,
            residual_momentum: rw - offset * r1,
            bound: weak_residual_bound(system.kappa(), &rc.phi, &c_v, case.t_final),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ResidualStudy {
        test_id: case.id.clone(),
        rows,
    })
}

fn density_bounds(datum: &InitialDatum, traj: &Trajectory) -> (f64, f64) {
    let (mut lo, mut hi) = datum.density_range().unwrap_or((0.0, 0.0));
    for snap in &traj.snapshots {
        for y in snap.system.lagrangian_densities() {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    (lo, hi)
}

pub fn write_residual_csv<W: Write>(study: &ResidualStudy, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["test_id", "level", "N", "kappa", "residual_mass", "residual_momentum", "bound"])?;
    for r in &study.rows {
        wtr.write_record(&[
            study.test_id.clone(),
            r.level.to_string(),
            r.n.to_string(),
            r.kappa.to_string(),
            r.residual_mass.to_string(),
            r.residual_momentum.to_string(),
            r.bound.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
