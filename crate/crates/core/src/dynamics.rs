//! Time integration of the follow-the-leader system.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::atomize::ParticleSystem;
use crate::error::{Error, Result};
use crate::pressure::PressureLaw;

/// Step control for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    /// Upper bound on the step. `None` picks `0.5 · min gap / max(‖w‖∞, 1)`.
    pub dt_init: Option<f64>,
    /// Fraction of the local stiffness scale `gap / max(|w|, p′(y)·y, 1)` used as step.
    pub cfl: f64,
    pub max_halvings: u32,
    /// Relative tolerance of the spacing barrier `κ / R_i`.
    pub guard: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            dt_init: None,
            cfl: 0.5,
            max_halvings: 40,
            guard: 1e-9,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt_init {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::Config(format!("dt_init must be positive, got {dt}")));
            }
        }
        if !(self.cfl.is_finite() && self.cfl > 0.0 && self.cfl <= 2.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 2], got {}", self.cfl)));
        }
        if !(self.guard >= 0.0 && self.guard < 1.0) {
            return Err(Error::Config(format!("guard must lie in [0, 1), got {}", self.guard)));
        }
        Ok(())
    }
}

/// One stored state of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub system: ParticleSystem,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegrationStats {
    pub steps: usize,
    pub rejected: usize,
    /// Smallest `min_i (gap_i − κ / R_i)` over all accepted steps.
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub law: PressureLaw,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn initial(&self) -> &ParticleSystem {
        &self.snapshots[0].system
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().unwrap()
    }

    pub fn t_final(&self) -> f64 {
        self.last().t
    }

    /// Rows `t,i,x,w,y`, one per particle and snapshot. The leader carries the
    /// marker of the last gap and `y = 0` (vacuum ahead).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "i", "x", "w", "y"])?;
        for snap in &self.snapshots {
            let s = &snap.system;
            let y = s.lagrangian_densities();
            for (i, &x) in s.positions().iter().enumerate() {
                let (w, yi) = if i < s.gaps() {
                    (s.markers()[i], y[i])
                } else {
                    (s.markers()[s.gaps() - 1], 0.0)
                };
                wtr.write_record(&[
                    snap.t.to_string(),
                    i.to_string(),
                    x.to_string(),
                    w.to_string(),
                    yi.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Summary of the two-sided spacing bounds over a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingReport {
    /// `min (gap_i − κ/R_i) / κ` over snapshots and gaps.
    pub min_slack_over_kappa: f64,
    /// `max (gap_i − (x̄_N − x̄_0) − w_{N−1} t)`; should be `≤ 0`.
    pub max_upper_excess: f64,
}

/// Fills `out` with particle velocities. Returns the first gap at which the
/// velocity is undefined.
fn velocities_into(
    law: &PressureLaw,
    kappa: f64,
    markers: &[f64],
    x: &[f64],
    out: &mut [f64],
) -> std::result::Result<(), usize> {
    let n = markers.len();
    for i in 0..n {
        let gap = x[i + 1] - x[i];
        if !(gap > 0.0 && gap.is_finite()) {
            return Err(i);
        }
        let v = markers[i] - law.eval_unchecked(kappa / gap);
        if !v.is_finite() {
            return Err(i);
        }
        out[i] = v;
    }
    out[n] = markers[n - 1];
    Ok(())
}

/// Particle velocities `ẋ_0 … ẋ_N`.
pub fn rhs(system: &ParticleSystem) -> Result<Vec<f64>> {
    let mut out = vec![0.0; system.positions().len()];
    velocities_into(system.law(), system.kappa(), system.markers(), system.positions(), &mut out)
        .map_err(|i| Error::Integrity(format!("velocity of particle {i} is undefined")))?;
    Ok(out)
}

/// `dy_i/dt = −(y_i² / κ)·(ẋ_{i+1} − ẋ_i)` for every gap.
pub fn lagrangian_density_rates(system: &ParticleSystem) -> Result<Vec<f64>> {
    let v = rhs(system)?;
    let k = system.kappa();
    Ok(system
        .lagrangian_densities()
        .iter()
        .enumerate()
        .map(|(i, y)| -(y * y / k) * (v[i + 1] - v[i]))
        .collect())
}

struct Rk4 {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    lower: Vec<f64>,
}

impl Rk4 {
    fn new(system: &ParticleSystem, guard: f64) -> Self {
        let len = system.positions().len();
        let lower = system
            .max_density()
            .iter()
            .map(|r| (1.0 - guard) * system.kappa() / r)
            .collect();
        Rk4 {
            k: [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            stage: vec![0.0; len],
            lower,
        }
    }

    /// One RK4 step from `x` into `out`; `Err(i)` names the gap that failed.
    fn try_step(&mut self, s: &ParticleSystem, x: &[f64], dt: f64, out: &mut [f64]) -> std::result::Result<(), usize> {
        let (law, kappa, w) = (s.law(), s.kappa(), s.markers());
        let [k1, k2, k3, k4] = &mut self.k;
        velocities_into(law, kappa, w, x, k1)?;
        for j in 0..x.len() {
            self.stage[j] = x[j] + 0.5 * dt * k1[j];
        }
        velocities_into(law, kappa, w, &self.stage, k2)?;
        for j in 0..x.len() {
            self.stage[j] = x[j] + 0.5 * dt * k2[j];
        }
        velocities_into(law, kappa, w, &self.stage, k3)?;
        for j in 0..x.len() {
            self.stage[j] = x[j] + dt * k3[j];
        }
        velocities_into(law, kappa, w, &self.stage, k4)?;
        for j in 0..x.len() {
            out[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        match out.windows(2).zip(&self.lower).position(|(p, lo)| !(p[1] - p[0] >= *lo)) {
            Some(i) => Err(i),
            None => Ok(()),
        }
    }

    /// Halves `dt` until the step is accepted. Returns the step used and the
    /// number of rejections.
    fn advance(
        &mut self,
        s: &ParticleSystem,
        x: &[f64],
        dt: f64,
        t: f64,
        max_halvings: u32,
        out: &mut [f64],
    ) -> Result<(f64, u32)> {
        let mut h = dt;
        let mut halvings = 0;
        loop {
            match self.try_step(s, x, h, out) {
                Ok(()) => return Ok((h, halvings)),
                Err(index) => {
                    if halvings == max_halvings {
                        return Err(Error::Stiffness {
                            index,
                            time: t,
                            halvings,
                        });
                    }
                    halvings += 1;
                    h *= 0.5;
                }
            }
        }
    }
}

/// Result of a single guarded step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub system: ParticleSystem,
    /// Step actually taken (`dt / 2^rejections`).
    pub dt: f64,
    pub rejections: u32,
}

/// One RK4 step of size `dt`, halved until the spacing guard holds.
pub fn step(system: &ParticleSystem, dt: f64, opts: &IntegratorOptions) -> Result<StepOutcome> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let mut rk = Rk4::new(system, opts.guard);
    let mut out = vec![0.0; system.positions().len()];
    let (h, rejections) = rk.advance(system, system.positions(), dt, 0.0, opts.max_halvings, &mut out)?;
    Ok(StepOutcome {
        system: system.with_positions(out)?,
        dt: h,
        rejections,
    })
}

/// Stable step estimate for the current configuration.
fn stiffness_step(s: &ParticleSystem, x: &[f64], cfl: f64) -> f64 {
    let law = s.law();
    let mut min_gap = f64::INFINITY;
    let mut rate: f64 = 1.0;
    for (i, pair) in x.windows(2).enumerate() {
        let gap = pair[1] - pair[0];
        min_gap = min_gap.min(gap);
        rate = rate.max(law.rho_dp_unchecked(s.kappa() / gap)).max(s.markers()[i].abs());
    }
    cfl * min_gap / rate
}

fn default_dt(s: &ParticleSystem) -> f64 {
    let min_gap = s.positions().windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
    let w_max = s.markers().iter().fold(1.0f64, |m, w| m.max(w.abs()));
    0.5 * min_gap / w_max
}

fn snapshot_times(t_final: f64, every: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    let mut k = 1u64;
    loop {
        let t = k as f64 * every;
        if t >= t_final * (1.0 - 1e-12) {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(t_final);
    times
}

/// Integrates from `t = 0` to `t_final`, storing the state at every multiple of
/// `snapshot_every` and at `t_final`. The leader is placed on its closed-form
/// path `x̄_N + w_{N−1} t`.
pub fn evolve(system: &ParticleSystem, t_final: f64, snapshot_every: f64, opts: &IntegratorOptions) -> Result<Trajectory> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidArgument(format!("t_final must be positive, got {t_final}")));
    }
    if !(snapshot_every.is_finite() && snapshot_every > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "snapshot interval must be positive, got {snapshot_every}"
        )));
    }
    opts.validate()?;
    let times = snapshot_times(t_final, snapshot_every);
    if times.len() > 1_000_000 {
        return Err(Error::InvalidArgument("too many snapshots requested".into()));
    }
    let dt_cap = opts.dt_init.unwrap_or_else(|| default_dt(system));
    let n = system.gaps();
    let leader0 = system.leader();
    let w_lead = system.markers()[n - 1];

    let mut rk = Rk4::new(system, opts.guard);
    let mut x = system.positions().to_vec();
    let mut next = vec![0.0; x.len()];
    let mut stats = IntegrationStats {
        min_slack: system.spacing_slack(),
        ..Default::default()
    };
    let mut work = system.clone();
    let mut snapshots = Vec::with_capacity(times.len());
    snapshots.push(Snapshot {
        t: 0.0,
        system: system.clone(),
    });

    let mut t = 0.0;
    for &target in &times[1..] {
        while t < target {
            let mut dt = dt_cap.min(stiffness_step(system, &x, opts.cfl));
            let last = t + dt >= target;
            if last {
                dt = target - t;
            }
            let (h, rejections) = rk.advance(system, &x, dt, t, opts.max_halvings, &mut next)?;
            stats.steps += 1;
            stats.rejected += rejections as usize;
            t = if last && rejections == 0 { target } else { t + h };
            next[n] = leader0 + w_lead * t;
            std::mem::swap(&mut x, &mut next);
            work.set_positions_unchecked(&x);
            stats.min_slack = stats.min_slack.min(work.spacing_slack());
        }
        if x.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::Integrity(format!("particle ordering lost at t = {t}")));
        }
        snapshots.push(Snapshot {
            t: target,
            system: work.clone(),
        });
    }
    Ok(Trajectory {
        snapshots,
        law: *system.law(),
        stats,
    })
}

/// Both sides of the discrete maximum principle over a trajectory.
pub fn spacing_report(traj: &Trajectory) -> SpacingReport {
    let first = traj.initial();
    let span0 = first.leader() - first.positions()[0];
    let w_lead = first.markers()[first.gaps() - 1];
    let kappa = first.kappa();
    let mut min_slack = f64::INFINITY;
    let mut excess = f64::NEG_INFINITY;
    for snap in &traj.snapshots {
        let s = &snap.system;
        min_slack = min_slack.min(s.spacing_slack() / kappa);
        let upper = span0 + w_lead * snap.t;
        excess = excess.max(s.max_gap() - upper);
    }
    SpacingReport {
        min_slack_over_kappa: min_slack,
        max_upper_excess: excess,
    }
}
