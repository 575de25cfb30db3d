//! Error norms, Wasserstein distance, the `C_v` bound and the weak-form residual.

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::fields::{density_field, marker_field, velocity_field, PiecewiseConstantField};
use crate::initial_data::InitialDatum;
use crate::riemann::{FanSample, RiemannFan};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> Result<Vec<(f64, f64)>> {
    if order == 0 || order > 64 {
        return Err(Error::InvalidArgument(format!("quadrature order {order} outside 1..=64")));
    }
    let n = order;
    let mut rule = Vec::with_capacity(n);
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and P_{n-1}
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rule)
}

fn integrate(rule: &[(f64, f64)], a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * rule.iter().map(|(x, w)| w * f(m + h * x)).sum::<f64>()
}

/// Which exact field an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Density,
    Velocity,
    Marker,
}

impl Quantity {
    fn of(self, s: &FanSample) -> f64 {
        match self {
            Quantity::Density => s.rho,
            Quantity::Velocity => s.v,
            Quantity::Marker => s.w,
        }
    }
}

fn check_window(window: (f64, f64)) -> Result<()> {
    if !(window.0.is_finite() && window.1.is_finite() && window.0 < window.1) {
        return Err(Error::InvalidArgument(format!("bad window [{}, {}]", window.0, window.1)));
    }
    Ok(())
}

fn union_partition(field: &PiecewiseConstantField, fan: &RiemannFan, t: f64, window: (f64, f64)) -> Vec<f64> {
    let (a, b) = window;
    let mut cuts: Vec<f64> = field
        .breakpoints()
        .iter()
        .copied()
        .chain(fan.edges(t))
        .filter(|x| *x > a && *x < b)
        .collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// `∫_window |field − exact| dx`. Velocity and marker errors skip the vacuum
/// part of the exact solution.
pub fn l1_distance(
    field: &PiecewiseConstantField,
    fan: &RiemannFan,
    t: f64,
    window: (f64, f64),
    quad_order: usize,
    quantity: Quantity,
) -> Result<f64> {
    check_window(window)?;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("exact solution needs t > 0, got {t}")));
    }
    let rule = gauss_legendre(quad_order)?;
    let cuts = union_partition(field, fan, t, window);
    let mut total = 0.0;
    for c in cuts.windows(2) {
        let (lo, hi) = (c[0], c[1]);
        let mid = fan.sample((0.5 * (lo + hi) - fan.origin()) / t);
        if mid.vacuum && quantity != Quantity::Density {
            continue;
        }
        let value = field.eval(0.5 * (lo + hi));
        total += integrate(&rule, lo, hi, |x| (value - quantity.of(&fan.sample((x - fan.origin()) / t))).abs());
    }
    Ok(total)
}

/// Density, velocity and marker errors of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1Errors {
    pub rho: f64,
    pub v: f64,
    pub w: f64,
}

pub fn l1_errors(
    system: &crate::atomize::ParticleSystem,
    fan: &RiemannFan,
    t: f64,
    window: (f64, f64),
    quad_order: usize,
) -> Result<L1Errors> {
    Ok(L1Errors {
        rho: l1_distance(&density_field(system), fan, t, window, quad_order, Quantity::Density)?,
        v: l1_distance(&velocity_field(system), fan, t, window, quad_order, Quantity::Velocity)?,
        w: l1_distance(&marker_field(system), fan, t, window, quad_order, Quantity::Marker)?,
    })
}

/// `∫_a^b |F_n − F| dx` with `F_n`, `F` the cumulative masses counted from the
/// window start `a`.
pub fn window_cdf_distance(
    density: &PiecewiseConstantField,
    fan: &RiemannFan,
    t: f64,
    window: (f64, f64),
    quad_order: usize,
) -> Result<f64> {
    check_window(window)?;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("exact solution needs t > 0, got {t}")));
    }
    let rule = gauss_legendre(quad_order)?;
    let cuts = union_partition(density, fan, t, window);
    let exact = |x: f64| fan.sample((x - fan.origin()) / t).rho;
    let (mut fn_left, mut fe_left, mut total) = (0.0, 0.0, 0.0);
    for c in cuts.windows(2) {
        let (lo, hi) = (c[0], c[1]);
        let y = density.eval(0.5 * (lo + hi));
        total += integrate(&rule, lo, hi, |x| {
            let fe = fe_left + integrate(&rule, lo, x, exact);
            (fn_left + y * (x - lo) - fe).abs()
        });
        fn_left += y * (hi - lo);
        fe_left += integrate(&rule, lo, hi, exact);
    }
    Ok(total)
}

/// Linear pieces `X(z) = x0 + (z − z0) / ρ` of a generalised inverse
/// distribution function, one per positive-density cell.
struct InversePieces {
    z: Vec<f64>,
    x: Vec<f64>,
    rho: Vec<f64>,
    mass: f64,
}

impl InversePieces {
    fn new(f: &PiecewiseConstantField) -> Result<Self> {
        if f.left_extension() != 0.0 || f.right_extension() != 0.0 {
            return Err(Error::InvalidArgument("density must vanish outside its cells".into()));
        }
        let (mut z, mut x, mut rho) = (Vec::new(), Vec::new(), Vec::new());
        let mut cum = 0.0;
        for (v, w) in f.values().iter().zip(f.breakpoints().windows(2)) {
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("density value {v} is not admissible")));
            }
            if *v > 0.0 {
                z.push(cum);
                x.push(w[0]);
                rho.push(*v);
                cum += v * (w[1] - w[0]);
            }
        }
        if z.is_empty() {
            return Err(Error::InvalidArgument("density has no mass".into()));
        }
        Ok(InversePieces { z, x, rho, mass: cum })
    }

    fn eval_in(&self, k: usize, z: f64) -> f64 {
        self.x[k] + (z - self.z[k]) / self.rho[k]
    }
}

/// `X(z) = inf{x : ∫_{-∞}^x ρ > z}` for `z ∈ [0, M]`; `X(M)` is the right end
/// of the support.
pub fn inverse_cdf(density: &PiecewiseConstantField, z: f64) -> Result<f64> {
    let p = InversePieces::new(density)?;
    if !(z >= 0.0 && z <= p.mass) {
        return Err(Error::InvalidArgument(format!("mass level {z} outside [0, {}]", p.mass)));
    }
    let k = p.z.partition_point(|zk| *zk <= z).saturating_sub(1);
    let last = p.z.len() - 1;
    if z >= p.mass {
        return Ok(p.eval_in(last, p.mass));
    }
    Ok(p.eval_in(k, z))
}

/// `∫_0^M |X_1(z) − X_2(z)| dz`, exact for piecewise-constant densities.
pub fn wasserstein_d1(f1: &PiecewiseConstantField, f2: &PiecewiseConstantField) -> Result<f64> {
    let (p1, p2) = (InversePieces::new(f1)?, InversePieces::new(f2)?);
    if (p1.mass - p2.mass).abs() > 1e-12 * p1.mass.max(p2.mass) {
        return Err(Error::MassMismatch {
            left: p1.mass,
            right: p2.mass,
        });
    }
    let m = p1.mass.min(p2.mass);
    let mut cuts: Vec<f64> = p1.z.iter().chain(&p2.z).copied().filter(|z| *z < m).collect();
    cuts.push(m);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (mut k1, mut k2) = (0, 0);
    let mut total = 0.0;
    for c in cuts.windows(2) {
        let (za, zb) = (c[0], c[1]);
        while k1 + 1 < p1.z.len() && p1.z[k1 + 1] <= za {
            k1 += 1;
        }
        while k2 + 1 < p2.z.len() && p2.z[k2 + 1] <= za {
            k2 += 1;
        }
        let da = p1.eval_in(k1, za) - p2.eval_in(k2, za);
        let db = p1.eval_in(k1, zb) - p2.eval_in(k2, zb);
        let h = zb - za;
        total += if da * db >= 0.0 {
            0.5 * (da.abs() + db.abs()) * h
        } else {
            0.5 * (da * da + db * db) / (da.abs() + db.abs()) * h
        };
    }
    Ok(total)
}

/// Ingredients and value of `C_v = 2‖w̄‖∞ + TV[w̄] + Lip(p)·TV[ρ̄]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvBound {
    pub marker_sup: f64,
    pub marker_tv: f64,
    pub lipschitz: f64,
    pub density_tv: f64,
    pub value: f64,
}

/// Jumps are counted strictly inside the support hull of the datum.
pub fn c_v_bound(datum: &InitialDatum, rho_range: (f64, f64)) -> Result<CvBound> {
    let (lo, hi) = rho_range;
    if !(lo >= 0.0 && hi >= lo) {
        return Err(Error::InvalidArgument(format!("bad density range [{lo}, {hi}]")));
    }
    let lipschitz = datum.law().lipschitz_on(lo.max(f64::MIN_POSITIVE), hi.max(f64::MIN_POSITIVE))?;
    let marker_sup = datum.marker_sup_norm();
    let marker_tv = datum.marker_tv_inside();
    let density_tv = datum.density_tv_inside();
    Ok(CvBound {
        marker_sup,
        marker_tv,
        lipschitz,
        density_tv,
        value: 2.0 * marker_sup + marker_tv + lipschitz * density_tv,
    })
}

/// `b(s) = exp(1 − 1/(1 − s²))` on `|s| < 1`, zero outside; `b(0) = 1`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

fn bump_prime(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let u = 1.0 - s * s;
        -2.0 * s / (u * u) * bump(s)
    }
}

/// `max |b′|`, attained at `s² = 1/√3`.
fn bump_prime_max() -> f64 {
    bump_prime(3f64.powf(-0.25)).abs()
}

/// `φ(t, x) = b((t − t_c)/τ)·b((x − x_c)/h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakTestFunction {
    pub t_center: f64,
    pub t_radius: f64,
    pub x_center: f64,
    pub x_radius: f64,
}

impl WeakTestFunction {
    pub fn new(t_center: f64, t_radius: f64, x_center: f64, x_radius: f64) -> Result<Self> {
        let phi = WeakTestFunction {
            t_center,
            t_radius,
            x_center,
            x_radius,
        };
        phi.validate()?;
        Ok(phi)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.t_center, self.t_radius, self.x_center, self.x_radius]
            .iter()
            .all(|v| v.is_finite())
            && self.t_radius > 0.0
            && self.x_radius > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad test function {self:?}")))
        }
    }

    pub fn time_support(&self) -> (f64, f64) {
        (self.t_center - self.t_radius, self.t_center + self.t_radius)
    }

    pub fn space_support(&self) -> (f64, f64) {
        (self.x_center - self.x_radius, self.x_center + self.x_radius)
    }

    fn time_factor(&self, t: f64) -> f64 {
        bump((t - self.t_center) / self.t_radius)
    }

    fn time_factor_dt(&self, t: f64) -> f64 {
        bump_prime((t - self.t_center) / self.t_radius) / self.t_radius
    }

    fn space_factor(&self, x: f64) -> f64 {
        bump((x - self.x_center) / self.x_radius)
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.time_factor(t) * self.space_factor(x)
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        self.time_factor_dt(t) * self.space_factor(x)
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        self.time_factor(t) * bump_prime((x - self.x_center) / self.x_radius) / self.x_radius
    }

    /// `sup |∂_x φ|`, the Lipschitz constant of `φ(t, ·)` uniformly in `t`.
    pub fn lipschitz_x(&self) -> f64 {
        bump_prime_max() / self.x_radius
    }

    /// `sup |∂_t φ|`.
    pub fn lipschitz_t(&self) -> f64 {
        bump_prime_max() / self.t_radius
    }
}

/// `∫∫ ρ^n (φ_t + V^n φ_x)·(1, W^n) dx dt` over the stored snapshots.
pub fn weak_residual(traj: &Trajectory, phi: &WeakTestFunction, space_order: usize) -> Result<(f64, f64)> {
    phi.validate()?;
    let (t0, t1) = phi.time_support();
    if t0 < 0.0 || t1 > traj.t_final() {
        return Err(Error::InvalidArgument(format!(
            "test function time support [{t0}, {t1}] leaves [0, {}]",
            traj.t_final()
        )));
    }
    let rule = gauss_legendre(space_order)?;
    let (xa, xb) = phi.space_support();
    let integrand = |snap: &crate::dynamics::Snapshot| -> (f64, f64) {
        let s = &snap.system;
        let t = snap.t;
        let (ft, fdt) = (phi.time_factor(t), phi.time_factor_dt(t));
        if ft == 0.0 && fdt == 0.0 {
            return (0.0, 0.0);
        }
        let x = s.positions();
        let y = s.lagrangian_densities();
        let v = velocity_field(s);
        let (mut r1, mut rw) = (0.0, 0.0);
        let start = x.partition_point(|xi| *xi <= xa).saturating_sub(1);
        for i in start..s.gaps() {
            let (lo, hi) = (x[i], x[i + 1]);
            if lo >= xb {
                break;
            }
            let (a, b) = (lo.max(xa), hi.min(xb));
            if b <= a {
                continue;
            }
            let space = integrate(&rule, a, b, |z| phi.space_factor(z));
            let flux = v.values()[i] * ft * (phi.space_factor(hi) - phi.space_factor(lo));
            let term = y[i] * (fdt * space + flux);
            r1 += term;
            rw += term * s.markers()[i];
        }
        (r1, rw)
    };
    let (mut r1, mut rw) = (0.0, 0.0);
    let snaps = &traj.snapshots;
    let mut prev = integrand(&snaps[0]);
    for k in 1..snaps.len() {
        let cur = integrand(&snaps[k]);
        let h = snaps[k].t - snaps[k - 1].t;
        r1 += 0.5 * h * (prev.0 + cur.0);
        rw += 0.5 * h * (prev.1 + cur.1);
        prev = cur;
    }
    Ok((r1, rw))
}

/// `κ·(Lip[φ]/2)·C_v·T·(1 + ‖w̄‖∞)`.
pub fn weak_residual_bound(kappa: f64, phi: &WeakTestFunction, c_v: &CvBound, t_final: f64) -> f64 {
    kappa * 0.5 * phi.lipschitz_x() * c_v.value * t_final * (1.0 + c_v.marker_sup)
}

/// Worst ratio `d₁(ρ(t_k), ρ(t_{k+1})) / (M·s·Δt)` between consecutive
/// snapshots, with `s` the largest particle speed seen at any snapshot.
pub fn d1_time_lipschitz_ratio(traj: &Trajectory) -> Result<f64> {
    let s0 = traj.initial();
    let mass = s0.kappa() * s0.gaps() as f64;
    let mut speed = 0.0f64;
    for snap in &traj.snapshots {
        speed = crate::dynamics::rhs(&snap.system)?.iter().fold(speed, |m, v| m.max(v.abs()));
    }
    let c = mass * speed;
    let mut worst = 0.0f64;
    let mut prev = density_field(s0);
    for pair in traj.snapshots.windows(2) {
        let cur = density_field(&pair[1].system);
        let d = wasserstein_d1(&prev, &cur)?;
        let dt = pair[1].t - pair[0].t;
        worst = worst.max(if c > 0.0 { d / (c * dt) } else { d });
        prev = cur;
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomize::{atomize, ParticleSystem};
    use crate::dynamics::{evolve, IntegratorOptions};
    use crate::initial_data::State;
    use crate::pressure::PressureLaw;
    use crate::riemann::solve_riemann;
    use proptest::prelude::*;

    fn linear6() -> PressureLaw {
        PressureLaw::power(1.0, 6.0, 1.0).unwrap()
    }

    fn step(bp: Vec<f64>, v: Vec<f64>) -> PiecewiseConstantField {
        PiecewiseConstantField::new(bp, v, 0.0, 0.0).unwrap()
    }

    /// Independent inverse distribution by bisection on the cumulative mass.
    fn inverse_by_bisection(f: &PiecewiseConstantField, z: f64) -> f64 {
        let cum = |x: f64| -> f64 {
            f.values()
                .iter()
                .zip(f.breakpoints().windows(2))
                .map(|(v, w)| v * (x.min(w[1]) - w[0]).max(0.0))
                .sum()
        };
        let (mut a, mut b) = f.support();
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if cum(m) > z {
                b = m;
            } else {
                a = m;
            }
        }
        b
    }

    #[test]
    fn gauss_rules_are_exact_for_polynomials() {
        for n in 1..12 {
            let rule = gauss_legendre(n).unwrap();
            for deg in 0..(2 * n) {
                let got: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
        assert!(gauss_legendre(0).is_err());
    }

    #[test]
    fn l1_of_exact_and_offset_fields() {
        let fan = solve_riemann(&linear6(), State::new(0.2, 0.5), State::new(0.2, 0.5)).unwrap();
        let f = step(vec![-1.0, 1.0], vec![0.2]);
        assert!(l1_distance(&f, &fan, 0.3, (-0.5, 0.5), 4, Quantity::Density).unwrap() < 1e-15);
        let g = step(vec![-1.0, 1.0], vec![0.25]);
        let e = l1_distance(&g, &fan, 0.3, (-0.5, 0.5), 4, Quantity::Density).unwrap();
        assert!((e - 0.05).abs() < 1e-15);
        assert!(l1_distance(&g, &fan, 0.3, (0.5, -0.5), 4, Quantity::Density).is_err());
        assert!(l1_distance(&g, &fan, 0.0, (-0.5, 0.5), 4, Quantity::Density).is_err());
    }

    #[test]
    fn l1_against_rarefaction_closed_form() {
        // linear law rarefaction: ρ(ξ) = (0.35 − ξ)/12 on ξ ∈ [−0.25, 0.35]
        let fan = solve_riemann(&linear6(), State::new(0.05, 0.05), State::new(0.05, 0.5)).unwrap();
        let f = step(vec![-0.25, 0.35], vec![0.0]);
        let e = l1_distance(&f, &fan, 1.0, (-0.25, 0.35), 2, Quantity::Density).unwrap();
        let exact = 0.6 * 0.6 / 24.0;
        assert!((e - exact).abs() < 1e-15);
        let e8 = l1_distance(&f, &fan, 1.0, (-0.25, 0.35), 8, Quantity::Density).unwrap();
        assert!((e - e8).abs() < 1e-10);
        // velocity error skips the vacuum (0.35, 0.5)
        let v = PiecewiseConstantField::new(vec![0.35, 0.5], vec![9.0], 9.0, 9.0).unwrap();
        assert_eq!(l1_distance(&v, &fan, 1.0, (0.36, 0.49), 4, Quantity::Velocity).unwrap(), 0.0);
    }

    #[test]
    fn inverse_cdf_examples() {
        let u = step(vec![0.0, 1.0], vec![1.0]);
        assert_eq!(inverse_cdf(&u, 0.5).unwrap(), 0.5);
        assert_eq!(inverse_cdf(&u, 0.0).unwrap(), 0.0);
        let two = step(vec![0.0, 1.0, 2.0, 3.0], vec![0.5, 0.0, 0.5]);
        assert_eq!(inverse_cdf(&two, 0.5).unwrap(), 2.0);
        assert_eq!(inverse_cdf(&two, 1.0).unwrap(), 3.0);
        assert!(inverse_cdf(&two, 1.5).is_err());
    }

    #[test]
    fn d1_examples() {
        let a = step(vec![0.0, 1.0], vec![1.0]);
        let b = step(vec![1.0, 2.0], vec![1.0]);
        assert!((wasserstein_d1(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(wasserstein_d1(&a, &a).unwrap(), 0.0);
        let c = step(vec![0.0, 1.0], vec![2.0]);
        assert!(matches!(wasserstein_d1(&a, &c), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn c_v_examples() {
        let law = linear6();
        let d = InitialDatum::new(vec![0.0, 1.0], vec![0.1], vec![0.4], law).unwrap();
        let c = c_v_bound(&d, (0.0, 0.1)).unwrap();
        assert!((c.value - 2.0).abs() < 1e-15);
        let t4 = InitialDatum::riemann(law, State::new(0.05, 0.05), State::new(0.05, 0.5), -1.0, 1.0, 0.0).unwrap();
        let c = c_v_bound(&t4, (0.0, 0.05)).unwrap();
        assert!((c.value - 2.05).abs() < 1e-14);
    }

    #[test]
    fn bump_lipschitz_is_the_max_slope() {
        let phi = WeakTestFunction::new(0.5, 0.25, 0.0, 0.2).unwrap();
        let sampled = (0..200_001)
            .map(|k| -0.2 + 0.4 * k as f64 / 200_000.0)
            .map(|x| phi.dx(0.5, x).abs())
            .fold(0.0, f64::max);
        assert!(sampled <= phi.lipschitz_x());
        assert!(sampled > phi.lipschitz_x() * (1.0 - 1e-9));
        // finite-difference partials
        let (t, x, h) = (0.42, 0.07, 1e-6);
        let fd_x = (phi.value(t, x + h) - phi.value(t, x - h)) / (2.0 * h);
        let fd_t = (phi.value(t + h, x) - phi.value(t - h, x)) / (2.0 * h);
        assert!((fd_x - phi.dx(t, x)).abs() < 1e-7);
        assert!((fd_t - phi.dt(t, x)).abs() < 1e-7);
        assert_eq!(phi.value(0.2, 0.0), 0.0);
    }

    #[test]
    fn residual_vanishes_away_from_the_platoon() {
        let d = InitialDatum::riemann(linear6(), State::new(0.2, 0.3), State::new(0.1, 0.5), -1.0, 1.0, 0.0).unwrap();
        let s = atomize(&d, 6).unwrap();
        let traj = evolve(&s, 0.4, 0.01, &IntegratorOptions::default()).unwrap();
        let phi = WeakTestFunction::new(0.2, 0.1, 10.0, 0.5).unwrap();
        assert_eq!(weak_residual(&traj, &phi, 4).unwrap(), (0.0, 0.0));
        let leaking = WeakTestFunction::new(0.35, 0.1, 0.0, 0.5).unwrap();
        assert!(weak_residual(&traj, &leaking, 4).is_err());
    }

    #[test]
    fn residual_is_small_for_a_constant_state() {
        // uniform interior: ρ and V constant, so ∫∫ ρ(φ_t + Vφ_x) = 0 up to quadrature
        let d = InitialDatum::new(vec![-3.0, 3.0], vec![0.1], vec![0.4], linear6()).unwrap();
        let s = atomize(&d, 8).unwrap();
        let traj = evolve(&s, 0.5, 0.005, &IntegratorOptions::default()).unwrap();
        let phi = WeakTestFunction::new(0.25, 0.2, 0.0, 0.5).unwrap();
        let (r1, rw) = weak_residual(&traj, &phi, 6).unwrap();
        assert!(r1.abs() < 1e-10 && rw.abs() < 1e-10, "{r1} {rw}");
    }

    #[test]
    fn d1_time_lipschitz_holds_on_a_run() {
        let d = InitialDatum::riemann(linear6(), State::new(0.2, 0.3), State::new(0.1, 0.5), -1.0, 1.0, 0.0).unwrap();
        let s = atomize(&d, 6).unwrap();
        let traj = evolve(&s, 0.4, 0.02, &IntegratorOptions::default()).unwrap();
        assert!(d1_time_lipschitz_ratio(&traj).unwrap() <= 1.0);
    }

    #[test]
    fn window_cdf_distance_examples() {
        let fan = solve_riemann(&linear6(), State::new(0.2, 0.5), State::new(0.2, 0.5)).unwrap();
        let f = step(vec![-1.0, 1.0], vec![0.2]);
        assert!(window_cdf_distance(&f, &fan, 0.3, (-0.5, 0.5), 4).unwrap() < 1e-15);
        let g = step(vec![-1.0, 1.0], vec![0.3]);
        // |F_n − F| = 0.1 (x − a) on a window of length 1
        let e = window_cdf_distance(&g, &fan, 0.3, (-0.5, 0.5), 4).unwrap();
        assert!((e - 0.05).abs() < 1e-14);
    }

    fn random_density() -> impl Strategy<Value = PiecewiseConstantField> {
        proptest::collection::vec((0.05f64..1.0, 0.0f64..2.0), 1..8).prop_map(|cells| {
            let mut bp = vec![0.0];
            let mut vals = Vec::new();
            for (w, v) in &cells {
                bp.push(bp.last().unwrap() + w);
                vals.push(*v);
            }
            if vals.iter().all(|v| *v == 0.0) {
                vals[0] = 1.0;
            }
            // normalise to unit mass
            let m: f64 = vals.iter().zip(bp.windows(2)).map(|(v, w)| v * (w[1] - w[0])).sum();
            let vals = vals.iter().map(|v| v / m).collect();
            PiecewiseConstantField::new(bp, vals, 0.0, 0.0).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inverse_cdf_matches_bisection(f in random_density(), z in 0.0f64..0.999) {
            let got = inverse_cdf(&f, z).unwrap();
            prop_assert!((got - inverse_by_bisection(&f, z)).abs() < 1e-9);
        }

        #[test]
        fn d1_matches_fine_quadrature(a in random_density(), b in random_density()) {
            let d = wasserstein_d1(&a, &b).unwrap();
            let n = 2_000;
            let brute: f64 = (0..n)
                .map(|k| (k as f64 + 0.5) / n as f64)
                .map(|z| (inverse_by_bisection(&a, z) - inverse_by_bisection(&b, z)).abs())
                .sum::<f64>() / n as f64;
            prop_assert!((d - brute).abs() < 1e-2, "{} vs {}", d, brute);
        }

        #[test]
        fn d1_metric_axioms(a in random_density(), b in random_density(), c in random_density()) {
            let ab = wasserstein_d1(&a, &b).unwrap();
            let ba = wasserstein_d1(&b, &a).unwrap();
            let bc = wasserstein_d1(&b, &c).unwrap();
            let ac = wasserstein_d1(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(wasserstein_d1(&a, &a).unwrap() <= 1e-12);
        }

        #[test]
        fn d1_of_translation(a in random_density(), h in -3.0f64..3.0) {
            let moved = PiecewiseConstantField::new(
                a.breakpoints().iter().map(|x| x + h).collect(),
                a.values().to_vec(), 0.0, 0.0).unwrap();
            let d = wasserstein_d1(&a, &moved).unwrap();
            prop_assert!((d - h.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn particle_density_d1_uses_particle_positions() {
        // two systems with equal κ: d₁ is the L¹ distance of the piecewise-linear X
        let law = linear6();
        let a = ParticleSystem::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0], 0.5, law, None).unwrap();
        let b = ParticleSystem::new(vec![0.5, 1.5, 2.5], vec![1.0, 1.0], 0.5, law, None).unwrap();
        let d = wasserstein_d1(&density_field(&a), &density_field(&b)).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }
}
