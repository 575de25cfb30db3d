//! Equal-mass atomization of the initial density and the particle system type.

use crate::error::{Error, Result};
use crate::initial_data::InitialDatum;
use crate::pressure::PressureLaw;

/// Relative slack (in units of the total mass) within which a mass target is
/// snapped onto a datum breakpoint. Keeps a particle exactly on a jump of the
/// datum when it is meant to sit there, instead of an ulp to either side.
const SNAP_MASS: f64 = 64.0 * f64::EPSILON;

/// Particles `x_0 < … < x_N` with one Lagrangian marker per gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    level: Option<u32>,
    kappa: f64,
    positions: Vec<f64>,
    markers: Vec<f64>,
    max_density: Vec<f64>,
    law: PressureLaw,
}

impl ParticleSystem {
    pub fn new(
        positions: Vec<f64>,
        markers: Vec<f64>,
        kappa: f64,
        law: PressureLaw,
        level: Option<u32>,
    ) -> Result<Self> {
        if markers.is_empty() || positions.len() != markers.len() + 1 {
            return Err(Error::Integrity(format!(
                "{} positions for {} markers",
                positions.len(),
                markers.len()
            )));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Integrity(format!("mass quantum {kappa} must be > 0")));
        }
        check_ordering(&positions)?;
        let max_density = markers
            .iter()
            .map(|&w| {
                let inv = law.inverse(w)?;
                if inv.vacuum_clamp {
                    return Err(Error::Integrity(format!("marker {w} has no positive maximal density")));
                }
                Ok(inv.rho)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParticleSystem {
            level,
            kappa,
            positions,
            markers,
            max_density,
            law,
        })
    }

    /// Same particles and markers at new positions.
    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::Integrity("position count changed".into()));
        }
        check_ordering(&positions)?;
        Ok(ParticleSystem {
            positions,
            ..self.clone()
        })
    }

    pub(crate) fn set_positions_unchecked(&mut self, positions: &[f64]) {
        self.positions.copy_from_slice(positions);
    }

    pub fn level(&self) -> Option<u32> {
        self.level
    }

    /// Number of gaps `N`.
    pub fn gaps(&self) -> usize {
        self.markers.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn markers(&self) -> &[f64] {
        &self.markers
    }

    /// `R_i = p⁻¹(w_i)`, the largest density gap `i` can reach.
    pub fn max_density(&self) -> &[f64] {
        &self.max_density
    }

    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    pub fn leader(&self) -> f64 {
        *self.positions.last().unwrap()
    }

    /// Discrete Lagrangian densities `y_i = κ / (x_{i+1} - x_i)`.
    pub fn lagrangian_densities(&self) -> Vec<f64> {
        self.positions.windows(2).map(|w| self.kappa / (w[1] - w[0])).collect()
    }

    /// `min_i (x_{i+1} - x_i - κ / R_i)`: margin of the discrete maximum principle.
    pub fn spacing_slack(&self) -> f64 {
        self.positions
            .windows(2)
            .zip(&self.max_density)
            .map(|(w, r)| (w[1] - w[0]) - self.kappa / r)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest gap.
    pub fn max_gap(&self) -> f64 {
        self.positions.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

fn check_ordering(positions: &[f64]) -> Result<()> {
    if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
        return Err(Error::Integrity(format!("particle {i} has non-finite position")));
    }
    if let Some(i) = positions.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Integrity(format!("particles {i} and {} are not ordered", i + 1)));
    }
    Ok(())
}

/// `sup{x : ∫_{x̄_min}^x ρ̄ < mass}`. On a zero-density plateau this is its
/// left endpoint.
pub fn cumulative_inverse(datum: &InitialDatum, mass: f64) -> Result<f64> {
    let total = datum.mass();
    let Some((x_min, x_max)) = datum.support_hull() else {
        return Err(Error::InvalidDatum("datum has no mass".into()));
    };
    let snap = SNAP_MASS * total;
    if !(mass >= 0.0 && mass <= total + snap) {
        return Err(Error::InvalidArgument(format!("mass target {mass} outside [0, {total}]")));
    }
    if mass <= 0.0 {
        return Ok(x_min);
    }
    let bp = datum.breakpoints();
    let mut cum = 0.0;
    for (j, &rho) in datum.densities().iter().enumerate() {
        if rho <= 0.0 {
            continue;
        }
        let next = cum + rho * (bp[j + 1] - bp[j]);
        if (mass - cum).abs() <= snap && cum > 0.0 {
            return Ok(bp[j]);
        }
        if (mass - next).abs() <= snap {
            return Ok(bp[j + 1]);
        }
        if mass < next {
            return Ok((bp[j] + (mass - cum) / rho).min(bp[j + 1]));
        }
        cum = next;
    }
    Ok(x_max)
}

/// Atomization at level `n`: `2ⁿ` gaps of mass `κ_n = 2⁻ⁿ M`.
pub fn atomize(datum: &InitialDatum, level: u32) -> Result<ParticleSystem> {
    if level == 0 || level > 40 {
        return Err(Error::InvalidArgument(format!("level {level} outside 1..=40")));
    }
    build(datum, 1usize << level, Some(level))
}

/// Equal-mass atomization into an arbitrary number of gaps, `κ = M / count`.
pub fn atomize_count(datum: &InitialDatum, count: usize) -> Result<ParticleSystem> {
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one gap".into()));
    }
    build(datum, count, None)
}

fn build(datum: &InitialDatum, count: usize, level: Option<u32>) -> Result<ParticleSystem> {
    let total = datum.mass();
    let Some((x_min, x_max)) = datum.support_hull() else {
        return Err(Error::InvalidDatum("cannot atomize a datum with zero mass".into()));
    };
    let kappa = match level {
        Some(n) => total * (-(n as f64)).exp2(),
        None => total / count as f64,
    };
    let mut positions = Vec::with_capacity(count + 1);
    positions.push(x_min);
    for i in 1..count {
        positions.push(cumulative_inverse(datum, i as f64 * kappa)?);
    }
    positions.push(x_max);
    check_ordering(&positions)?;

    let markers = ess_sup_markers(datum, &positions);
    let system = ParticleSystem::new(positions, markers, kappa, *datum.law(), level)?;
    for (i, (w, r)) in system.positions.windows(2).zip(&system.max_density).enumerate() {
        if (w[1] - w[0]) * r < kappa * (1.0 - 1e-12) {
            return Err(Error::Integrity(format!(
                "atomized gap {i} violates the spacing bound: width {} < kappa / R = {}",
                w[1] - w[0],
                kappa / r
            )));
        }
    }
    Ok(system)
}

/// Essential supremum of `w̄` over each particle interval: the max over datum
/// cells that overlap it with positive length.
fn ess_sup_markers(datum: &InitialDatum, positions: &[f64]) -> Vec<f64> {
    let bp = datum.breakpoints();
    let w = datum.markers();
    let mut out = Vec::with_capacity(positions.len() - 1);
    let mut first = 0;
    for pair in positions.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let min_overlap = 1e-12 * (hi - lo);
        while first + 1 < w.len() && bp[first + 1] <= lo {
            first += 1;
        }
        let mut best = f64::NEG_INFINITY;
        let mut j = first;
        while j < w.len() && bp[j] < hi {
            let overlap = hi.min(bp[j + 1]) - lo.max(bp[j]);
            if overlap > min_overlap {
                best = best.max(w[j]);
            }
            j += 1;
        }
        out.push(best);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::State;
    use proptest::prelude::*;

    fn linear6() -> PressureLaw {
        PressureLaw::power(1.0, 6.0, 1.0).unwrap()
    }

    fn log_law() -> PressureLaw {
        PressureLaw::logarithmic(1.4427, 1.0).unwrap()
    }

    fn uniform() -> InitialDatum {
        // ρ̄ = 0.5 on [0, 2], w̄ = 0.2 + 3 = 3.2
        InitialDatum::new(vec![0.0, 2.0], vec![0.5], vec![0.2], linear6()).unwrap()
    }

    /// Independent oracle: mass of ρ̄ on [lo, hi] by direct overlap sums.
    fn mass_between(d: &InitialDatum, lo: f64, hi: f64) -> f64 {
        (0..d.cell_count())
            .map(|j| {
                let (a, b) = d.cell(j);
                d.densities()[j] * (hi.min(b) - lo.max(a)).max(0.0)
            })
            .sum()
    }

    #[test]
    fn cumulative_inverse_examples() {
        let d = uniform();
        assert!((cumulative_inverse(&d, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(cumulative_inverse(&d, 0.0).unwrap(), 0.0);

        let two = InitialDatum::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 0.0, 1.0], vec![0.1; 3], linear6()).unwrap();
        assert_eq!(cumulative_inverse(&two, 1.0).unwrap(), 1.0);
        assert!((cumulative_inverse(&two, 1.5).unwrap() - 2.5).abs() < 1e-15);
        assert!(cumulative_inverse(&two, 2.5).is_err());
        assert!(cumulative_inverse(&two, -0.1).is_err());
    }

    #[test]
    fn uniform_split() {
        let s = atomize(&uniform(), 2).unwrap();
        assert_eq!(s.positions(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(s.markers().iter().all(|&w| (w - 3.2).abs() < 1e-15));
        assert_eq!(s.gaps(), 4);
        assert!((s.kappa() - 0.25).abs() < 1e-16);
    }

    #[test]
    fn test1_level_one() {
        let d = InitialDatum::riemann(log_law(), State::new(0.9, 1.0), State::new(0.1, 1.0), -1.0, 1.0, 0.0)
            .unwrap();
        let s = atomize(&d, 1).unwrap();
        assert_eq!(s.positions()[0], -1.0);
        assert!((s.positions()[1] + 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(s.positions()[2], 1.0);
        // second gap straddles the jump; ess-sup picks the larger left marker
        assert_eq!(s.markers()[1], d.markers()[0]);
    }

    #[test]
    fn zero_mass_rejected() {
        let d = InitialDatum::new(vec![0.0, 1.0], vec![0.0], vec![0.3], linear6()).unwrap();
        assert!(atomize(&d, 3).is_err());
        assert!(atomize(&uniform(), 0).is_err());
        assert!(atomize_count(&uniform(), 0).is_err());
    }

    #[test]
    fn particle_lands_exactly_on_aligned_jump() {
        let d = InitialDatum::riemann(log_law(), State::new(0.9, 1.0), State::new(0.1, 1.0), -2.0, 2.0, 0.0)
            .unwrap();
        for n in [100, 500, 1000, 2000] {
            let s = atomize_count(&d, n).unwrap();
            let k = (0.9 * n as f64).round() as usize;
            assert_eq!(s.positions()[k], 0.0, "N = {n}");
            assert!(s.markers()[..k].iter().all(|&w| w == d.markers()[0]));
            assert!(s.markers()[k..].iter().all(|&w| w == d.markers()[1]));
        }
    }

    #[test]
    fn nesting_identity() {
        let d = InitialDatum::new(
            vec![-1.0, -0.3, 0.4, 1.1],
            vec![0.7, 0.2, 0.45],
            vec![0.3, 0.9, 0.1],
            linear6(),
        )
        .unwrap();
        for n in 1..6u32 {
            let coarse = atomize(&d, n).unwrap();
            for m in 1..4u32 {
                let fine = atomize(&d, n + m).unwrap();
                let nn = coarse.gaps();
                let nf = fine.gaps();
                for i in 0..=nn {
                    let a = coarse.positions()[nn - i];
                    let b = fine.positions()[nf - (1 << m) * i];
                    assert!((a - b).abs() <= 1e-12, "n={n} m={m} i={i}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn spacing_slack_examples() {
        let s = atomize(&uniform(), 3).unwrap();
        assert!(s.spacing_slack() >= 0.0);
        // equilibrium gap κ / R exactly
        let law = linear6();
        let w = 1.2;
        let r = law.inverse_density(w).unwrap();
        let s = ParticleSystem::new(vec![0.0, 0.5 / r], vec![w], 0.5, law, None).unwrap();
        assert!(s.spacing_slack().abs() < 1e-15);
    }

    #[test]
    fn system_rejects_bad_inputs() {
        let law = linear6();
        assert!(ParticleSystem::new(vec![0.0, 0.0], vec![1.0], 0.1, law, None).is_err());
        assert!(ParticleSystem::new(vec![0.0, 1.0, 2.0], vec![1.0], 0.1, law, None).is_err());
        assert!(ParticleSystem::new(vec![0.0, 1.0], vec![-1.0], 0.1, law, None).is_err());
        assert!(ParticleSystem::new(vec![0.0, f64::NAN], vec![1.0], 0.1, law, None).is_err());
    }

    fn random_datum() -> impl Strategy<Value = InitialDatum> {
        (1usize..6)
            .prop_flat_map(|k| {
                (
                    proptest::collection::vec(0.05f64..1.0, k),
                    proptest::collection::vec(0.0f64..0.9, k),
                    proptest::collection::vec(0.1f64..1.5, k),
                )
            })
            .prop_map(|(rho, v, widths)| {
                let mut bp = vec![-1.0];
                for w in &widths {
                    bp.push(bp.last().unwrap() + w);
                }
                InitialDatum::new(bp, rho, v, PressureLaw::power(1.0, 6.0, 1.0).unwrap()).unwrap()
            })
    }

    proptest! {
        #[test]
        fn equal_mass_and_admissible_spacing(d in random_datum(), n in 1u32..9) {
            let s = atomize(&d, n).unwrap();
            let m = d.mass();
            for (i, pair) in s.positions().windows(2).enumerate() {
                let mass = mass_between(&d, pair[0], pair[1]);
                prop_assert!((mass - s.kappa()).abs() <= 1e-12 * m, "gap {}: {} vs {}", i, mass, s.kappa());
                prop_assert!((pair[1] - pair[0]) * s.max_density()[i] >= s.kappa() * (1.0 - 1e-12));
            }
        }

        #[test]
        fn markers_refine_monotonically(d in random_datum(), n in 1u32..8) {
            let coarse = atomize(&d, n).unwrap();
            let fine = atomize(&d, n + 1).unwrap();
            for i in 0..fine.gaps() {
                prop_assert!(fine.markers()[i] <= coarse.markers()[i / 2]);
            }
        }
    }
}
