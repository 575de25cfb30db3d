//! Piecewise-constant initial data `(ρ̄, v̄)` with compactly supported density.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pressure::PressureLaw;

/// A constant traffic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub rho: f64,
    pub v: f64,
}

impl State {
    pub fn new(rho: f64, v: f64) -> Self {
        State { rho, v }
    }

    pub fn is_vacuum(&self) -> bool {
        self.rho == 0.0
    }

    /// Lagrangian marker `w = v + p(ρ)`; equal to `v` in vacuum.
    pub fn marker(&self, law: &PressureLaw) -> Result<f64> {
        if self.is_vacuum() {
            law.eval(0.0)?;
            Ok(self.v)
        } else {
            Ok(self.v + law.eval(self.rho)?)
        }
    }
}

/// Cells are `[breakpoints[j], breakpoints[j+1])`; the density vanishes
/// outside the first and last breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDatum {
    breakpoints: Vec<f64>,
    rho: Vec<f64>,
    v: Vec<f64>,
    markers: Vec<f64>,
    law: PressureLaw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpCheck {
    pub position: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub jumps: Vec<JumpCheck>,
}

impl AdmissibilityReport {
    pub fn all_admissible(&self) -> bool {
        self.jumps.iter().all(|j| j.admissible)
    }
}

impl InitialDatum {
    pub fn new(breakpoints: Vec<f64>, rho: Vec<f64>, v: Vec<f64>, law: PressureLaw) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidDatum("need at least one cell".into()));
        }
        let cells = breakpoints.len() - 1;
        if rho.len() != cells || v.len() != cells {
            return Err(Error::InvalidDatum(format!(
                "{cells} cells but {} densities and {} velocities",
                rho.len(),
                v.len()
            )));
        }
        if breakpoints.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDatum("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidDatum("breakpoints must be strictly increasing".into()));
        }
        law.validate()?;
        let mut markers = Vec::with_capacity(cells);
        for (&r, &vel) in rho.iter().zip(&v) {
            if !vel.is_finite() || vel < 0.0 {
                return Err(Error::InvalidDatum(format!("velocity {vel} must be finite and >= 0")));
            }
            markers.push(State::new(r, vel).marker(&law)?);
        }
        Ok(InitialDatum {
            breakpoints,
            rho,
            v,
            markers,
            law,
        })
    }

    /// Riemann datum `left` on `[a, jump)`, `right` on `[jump, b)`.
    pub fn riemann(law: PressureLaw, left: State, right: State, a: f64, b: f64, jump: f64) -> Result<Self> {
        if !(a < jump && jump < b) {
            return Err(Error::InvalidDatum(format!(
                "need a < jump < b, got a = {a}, jump = {jump}, b = {b}"
            )));
        }
        InitialDatum::new(vec![a, jump, b], vec![left.rho, right.rho], vec![left.v, right.v], law)
    }

    /// Reads rows `x,rho,v`. Row `k` gives the state on `[x_k, x_{k+1})`;
    /// the last row only closes the support and must carry `rho = 0`.
    pub fn from_csv<R: Read>(reader: R, law: PressureLaw) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            rho: f64,
            v: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "rho", "v"] {
            return Err(Error::InvalidDatum(format!(
                "expected header x,rho,v, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        let Some(last) = rows.last() else {
            return Err(Error::InvalidDatum("empty datum file".into()));
        };
        if last.rho != 0.0 {
            return Err(Error::InvalidDatum("last row must close the support with rho = 0".into()));
        }
        let breakpoints = rows.iter().map(|r| r.x).collect();
        let cells = &rows[..rows.len() - 1];
        InitialDatum::new(
            breakpoints,
            cells.iter().map(|r| r.rho).collect(),
            cells.iter().map(|r| r.v).collect(),
            law,
        )
    }

    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[f64] {
        &self.rho
    }

    pub fn velocities(&self) -> &[f64] {
        &self.v
    }

    pub fn markers(&self) -> &[f64] {
        &self.markers
    }

    pub fn cell_count(&self) -> usize {
        self.rho.len()
    }

    pub fn cell(&self, j: usize) -> (f64, f64) {
        (self.breakpoints[j], self.breakpoints[j + 1])
    }

    /// Total mass, exact for piecewise-constant data.
    pub fn mass(&self) -> f64 {
        self.rho
            .iter()
            .enumerate()
            .map(|(j, r)| r * (self.breakpoints[j + 1] - self.breakpoints[j]))
            .sum()
    }

    /// Index range of cells between the first and last cell with positive density.
    pub fn hull_cells(&self) -> Option<std::ops::RangeInclusive<usize>> {
        let first = self.rho.iter().position(|&r| r > 0.0)?;
        let last = self.rho.iter().rposition(|&r| r > 0.0)?;
        Some(first..=last)
    }

    /// `(x̄_min, x̄_max)`, the convex hull of the support of `ρ̄`.
    pub fn support_hull(&self) -> Option<(f64, f64)> {
        let cells = self.hull_cells()?;
        Some((self.breakpoints[*cells.start()], self.breakpoints[*cells.end() + 1]))
    }

    /// `‖w̄‖∞` over the support hull.
    pub fn marker_sup_norm(&self) -> f64 {
        self.hull_cells()
            .map(|c| self.markers[c].iter().fold(0.0_f64, |m, w| m.max(w.abs())))
            .unwrap_or(0.0)
    }

    /// Total variation of `w̄` counting only jumps strictly inside the hull.
    pub fn marker_tv_inside(&self) -> f64 {
        self.tv_inside(&self.markers)
    }

    /// Total variation of `ρ̄` counting only jumps strictly inside the hull.
    pub fn density_tv_inside(&self) -> f64 {
        self.tv_inside(&self.rho)
    }

    fn tv_inside(&self, values: &[f64]) -> f64 {
        self.hull_cells()
            .map(|c| values[c].windows(2).map(|w| (w[1] - w[0]).abs()).sum())
            .unwrap_or(0.0)
    }

    /// Density range over cells with positive density.
    pub fn density_range(&self) -> Option<(f64, f64)> {
        let positive = self.rho.iter().copied().filter(|&r| r > 0.0);
        positive.fold(None, |acc, r| match acc {
            None => Some((r, r)),
            Some((lo, hi)) => Some((lo.min(r), hi.max(r))),
        })
    }

    /// Checks every interior jump against the physically reasonable jump set.
    pub fn admissibility(&self) -> AdmissibilityReport {
        let jumps = (1..self.cell_count())
            .map(|j| {
                let (l, r) = (j - 1, j);
                let (vl, wl) = (self.v[l], self.markers[l]);
                let (vr, wr) = (self.v[r], self.markers[r]);
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
                let admissible = match (self.rho[l] == 0.0, self.rho[r] == 0.0) {
                    (true, true) => close(vl, vr) && close(wl, wr),
                    (false, true) => close(vr, wl) && close(wr, wl),
                    _ => true,
                };
                JumpCheck {
                    position: self.breakpoints[j],
                    admissible,
                }
            })
            .collect();
        AdmissibilityReport { jumps }
    }

    /// Opt-in repair: every vacuum cell takes `v̄ = w̄` equal to the marker of
    /// the nearest non-vacuum cell upstream (to its left).
    pub fn repaired_for_admissibility(&self) -> Result<Self> {
        let mut v = self.v.clone();
        let mut upstream = None;
        for ((vj, rho), w) in v.iter_mut().zip(&self.rho).zip(&self.markers) {
            if *rho > 0.0 {
                upstream = Some(*w);
            } else if let Some(w) = upstream {
                *vj = w;
            }
        }
        InitialDatum::new(self.breakpoints.clone(), self.rho.clone(), v, self.law)
    }

    /// Splits cell `j` at an interior point without changing the datum.
    pub fn split_cell(&self, j: usize, at: f64) -> Result<Self> {
        if j >= self.cell_count() {
            return Err(Error::InvalidArgument(format!("no cell {j}")));
        }
        let (lo, hi) = self.cell(j);
        if !(lo < at && at < hi) {
            return Err(Error::InvalidArgument(format!("{at} is not inside cell [{lo}, {hi})")));
        }
        let mut bp = self.breakpoints.clone();
        let mut rho = self.rho.clone();
        let mut v = self.v.clone();
        bp.insert(j + 1, at);
        rho.insert(j, rho[j]);
        v.insert(j, v[j]);
        InitialDatum::new(bp, rho, v, self.law)
    }

    /// Re-expresses the datum under `p + offset` when the law is sign-indefinite
    /// and some marker on the support is negative, so that every marker is
    /// nonnegative. Densities and velocities are untouched. Returns the offset.
    pub fn with_nonnegative_markers(&self) -> Result<(Self, f64)> {
        let min_marker = self
            .hull_cells()
            .map(|c| self.markers[c].iter().copied().fold(f64::INFINITY, f64::min))
            .unwrap_or(0.0);
        if !self.law.is_sign_indefinite() || min_marker >= 0.0 {
            return Ok((self.clone(), 0.0));
        }
        let offset = -min_marker;
        let law = self.law.shifted(offset)?;
        let mut shifted = InitialDatum::new(self.breakpoints.clone(), self.rho.clone(), self.v.clone(), law)?;
        // the shift is exact in real arithmetic; pin the minimum at zero
        for w in shifted.markers.iter_mut() {
            *w = w.max(0.0);
        }
        Ok((shifted, offset))
    }
}
