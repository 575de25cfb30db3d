//! Piecewise-constant Eulerian reconstructions of a particle snapshot.

use std::io::Write;

use crate::atomize::ParticleSystem;
use crate::error::{Error, Result};

/// Right-continuous step function: `values[i]` on `[x_i, x_{i+1})`, constant
/// extensions outside `[x_0, x_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantField {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    left: f64,
    right: f64,
}

impl PiecewiseConstantField {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, left: f64, right: f64) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints for {} cells",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().any(|x| !x.is_finite()) || breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("breakpoints must be finite and strictly increasing".into()));
        }
        Ok(PiecewiseConstantField {
            breakpoints,
            values,
            left,
            right,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_extension(&self) -> f64 {
        self.left
    }

    pub fn right_extension(&self) -> f64 {
        self.right
    }

    pub fn support(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo {
            self.left
        } else if x >= hi {
            self.right
        } else {
            self.values[self.breakpoints.partition_point(|b| *b <= x) - 1]
        }
    }

    /// Sum of all jumps, including those into the extensions.
    pub fn total_variation(&self) -> f64 {
        let inner: f64 = self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        (self.values[0] - self.left).abs() + inner + (self.right - self.values.last().unwrap()).abs()
    }

    /// `∫_{x_0}^{x_N}` of the field (extensions excluded).
    pub fn cell_integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum()
    }

    /// Exact `∫_a^b |f − g| dx` between two step fields.
    pub fn l1_difference(&self, other: &PiecewiseConstantField, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let mut cuts: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .filter(|x| *x > a && *x < b)
            .collect();
        cuts.push(a);
        cuts.push(b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|w| (self.eval(w[0]) - other.eval(w[0])).abs() * (w[1] - w[0]))
            .sum()
    }

    /// Rows `x_left,x_right,value`, starting and ending with the extensions.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["x_left", "x_right", "value"])?;
        let (lo, hi) = self.support();
        wtr.write_record(&[f64::NEG_INFINITY.to_string(), lo.to_string(), self.left.to_string()])?;
        for (v, w) in self.values.iter().zip(self.breakpoints.windows(2)) {
            wtr.write_record(&[w[0].to_string(), w[1].to_string(), v.to_string()])?;
        }
        wtr.write_record(&[hi.to_string(), f64::INFINITY.to_string(), self.right.to_string()])?;
        wtr.flush()?;
        Ok(())
    }
}

/// `W^n`: markers on the gaps, extended by the first and last marker.
pub fn marker_field(system: &ParticleSystem) -> PiecewiseConstantField {
    let w = system.markers();
    PiecewiseConstantField {
        breakpoints: system.positions().to_vec(),
        values: w.to_vec(),
        left: w[0],
        right: w[w.len() - 1],
    }
}

/// `V^n`: `w_i − p(y_i)` on the gaps, extended by the first and last marker.
pub fn velocity_field(system: &ParticleSystem) -> PiecewiseConstantField {
    let w = system.markers();
    let law = system.law();
    let values = system
        .lagrangian_densities()
        .iter()
        .zip(w)
        .map(|(y, w)| w - law.eval_unchecked(*y))
        .collect();
    PiecewiseConstantField {
        breakpoints: system.positions().to_vec(),
        values,
        left: w[0],
        right: w[w.len() - 1],
    }
}

/// `ρ^n`: `y_i = κ / (x_{i+1} − x_i)` on every gap, zero outside.
pub fn density_field(system: &ParticleSystem) -> PiecewiseConstantField {
    PiecewiseConstantField {
        breakpoints: system.positions().to_vec(),
        values: system.lagrangian_densities(),
        left: 0.0,
        right: 0.0,
    }
}
