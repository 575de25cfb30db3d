//! Exact self-similar solution of the Riemann problem.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::initial_data::State;
use crate::pressure::PressureLaw;

/// Elementary waves, left to right, in the similarity variable `ξ = x / t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Wave {
    Shock { speed: f64 },
    Rarefaction { xi_minus: f64, xi_plus: f64, marker: f64 },
    Contact { speed: f64 },
    Vacuum { xi_from: f64, xi_to: f64 },
}

impl Wave {
    fn start(&self) -> f64 {
        match *self {
            Wave::Shock { speed } | Wave::Contact { speed } => speed,
            Wave::Rarefaction { xi_minus, .. } => xi_minus,
            Wave::Vacuum { xi_from, .. } => xi_from,
        }
    }

    fn end(&self) -> f64 {
        match *self {
            Wave::Shock { speed } | Wave::Contact { speed } => speed,
            Wave::Rarefaction { xi_plus, .. } => xi_plus,
            Wave::Vacuum { xi_to, .. } => xi_to,
        }
    }
}

/// Exact state at one point. In vacuum `rho = 0` and `v = w = ξ` by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanSample {
    pub rho: f64,
    pub v: f64,
    pub w: f64,
    pub vacuum: bool,
}

/// Rankine-Hugoniot defects of a discontinuity for the fields `ρ` and `ρw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpResidual {
    pub speed: f64,
    pub mass: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiemannFan {
    law: PressureLaw,
    left: State,
    right: State,
    middle: Option<State>,
    waves: Vec<Wave>,
    /// Constant state to the right of each wave.
    after: Vec<State>,
    origin: f64,
}

/// First characteristic speed `λ₁ = v − ρ p′(ρ)`.
pub fn lambda1(law: &PressureLaw, rho: f64, v: f64) -> f64 {
    if rho == 0.0 {
        v
    } else {
        v - law.rho_dp_unchecked(rho)
    }
}

fn sample_of(law: &PressureLaw, s: State) -> FanSample {
    FanSample {
        rho: s.rho,
        v: s.v,
        w: s.v + law.eval_unchecked(s.rho),
        vacuum: false,
    }
}

fn vacuum_at(xi: f64) -> FanSample {
    FanSample {
        rho: 0.0,
        v: xi,
        w: xi,
        vacuum: true,
    }
}

pub fn solve_riemann(law: &PressureLaw, left: State, right: State) -> Result<RiemannFan> {
    law.validate()?;
    for s in [left, right] {
        if !(s.rho.is_finite() && s.v.is_finite() && s.rho >= 0.0 && s.v >= 0.0) {
            return Err(Error::InvalidDatum(format!("state ({}, {}) is not admissible", s.rho, s.v)));
        }
        if s.rho > 0.0 {
            law.eval(s.rho)?;
        }
    }
    let vacuum_guard = |law: &PressureLaw| -> Result<()> {
        if law.admits_vacuum() {
            Ok(())
        } else {
            Err(Error::Domain {
                law: law.name(),
                what: "vacuum is only reached asymptotically",
                value: 0.0,
            })
        }
    };

    let mut waves = Vec::new();
    let mut after = Vec::new();
    let mut middle = None;
    match (left.is_vacuum(), right.is_vacuum()) {
        (true, true) => {
            waves.push(Wave::Vacuum {
                xi_from: f64::NEG_INFINITY,
                xi_to: f64::INFINITY,
            });
            after.push(right);
        }
        (true, false) => {
            vacuum_guard(law)?;
            waves.push(Wave::Vacuum {
                xi_from: f64::NEG_INFINITY,
                xi_to: right.v,
            });
            after.push(right);
        }
        (false, true) => {
            vacuum_guard(law)?;
            let w_l = left.marker(law)?;
            waves.push(Wave::Rarefaction {
                xi_minus: lambda1(law, left.rho, left.v),
                xi_plus: w_l,
                marker: w_l,
            });
            after.push(State::new(0.0, w_l));
            waves.push(Wave::Vacuum {
                xi_from: w_l,
                xi_to: f64::INFINITY,
            });
            after.push(right);
        }
        (false, false) => {
            let w_l = left.marker(law)?;
            if law.admits_vacuum() && right.v >= w_l {
                waves.push(Wave::Rarefaction {
                    xi_minus: lambda1(law, left.rho, left.v),
                    xi_plus: w_l,
                    marker: w_l,
                });
                after.push(State::new(0.0, w_l));
                waves.push(Wave::Vacuum {
                    xi_from: w_l,
                    xi_to: right.v,
                });
                after.push(right);
            } else {
                let inv = law.inverse(w_l - right.v)?;
                if inv.vacuum_clamp || inv.rho <= 0.0 {
                    return Err(Error::Domain {
                        law: law.name(),
                        what: "no positive intermediate density",
                        value: w_l - right.v,
                    });
                }
                let mid = State::new(inv.rho, right.v);
                middle = Some(mid);
                if right.v < left.v {
                    let speed = (mid.rho * mid.v - left.rho * left.v) / (mid.rho - left.rho);
                    waves.push(Wave::Shock { speed });
                    after.push(mid);
                } else if right.v > left.v {
                    waves.push(Wave::Rarefaction {
                        xi_minus: lambda1(law, left.rho, left.v),
                        xi_plus: lambda1(law, mid.rho, mid.v),
                        marker: w_l,
                    });
                    after.push(mid);
                }
                waves.push(Wave::Contact { speed: right.v });
                after.push(right);
            }
        }
    }
    Ok(RiemannFan {
        law: *law,
        left,
        right,
        middle,
        waves,
        after,
        origin: 0.0,
    })
}

/// Density `ρ` inside a 1-rarefaction with marker `w` at `ξ`: solves
/// `λ₁(ρ, w − p(ρ)) = ξ`.
fn rarefaction_density(law: &PressureLaw, w: f64, xi: f64) -> f64 {
    let target = w - xi;
    let p = match *law {
        PressureLaw::Power { gamma, .. } => target / (1.0 + gamma),
        PressureLaw::Logarithmic { v_ref, .. } => target - v_ref,
        PressureLaw::Berthelin { rho_max, .. } => {
            if target <= 0.0 {
                return 0.0;
            }
            // p + ρp′ is increasing on (0, ρ_max) and unbounded at ρ_max
            let g = |rho: f64| law.eval_unchecked(rho) + law.rho_dp_unchecked(rho);
            let (mut lo, mut hi) = (0.0f64, rho_max);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if g(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
    };
    law.inverse(p).map(|inv| inv.rho).unwrap_or(0.0)
}

impl RiemannFan {
    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    pub fn left(&self) -> State {
        self.left
    }

    pub fn right(&self) -> State {
        self.right
    }

    pub fn middle(&self) -> Option<State> {
        self.middle
    }

    /// The same fan centred at `x0` instead of 0.
    pub fn centred_at(mut self, x0: f64) -> Self {
        self.origin = x0;
        self
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn waves(&self) -> &[Wave] {
        &self.waves
    }

    /// Right-continuous evaluation at `ξ`.
    pub fn sample(&self, xi: f64) -> FanSample {
        let mut current = if self.left.is_vacuum() {
            vacuum_at(xi)
        } else {
            sample_of(&self.law, self.left)
        };
        for (wave, next) in self.waves.iter().zip(&self.after) {
            if xi < wave.start() {
                return current;
            }
            match *wave {
                Wave::Rarefaction { xi_plus, marker, .. } if xi < xi_plus => {
                    let rho = rarefaction_density(&self.law, marker, xi);
                    return FanSample {
                        rho,
                        v: marker - self.law.eval_unchecked(rho),
                        w: marker,
                        vacuum: false,
                    };
                }
                Wave::Vacuum { xi_to, .. } if xi < xi_to => return vacuum_at(xi),
                _ => {}
            }
            current = if next.is_vacuum() {
                vacuum_at(xi)
            } else {
                sample_of(&self.law, *next)
            };
        }
        current
    }

    /// Exact state at `(x, t)`.
    pub fn eval(&self, x: f64, t: f64) -> Result<FanSample> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("fan evaluated at t = {t}")));
        }
        Ok(self.sample((x - self.origin) / t))
    }

    /// Finite positions at time `t` where the exact solution is not smooth.
    pub fn edges(&self, t: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .waves
            .iter()
            .flat_map(|w| [w.start(), w.end()])
            .filter(|xi| xi.is_finite())
            .map(|xi| self.origin + xi * t)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Jump conditions at every discontinuity (shocks and the contact).
    pub fn rankine_hugoniot_residuals(&self) -> Vec<JumpResidual> {
        let mut out = Vec::new();
        let mut before = self.left;
        for (wave, next) in self.waves.iter().zip(&self.after) {
            if let Wave::Shock { speed } | Wave::Contact { speed } = *wave {
                let (l, r) = (sample_of(&self.law, before), sample_of(&self.law, *next));
                out.push(JumpResidual {
                    speed,
                    mass: speed * (r.rho - l.rho) - (r.rho * r.v - l.rho * l.v),
                    momentum: speed * (r.rho * r.w - l.rho * l.w) - (r.rho * r.v * r.w - l.rho * l.v * l.w),
                });
            }
            before = *next;
        }
        out
    }

    /// Rows `x,rho,v,w` at time `t`.
    pub fn write_profile<W: Write>(&self, t: f64, xs: &[f64], out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["x", "rho", "v", "w"])?;
        for &x in xs {
            let s = self.eval(x, t)?;
            wtr.write_record(&[x.to_string(), s.rho.to_string(), s.v.to_string(), s.w.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
