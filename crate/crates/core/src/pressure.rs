//! Pressure closures `p(ρ)` for the ARZ system.
//!
//! Three families are supported:
//!
//! * power: `p(ρ) = (v_ref / γ) (ρ / ρ_max)^γ`, `γ > 0`
//! * logarithmic: `p(ρ) = v_ref ln(ρ / ρ_max)` (sign-indefinite, `p(0⁺) = -∞`)
//! * berthelin: `p(ρ) = v_ref (1/ρ - 1/ρ_max)^(-γ)` on `(0, ρ_max)`
//!
//! Every law is strictly increasing and satisfies `2 p' + ρ p'' > 0`, which
//! makes the first characteristic family genuinely nonlinear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PressureLaw {
    Power { gamma: f64, v_ref: f64, rho_max: f64 },
    Logarithmic { v_ref: f64, rho_max: f64 },
    Berthelin { gamma: f64, v_ref: f64, rho_max: f64 },
}

/// Result of inverting the pressure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub rho: f64,
    /// Set when a slightly negative argument of a law with `p(0⁺) = 0`
    /// was mapped to the vacuum density.
    pub vacuum_clamp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleCheck {
    pub rho: f64,
    pub increasing: bool,
    pub genuinely_nonlinear: bool,
}

/// Outcome of [`PressureLaw::check_structural_assumptions`].
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralReport {
    pub samples: Vec<SampleCheck>,
    /// `p(0⁺) = 0`.
    pub vanishes_at_zero: bool,
    /// `p ≥ 0` on the whole domain.
    pub nonnegative: bool,
}

impl StructuralReport {
    pub fn all_increasing(&self) -> bool {
        self.samples.iter().all(|s| s.increasing)
    }

    pub fn all_genuinely_nonlinear(&self) -> bool {
        self.samples.iter().all(|s| s.genuinely_nonlinear)
    }

    pub fn all_hold(&self) -> bool {
        self.all_increasing()
            && self.all_genuinely_nonlinear()
            && self.vanishes_at_zero
            && self.nonnegative
    }
}

impl PressureLaw {
    pub fn power(gamma: f64, v_ref: f64, rho_max: f64) -> Result<Self> {
        let law = PressureLaw::Power {
            gamma,
            v_ref,
            rho_max,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn logarithmic(v_ref: f64, rho_max: f64) -> Result<Self> {
        let law = PressureLaw::Logarithmic { v_ref, rho_max };
        law.validate()?;
        Ok(law)
    }

    pub fn berthelin(gamma: f64, v_ref: f64, rho_max: f64) -> Result<Self> {
        let law = PressureLaw::Berthelin {
            gamma,
            v_ref,
            rho_max,
        };
        law.validate()?;
        Ok(law)
    }

    /// Checks parameter ranges; deserialized laws must pass through here.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{} pressure law: {name} must be finite and > 0, got {x}",
                    self.name()
                )))
            }
        };
        match *self {
            PressureLaw::Power {
                gamma,
                v_ref,
                rho_max,
            }
            | PressureLaw::Berthelin {
                gamma,
                v_ref,
                rho_max,
            } => {
                positive("gamma", gamma)?;
                positive("v_ref", v_ref)?;
                positive("rho_max", rho_max)
            }
            PressureLaw::Logarithmic { v_ref, rho_max } => {
                positive("v_ref", v_ref)?;
                positive("rho_max", rho_max)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PressureLaw::Power { .. } => "power",
            PressureLaw::Logarithmic { .. } => "logarithmic",
            PressureLaw::Berthelin { .. } => "berthelin",
        }
    }

    /// True when `p` takes negative values (only the logarithmic law).
    pub fn is_sign_indefinite(&self) -> bool {
        matches!(self, PressureLaw::Logarithmic { .. })
    }

    /// True when the vacuum state `ρ = 0` belongs to the domain.
    pub fn admits_vacuum(&self) -> bool {
        !self.is_sign_indefinite()
    }

    /// Hard density ceiling, if any.
    pub fn density_ceiling(&self) -> Option<f64> {
        match *self {
            PressureLaw::Berthelin { rho_max, .. } => Some(rho_max),
            _ => None,
        }
    }

    fn domain_error(&self, what: &'static str, value: f64) -> Error {
        Error::Domain {
            law: self.name(),
            what,
            value,
        }
    }

    /// Domain check for evaluation; `ρ = 0` is allowed where `p(0⁺)` is finite.
    fn check_density(&self, rho: f64) -> Result<()> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(self.domain_error("density must be finite and >= 0", rho));
        }
        match *self {
            PressureLaw::Logarithmic { .. } if rho == 0.0 => {
                Err(self.domain_error("density must be > 0 for the logarithmic law", rho))
            }
            PressureLaw::Berthelin { rho_max, .. } if rho >= rho_max => {
                Err(self.domain_error("density must be below rho_max", rho))
            }
            _ => Ok(()),
        }
    }

    fn check_interior(&self, rho: f64) -> Result<()> {
        self.check_density(rho)?;
        if rho == 0.0 {
            return Err(self.domain_error("derivative needs density > 0", rho));
        }
        Ok(())
    }

    pub fn eval(&self, rho: f64) -> Result<f64> {
        self.check_density(rho)?;
        Ok(self.eval_unchecked(rho))
    }

    /// `p(ρ)` without domain checks. Callers guarantee `ρ` is in the domain.
    #[inline]
    pub fn eval_unchecked(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::Power {
                gamma,
                v_ref,
                rho_max,
            } => v_ref / gamma * (rho / rho_max).powf(gamma),
            PressureLaw::Logarithmic { v_ref, rho_max } => v_ref * (rho / rho_max).ln(),
            PressureLaw::Berthelin {
                gamma,
                v_ref,
                rho_max,
            } => {
                if rho == 0.0 {
                    0.0
                } else {
                    v_ref * (1.0 / rho - 1.0 / rho_max).powf(-gamma)
                }
            }
        }
    }

    pub fn derivative(&self, rho: f64) -> Result<f64> {
        self.check_interior(rho)?;
        Ok(self.derivative_unchecked(rho))
    }

    #[inline]
    pub fn derivative_unchecked(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::Power {
                gamma,
                v_ref,
                rho_max,
            } => v_ref / rho_max * (rho / rho_max).powf(gamma - 1.0),
            PressureLaw::Logarithmic { v_ref, .. } => v_ref / rho,
            PressureLaw::Berthelin {
                gamma,
                v_ref,
                rho_max,
            } => {
                let u = 1.0 / rho - 1.0 / rho_max;
                v_ref * gamma * u.powf(-gamma - 1.0) / (rho * rho)
            }
        }
    }

    pub fn second_derivative(&self, rho: f64) -> Result<f64> {
        self.check_interior(rho)?;
        Ok(match *self {
            PressureLaw::Power {
                gamma,
                v_ref,
                rho_max,
            } => v_ref / (rho_max * rho_max) * (gamma - 1.0) * (rho / rho_max).powf(gamma - 2.0),
            PressureLaw::Logarithmic { v_ref, .. } => -v_ref / (rho * rho),
            PressureLaw::Berthelin {
                gamma,
                v_ref,
                rho_max,
            } => {
                let u = 1.0 / rho - 1.0 / rho_max;
                let r2 = rho * rho;
                v_ref
                    * gamma
                    * ((gamma + 1.0) * u.powf(-gamma - 2.0) / (r2 * r2)
                        - 2.0 * u.powf(-gamma - 1.0) / (r2 * rho))
            }
        })
    }

    /// `ρ p'(ρ)`, the gap between velocity and the first characteristic speed.
    #[inline]
    pub fn rho_dp_unchecked(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::Logarithmic { v_ref, .. } => v_ref,
            PressureLaw::Power { gamma, .. } => gamma * self.eval_unchecked(rho),
            PressureLaw::Berthelin { .. } => {
                if rho == 0.0 {
                    0.0
                } else {
                    rho * self.derivative_unchecked(rho)
                }
            }
        }
    }

    /// Inverts `p`. A negative argument for the power law is mapped to the
    /// vacuum density with `vacuum_clamp` set; everything else outside the
    /// range of `p` is a domain error.
    pub fn inverse(&self, xi: f64) -> Result<Inversion> {
        if !xi.is_finite() {
            return Err(self.domain_error("pressure value must be finite", xi));
        }
        let rho = match *self {
            PressureLaw::Power {
                gamma,
                v_ref,
                rho_max,
            } => {
                if xi < 0.0 {
                    return Ok(Inversion {
                        rho: 0.0,
                        vacuum_clamp: true,
                    });
                }
                rho_max * (gamma * xi / v_ref).powf(1.0 / gamma)
            }
            PressureLaw::Logarithmic { v_ref, rho_max } => rho_max * (xi / v_ref).exp(),
            PressureLaw::Berthelin {
                gamma,
                v_ref,
                rho_max,
            } => {
                if xi <= 0.0 {
                    return Err(self.domain_error("pressure value must be > 0", xi));
                }
                let u = (xi / v_ref).powf(-1.0 / gamma);
                1.0 / (u + 1.0 / rho_max)
            }
        };
        if !rho.is_finite() || rho <= 0.0 {
            return Err(self.domain_error("pressure value outside representable range", xi));
        }
        Ok(Inversion {
            rho,
            vacuum_clamp: false,
        })
    }

    /// Density for a pressure value, treating the clamp as an ordinary result.
    pub fn inverse_density(&self, xi: f64) -> Result<f64> {
        self.inverse(xi).map(|inv| inv.rho)
    }

    /// `max p'` on `[lo, hi]`. For all three families `p'` is monotone or
    /// quasi-convex on the domain, so the maximum sits at an endpoint.
    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidArgument(format!(
                "Lipschitz interval must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(self.derivative(lo)?.max(self.derivative(hi)?))
    }

    /// Shifts the law by a constant, `p ↦ p + offset`.
    ///
    /// The ARZ system is invariant under this shift (markers move by the same
    /// constant). Only the logarithmic family is closed under it, through
    /// `ρ_max ↦ ρ_max exp(-offset / v_ref)`.
    pub fn shifted(&self, offset: f64) -> Result<PressureLaw> {
        if offset == 0.0 {
            return Ok(*self);
        }
        match *self {
            PressureLaw::Logarithmic { v_ref, rho_max } => {
                PressureLaw::logarithmic(v_ref, rho_max * (-offset / v_ref).exp())
            }
            _ => Err(Error::InvalidArgument(format!(
                "{} pressure law cannot absorb a constant offset",
                self.name()
            ))),
        }
    }

    pub fn check_structural_assumptions(
        &self,
        rho_lo: f64,
        rho_hi: f64,
        samples: usize,
    ) -> Result<StructuralReport> {
        if !(rho_lo > 0.0 && rho_hi > rho_lo) || samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "need 0 < rho_lo < rho_hi and samples >= 2, got [{rho_lo}, {rho_hi}] x {samples}"
            )));
        }
        let mut out = Vec::with_capacity(samples);
        for k in 0..samples {
            let rho = rho_lo + (rho_hi - rho_lo) * k as f64 / (samples - 1) as f64;
            let dp = self.derivative(rho)?;
            let d2p = self.second_derivative(rho)?;
            out.push(SampleCheck {
                rho,
                increasing: dp > 0.0,
                genuinely_nonlinear: 2.0 * dp + rho * d2p > 0.0,
            });
        }
        let vanishes_at_zero = self.admits_vacuum();
        Ok(StructuralReport {
            samples: out,
            vanishes_at_zero,
            nonnegative: vanishes_at_zero,
        })
    }
}
