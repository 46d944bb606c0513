//! Cooling schedules `sigma(t)` and the tuning pair `(delta_t, r_t)`.

use thiserror::Error;

use crate::orlicz::ORLICZ_ENTROPY_CONSTANT;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error("tuning parameters need t > e^e, got t = {0}")]
    TimeTooSmall(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Logarithmic,
    Constant,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    /// Rate (logarithmic), level (constant) or prefactor (power).
    pub c: f64,
    pub t_offset: f64,
    /// Power kind only: `sigma = c (t + t_offset)^(-exponent)`.
    pub exponent: f64,
}

impl Schedule {
    /// `sigma(t) = c / ln(t + t_offset)`, `t_offset >= e`.
    pub fn logarithmic(c: f64, t_offset: f64) -> Result<Self, ScheduleError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(ScheduleError::Invalid(format!("rate c = {c} must be positive")));
        }
        if !(t_offset >= std::f64::consts::E) {
            return Err(ScheduleError::Invalid(format!("t_offset = {t_offset} must be >= e")));
        }
        Ok(Schedule { kind: ScheduleKind::Logarithmic, c, t_offset, exponent: 0.0 })
    }

    /// Constant temperature; `sigma0 = 0` gives the noiseless gradient flow.
    pub fn constant(sigma0: f64) -> Result<Self, ScheduleError> {
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(ScheduleError::Invalid(format!("sigma0 = {sigma0} must be >= 0")));
        }
        Ok(Schedule { kind: ScheduleKind::Constant, c: sigma0, t_offset: 0.0, exponent: 0.0 })
    }

    pub fn power(c: f64, t_offset: f64, exponent: f64) -> Result<Self, ScheduleError> {
        if !(c > 0.0 && t_offset >= 1.0 && exponent >= 0.0) {
            return Err(ScheduleError::Invalid("power schedule needs c > 0, t_offset >= 1, exponent >= 0".into()));
        }
        Ok(Schedule { kind: ScheduleKind::Power, c, t_offset, exponent })
    }

    /// `(sigma(t), d(1/sigma)/dt)`.
    pub fn sigma_at(&self, t: f64) -> (f64, f64) {
        let s = t + self.t_offset;
        match self.kind {
            ScheduleKind::Logarithmic => (self.c / s.ln(), 1.0 / (self.c * s)),
            ScheduleKind::Constant => (self.c, 0.0),
            ScheduleKind::Power => {
                (self.c * s.powf(-self.exponent), self.exponent * s.powf(self.exponent - 1.0) / self.c)
            }
        }
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma_at(t).0
    }

    /// Time at which the schedule reaches `sigma`, if it ever does.
    pub fn time_for_sigma(&self, sigma: f64) -> Option<f64> {
        let t = match self.kind {
            ScheduleKind::Logarithmic => (self.c / sigma).exp() - self.t_offset,
            ScheduleKind::Power => (self.c / sigma).powf(1.0 / self.exponent) - self.t_offset,
            ScheduleKind::Constant => return None,
        };
        (t >= 0.0 && t.is_finite()).then_some(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningPair {
    pub delta: f64,
    pub r: f64,
    pub entropy_constant: f64,
}

/// `delta_t = 1/(ln(t)^2 (ln ln t)^7)`, `r_t = 1/(C ln(t)^2 (ln ln t)^8)`.
pub fn tuning_parameters(t: f64, entropy_constant: f64) -> Result<TuningPair, ScheduleError> {
    if !(t > std::f64::consts::E.exp()) {
        return Err(ScheduleError::TimeTooSmall(t));
    }
    tuning_from_log(t.ln(), entropy_constant)
}

/// Same as [`tuning_parameters`] from `ln t`, for times beyond `f64` range.
pub fn tuning_from_log(ln_t: f64, entropy_constant: f64) -> Result<TuningPair, ScheduleError> {
    if !(ln_t > std::f64::consts::E) {
        return Err(ScheduleError::TimeTooSmall(ln_t.exp()));
    }
    if !(entropy_constant > 0.0) {
        return Err(ScheduleError::Invalid("entropy constant must be positive".into()));
    }
    let ll = ln_t.ln();
    let base = ln_t * ln_t * ll.powi(7);
    Ok(TuningPair { delta: 1.0 / base, r: 1.0 / (entropy_constant * base * ll), entropy_constant })
}

/// Tuning pair with the entropy constant assembled from the Orlicz bound.
pub fn default_tuning(t: f64) -> Result<TuningPair, ScheduleError> {
    tuning_parameters(t, ORLICZ_ENTROPY_CONSTANT)
}
