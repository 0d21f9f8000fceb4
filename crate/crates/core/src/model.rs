//! Model coefficients, the phenotype-switch rate functions, the medium
//! dosing schedule and the pointwise reaction terms.
//!
//! Everything here is a pure function of its arguments. The PDE stepper and
//! the homogeneous ODE oracle both build on [`reaction_rhs`], which is the
//! only code path they share.

use crate::error::{Error, Result};
use crate::stepper::SimState;

/// Default lower floor of a saturating rate, relative to its amplitude.
pub const DEFAULT_RATE_FLOOR: f64 = 1e-12;

/// Scalar coefficients of the four-species system.
///
/// `eps = 0` selects the limit model; `eps > 0` adds the damping
/// `-eps c^theta` to both cell equations and `eps Δτ` to the matrix equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub a1: f64,
    pub a2: f64,
    pub b_tau: f64,
    pub b_chi: f64,
    pub d_chi: f64,
    pub a_chi: f64,
    pub beta: f64,
    pub delta: f64,
    pub mu: f64,
    pub eps: f64,
    pub theta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            a1: 0.01,
            a2: 0.005,
            b_tau: 0.02,
            b_chi: 0.02,
            d_chi: 0.05,
            a_chi: 0.5,
            beta: 1.0,
            delta: 0.5,
            mu: 0.5,
            eps: 0.0,
            theta: 4.0,
        }
    }
}

impl ModelParams {
    /// Checks the admissibility conditions for a `dim`-dimensional domain.
    pub fn validate(&self, dim: usize) -> Result<()> {
        self.check(dim, true)
    }

    /// As [`ModelParams::validate`], but coefficients may be zero, which
    /// switches the corresponding mechanism off.
    pub fn validate_degenerate(&self, dim: usize) -> Result<()> {
        self.check(dim, false)
    }

    fn check(&self, dim: usize, strict: bool) -> Result<()> {
        let positive = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b_tau", self.b_tau),
            ("b_chi", self.b_chi),
            ("d_chi", self.d_chi),
            ("a_chi", self.a_chi),
            ("beta", self.beta),
            ("delta", self.delta),
            ("mu", self.mu),
        ];
        for (name, v) in positive {
            if strict && !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(Error::domain(format!(
                "eps must lie in [0, 1), got {}",
                self.eps
            )));
        }
        let min_theta = (dim as f64).max(2.0);
        if !(self.theta > min_theta && self.theta.is_finite()) {
            return Err(Error::domain(format!(
                "theta must exceed max(2, dim) = {min_theta}, got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Constant,
    /// Michaelis-Menten `A z / (K + z)`.
    Saturating,
}

/// A bounded positive phenotype-switch rate α(χ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunction {
    pub kind: RateKind,
    pub amplitude: f64,
    pub half_saturation: f64,
    /// Lower floor as a fraction of `amplitude`; keeps α strictly positive at χ = 0.
    pub floor_factor: f64,
}

impl RateFunction {
    pub fn constant(amplitude: f64) -> Self {
        Self {
            kind: RateKind::Constant,
            amplitude,
            half_saturation: 1.0,
            floor_factor: DEFAULT_RATE_FLOOR,
        }
    }

    pub fn saturating(amplitude: f64, half_saturation: f64) -> Self {
        Self {
            kind: RateKind::Saturating,
            amplitude,
            half_saturation,
            floor_factor: DEFAULT_RATE_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::domain(format!(
                "rate amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if self.kind == RateKind::Saturating && !(self.half_saturation > 0.0) {
            return Err(Error::domain(format!(
                "half-saturation constant must be positive, got {}",
                self.half_saturation
            )));
        }
        if !(0.0..=1.0).contains(&self.floor_factor) {
            return Err(Error::domain("rate floor factor must lie in [0, 1]"));
        }
        Ok(())
    }

    /// The certified upper bound `M_α`.
    pub fn bound(&self) -> f64 {
        self.amplitude
    }
}

/// Evaluates α(z) for a medium concentration `z >= 0`.
pub fn eval_rate(f: &RateFunction, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::domain(format!(
            "rate argument must be non-negative, got {z}"
        )));
    }
    Ok(rate_unchecked(f, z))
}

#[inline]
pub(crate) fn rate_unchecked(f: &RateFunction, z: f64) -> f64 {
    match f.kind {
        RateKind::Constant => f.amplitude,
        RateKind::Saturating => {
            let floor = f.floor_factor * f.amplitude;
            let v = f.amplitude * z / (f.half_saturation + z);
            v.max(floor).min(f.amplitude)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoseMode {
    /// Rectangular source of amplitude `chi0/|Ω|` held for `pulse_width`.
    Pulse,
    /// Instantaneous uniform increment of `chi0/|Ω|`.
    Jump,
}

/// Times and size of the medium supply events.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplySchedule {
    pub dose_times: Vec<f64>,
    pub chi0: f64,
    pub mode: DoseMode,
    pub pulse_width: f64,
}

impl SupplySchedule {
    pub fn new(dose_times: Vec<f64>, chi0: f64, mode: DoseMode, pulse_width: f64) -> Result<Self> {
        let s = Self {
            dose_times,
            chi0,
            mode,
            pulse_width,
        };
        s.validate()?;
        Ok(s)
    }

    /// A schedule that never supplies anything.
    pub fn none() -> Self {
        Self {
            dose_times: Vec::new(),
            chi0: 0.0,
            mode: DoseMode::Pulse,
            pulse_width: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .dose_times
            .iter()
            .any(|t| !(*t >= 0.0 && t.is_finite()))
        {
            return Err(Error::domain("dose times must be finite and non-negative"));
        }
        if self.dose_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("dose times must be strictly increasing"));
        }
        if !(self.chi0 >= 0.0 && self.chi0.is_finite()) {
            return Err(Error::domain(format!(
                "chi0 must be non-negative, got {}",
                self.chi0
            )));
        }
        if self.mode == DoseMode::Pulse && !(self.pulse_width > 0.0) {
            return Err(Error::domain("pulse width must be positive"));
        }
        Ok(())
    }

    /// Peak source amplitude `chi0/|Ω|`, the bound `M_χ`.
    pub fn amplitude(&self, domain_measure: f64) -> f64 {
        self.chi0 / domain_measure
    }

    /// Times at which the source switches on or off, or a jump dose fires.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.mode {
            DoseMode::Jump => self.dose_times.clone(),
            DoseMode::Pulse => {
                let mut v: Vec<f64> = self
                    .dose_times
                    .iter()
                    .flat_map(|&t| [t, t + self.pulse_width])
                    .collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v.dedup();
                v
            }
        }
    }

    /// Largest increase of `max χ` a single event can produce.
    pub fn per_dose_increment(&self, domain_measure: f64) -> f64 {
        match self.mode {
            DoseMode::Jump => self.amplitude(domain_measure),
            DoseMode::Pulse => self.amplitude(domain_measure) * self.pulse_width,
        }
    }

    /// Number of dose events with `t_k <= t`.
    pub fn doses_up_to(&self, t: f64) -> usize {
        self.dose_times.iter().filter(|&&tk| tk <= t).count()
    }
}

/// Source term of the medium equation at time `t` (pulse mode only).
///
/// Jump mode contributes nothing here; its doses are applied by [`apply_dose`].
pub fn eval_supply(s: &SupplySchedule, t: f64, domain_measure: f64) -> f64 {
    if s.mode != DoseMode::Pulse || s.chi0 == 0.0 {
        return 0.0;
    }
    let active = s
        .dose_times
        .iter()
        .any(|&tk| t >= tk && t < tk + s.pulse_width);
    if active {
        s.amplitude(domain_measure)
    } else {
        0.0
    }
}

/// Right-hand sides of the non-transport terms, one per species.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Kinetics {
    pub c1: f64,
    pub c2: f64,
    pub chi: f64,
    pub tau: f64,
}

impl Kinetics {
    pub fn as_array(&self) -> [f64; 4] {
        [self.c1, self.c2, self.chi, self.tau]
    }
}

/// Per-unit loss rate of the matrix, `δ c1 + μ`.
#[inline]
pub fn tau_loss_rate(c1: f64, p: &ModelParams) -> f64 {
    p.delta * c1 + p.mu
}

/// Matrix production by chondrocytes, `c2/(1+c2) < 1`.
#[inline]
pub fn tau_production(c2: f64) -> f64 {
    c2 / (1.0 + c2)
}

/// Differentiation and dedifferentiation fluxes `(α1(χ) c1/(1+c1), α2(χ) c2/(1+c2))`.
#[inline]
pub fn switching_fluxes(
    c1: f64,
    c2: f64,
    chi: f64,
    alpha1: &RateFunction,
    alpha2: &RateFunction,
) -> (f64, f64) {
    (
        rate_unchecked(alpha1, chi) * c1 / (1.0 + c1),
        rate_unchecked(alpha2, chi) * c2 / (1.0 + c2),
    )
}

/// Coefficients, switching rates and dosing schedule of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub alpha1: RateFunction,
    pub alpha2: RateFunction,
    pub schedule: SupplySchedule,
}

impl Model {
    pub fn new(
        params: ModelParams,
        alpha1: RateFunction,
        alpha2: RateFunction,
        schedule: SupplySchedule,
    ) -> Self {
        Self {
            params,
            alpha1,
            alpha2,
            schedule,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.params.validate(dim)?;
        self.validate_data()
    }

    /// Allows zero coefficients; see [`ModelParams::validate_degenerate`].
    pub fn validate_degenerate(&self, dim: usize) -> Result<()> {
        self.params.validate_degenerate(dim)?;
        self.validate_data()
    }

    fn validate_data(&self) -> Result<()> {
        self.alpha1.validate()?;
        self.alpha2.validate()?;
        self.schedule.validate()
    }

    pub fn reaction(&self, c1: f64, c2: f64, chi: f64, tau: f64) -> Result<Kinetics> {
        reaction_rhs(c1, c2, chi, tau, &self.params, &self.alpha1, &self.alpha2)
    }
}

/// Pointwise reaction terms; the medium supply is not included.
pub fn reaction_rhs(
    c1: f64,
    c2: f64,
    chi: f64,
    tau: f64,
    p: &ModelParams,
    alpha1: &RateFunction,
    alpha2: &RateFunction,
) -> Result<Kinetics> {
    for (name, v) in [("c1", c1), ("c2", c2), ("chi", chi), ("tau", tau)] {
        if !(v >= 0.0) {
            return Err(Error::domain(format!(
                "{name} must be non-negative, got {v}"
            )));
        }
    }
    Ok(reaction_unchecked(c1, c2, chi, tau, p, alpha1, alpha2))
}

/// `c^θ`, with a fast path for the usual integer exponents.
#[inline]
pub fn damping_power(c: f64, theta: f64) -> f64 {
    if theta.fract() == 0.0 && theta <= 16.0 {
        c.powi(theta as i32)
    } else {
        c.powf(theta)
    }
}

#[inline]
pub(crate) fn reaction_unchecked(
    c1: f64,
    c2: f64,
    chi: f64,
    tau: f64,
    p: &ModelParams,
    alpha1: &RateFunction,
    alpha2: &RateFunction,
) -> Kinetics {
    let (diff, dediff) = switching_fluxes(c1, c2, chi, alpha1, alpha2);
    let (damp1, damp2) = if p.eps > 0.0 {
        (
            p.eps * damping_power(c1, p.theta),
            p.eps * damping_power(c2, p.theta),
        )
    } else {
        (0.0, 0.0)
    };
    Kinetics {
        c1: -diff + dediff + p.beta * c1 * (1.0 - c1 - c2 - tau) - damp1,
        c2: diff - dediff - damp2,
        chi: -p.a_chi * (c1 + c2) * chi,
        tau: -tau_loss_rate(c1, p) * tau + tau_production(c2),
    }
}

/// Applies the jump-mode dose due at `state.t`.
///
/// `half_dt` is the matching tolerance between `state.t` and the nearest dose time.
pub fn apply_dose(state: &SimState, s: &SupplySchedule, half_dt: f64) -> Result<SimState> {
    if s.mode != DoseMode::Jump {
        return Err(Error::usage("apply_dose requires jump dosing"));
    }
    let due = s
        .dose_times
        .iter()
        .any(|&tk| (state.t - tk).abs() <= half_dt);
    if !due {
        return Err(Error::usage(format!(
            "no dose time within {half_dt:e} of t = {}",
            state.t
        )));
    }
    let mut next = state.clone();
    let inc = s.amplitude(state.chi.grid().measure());
    if inc != 0.0 {
        next.chi.values_mut().iter_mut().for_each(|v| *v += inc);
    }
    Ok(next)
}
