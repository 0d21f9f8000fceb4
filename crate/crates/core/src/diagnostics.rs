//! Runtime monitors: masses and extrema, the entropy functional and its
//! dissipation, Fisher information of the matrix, and the a-priori bound
//! certificates.
//!
//! The singular integrands `|∇f|²/f` are evaluated as `4|∇√f|²` from face
//! differences of `√f`, which stays finite wherever `f >= 0`.

use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::grid::{gradient_sq, laplacian_neumann, Field};
use crate::model::{Model, ModelParams, SupplySchedule};
use crate::stepper::SimState;

/// Floor applied to τ before taking logarithms in the Hessian term.
pub const LOG_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyParams {
    /// Weight ζ > 0 of the medium Dirichlet energy.
    pub zeta: f64,
    /// Decay rate ϱ >= 0 used by the inequality monitor.
    pub varrho: f64,
}

impl Default for EntropyParams {
    fn default() -> Self {
        Self {
            zeta: 1.0,
            varrho: 0.0,
        }
    }
}

impl EntropyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0) {
            return Err(Error::domain(format!(
                "zeta must be positive, got {}",
                self.zeta
            )));
        }
        if !(self.varrho >= 0.0) {
            return Err(Error::domain(format!(
                "varrho must be non-negative, got {}",
                self.varrho
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-8,
            abs: 1e-12,
        }
    }
}

/// Everything the run loop needs to build diagnostics records.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MonitorConfig {
    pub entropy: EntropyParams,
    pub tol: Tolerances,
    /// Replaces the computed c1 mass bound when set.
    pub m1_override: Option<f64>,
    /// Replaces the computed τ bound when set.
    pub tau_star_override: Option<f64>,
}

/// `max{∫c1₀, (|Ω|/2)(1 + √(4 M_α2 / β))}`
pub fn c1_mass_bound(initial_mass: f64, domain_measure: f64, m_alpha2: f64, beta: f64) -> f64 {
    initial_mass.max(0.5 * domain_measure * (1.0 + (4.0 * m_alpha2 / beta).sqrt()))
}

/// `r*/μ + max τ₀` with `r* = 1`, since `c2/(1+c2) < 1`.
pub fn tau_linf_bound(mu: f64, tau0_max: f64) -> f64 {
    1.0 / mu + tau0_max
}

/// `∫c2₀ + M_α1 |Ω| t`
pub fn c2_mass_bound(initial_mass: f64, m_alpha1: f64, domain_measure: f64, t: f64) -> f64 {
    initial_mass + m_alpha1 * domain_measure * t
}

/// Medium bound: `max χ₀` plus the largest rise of all doses issued up to `t`.
pub fn chi_linf_bound(
    chi0_max: f64,
    schedule: &SupplySchedule,
    domain_measure: f64,
    t: f64,
) -> f64 {
    chi0_max + schedule.doses_up_to(t) as f64 * schedule.per_dose_increment(domain_measure)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    /// c1 mass bound `M₁`.
    pub m1: f64,
    /// τ sup bound `τ*`.
    pub tau_star: f64,
}

impl Bounds {
    pub fn compute(initial: &SimState, model: &Model, cfg: &MonitorConfig) -> Self {
        let p = &model.params;
        let measure = initial.grid().measure();
        let m1 = c1_mass_bound(
            initial.c1.integrate(),
            measure,
            model.alpha2.bound(),
            p.beta,
        );
        let tau_star = tau_linf_bound(p.mu, initial.tau.max());
        Self {
            m1: cfg.m1_override.unwrap_or(m1),
            tau_star: cfg.tau_star_override.unwrap_or(tau_star),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Certificates {
    pub c1_mass_ok: bool,
    pub tau_linf_ok: bool,
    pub nonneg_ok: bool,
}

impl Certificates {
    pub fn all(&self) -> bool {
        self.c1_mass_ok && self.tau_linf_ok && self.nonneg_ok
    }
}

/// One row of the diagnostics stream. Per-species arrays are ordered c1, c2, χ, τ.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: [f64; 4],
    pub min: [f64; 4],
    pub max: [f64; 4],
    pub entropy_e: f64,
    pub dissipation_d: f64,
    /// `(a2 ε/8)∫τ|D² ln τ|²`; only available in 1D.
    pub hessian_tau: Option<f64>,
    /// `∫|∇τ|²/τ`
    pub fisher_tau: f64,
    /// `∫|∇χ|²`
    pub grad_chi_sq: f64,
    /// `∫c1²`
    pub c1_sq: f64,
    pub positivity_debt: f64,
    pub certificates: Certificates,
}

impl DiagnosticsRecord {
    pub fn compute(
        state: &SimState,
        model: &Model,
        cfg: &MonitorConfig,
        bounds: &Bounds,
    ) -> Result<Self> {
        let p = &model.params;
        let fields = state.fields();
        for (k, f) in fields.iter().enumerate() {
            if let Some(i) = f.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    field: crate::stepper::FIELD_NAMES[k],
                    cell: i,
                });
            }
        }
        let lap_chi = laplacian_neumann(&state.chi);
        let mut rec = Self {
            t: state.t,
            mass: fields.map(|f| f.integrate()),
            min: fields.map(|f| f.min()),
            max: fields.map(|f| f.max()),
            entropy_e: entropy_e(state, p, &cfg.entropy)?,
            dissipation_d: dissipation_d(state, p, &cfg.entropy, &lap_chi)?,
            hessian_tau: hessian_tau_term(&state.tau, p),
            fisher_tau: fisher_information(&state.tau),
            grad_chi_sq: gradient_sq(&state.chi).integrate(),
            c1_sq: state.c1.map(|v| v * v).integrate(),
            positivity_debt: state.positivity_debt,
            certificates: Certificates {
                c1_mass_ok: true,
                tau_linf_ok: true,
                nonneg_ok: true,
            },
        };
        rec.certificates = certify_bounds(&rec, bounds, &cfg.tol);
        Ok(rec)
    }
}

/// Checks a record against the mass bound, the τ bound and nonnegativity.
pub fn certify_bounds(rec: &DiagnosticsRecord, bounds: &Bounds, tol: &Tolerances) -> Certificates {
    Certificates {
        c1_mass_ok: rec.mass[0] <= bounds.m1 * (1.0 + tol.rel),
        tau_linf_ok: rec.max[3] <= bounds.tau_star * (1.0 + tol.rel),
        nonneg_ok: rec.min.iter().all(|&m| m >= -tol.abs),
    }
}

/// `s ln s + 1/e`, with `0 ln 0 = 0`.
#[inline]
fn shifted_entropy(s: f64) -> f64 {
    if s > 0.0 {
        s * s.ln() + 1.0 / E
    } else {
        1.0 / E
    }
}

fn integral_of(f: &Field, g: impl Fn(f64) -> f64) -> f64 {
    f.values().iter().map(|&v| g(v)).sum::<f64>() * f.grid().cell_volume()
}

/// `∫|∇f|²/f` evaluated as `4∫|∇√f|²`.
pub fn fisher_information(f: &Field) -> f64 {
    4.0 * gradient_sq(&f.map(|v| v.max(0.0).sqrt())).integrate()
}

fn weighted_fisher(weight: &Field, f: &Field) -> f64 {
    let gsq = gradient_sq(&f.map(|v| v.max(0.0).sqrt()));
    4.0 * weight
        .values()
        .iter()
        .zip(gsq.values())
        .map(|(w, g)| w * g)
        .sum::<f64>()
        * f.grid().cell_volume()
}

fn check_finite(state: &SimState) -> Result<()> {
    for f in state.fields() {
        if f.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite field value"));
        }
    }
    Ok(())
}

/// The entropy functional
/// `(a2 δ/4b_τ)∫(c1 ln c1 + 1/e) + ∫(c2 ln c2 + 1/e) + (b_χ²/D_χ ζ)∫|∇χ|² + (a2/8)∫|∇τ|²/τ`.
pub fn entropy_e(state: &SimState, p: &ModelParams, ep: &EntropyParams) -> Result<f64> {
    check_finite(state)?;
    let w1 = p.a2 * p.delta / (4.0 * p.b_tau);
    let e1 = integral_of(&state.c1, shifted_entropy);
    let e2 = integral_of(&state.c2, shifted_entropy);
    let dirichlet = gradient_sq(&state.chi).integrate();
    let fisher = fisher_information(&state.tau);
    Ok(w1 * e1 + e2 + p.b_chi * p.b_chi / (p.d_chi * ep.zeta) * dirichlet + p.a2 / 8.0 * fisher)
}

/// The dissipation functional without its τ Hessian term (see [`hessian_tau_term`]).
pub fn dissipation_d(
    state: &SimState,
    p: &ModelParams,
    ep: &EntropyParams,
    laplacian_chi: &Field,
) -> Result<f64> {
    check_finite(state)?;
    if laplacian_chi.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite Laplacian"));
    }
    let c1_weight = p.a2 * p.delta / (8.0 * p.b_tau);
    let log2p = |s: f64| (2.0 + s).ln();

    let mut d = p.a1 * c1_weight * fisher_information(&state.c1);
    d += p.a2 / 8.0 * fisher_information(&state.c2);
    d += p.b_chi * p.b_chi / (2.0 * ep.zeta) * integral_of(laplacian_chi, |v| v * v);
    d += p.a2 * p.delta / 8.0 * weighted_fisher(&state.c1, &state.tau);
    d += c1_weight * p.beta * integral_of(&state.c1, |s| s * s * log2p(s));
    if p.eps > 0.0 {
        d += c1_weight * p.eps * integral_of(&state.c1, |s| s.powf(p.theta) * log2p(s));
        d += 0.5 * p.eps * integral_of(&state.c2, |s| s.powf(p.theta) * log2p(s));
    }
    Ok(d)
}

/// `(a2 ε/8)∫τ|(ln τ)''|²` in 1D, from second differences of `ln max(τ, LOG_FLOOR)`.
pub fn hessian_tau_term(tau: &Field, p: &ModelParams) -> Option<f64> {
    if tau.grid().dim() != 1 {
        return None;
    }
    let log_tau = tau.map(|v| v.max(LOG_FLOOR).ln());
    let second = laplacian_neumann(&log_tau);
    let integral = tau
        .values()
        .iter()
        .zip(second.values())
        .map(|(t, s)| t * s * s)
        .sum::<f64>()
        * tau.grid().cell_volume();
    Some(p.a2 * p.eps / 8.0 * integral)
}

/// Summary of the entropy inequality `E' + ϱE + D ≤ K∫c1² + C` over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    /// `(t, E'(t) + ϱE(t) + D(t))` at every interior record.
    pub lhs: Vec<(f64, f64)>,
    pub max_lhs: f64,
    /// `max_t (4 b_χ² a_χ² χ_∞² / D_χ² ζ)∫c1²`
    pub max_c1_forcing: f64,
    pub sup_entropy: f64,
    /// Trapezoidal `∫₀ᵀ D`.
    pub integral_dissipation: f64,
    /// True when the τ Hessian term is missing from D (dimension > 1).
    pub hessian_omitted: bool,
}

pub fn entropy_inequality_monitor(
    records: &[DiagnosticsRecord],
    ep: &EntropyParams,
    p: &ModelParams,
    chi_inf: f64,
) -> Result<EntropyReport> {
    if records.len() < 3 {
        return Err(Error::usage(format!(
            "entropy monitor needs at least 3 records, got {}",
            records.len()
        )));
    }
    let total_d = |r: &DiagnosticsRecord| r.dissipation_d + r.hessian_tau.unwrap_or(0.0);
    let lhs: Vec<(f64, f64)> = records
        .windows(3)
        .map(|w| {
            let de = (w[2].entropy_e - w[0].entropy_e) / (w[2].t - w[0].t);
            (w[1].t, de + ep.varrho * w[1].entropy_e + total_d(&w[1]))
        })
        .collect();
    let k = 4.0 * p.b_chi.powi(2) * p.a_chi.powi(2) * chi_inf.powi(2) / (p.d_chi.powi(2) * ep.zeta);
    let integral_dissipation = records
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (total_d(&w[0]) + total_d(&w[1])))
        .sum();
    Ok(EntropyReport {
        max_lhs: lhs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max),
        lhs,
        max_c1_forcing: records.iter().map(|r| k * r.c1_sq).fold(0.0, f64::max),
        sup_entropy: records
            .iter()
            .map(|r| r.entropy_e)
            .fold(f64::NEG_INFINITY, f64::max),
        integral_dissipation,
        hessian_omitted: records[0].hessian_tau.is_none(),
    })
}
