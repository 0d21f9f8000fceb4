//! Explicit time integration of the coupled system with CFL control,
//! positivity accounting and dose-event alignment.

use crate::diagnostics::{Bounds, DiagnosticsRecord, MonitorConfig};
use crate::error::{Error, Result};
use crate::grid::{laplacian_neumann, max_face_gradient, taxis_unchecked, Field};
use crate::model::{
    apply_dose, damping_power, eval_supply, rate_unchecked, reaction_unchecked, tau_loss_rate,
    tau_production, DoseMode, Model,
};
use crate::output::Sinks;

pub const FIELD_NAMES: [&str; 4] = ["c1", "c2", "chi", "tau"];

/// The four unknowns at time `t`, plus the clamping debt accumulated so far.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub c1: Field,
    pub c2: Field,
    pub chi: Field,
    pub tau: Field,
    /// Total mass removed from negativity by clamping, summed over all fields.
    pub positivity_debt: f64,
}

impl SimState {
    pub fn new(t: f64, c1: Field, c2: Field, chi: Field, tau: Field) -> Result<Self> {
        let g = *c1.grid();
        if [c2.grid(), chi.grid(), tau.grid()]
            .iter()
            .any(|other| **other != g)
        {
            return Err(Error::usage("state fields must share one grid"));
        }
        Ok(Self {
            t,
            c1,
            c2,
            chi,
            tau,
            positivity_debt: 0.0,
        })
    }

    pub fn grid(&self) -> &crate::grid::Grid {
        self.c1.grid()
    }

    pub fn fields(&self) -> [&Field; 4] {
        [&self.c1, &self.c2, &self.chi, &self.tau]
    }

    /// Errors on the first negative value, naming the field and cell.
    pub fn check_nonnegative(&self) -> Result<()> {
        for (name, f) in FIELD_NAMES.iter().zip(self.fields()) {
            if let Some(i) = f.values().iter().position(|&v| !(v >= 0.0)) {
                return Err(Error::domain(format!(
                    "{name} negative at cell {i}: {}",
                    f.values()[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Interval between diagnostics records and snapshots.
    pub save_every: f64,
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0) {
            return Err(Error::domain("dt_max must be positive"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::domain("cfl_safety must lie in (0, 1]"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::domain("t_end must be finite and non-negative"));
        }
        if !(self.save_every > 0.0) {
            return Err(Error::domain("save_every must be positive"));
        }
        Ok(())
    }
}

/// Stability bound before the safety factor and the `dt_max` cap.
///
/// Minimum of the diffusion limit `h²/(2 d D_max)`, the advection limit
/// `h / max face speed` and the reaction limit `1 / max loss rate`.
pub fn stability_bound(state: &SimState, model: &Model) -> f64 {
    let p = &model.params;
    let g = state.grid();
    let dim = g.dim() as f64;

    let d_max = p.a1.max(p.a2).max(p.d_chi).max(p.eps);
    let mut bound = if d_max > 0.0 {
        let h = g.min_spacing();
        h * h / (2.0 * dim * d_max)
    } else {
        f64::INFINITY
    };

    let g_tau = max_face_gradient(&state.tau);
    let g_chi = max_face_gradient(&state.chi);
    for axis in 0..g.dim() {
        let speed = (p.b_tau * g_tau[axis]).max(p.b_chi * g_chi[axis]);
        if speed > 0.0 {
            bound = bound.min(g.spacing(axis) / speed);
        }
    }

    let mut rate: f64 = 0.0;
    let eps_theta = p.eps * p.theta;
    for i in 0..g.len() {
        let c1 = state.c1.values()[i];
        let c2 = state.c2.values()[i];
        let chi = state.chi.values()[i];
        let tau = state.tau.values()[i];
        let mut r1 =
            rate_unchecked(&model.alpha1, chi) / (1.0 + c1) + p.beta * (2.0 * c1 + c2 + tau);
        let mut r2 = rate_unchecked(&model.alpha2, chi) / (1.0 + c2);
        if p.eps > 0.0 {
            r1 += eps_theta * damping_power(c1, p.theta - 1.0);
            r2 += eps_theta * damping_power(c2, p.theta - 1.0);
        }
        let r3 = p.a_chi * (c1 + c2);
        rate = rate.max(r1).max(r2).max(r3);
    }
    if rate > 0.0 {
        bound = bound.min(1.0 / rate);
    }
    bound
}

/// Largest admissible step: `min(dt_max, cfl_safety · stability_bound)`.
pub fn stable_dt(state: &SimState, model: &Model, ctrl: &StepControl) -> f64 {
    (ctrl.cfl_safety * stability_bound(state, model)).min(ctrl.dt_max)
}

pub fn time_tol(t: f64) -> f64 {
    1e-10 * t.abs().max(1.0)
}

/// Advances `state` by `dt`.
///
/// Cell equations and the medium use forward Euler; the matrix equation uses
/// the exponential Euler update for its linear decay, which is exact when the
/// coupling is frozen over the step. Negative cell values are clamped to zero
/// and the removed mass is added to the positivity debt. Jump doses due in
/// `(t, t + dt]` are applied after the update.
pub fn step(state: &SimState, model: &Model, dt: f64) -> Result<SimState> {
    step_within(state, model, dt, stability_bound(state, model))
}

/// [`step`] with the stability bound of `state` already computed.
fn step_within(state: &SimState, model: &Model, dt: f64, bound: f64) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(Error::usage(format!("dt must be positive, got {dt}")));
    }
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::Stability { dt, bound });
    }
    let p = &model.params;
    let g = *state.grid();
    let vol = g.cell_volume();

    let lap_c1 = laplacian_neumann(&state.c1);
    let lap_c2 = laplacian_neumann(&state.c2);
    let lap_chi = laplacian_neumann(&state.chi);
    let lap_tau = (p.eps > 0.0).then(|| laplacian_neumann(&state.tau));
    let tax_c1 = taxis_unchecked(&state.c1, &state.tau, p.b_tau);
    let tax_c2 = taxis_unchecked(&state.c2, &state.chi, p.b_chi);
    let supply = eval_supply(&model.schedule, state.t, g.measure());

    let n = g.len();
    let mut c1 = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    let mut chi = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    let mut debt = 0.0;
    let mut clamp = |v: f64| {
        if v < 0.0 {
            debt -= v * vol;
            0.0
        } else {
            v
        }
    };

    for i in 0..n {
        let u1 = state.c1.values()[i];
        let u2 = state.c2.values()[i];
        let uc = state.chi.values()[i];
        let ut = state.tau.values()[i];
        let r = reaction_unchecked(u1, u2, uc, ut, p, &model.alpha1, &model.alpha2);

        c1.push(clamp(
            u1 + dt * (p.a1 * lap_c1.values()[i] - tax_c1.values()[i] + r.c1),
        ));
        c2.push(clamp(
            u2 + dt * (p.a2 * lap_c2.values()[i] - tax_c2.values()[i] + r.c2),
        ));
        chi.push(clamp(
            uc + dt * (p.d_chi * lap_chi.values()[i] + r.chi + supply),
        ));

        let k = tau_loss_rate(u1, p);
        let mut src = tau_production(u2);
        if let Some(l) = &lap_tau {
            src += p.eps * l.values()[i];
        }
        let em1 = (-k * dt).exp_m1();
        let phi = if k > 0.0 { -em1 / k } else { dt };
        tau.push(clamp(ut * (1.0 + em1) + src * phi));
    }

    for (name, vals) in FIELD_NAMES.iter().zip([&c1, &c2, &chi, &tau]) {
        if let Some(cell) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence { field: name, cell });
        }
    }

    let t_new = state.t + dt;
    let mut next = SimState {
        t: t_new,
        c1: Field::from_vec_unchecked(g, c1),
        c2: Field::from_vec_unchecked(g, c2),
        chi: Field::from_vec_unchecked(g, chi),
        tau: Field::from_vec_unchecked(g, tau),
        positivity_debt: state.positivity_debt + debt,
    };

    if model.schedule.mode == DoseMode::Jump {
        let tol = time_tol(t_new);
        for &tk in &model.schedule.dose_times {
            if tk > state.t + tol && tk <= t_new + tol {
                let at = SimState { t: tk, ..next };
                next = apply_dose(&at, &model.schedule, tol)?;
                next.t = t_new;
            }
        }
    }
    Ok(next)
}

/// Summary of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: SimState,
    pub steps: usize,
    pub records: usize,
    pub bounds: Bounds,
}

/// Marches `initial` to `ctrl.t_end`.
///
/// A diagnostics record (and, if a snapshot sink is given, a snapshot) is
/// emitted at the initial time, at every multiple of `save_every` and at
/// `t_end`. Steps are shortened to land exactly on save times, dose times and
/// pulse edges.
pub fn run(
    initial: &SimState,
    model: &Model,
    ctrl: &StepControl,
    monitor: &MonitorConfig,
    sinks: &mut Sinks<'_>,
) -> Result<RunOutcome> {
    ctrl.validate()?;
    model.validate_degenerate(initial.grid().dim())?;
    initial.check_nonnegative()?;

    let t0 = initial.t;
    let mut state = initial.clone();
    if model.schedule.mode == DoseMode::Jump {
        let tol = time_tol(t0);
        if model
            .schedule
            .dose_times
            .iter()
            .any(|&tk| (tk - t0).abs() <= tol)
        {
            state = apply_dose(&state, &model.schedule, tol)?;
        }
    }
    let bounds = Bounds::compute(initial, model, monitor);

    let emit = |state: &SimState, index: usize, sinks: &mut Sinks<'_>| -> Result<()> {
        if let Some(d) = sinks.diagnostics.as_deref_mut() {
            let rec = DiagnosticsRecord::compute(state, model, monitor, &bounds)?;
            d.record(&rec)?;
        }
        if let Some(s) = sinks.snapshots.as_deref_mut() {
            s.snapshot(index, state)?;
        }
        Ok(())
    };

    let mut index = 0;
    emit(&state, index, sinks)?;
    index += 1;

    let breakpoints: Vec<f64> = model
        .schedule
        .breakpoints()
        .into_iter()
        .filter(|&b| b > t0 && b < ctrl.t_end)
        .collect();
    let mut next_bp = 0;
    let mut save_k: u64 = 1;
    let mut steps = 0;

    while state.t < ctrl.t_end - time_tol(ctrl.t_end) {
        let tol = time_tol(state.t);
        while next_bp < breakpoints.len() && breakpoints[next_bp] <= state.t + tol {
            next_bp += 1;
        }
        let next_save = (t0 + save_k as f64 * ctrl.save_every).min(ctrl.t_end);
        let mut target = next_save;
        if next_bp < breakpoints.len() {
            target = target.min(breakpoints[next_bp]);
        }

        let gap = target - state.t;
        let bound = stability_bound(&state, model);
        let dt_stable = (ctrl.cfl_safety * bound).min(ctrl.dt_max);
        let (dt, landing) = if dt_stable >= gap {
            (gap, true)
        } else {
            (dt_stable, false)
        };
        state = step_within(&state, model, dt, bound)?;
        steps += 1;
        if landing {
            state.t = target;
        }

        if state.t >= next_save - time_tol(next_save) {
            state.t = next_save;
            emit(&state, index, sinks)?;
            index += 1;
            save_k += 1;
        }
    }

    Ok(RunOutcome {
        final_state: state,
        steps,
        records: index,
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::{ModelParams, RateFunction, SupplySchedule};
    use crate::output::MemorySink;

    fn zero_params() -> ModelParams {
        ModelParams {
            a1: 0.0,
            a2: 0.0,
            b_tau: 0.0,
            b_chi: 0.0,
            d_chi: 0.0,
            a_chi: 0.0,
            beta: 0.0,
            delta: 0.0,
            mu: 0.0,
            eps: 0.0,
            theta: 4.0,
        }
    }

    fn model_with(p: ModelParams) -> Model {
        Model::new(
            p,
            RateFunction::constant(0.0),
            RateFunction::constant(0.0),
            SupplySchedule::none(),
        )
    }

    fn uniform(g: Grid, v: [f64; 4]) -> SimState {
        SimState::new(
            0.0,
            Field::constant(g, v[0]),
            Field::constant(g, v[1]),
            Field::constant(g, v[2]),
            Field::constant(g, v[3]),
        )
        .unwrap()
    }

    fn ctrl(dt_max: f64, safety: f64) -> StepControl {
        StepControl {
            dt_max,
            cfl_safety: safety,
            t_end: 1.0,
            save_every: 1.0,
        }
    }

    #[test]
    fn stable_dt_diffusion_only() {
        let g = Grid::new_1d(10, 1.0).unwrap();
        let mut p = zero_params();
        p.a1 = 1.0;
        let dt = stable_dt(&uniform(g, [0.0; 4]), &model_with(p), &ctrl(1.0, 1.0));
        assert!((dt - 0.005).abs() < 1e-15);
    }

    #[test]
    fn stable_dt_cap_binds() {
        let g = Grid::new_1d(10, 1.0).unwrap();
        let dt = stable_dt(
            &uniform(g, [0.0; 4]),
            &model_with(zero_params()),
            &ctrl(0.01, 0.5),
        );
        assert_eq!(dt, 0.01);
    }

    #[test]
    fn stable_dt_advection_limit() {
        let g = Grid::new_1d(10, 1.0).unwrap();
        let mut p = zero_params();
        p.b_tau = 1.0;
        p.a1 = 1e-3;
        let mut s = uniform(g, [0.0; 4]);
        s.tau = Field::from_fn(g, |x| 2.0 * x[0]).unwrap();
        let dt = stable_dt(&s, &model_with(p), &ctrl(1.0, 0.5));
        assert!((dt - 0.025).abs() < 1e-12, "{dt}");
    }

    #[test]
    fn step_rejects_unstable_dt() {
        let g = Grid::new_1d(10, 1.0).unwrap();
        let mut p = zero_params();
        p.a1 = 1.0;
        let err = step(&uniform(g, [0.1; 4]), &model_with(p), 0.006).unwrap_err();
        assert!(matches!(err, Error::Stability { .. }));
    }

    #[test]
    fn zero_state_is_equilibrium() {
        let g = Grid::new_2d(5, 4, 1.0, 1.0).unwrap();
        let m = Model::new(
            ModelParams::default(),
            RateFunction::constant(0.3),
            RateFunction::saturating(0.2, 1.0),
            SupplySchedule::none(),
        );
        let s = step(&uniform(g, [0.0; 4]), &m, 1e-3).unwrap();
        assert!((s.t - 1e-3).abs() < 1e-18);
        for f in s.fields() {
            assert!(f.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn matrix_decay_follows_exponential() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let mut p = zero_params();
        p.mu = 2.0;
        let m = model_with(p);
        let mut s = uniform(g, [0.0, 0.0, 0.0, 0.5]);
        let dt = 1e-3;
        for _ in 0..500 {
            s = step(&s, &m, dt).unwrap();
        }
        let exact = 0.5 * (-2.0 * s.t).exp();
        for &v in s.tau.values() {
            assert!((v - exact).abs() < 1e-14, "{v} vs {exact}");
        }
    }

    #[test]
    fn uniform_state_stays_uniform() {
        let g = Grid::new_2d(6, 6, 1.0, 1.0).unwrap();
        let mut p = ModelParams::default();
        p.eps = 0.2;
        let m = Model::new(
            p,
            RateFunction::saturating(0.4, 0.5),
            RateFunction::constant(0.1),
            SupplySchedule::new(vec![0.0], 1.0, DoseMode::Pulse, 1.0).unwrap(),
        );
        let mut s = uniform(g, [0.3, 0.1, 1.0, 0.2]);
        for _ in 0..20 {
            s = step(&s, &m, 1e-3).unwrap();
        }
        for f in s.fields() {
            let v0 = f.values()[0];
            assert!(f.values().iter().all(|&v| v == v0));
        }
    }

    #[test]
    fn run_with_zero_horizon_emits_one_record() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let m = Model::new(
            ModelParams::default(),
            RateFunction::constant(0.1),
            RateFunction::constant(0.1),
            SupplySchedule::none(),
        );
        let init = uniform(g, [0.2, 0.1, 1.0, 0.3]);
        let mut sink = MemorySink::default();
        let c = StepControl {
            dt_max: 0.01,
            cfl_safety: 0.5,
            t_end: 0.0,
            save_every: 0.1,
        };
        let out = run(
            &init,
            &m,
            &c,
            &MonitorConfig::default(),
            &mut Sinks::diagnostics(&mut sink),
        )
        .unwrap();
        assert_eq!(out.final_state, init);
        assert_eq!(sink.records.len(), 1);
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn run_lands_on_save_times_and_pulse_edges() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let m = Model::new(
            ModelParams::default(),
            RateFunction::constant(0.1),
            RateFunction::constant(0.1),
            SupplySchedule::new(vec![0.0123, 0.3], 0.5, DoseMode::Pulse, 0.0371).unwrap(),
        );
        let init = uniform(g, [0.0, 0.0, 1.0, 0.3]);
        let mut sink = MemorySink::default();
        let c = StepControl {
            dt_max: 0.01,
            cfl_safety: 0.5,
            t_end: 0.5,
            save_every: 0.1,
        };
        run(
            &init,
            &m,
            &c,
            &MonitorConfig::default(),
            &mut Sinks::diagnostics(&mut sink),
        )
        .unwrap();
        let times: Vec<f64> = sink.records.iter().map(|r| r.t).collect();
        assert_eq!(times.len(), 6);
        for (k, t) in times.iter().enumerate() {
            assert!((t - 0.1 * k as f64).abs() < 1e-12);
        }
        // no cells: medium mass grows by exactly amplitude * width per pulse
        let gained = sink.records.last().unwrap().mass[2] - sink.records[0].mass[2];
        assert!((gained - 2.0 * 0.5 * 0.0371).abs() < 1e-12, "{gained}");
    }

    #[test]
    fn divergence_names_field() {
        let g = Grid::new_1d(4, 1.0).unwrap();
        let mut p = zero_params();
        p.a1 = 1.0;
        let mut s = uniform(g, [0.0, 0.0, 0.0, 1.0]);
        // the Laplacian of a near-overflow spike is infinite
        s.c1.values_mut()[2] = f64::MAX;
        let err = step(&s, &model_with(p), 1e-30).unwrap_err();
        assert!(
            matches!(err, Error::Divergence { field: "c1", .. }),
            "{err}"
        );
    }
}
