//! Classical RK4 for spatially uniform solutions, where every transport term
//! vanishes and the system reduces to four ODEs.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{eval_supply, DoseMode, Model};
use crate::output::{csv_err, fmt_num};

/// Components below this are a stiffness failure; smaller undershoots are clamped.
pub const NEGATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousState {
    pub t: f64,
    pub c1: f64,
    pub c2: f64,
    pub chi: f64,
    pub tau: f64,
}

impl HomogeneousState {
    pub fn new(t: f64, c1: f64, c2: f64, chi: f64, tau: f64) -> Result<Self> {
        let s = Self {
            t,
            c1,
            c2,
            chi,
            tau,
        };
        if s.as_array().iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !t.is_finite() {
            return Err(Error::domain(format!(
                "homogeneous state must be finite and non-negative: {s:?}"
            )));
        }
        Ok(s)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.c1, self.c2, self.chi, self.tau]
    }

    fn with(t: f64, y: [f64; 4]) -> Self {
        Self {
            t,
            c1: y[0],
            c2: y[1],
            chi: y[2],
            tau: y[3],
        }
    }
}

const COMPONENTS: [&str; 4] = ["c1", "c2", "chi", "tau"];

/// Reaction terms plus the pulse supply on the medium.
pub fn ode_rhs(y: &HomogeneousState, model: &Model, domain_measure: f64) -> Result<[f64; 4]> {
    let mut r = model.reaction(y.c1, y.c2, y.chi, y.tau)?.as_array();
    r[2] += eval_supply(&model.schedule, y.t, domain_measure);
    Ok(r)
}

fn clamp_checked(y: [f64; 4], t: f64) -> Result<[f64; 4]> {
    let mut out = y;
    for (k, v) in out.iter_mut().enumerate() {
        if !v.is_finite() || *v < -NEGATIVE_TOL {
            return Err(Error::Stiffness {
                component: COMPONENTS[k],
                value: *v,
                t,
            });
        }
        *v = v.max(0.0);
    }
    Ok(out)
}

/// One RK4 step of length `h` with the supply frozen at `supply`.
fn rk4_step(y: [f64; 4], t: f64, h: f64, model: &Model, supply: f64) -> Result<[f64; 4]> {
    let f = |y: [f64; 4]| -> Result<[f64; 4]> {
        let y = clamp_checked(y, t)?;
        let mut r = model.reaction(y[0], y[1], y[2], y[3])?.as_array();
        r[2] += supply;
        Ok(r)
    };
    let add = |y: [f64; 4], k: [f64; 4], s: f64| std::array::from_fn(|i| y[i] + s * k[i]);
    let k1 = f(y)?;
    let k2 = f(add(y, k1, h / 2.0))?;
    let k3 = f(add(y, k2, h / 2.0))?;
    let k4 = f(add(y, k3, h))?;
    Ok(std::array::from_fn(|i| {
        y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

/// Integrates from `y0.t` to `t_end`, calling `observe` on the initial state and
/// after every step. Steps are shortened to land on dose times and pulse edges;
/// jump doses are added between steps.
pub fn rk4_integrate(
    y0: &HomogeneousState,
    model: &Model,
    domain_measure: f64,
    dt: f64,
    t_end: f64,
    observe: impl FnMut(&HomogeneousState),
) -> Result<HomogeneousState> {
    integrate(y0, model, domain_measure, dt, t_end, &[], observe)
}

/// States at `y0.t`, every multiple of `save_every` and `t_end`; steps are
/// shortened to land on those times.
pub fn rk4_sampled(
    y0: &HomogeneousState,
    model: &Model,
    domain_measure: f64,
    dt: f64,
    t_end: f64,
    save_every: f64,
) -> Result<Vec<HomogeneousState>> {
    if !(save_every > 0.0) {
        return Err(Error::domain(format!(
            "save_every must be positive, got {save_every}"
        )));
    }
    let mut saves: Vec<f64> = (1..)
        .map(|k| y0.t + k as f64 * save_every)
        .take_while(|&t| t < t_end - 1e-10 * t_end.max(1.0))
        .collect();
    if t_end > y0.t {
        saves.push(t_end);
    }
    let mut out = Vec::new();
    let mut next = 0;
    integrate(y0, model, domain_measure, dt, t_end, &saves, |s| {
        if out.is_empty() {
            out.push(*s);
        } else if next < saves.len() && (s.t - saves[next]).abs() <= 1e-10 * s.t.max(1.0) {
            out.push(*s);
            next += 1;
        }
    })?;
    Ok(out)
}

fn integrate(
    y0: &HomogeneousState,
    model: &Model,
    domain_measure: f64,
    dt: f64,
    t_end: f64,
    extra_stops: &[f64],
    mut observe: impl FnMut(&HomogeneousState),
) -> Result<HomogeneousState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= y0.t) {
        return Err(Error::domain(format!(
            "t_end = {t_end} precedes the initial time {}",
            y0.t
        )));
    }
    if !(domain_measure > 0.0) {
        return Err(Error::domain("domain measure must be positive"));
    }
    model.validate_degenerate(1)?;
    let s = &model.schedule;
    let tol = |t: f64| 1e-10 * t.abs().max(1.0);
    let dose = |t: f64, y: &mut [f64; 4]| {
        if s.mode == DoseMode::Jump && s.dose_times.iter().any(|&tk| (tk - t).abs() <= tol(t)) {
            y[2] += s.amplitude(domain_measure);
        }
    };

    let mut t = y0.t;
    let mut y = y0.as_array();
    dose(t, &mut y);
    observe(&HomogeneousState::with(t, y));

    let mut stops: Vec<f64> = s
        .breakpoints()
        .into_iter()
        .chain(extra_stops.iter().copied())
        .filter(|&b| b > t + tol(t) && b < t_end - tol(t_end))
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|b, a| *b - *a <= tol(*a));
    stops.push(t_end);
    for stop in stops {
        let start = t;
        let n = ((stop - start) / dt - 1e-9).ceil().max(1.0) as u64;
        for k in 1..=n {
            let t_next = if k == n { stop } else { start + k as f64 * dt };
            let h = t_next - t;
            if h <= 0.0 {
                continue;
            }
            let supply = eval_supply(s, t + 0.5 * h, domain_measure);
            y = clamp_checked(rk4_step(y, t, h, model, supply)?, t_next)?;
            t = t_next;
            if k == n {
                dose(t, &mut y);
            }
            observe(&HomogeneousState::with(t, y));
        }
    }
    Ok(HomogeneousState::with(t, y))
}

/// Every state along the way, starting with `y0`.
pub fn rk4_solve(
    y0: &HomogeneousState,
    model: &Model,
    domain_measure: f64,
    dt: f64,
    t_end: f64,
) -> Result<Vec<HomogeneousState>> {
    let mut out = Vec::new();
    rk4_integrate(y0, model, domain_measure, dt, t_end, |s| out.push(*s))?;
    Ok(out)
}

/// Only the state at `t_end`.
pub fn rk4_final(
    y0: &HomogeneousState,
    model: &Model,
    domain_measure: f64,
    dt: f64,
    t_end: f64,
) -> Result<HomogeneousState> {
    rk4_integrate(y0, model, domain_measure, dt, t_end, |_| {})
}

pub fn write_trajectory_csv(out: impl Write, states: &[HomogeneousState]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "c1", "c2", "chi", "tau"])
        .map_err(csv_err)?;
    for s in states {
        w.write_record([s.t, s.c1, s.c2, s.chi, s.tau].map(fmt_num))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, RateFunction, SupplySchedule};

    fn off() -> ModelParams {
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

    fn model(p: ModelParams, a1: f64, a2: f64) -> Model {
        Model::new(
            p,
            RateFunction::constant(a1),
            RateFunction::constant(a2),
            SupplySchedule::none(),
        )
    }

    fn hs(c1: f64, c2: f64, chi: f64, tau: f64) -> HomogeneousState {
        HomogeneousState::new(0.0, c1, c2, chi, tau).unwrap()
    }

    #[test]
    fn rhs_at_origin() {
        let m = model(ModelParams::default(), 0.3, 0.2);
        assert_eq!(ode_rhs(&hs(0.0, 0.0, 0.0, 0.0), &m, 1.0).unwrap(), [0.0; 4]);
    }

    #[test]
    fn rhs_logistic_equilibrium() {
        let mut p = off();
        p.beta = 1.0;
        let r = ode_rhs(&hs(1.0, 0.0, 0.0, 0.0), &model(p, 0.0, 0.0), 1.0).unwrap();
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn rhs_full_coupling_by_hand() {
        // c1 = 0.5, c2 = 0.25, χ = 2, τ = 0.4, α1 = 0.3, α2 = 0.2, β = 1, δ = 0.5,
        // μ = 0.5, a_χ = 0.5, ε = 0.1, θ = 4, pulse amplitude 1/2 at t = 0.
        //   switch1 = 0.3·0.5/1.5 = 0.1,  switch2 = 0.2·0.25/1.25 = 0.04
        //   r1 = −0.1 + 0.04 + 0.5·(1 − 1.15) − 0.1·0.0625 = −0.14125
        //   r2 =  0.1 − 0.04 − 0.1·0.00390625 = 0.059609375
        //   r3 = −0.5·0.75·2 + 0.5 = −0.25
        //   r4 = −0.5·0.5·0.4 − 0.5·0.4 + 0.25/1.25 = −0.1
        let mut p = ModelParams::default();
        p.eps = 0.1;
        let sched = SupplySchedule::new(vec![0.0], 2.0, DoseMode::Pulse, 0.5).unwrap();
        let m = Model::new(
            p,
            RateFunction::constant(0.3),
            RateFunction::constant(0.2),
            sched,
        );
        let r = ode_rhs(&hs(0.5, 0.25, 2.0, 0.4), &m, 4.0).unwrap();
        let expect = [-0.14125, 0.059609375, -0.25, -0.1];
        for k in 0..4 {
            assert!(
                (r[k] - expect[k]).abs() < 1e-15,
                "{k}: {} vs {}",
                r[k],
                expect[k]
            );
        }
    }

    #[test]
    fn tau_decay_closed_form() {
        let mut p = off();
        p.mu = 2.0;
        let out = rk4_final(&hs(0.0, 0.0, 0.0, 0.5), &model(p, 0.0, 0.0), 1.0, 1e-3, 1.0).unwrap();
        assert_eq!(out.t, 1.0);
        assert!((out.tau - 0.5 * (-2.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn logistic_closed_form() {
        let mut p = off();
        p.beta = 1.5;
        let m = model(p, 0.0, 0.0);
        let c0: f64 = 0.1;
        let traj = rk4_solve(&hs(c0, 0.0, 0.0, 0.0), &m, 1.0, 1e-3, 2.0).unwrap();
        assert_eq!(traj.len(), 2001);
        for s in traj.iter().step_by(100) {
            let e = (p.beta * s.t).exp();
            let exact = c0 * e / (1.0 - c0 + c0 * e);
            assert!((s.c1 - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn fourth_order() {
        let p = ModelParams::default();
        let m = model(p, 0.4, 0.1);
        let y0 = hs(0.6, 0.1, 1.0, 0.2);
        let reference = rk4_final(&y0, &m, 1.0, 1e-4, 1.0).unwrap().as_array();
        let err = |dt: f64| {
            let y = rk4_final(&y0, &m, 1.0, dt, 1.0).unwrap().as_array();
            (0..4)
                .map(|k| (y[k] - reference[k]).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 14.0 && ratio < 18.0, "{ratio}");
    }

    #[test]
    fn switching_conserves_cells() {
        let mut p = ModelParams::default();
        p.beta = 0.0;
        let sched = SupplySchedule::new(vec![0.3], 1.0, DoseMode::Pulse, 0.2).unwrap();
        let m = Model::new(
            p,
            RateFunction::saturating(0.8, 0.5),
            RateFunction::constant(0.3),
            sched,
        );
        let traj = rk4_solve(&hs(0.6, 0.1, 1.0, 0.2), &m, 1.0, 1e-3, 1.0).unwrap();
        for s in &traj {
            assert!((s.c1 + s.c2 - 0.7).abs() < 1e-10);
        }
    }

    #[test]
    fn jump_doses_between_steps() {
        let p = off();
        let sched = SupplySchedule::new(vec![0.0, 0.33, 0.5], 1.0, DoseMode::Jump, 0.0).unwrap();
        let m = Model::new(
            p,
            RateFunction::constant(0.0),
            RateFunction::constant(0.0),
            sched,
        );
        let traj = rk4_solve(&hs(0.0, 0.0, 0.25, 0.0), &m, 2.0, 0.1, 1.0).unwrap();
        assert_eq!(traj[0].chi, 0.75);
        assert!(traj.iter().any(|s| (s.t - 0.33).abs() < 1e-15));
        assert_eq!(traj.last().unwrap().chi, 1.75);
        assert!(traj
            .windows(2)
            .all(|w| w[1].t > w[0].t && w[1].t - w[0].t <= 0.1 + 1e-15));
    }

    #[test]
    fn sampled_lands_on_save_times() {
        let p = off();
        let sched = SupplySchedule::new(vec![0.0, 0.5], 1.0, DoseMode::Jump, 0.0).unwrap();
        let m = Model::new(
            p,
            RateFunction::constant(0.0),
            RateFunction::constant(0.0),
            sched,
        );
        let out = rk4_sampled(&hs(0.0, 0.0, 0.25, 0.0), &m, 1.0, 0.03, 1.0, 0.25).unwrap();
        let times: Vec<f64> = out.iter().map(|s| s.t).collect();
        assert_eq!(times, [0.0, 0.25, 0.5, 0.75, 1.0]);
        let chi: Vec<f64> = out.iter().map(|s| s.chi).collect();
        assert_eq!(chi, [1.25, 1.25, 2.25, 2.25, 2.25]);
        let sampled_end = out.last().unwrap().tau;
        let mut q = ModelParams::default();
        q.eps = 0.0;
        let m = model(q, 0.2, 0.1);
        let y0 = hs(0.4, 0.1, 1.0, 0.5);
        let a = rk4_sampled(&y0, &m, 1.0, 1e-3, 1.0, 0.1).unwrap();
        let b = rk4_final(&y0, &m, 1.0, 1e-3, 1.0).unwrap();
        assert_eq!(a.len(), 11);
        assert!((a.last().unwrap().c1 - b.c1).abs() < 1e-12);
        assert_eq!(sampled_end, 0.0);
    }

    #[test]
    fn pulse_integrates_to_dose() {
        let p = off();
        let sched = SupplySchedule::new(vec![0.1, 0.55], 0.6, DoseMode::Pulse, 0.25).unwrap();
        let m = Model::new(
            p,
            RateFunction::constant(0.0),
            RateFunction::constant(0.0),
            sched,
        );
        // amplitude 0.6/2 for 0.25 per dose
        let out = rk4_final(&hs(0.0, 0.0, 0.0, 0.0), &m, 2.0, 0.07, 1.0).unwrap();
        assert!((out.chi - 2.0 * 0.3 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn stiffness_reported() {
        let mut p = off();
        p.mu = 1e4;
        let err =
            rk4_final(&hs(0.0, 0.0, 0.0, 1.0), &model(p, 0.0, 0.0), 1.0, 0.1, 1.0).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stiffness {
                    component: "tau",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn csv_dump() {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[hs(0.5, 0.0, 1.0, 0.25)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,c1,c2,chi,tau\n0.0,0.5,0.0,1.0,0.25\n"
        );
    }

    #[test]
    fn rejects_negative_initial_data() {
        assert!(HomogeneousState::new(0.0, -0.1, 0.0, 0.0, 0.0).is_err());
    }
}
