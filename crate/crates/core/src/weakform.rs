//! Weak-form residuals of the four equations on a stored trajectory, tested
//! against `ψ(x,t) = Π cos(k_a π x_a / L_a) · (1 − t/T)^m`.
//!
//! Space integrals use the midpoint rule on cells, gradient pairings use face
//! differences against the analytic `∂ψ` at face centres, and time integrals
//! use the trapezoid rule over the snapshots.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{DoseMode, Model};
use crate::output::{csv_err, fmt_num};
use crate::stepper::{time_tol, SimState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    /// Cosine mode per axis; the second entry is ignored in 1D.
    pub k: [usize; 2],
    pub m: u32,
    pub horizon: f64,
}

impl TestFunction {
    pub fn new(k: [usize; 2], m: u32, horizon: f64) -> Result<Self> {
        if m < 1 {
            return Err(Error::domain("temporal exponent m must be at least 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self { k, m, horizon })
    }

    fn wavenumber(&self, g: &Grid, axis: usize) -> f64 {
        self.k[axis] as f64 * PI / g.length(axis)
    }

    /// Spatial factor `Π cos(k_a π x_a / L_a)`.
    pub fn space(&self, g: &Grid, x: [f64; 2]) -> f64 {
        (0..g.dim())
            .map(|a| (self.wavenumber(g, a) * x[a]).cos())
            .product()
    }

    /// `∂_a` of the spatial factor.
    pub fn space_grad(&self, g: &Grid, x: [f64; 2], axis: usize) -> f64 {
        (0..g.dim())
            .map(|a| {
                let w = self.wavenumber(g, a);
                if a == axis {
                    -w * (w * x[a]).sin()
                } else {
                    (w * x[a]).cos()
                }
            })
            .product()
    }

    /// Laplacian of the spatial factor.
    pub fn space_laplacian(&self, g: &Grid, x: [f64; 2]) -> f64 {
        let k2: f64 = (0..g.dim()).map(|a| self.wavenumber(g, a).powi(2)).sum();
        -k2 * self.space(g, x)
    }

    /// Exact `∫_Ω` of the spatial factor: `|Ω|` for the constant mode, else 0.
    pub fn space_mean_integral(&self, g: &Grid) -> f64 {
        if (0..g.dim()).all(|a| self.k[a] == 0) {
            g.measure()
        } else {
            0.0
        }
    }

    /// Temporal factor `(1 − t/T)^m`.
    pub fn time(&self, t: f64) -> f64 {
        (1.0 - t / self.horizon).powi(self.m as i32)
    }

    pub fn time_derivative(&self, t: f64) -> f64 {
        -(self.m as f64) / self.horizon * (1.0 - t / self.horizon).powi(self.m as i32 - 1)
    }

    /// `∫_a^b (1 − t/T)^m dt`
    pub fn time_integral(&self, a: f64, b: f64) -> f64 {
        let e = self.m as i32 + 1;
        let big_t = self.horizon;
        big_t / e as f64 * ((1.0 - a / big_t).powi(e) - (1.0 - b / big_t).powi(e))
    }

    pub fn eval(&self, g: &Grid, x: [f64; 2], t: f64) -> f64 {
        self.space(g, x) * self.time(t)
    }
}

/// Every `k` with entries in `0..=kmax` (per active axis) combined with every `m`.
pub fn test_family(dim: usize, kmax: usize, ms: &[u32], horizon: f64) -> Result<Vec<TestFunction>> {
    let mut out = Vec::new();
    for &m in ms {
        for kx in 0..=kmax {
            let ky_max = if dim == 2 { kmax } else { 0 };
            for ky in 0..=ky_max {
                out.push(TestFunction::new([kx, ky], m, horizon)?);
            }
        }
    }
    Ok(out)
}

/// Snapshots of one run together with the model that produced them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<SimState>,
    pub model: Model,
}

impl Trajectory {
    pub fn new(snapshots: Vec<SimState>, model: Model) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(Error::usage("a trajectory needs at least two snapshots"));
        }
        if snapshots[0].t.abs() > time_tol(0.0) {
            return Err(Error::usage(format!(
                "first snapshot must be at t = 0, got {}",
                snapshots[0].t
            )));
        }
        if snapshots.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::usage("snapshot times must be strictly increasing"));
        }
        let g = *snapshots[0].grid();
        if snapshots.iter().any(|s| *s.grid() != g) {
            return Err(Error::usage("snapshots must share one grid"));
        }
        Ok(Self { snapshots, model })
    }

    pub fn grid(&self) -> &Grid {
        self.snapshots[0].grid()
    }

    pub fn horizon(&self) -> f64 {
        self.snapshots.last().unwrap().t
    }
}

/// ψ's spatial factor sampled on the grid.
struct Sampled {
    at_cells: Vec<f64>,
    /// `(lo, hi, ∂_a ψ)` for every interior face of every axis.
    faces: Vec<(usize, usize, f64, f64)>,
    volume: f64,
}

impl Sampled {
    fn new(psi: &TestFunction, g: &Grid) -> Self {
        let at_cells = (0..g.len()).map(|i| psi.space(g, g.center(i))).collect();
        let mut faces = Vec::new();
        for axis in 0..g.dim() {
            let h = g.spacing(axis);
            g.for_each_face(axis, |lo, hi| {
                faces.push((lo, hi, psi.space_grad(g, g.face_center(axis, lo), axis), h));
            });
        }
        Self {
            at_cells,
            faces,
            volume: g.cell_volume(),
        }
    }

    /// `∫ f ψ`
    fn pair(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.at_cells
            .iter()
            .enumerate()
            .map(|(i, s)| f(i) * s)
            .sum::<f64>()
            * self.volume
    }

    /// `∫ w ∇f·∇ψ` with the face weight `w(lo, hi)`.
    fn grad_pair(&self, f: &Field, w: impl Fn(usize, usize) -> f64) -> f64 {
        let v = f.values();
        self.faces
            .iter()
            .map(|&(lo, hi, ds, h)| w(lo, hi) * (v[hi] - v[lo]) / h * ds)
            .sum::<f64>()
            * self.volume
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Equation {
    C1,
    C2,
    Chi,
    Tau,
}

fn unknown(s: &SimState, eq: Equation) -> &Field {
    match eq {
        Equation::C1 => &s.c1,
        Equation::C2 => &s.c2,
        Equation::Chi => &s.chi,
        Equation::Tau => &s.tau,
    }
}

/// Spatial part of the right-hand side paired with ψ's spatial factor.
fn rhs_space(s: &SimState, model: &Model, eq: Equation, psi: &Sampled) -> Result<f64> {
    let p = &model.params;
    let (c1, c2, chi, tau) = (s.c1.values(), s.c2.values(), s.chi.values(), s.tau.values());
    let n = c1.len();
    let mut r = Vec::with_capacity(n);
    for i in 0..n {
        r.push(model.reaction(c1[i], c2[i], chi[i], tau[i])?.as_array());
    }
    // cells move up the gradient of the signal, so the donor is the lower-signal side
    let upwind = |c: &[f64], sig: &[f64], lo: usize, hi: usize| {
        if sig[hi] > sig[lo] {
            c[lo]
        } else {
            c[hi]
        }
    };
    let out = match eq {
        Equation::C1 => {
            -p.a1 * psi.grad_pair(&s.c1, |_, _| 1.0)
                + p.b_tau * psi.grad_pair(&s.tau, |lo, hi| upwind(c1, tau, lo, hi))
                + psi.pair(|i| r[i][0])
        }
        Equation::C2 => {
            -p.a2 * psi.grad_pair(&s.c2, |_, _| 1.0)
                + p.b_chi * psi.grad_pair(&s.chi, |lo, hi| upwind(c2, chi, lo, hi))
                + psi.pair(|i| r[i][1])
        }
        Equation::Chi => -p.d_chi * psi.grad_pair(&s.chi, |_, _| 1.0) + psi.pair(|i| r[i][2]),
        Equation::Tau => {
            let diff = if p.eps > 0.0 {
                -p.eps * psi.grad_pair(&s.tau, |_, _| 1.0)
            } else {
                0.0
            };
            diff + psi.pair(|i| r[i][3])
        }
    };
    Ok(out)
}

/// `∫₀ᵀ∫_Ω F ψ` for the trajectory's supply schedule, in closed form.
pub fn supply_term(traj: &Trajectory, psi: &TestFunction) -> f64 {
    let s = &traj.model.schedule;
    let g = traj.grid();
    let big_t = psi.horizon;
    let space = psi.space_mean_integral(g);
    if space == 0.0 || s.chi0 == 0.0 {
        return 0.0;
    }
    let amp = s.amplitude(g.measure());
    match s.mode {
        DoseMode::Pulse => s
            .dose_times
            .iter()
            .map(|&tk| {
                let a = tk.clamp(0.0, big_t);
                let b = (tk + s.pulse_width).clamp(0.0, big_t);
                amp * space * psi.time_integral(a, b)
            })
            .sum(),
        // doses at t = 0 are already part of the initial snapshot
        DoseMode::Jump => s
            .dose_times
            .iter()
            .filter(|&&tk| tk > time_tol(0.0) && tk < big_t)
            .map(|&tk| amp * space * psi.time(tk))
            .sum(),
    }
}

fn residual(traj: &Trajectory, psi: &TestFunction, eq: Equation) -> Result<f64> {
    let big_t = traj.horizon();
    if (big_t - psi.horizon).abs() > time_tol(psi.horizon) {
        return Err(Error::usage(format!(
            "trajectory ends at {big_t} but the test function horizon is {}",
            psi.horizon
        )));
    }
    let sampled = Sampled::new(psi, traj.grid());
    // integrand of LHS − RHS at each snapshot time
    let mut g = Vec::with_capacity(traj.snapshots.len());
    for s in &traj.snapshots {
        let u = unknown(s, eq).values();
        let lhs = -psi.time_derivative(s.t) * sampled.pair(|i| u[i]);
        let rhs = psi.time(s.t) * rhs_space(s, &traj.model, eq, &sampled)?;
        g.push((s.t, lhs - rhs));
    }
    let integral: f64 = g
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    let u0 = unknown(&traj.snapshots[0], eq).values();
    let initial = psi.time(0.0) * sampled.pair(|i| u0[i]);
    let supply = if eq == Equation::Chi {
        supply_term(traj, psi)
    } else {
        0.0
    };
    Ok((integral - initial - supply).abs())
}

pub fn residual_c1(traj: &Trajectory, psi: &TestFunction) -> Result<f64> {
    residual(traj, psi, Equation::C1)
}

pub fn residual_c2(traj: &Trajectory, psi: &TestFunction) -> Result<f64> {
    residual(traj, psi, Equation::C2)
}

pub fn residual_chi(traj: &Trajectory, psi: &TestFunction) -> Result<f64> {
    residual(traj, psi, Equation::Chi)
}

pub fn residual_tau(traj: &Trajectory, psi: &TestFunction) -> Result<f64> {
    residual(traj, psi, Equation::Tau)
}

pub const EQUATION_NAMES: [&str; 4] = ["c1", "c2", "chi", "tau"];

/// Residuals of all four equations, ordered c1, c2, χ, τ.
pub fn residuals(traj: &Trajectory, psi: &TestFunction) -> Result<[f64; 4]> {
    Ok([
        residual_c1(traj, psi)?,
        residual_c2(traj, psi)?,
        residual_chi(traj, psi)?,
        residual_tau(traj, psi)?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub equation: &'static str,
    pub k: [usize; 2],
    pub m: u32,
    pub level: usize,
    pub residual: f64,
}

/// One row per equation and test function.
pub fn residual_table(
    traj: &Trajectory,
    family: &[TestFunction],
    level: usize,
) -> Result<Vec<ResidualRow>> {
    let mut rows = Vec::new();
    for psi in family {
        let r = residuals(traj, psi)?;
        for (e, &v) in EQUATION_NAMES.iter().zip(&r) {
            rows.push(ResidualRow {
                equation: e,
                k: psi.k,
                m: psi.m,
                level,
                residual: v,
            });
        }
    }
    Ok(rows)
}

pub fn write_residual_csv(out: impl Write, rows: &[ResidualRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["equation", "kx", "ky", "m", "level", "residual"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.equation.to_string(),
            r.k[0].to_string(),
            r.k[1].to_string(),
            r.m.to_string(),
            r.level.to_string(),
            fmt_num(r.residual),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::MonitorConfig;
    use crate::model::{ModelParams, RateFunction, SupplySchedule};
    use crate::output::{MemorySnapshots, Sinks};
    use crate::stepper::{run, StepControl};

    fn params() -> ModelParams {
        ModelParams::default()
    }

    fn state(g: Grid, f: [&dyn Fn([f64; 2]) -> f64; 4]) -> SimState {
        let [a, b, c, d] = f.map(|h| Field::from_fn(g, h).unwrap());
        SimState::new(0.0, a, b, c, d).unwrap()
    }

    fn simulate(
        initial: SimState,
        model: &Model,
        t_end: f64,
        save_every: f64,
        dt_max: f64,
    ) -> Trajectory {
        let mut snaps = MemorySnapshots::default();
        let ctrl = StepControl {
            dt_max,
            cfl_safety: 0.5,
            t_end,
            save_every,
        };
        let mut sinks = Sinks::none();
        sinks.snapshots = Some(&mut snaps);
        run(
            &initial,
            model,
            &ctrl,
            &MonitorConfig::default(),
            &mut sinks,
        )
        .unwrap();
        Trajectory::new(snaps.states, model.clone()).unwrap()
    }

    #[test]
    fn analytic_derivatives() {
        let g = Grid::new_2d(4, 4, 2.0, 1.0).unwrap();
        let psi = TestFunction::new([1, 2], 2, 3.0).unwrap();
        let x = [0.3, 0.7];
        let h = 1e-6;
        for axis in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[axis] += h;
            xm[axis] -= h;
            let fd = (psi.space(&g, xp) - psi.space(&g, xm)) / (2.0 * h);
            assert!((fd - psi.space_grad(&g, x, axis)).abs() < 1e-7);
        }
        let fd = (psi.time(1.0 + h) - psi.time(1.0 - h)) / (2.0 * h);
        assert!((fd - psi.time_derivative(1.0)).abs() < 1e-8);
        let n = 100_000;
        let quad: f64 = (0..n)
            .map(|i| psi.time(0.5 + (i as f64 + 0.5) * 2.0 / n as f64))
            .sum::<f64>()
            * 2.0
            / n as f64;
        assert!((quad - psi.time_integral(0.5, 2.5)).abs() < 1e-9);
        // Neumann and terminal conditions
        assert!(psi.space_grad(&g, [0.0, 0.4], 0).abs() < 1e-15);
        assert!(psi.space_grad(&g, [1.3, 1.0], 1).abs() < 1e-14);
        assert_eq!(psi.time(3.0), 0.0);
    }

    #[test]
    fn family_sizes() {
        assert_eq!(test_family(1, 3, &[1, 2], 1.0).unwrap().len(), 8);
        assert_eq!(test_family(2, 3, &[1, 2], 1.0).unwrap().len(), 32);
        assert!(TestFunction::new([0, 0], 0, 1.0).is_err());
    }

    #[test]
    fn zero_trajectory_has_zero_residuals() {
        let g = Grid::new_2d(6, 5, 1.0, 1.0).unwrap();
        let z = |_: [f64; 2]| 0.0;
        let snaps: Vec<SimState> = (0..5)
            .map(|j| {
                let mut s = state(g, [&z, &z, &z, &z]);
                s.t = j as f64 * 0.25;
                s
            })
            .collect();
        let m = Model::new(
            params(),
            RateFunction::constant(0.5),
            RateFunction::constant(0.5),
            SupplySchedule::none(),
        );
        let traj = Trajectory::new(snaps, m).unwrap();
        for psi in test_family(2, 3, &[1, 2], 1.0).unwrap() {
            for r in residuals(&traj, &psi).unwrap() {
                assert!(r <= 1e-14);
            }
        }
    }

    #[test]
    fn horizon_mismatch_is_usage_error() {
        let g = Grid::new_1d(4, 1.0).unwrap();
        let one = |_: [f64; 2]| 1.0;
        let mut s1 = state(g, [&one, &one, &one, &one]);
        let s0 = s1.clone();
        s1.t = 0.5;
        let m = Model::new(
            params(),
            RateFunction::constant(0.5),
            RateFunction::constant(0.5),
            SupplySchedule::none(),
        );
        let traj = Trajectory::new(vec![s0, s1], m).unwrap();
        let psi = TestFunction::new([0, 0], 1, 1.0).unwrap();
        assert!(matches!(residual_c1(&traj, &psi), Err(Error::Usage(_))));
    }

    #[test]
    fn trajectory_validation() {
        let g = Grid::new_1d(4, 1.0).unwrap();
        let one = |_: [f64; 2]| 1.0;
        let s = state(g, [&one, &one, &one, &one]);
        let m = Model::new(
            params(),
            RateFunction::constant(0.5),
            RateFunction::constant(0.5),
            SupplySchedule::none(),
        );
        assert!(Trajectory::new(vec![s.clone()], m.clone()).is_err());
        let mut late = s.clone();
        late.t = 0.1;
        assert!(Trajectory::new(vec![late.clone(), late], m.clone()).is_err());
        assert!(Trajectory::new(vec![s.clone(), s], m).is_err());
    }

    #[test]
    fn constant_mode_is_mass_budget() {
        // k = 0, m = 1: residual_c1 = |−∫₀ᵀ ∫c1 ∂tψ − ∫c10 − ∫₀ᵀ (1−t/T)∫r1|
        let g = Grid::new_1d(32, 1.0).unwrap();
        let init = state(
            g,
            [
                &|x| 0.4 + 0.1 * (PI * x[0]).cos(),
                &|_| 0.1,
                &|x| 1.0 + 0.2 * (PI * x[0]).cos(),
                &|_| 0.3,
            ],
        );
        let m = Model::new(
            params(),
            RateFunction::constant(0.4),
            RateFunction::constant(0.2),
            SupplySchedule::none(),
        );
        let traj = simulate(init, &m, 1.0, 0.01, 1e-3);
        let psi = TestFunction::new([0, 0], 1, 1.0).unwrap();
        // budget accumulated independently: mass(T) − mass(0) = ∫₀ᵀ∫ r1, so with ψ=(1−t)
        // integration by parts gives ∫₀ᵀ mass dt − mass(0) − ∫₀ᵀ(1−t)∫r1 dt = 0
        let mass: Vec<(f64, f64)> = traj
            .snapshots
            .iter()
            .map(|s| (s.t, s.c1.integrate()))
            .collect();
        let react: Vec<(f64, f64)> = traj
            .snapshots
            .iter()
            .map(|s| {
                let r: f64 = (0..g.len())
                    .map(|i| {
                        m.reaction(
                            s.c1.values()[i],
                            s.c2.values()[i],
                            s.chi.values()[i],
                            s.tau.values()[i],
                        )
                        .unwrap()
                        .c1
                    })
                    .sum::<f64>()
                    * g.cell_volume();
                (s.t, (1.0 - s.t) * r)
            })
            .collect();
        let trap = |v: &[(f64, f64)]| {
            v.windows(2)
                .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
                .sum::<f64>()
        };
        let budget = (trap(&mass) - mass[0].1 - trap(&react)).abs();
        let r = residual_c1(&traj, &psi).unwrap();
        assert!((r - budget).abs() < 1e-12, "{r} {budget}");
        assert!(r < 1e-3);
    }

    #[test]
    fn jump_dose_weight() {
        let g = Grid::new_1d(8, 2.0).unwrap();
        let sched = SupplySchedule::new(vec![0.0, 0.25, 1.0], 1.5, DoseMode::Jump, 0.0).unwrap();
        let m = Model::new(
            params(),
            RateFunction::constant(0.5),
            RateFunction::constant(0.5),
            sched,
        );
        let one = |_: [f64; 2]| 1.0;
        let s0 = state(g, [&one, &one, &one, &one]);
        let mut s1 = s0.clone();
        s1.t = 1.0;
        let traj = Trajectory::new(vec![s0, s1], m).unwrap();
        let psi = TestFunction::new([0, 0], 1, 1.0).unwrap();
        // only the dose at 0.25 counts, weighted by ψ(0.25) = 0.75
        assert!((supply_term(&traj, &psi) - 1.5 * 0.75).abs() < 1e-15);
        let psi1 = TestFunction::new([1, 0], 1, 1.0).unwrap();
        assert_eq!(supply_term(&traj, &psi1), 0.0);
    }

    #[test]
    fn pulse_supply_closed_form() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let sched = SupplySchedule::new(vec![0.2, 0.9], 2.0, DoseMode::Pulse, 0.2).unwrap();
        let m = Model::new(
            params(),
            RateFunction::constant(0.5),
            RateFunction::constant(0.5),
            sched,
        );
        let one = |_: [f64; 2]| 1.0;
        let s0 = state(g, [&one, &one, &one, &one]);
        let mut s1 = s0.clone();
        s1.t = 1.0;
        let traj = Trajectory::new(vec![s0, s1], m).unwrap();
        let psi = TestFunction::new([0, 0], 2, 1.0).unwrap();
        // ∫ 2 (1−t)² over [0.2,0.4] and the clipped [0.9,1.0]
        let f = |a: f64, b: f64| 2.0 * ((1.0 - a).powi(3) - (1.0 - b).powi(3)) / 3.0;
        assert!((supply_term(&traj, &psi) - f(0.2, 0.4) - f(0.9, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn heat_mode_residual_is_small() {
        let g = Grid::new_1d(128, 1.0).unwrap();
        let mut p = params();
        p.d_chi = 1.0;
        let m = Model::new(
            p,
            RateFunction::constant(0.5),
            RateFunction::constant(0.5),
            SupplySchedule::none(),
        );
        let z = |_: [f64; 2]| 0.0;
        let init = state(g, [&z, &z, &|x| 1.0 + 0.5 * (PI * x[0]).cos(), &|_| 1.0]);
        let traj = simulate(init, &m, 0.2, 0.002, 1e-4);
        for psi in test_family(1, 3, &[1, 2], 0.2).unwrap() {
            let r = residual_chi(&traj, &psi).unwrap();
            assert!(r < 1e-4, "{psi:?} {r}");
        }
    }

    #[test]
    fn chemotaxis_pairing_matches_split_form() {
        // ∫c2∇χ·∇ψ = −∫c2χΔψ − ∫χ∇c2·∇ψ for Neumann-compatible ψ
        let c2f = |x: f64| 1.0 + 0.5 * (PI * x).cos();
        let chif = |x: f64| 2.0 + (2.0 * PI * x).cos();
        let psi = TestFunction::new([1, 0], 1, 1.0).unwrap();
        let n = 100_000;
        let split: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                let g1 = Grid::new_1d(3, 1.0).unwrap();
                let dc2 = -0.5 * PI * (PI * x).sin();
                -c2f(x) * chif(x) * psi.space_laplacian(&g1, [x, 0.0])
                    - chif(x) * dc2 * psi.space_grad(&g1, [x, 0.0], 0)
            })
            .sum::<f64>()
            / n as f64;
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let g = Grid::new_1d(n, 1.0).unwrap();
            let c2 = Field::from_fn(g, |x| c2f(x[0])).unwrap();
            let chi = Field::from_fn(g, |x| chif(x[0])).unwrap();
            let s = Sampled::new(&psi, &g);
            let (cv, xv) = (c2.values(), chi.values());
            let v = s.grad_pair(&chi, |lo, hi| if xv[hi] > xv[lo] { cv[lo] } else { cv[hi] });
            errs.push((v - split).abs());
        }
        assert!(errs[2] < 0.02 && errs[0] / errs[2] > 3.5, "{errs:?}");
        // a uniform medium carries no chemotactic flux
        let g = Grid::new_1d(16, 1.0).unwrap();
        let s = Sampled::new(&psi, &g);
        assert_eq!(s.grad_pair(&Field::constant(g, 2.0), |_, _| 1.0), 0.0);
    }

    #[test]
    fn residual_table_and_csv() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let init = state(g, [&|_| 0.5, &|_| 0.1, &|_| 1.0, &|_| 0.2]);
        let m = Model::new(
            params(),
            RateFunction::constant(0.3),
            RateFunction::constant(0.1),
            SupplySchedule::none(),
        );
        let traj = simulate(init, &m, 0.1, 0.05, 1e-3);
        let fam = test_family(1, 1, &[1], 0.1).unwrap();
        let rows = residual_table(&traj, &fam, 2).unwrap();
        assert_eq!(rows.len(), 8);
        let mut buf = Vec::new();
        write_residual_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.lines().nth(1).unwrap().starts_with("c1,0,0,1,2,"));
    }
}
