//! Runs one scenario for a decreasing sequence of ε and measures how the
//! trajectories and the ε-only terms behave as ε shrinks.

use std::io::Write;

use rayon::prelude::*;

use crate::diagnostics::fisher_information;
use crate::error::{Error, Result};
use crate::grid::gradient_sq;
use crate::model::damping_power;
use crate::output::{csv_err, fmt_num};
use crate::scenario::Scenario;
use crate::stepper::{time_tol, SimState};

/// Exponent of the Sobolev-type norm used for c2.
pub const C2_EXPONENT: f64 = 1.25;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Non-increasing values in `(0, 1)`.
    pub eps_list: Vec<f64>,
    pub base: Scenario,
}

impl SweepConfig {
    pub fn new(eps_list: Vec<f64>, base: Scenario) -> Result<Self> {
        if eps_list.is_empty() {
            return Err(Error::usage("eps list is empty"));
        }
        if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::domain(format!(
                "eps values must lie in (0, 1), got {e}"
            )));
        }
        if eps_list.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::usage("eps list must be non-increasing"));
        }
        Ok(Self { eps_list, base })
    }
}

/// One member run: its ε, snapshots and artificial-term sizes.
#[derive(Debug, Clone)]
pub struct SweepMember {
    pub eps: f64,
    pub snapshots: Vec<SimState>,
    /// `ε∫∫c1^θ`, `ε∫∫c2^θ`, `ε∫∫|∇τ|²/τ`
    pub artificial: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub members: Vec<SweepMember>,
    /// Distances between consecutive members, ordered c1, c2, χ, τ; entry `j`
    /// compares member `j` with member `j + 1`.
    pub pair_distances: Vec<[f64; 4]>,
}

fn trapezoid(samples: &[(f64, f64)]) -> f64 {
    samples
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

fn artificial_terms(eps: f64, theta: f64, snaps: &[SimState]) -> [f64; 3] {
    let series = |f: &dyn Fn(&SimState) -> f64| -> f64 {
        trapezoid(&snaps.iter().map(|s| (s.t, f(s))).collect::<Vec<_>>())
    };
    [
        eps * series(&|s| s.c1.map(|v| damping_power(v, theta)).integrate()),
        eps * series(&|s| s.c2.map(|v| damping_power(v, theta)).integrate()),
        eps * series(&|s| fisher_information(&s.tau)),
    ]
}

fn check_compatible(a: &[SimState], b: &[SimState]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "trajectories have {} and {} snapshots",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        if x.grid() != y.grid() {
            return Err(Error::usage("trajectories live on different grids"));
        }
        if (x.t - y.t).abs() > time_tol(x.t) {
            return Err(Error::usage(format!(
                "snapshot times differ: {} vs {}",
                x.t, y.t
            )));
        }
    }
    Ok(())
}

/// Space-time distances: `L²` for c1, χ, τ and `L^{5/4}(W^{1,5/4})` for c2.
pub fn trajectory_distance(a: &[SimState], b: &[SimState]) -> Result<[f64; 4]> {
    check_compatible(a, b)?;
    let p = C2_EXPONENT;
    let mut series: [Vec<(f64, f64)>; 4] = Default::default();
    for (x, y) in a.iter().zip(b) {
        let vol = x.grid().cell_volume();
        let l2 = |f: &crate::grid::Field, g: &crate::grid::Field| -> f64 {
            f.values()
                .iter()
                .zip(g.values())
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
                * vol
        };
        let diff = crate::grid::Field::new(
            *x.grid(),
            x.c2.values()
                .iter()
                .zip(y.c2.values())
                .map(|(u, v)| u - v)
                .collect(),
        )?;
        let w = diff.values().iter().map(|d| d.abs().powf(p)).sum::<f64>() * vol
            + gradient_sq(&diff)
                .values()
                .iter()
                .map(|g2| g2.powf(0.5 * p))
                .sum::<f64>()
                * vol;
        series[0].push((x.t, l2(&x.c1, &y.c1)));
        series[1].push((x.t, w));
        series[2].push((x.t, l2(&x.chi, &y.chi)));
        series[3].push((x.t, l2(&x.tau, &y.tau)));
    }
    Ok([
        trapezoid(&series[0]).sqrt(),
        trapezoid(&series[1]).powf(1.0 / p),
        trapezoid(&series[2]).sqrt(),
        trapezoid(&series[3]).sqrt(),
    ])
}

fn run_member(base: &Scenario, eps: f64) -> Result<SweepMember> {
    let sc = base.with_eps(eps);
    let snapshots = sc.simulate()?.snapshots;
    let artificial = artificial_terms(eps, sc.model.params.theta, &snapshots);
    Ok(SweepMember {
        eps,
        snapshots,
        artificial,
    })
}

/// Runs every member (concurrently when threads are available), then compares
/// consecutive members in list order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    let members: Vec<SweepMember> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| run_member(&cfg.base, eps))
        .collect::<Result<_>>()?;
    let pair_distances = members
        .windows(2)
        .map(|w| trajectory_distance(&w[0].snapshots, &w[1].snapshots))
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        members,
        pair_distances,
    })
}

/// The ε = 0 run of the sweep's base scenario.
pub fn run_limit(cfg: &SweepConfig) -> Result<Vec<SimState>> {
    Ok(cfg.base.with_eps(0.0).simulate()?.snapshots)
}

/// Distance of every member to the limit trajectory.
pub fn compare_to_limit(report: &SweepReport, limit: &[SimState]) -> Result<Vec<[f64; 4]>> {
    report
        .members
        .iter()
        .map(|m| trajectory_distance(&m.snapshots, limit))
        .collect()
}

/// `eps,pair_distance_c1,…,art_tau`; row `j` holds the distance from member
/// `j − 1`, blank on the first row.
pub fn write_sweep_csv(out: impl Write, report: &SweepReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "eps",
        "pair_distance_c1",
        "pair_distance_c2",
        "pair_distance_chi",
        "pair_distance_tau",
        "art_c1",
        "art_c2",
        "art_tau",
    ])
    .map_err(csv_err)?;
    for (j, m) in report.members.iter().enumerate() {
        let mut row = vec![fmt_num(m.eps)];
        match j.checked_sub(1).map(|i| report.pair_distances[i]) {
            Some(d) => row.extend(d.map(fmt_num)),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        row.extend(m.artificial.map(fmt_num));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_limit_csv(
    out: impl Write,
    report: &SweepReport,
    distances: &[[f64; 4]],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "eps",
        "limit_distance_c1",
        "limit_distance_c2",
        "limit_distance_chi",
        "limit_distance_tau",
    ])
    .map_err(csv_err)?;
    for (m, d) in report.members.iter().zip(distances) {
        let mut row = vec![fmt_num(m.eps)];
        row.extend(d.map(fmt_num));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::MonitorConfig;
    use crate::grid::{Field, Grid};
    use crate::model::{Model, ModelParams, RateFunction, SupplySchedule};
    use crate::stepper::StepControl;

    fn small() -> Scenario {
        let mut s = Scenario::default_1d(16).unwrap();
        s.control.t_end = 0.5;
        s.control.save_every = 0.1;
        s
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::new(vec![], small()).is_err());
        assert!(SweepConfig::new(vec![0.5, 1.0], small()).is_err());
        assert!(SweepConfig::new(vec![0.25, 0.5], small()).is_err());
        assert!(SweepConfig::new(vec![0.5, 0.5, 0.25], small()).is_ok());
    }

    #[test]
    fn single_member_has_no_pairs() {
        let r = run_sweep(&SweepConfig::new(vec![0.25], small()).unwrap()).unwrap();
        assert_eq!(r.members.len(), 1);
        assert!(r.pair_distances.is_empty());
        assert!(r.members[0].artificial.iter().all(|v| *v > 0.0));
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("0.25,,,,,"));
    }

    #[test]
    fn repeated_eps_gives_zero_distance() {
        let r = run_sweep(&SweepConfig::new(vec![0.3, 0.3], small()).unwrap()).unwrap();
        assert_eq!(r.pair_distances[0], [0.0; 4]);
    }

    #[test]
    fn limit_compared_to_itself() {
        let cfg = SweepConfig::new(vec![0.1], small()).unwrap();
        let limit = run_limit(&cfg).unwrap();
        assert_eq!(trajectory_distance(&limit, &limit).unwrap(), [0.0; 4]);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = small().simulate().unwrap().snapshots;
        let mut other = Scenario::default_1d(8).unwrap();
        other.control = small().control;
        let b = other.simulate().unwrap().snapshots;
        assert!(matches!(trajectory_distance(&a, &b), Err(Error::Usage(_))));
    }

    #[test]
    fn distance_of_constant_offset() {
        let g = Grid::new_1d(10, 2.0).unwrap();
        let mk = |t: f64, v: f64| {
            SimState::new(
                t,
                Field::constant(g, v),
                Field::constant(g, v),
                Field::constant(g, v),
                Field::constant(g, v),
            )
            .unwrap()
        };
        let a = vec![mk(0.0, 1.0), mk(1.0, 1.0), mk(3.0, 1.0)];
        let b = vec![mk(0.0, 1.5), mk(1.0, 1.5), mk(3.0, 1.5)];
        let d = trajectory_distance(&a, &b).unwrap();
        // ‖0.5‖ over |Ω|·T = 6
        assert!((d[0] - (0.25f64 * 6.0).sqrt()).abs() < 1e-14);
        assert!((d[1] - 0.5 * 6f64.powf(0.8)).abs() < 1e-14);
    }

    #[test]
    fn tau_only_limit_distance_shrinks_with_eps() {
        // c1 = c2 = 0: τ' = εΔτ − μτ; the ε-effect is bounded by ε T ‖Δτ₀‖ scale
        let g = Grid::new_1d(32, 1.0).unwrap();
        let mut p = ModelParams::default();
        p.mu = 1.0;
        let base = Scenario {
            initial: SimState::new(
                0.0,
                Field::zeros(g),
                Field::zeros(g),
                Field::constant(g, 1.0),
                Field::from_fn(g, |x| 1.0 + 0.5 * (std::f64::consts::PI * x[0]).cos()).unwrap(),
            )
            .unwrap(),
            model: Model::new(
                p,
                RateFunction::constant(0.1),
                RateFunction::constant(0.1),
                SupplySchedule::none(),
            ),
            control: StepControl {
                dt_max: 1e-3,
                cfl_safety: 0.5,
                t_end: 0.5,
                save_every: 0.05,
            },
            monitor: MonitorConfig::default(),
        };
        let cfg = SweepConfig::new(vec![0.2, 0.1, 0.05], base).unwrap();
        let r = run_sweep(&cfg).unwrap();
        let d = compare_to_limit(&r, &run_limit(&cfg).unwrap()).unwrap();
        // ‖τ^ε(t) − τ⁰(t)‖ ≤ ε t ‖Δτ₀‖, so the space-time norm is at most ε ‖Δτ₀‖ T^{3/2}/√3
        let lap_norm = std::f64::consts::PI.powi(2) * 0.5 / 2f64.sqrt();
        let bound = lap_norm * 0.5f64.powf(1.5) / 3f64.sqrt();
        for (m, dist) in r.members.iter().zip(&d) {
            assert!(
                dist[3] <= m.eps * bound,
                "{} {} {}",
                m.eps,
                dist[3],
                m.eps * bound
            );
            assert_eq!(dist[0], 0.0);
        }
        assert!(d[0][3] > d[1][3] && d[1][3] > d[2][3]);
    }
}
