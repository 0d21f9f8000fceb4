//! Initial-data recipes and ready-made simulation setups.

use std::path::PathBuf;

use crate::diagnostics::{DiagnosticsRecord, MonitorConfig};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{DoseMode, Model, ModelParams, RateFunction, SupplySchedule};
use crate::output::{read_snapshot, MemorySink, MemorySnapshots, Sinks};
use crate::stepper::{run, RunOutcome, SimState, StepControl, FIELD_NAMES};

/// How one field is filled at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    Uniform(f64),
    /// `mean + amplitude · Π cos(k_a π x_a / L_a)`
    Cosine {
        mean: f64,
        amplitude: f64,
        k: [usize; 2],
    },
    /// Column of a snapshot CSV with the field's own name.
    File(PathBuf),
}

impl Initializer {
    /// `field` is the column index (c1, c2, χ, τ) used by file initializers.
    pub fn build(&self, grid: Grid, field: usize) -> Result<Field> {
        match self {
            Initializer::Uniform(v) => Field::new(grid, vec![*v; grid.len()]),
            Initializer::Cosine { mean, amplitude, k } => Field::from_fn(grid, |x| {
                let mut v = 1.0;
                for a in 0..grid.dim() {
                    v *= (k[a] as f64 * std::f64::consts::PI * x[a] / grid.length(a)).cos();
                }
                mean + amplitude * v
            }),
            Initializer::File(path) => {
                let s = read_snapshot(path, grid, 0.0)?;
                Ok(s.fields()[field].clone())
            }
        }
    }
}

/// Builds the initial state and checks `c ≥ 0` and `χ, τ > 0` cellwise.
pub fn initial_state(grid: Grid, init: &[Initializer; 4]) -> Result<SimState> {
    let mut fields = Vec::with_capacity(4);
    for (k, i) in init.iter().enumerate() {
        let f = i.build(grid, k)?;
        let strict = k >= 2;
        if let Some(idx) = f
            .values()
            .iter()
            .position(|&v| if strict { v <= 0.0 } else { v < 0.0 })
        {
            let rule = if strict {
                "must be positive"
            } else {
                "must be non-negative"
            };
            return Err(Error::domain(format!(
                "initial {} {rule}; cell {idx} has {}",
                FIELD_NAMES[k],
                f.values()[idx]
            )));
        }
        fields.push(f);
    }
    let tau = fields.pop().unwrap();
    let chi = fields.pop().unwrap();
    let c2 = fields.pop().unwrap();
    let c1 = fields.pop().unwrap();
    SimState::new(0.0, c1, c2, chi, tau)
}

/// Everything needed for one run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub initial: SimState,
    pub model: Model,
    pub control: StepControl,
    pub monitor: MonitorConfig,
}

/// Output of [`Scenario::simulate`].
#[derive(Debug, Clone)]
pub struct Collected {
    pub outcome: RunOutcome,
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<SimState>,
}

impl Scenario {
    /// Runs to `t_end`, keeping every record and snapshot in memory.
    pub fn simulate(&self) -> Result<Collected> {
        let mut records = MemorySink::default();
        let mut snaps = MemorySnapshots::default();
        let outcome = {
            let mut sinks = Sinks::diagnostics(&mut records).with_snapshots(&mut snaps);
            run(
                &self.initial,
                &self.model,
                &self.control,
                &self.monitor,
                &mut sinks,
            )?
        };
        Ok(Collected {
            outcome,
            records: records.records,
            snapshots: snaps.states,
        })
    }

    /// Runs to `t_end` recording diagnostics only.
    pub fn diagnostics(&self) -> Result<(RunOutcome, Vec<DiagnosticsRecord>)> {
        let mut records = MemorySink::default();
        let outcome = run(
            &self.initial,
            &self.model,
            &self.control,
            &self.monitor,
            &mut Sinks::diagnostics(&mut records),
        )?;
        Ok((outcome, records.records))
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        let mut s = self.clone();
        s.model.params.eps = eps;
        s
    }

    /// Two-dimensional unit square with smooth, non-uniform data and a dose
    /// every 3 time units (days) over 21.
    pub fn default_2d(n: usize) -> Result<Self> {
        let grid = Grid::new_2d(n, n, 1.0, 1.0)?;
        let initial = initial_state(grid, &default_initializers())?;
        Ok(Self {
            initial,
            model: default_model(),
            control: StepControl {
                dt_max: 0.01,
                cfl_safety: 0.5,
                t_end: 21.0,
                save_every: 1.0,
            },
            monitor: MonitorConfig::default(),
        })
    }

    /// The same data on `[0, 1]`; cosine modes keep only their x-index.
    pub fn default_1d(n: usize) -> Result<Self> {
        let grid = Grid::new_1d(n, 1.0)?;
        let initial = initial_state(grid, &default_initializers())?;
        let mut s = Self::default_2d(3)?;
        s.initial = initial;
        Ok(s)
    }
}

pub fn default_initializers() -> [Initializer; 4] {
    [
        Initializer::Cosine {
            mean: 0.4,
            amplitude: 0.2,
            k: [1, 1],
        },
        Initializer::Cosine {
            mean: 0.1,
            amplitude: 0.05,
            k: [1, 0],
        },
        Initializer::Cosine {
            mean: 1.0,
            amplitude: 0.5,
            k: [2, 1],
        },
        Initializer::Cosine {
            mean: 0.5,
            amplitude: 0.2,
            k: [1, 2],
        },
    ]
}

pub fn default_model() -> Model {
    let dose_times = (0..7).map(|k| 3.0 * k as f64).collect();
    Model::new(
        ModelParams::default(),
        RateFunction::saturating(0.5, 0.5),
        RateFunction::constant(0.25),
        SupplySchedule::new(dose_times, 1.0, DoseMode::Pulse, 1.0).expect("valid default schedule"),
    )
}
