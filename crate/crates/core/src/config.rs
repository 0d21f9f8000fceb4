//! Line-oriented run configuration: one `section.key = value` per line,
//! `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use crate::diagnostics::{EntropyParams, MonitorConfig, Tolerances};
use crate::grid::Grid;
use crate::model::{
    DoseMode, Model, ModelParams, RateFunction, RateKind, SupplySchedule, DEFAULT_RATE_FLOOR,
};
use crate::scenario::{initial_state, Initializer, Scenario};
use crate::stepper::{SimState, StepControl};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn build(&self) -> crate::error::Result<Grid> {
        if self.dim == 1 {
            Grid::new_1d(self.nx, self.lx)
        } else {
            Grid::new_2d(self.nx, self.ny, self.lx, self.ly)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub snapshots: bool,
}

/// A fully validated run description with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub params: ModelParams,
    pub alpha1: RateFunction,
    pub alpha2: RateFunction,
    pub schedule: SupplySchedule,
    pub initial: [Initializer; 4],
    pub control: StepControl,
    pub output: OutputSpec,
    pub monitor: MonitorConfig,
    /// Step of the homogeneous RK4 reference.
    pub oracle_dt: f64,
}

const INITIAL_SECTIONS: [&str; 4] = ["c10", "c20", "chi0", "tau0"];
const INITIAL_KEYS: [&str; 6] = ["uniform", "mean", "amplitude", "kx", "ky", "file"];

const FIXED_KEYS: &[&str] = &[
    "grid.dim",
    "grid.nx",
    "grid.ny",
    "grid.lx",
    "grid.ly",
    "params.a1",
    "params.a2",
    "params.b_tau",
    "params.b_chi",
    "params.d_chi",
    "params.a_chi",
    "params.beta",
    "params.delta",
    "params.mu",
    "params.eps",
    "params.theta",
    "rates.alpha1_kind",
    "rates.alpha1_amplitude",
    "rates.alpha1_half_saturation",
    "rates.alpha2_kind",
    "rates.alpha2_amplitude",
    "rates.alpha2_half_saturation",
    "rates.floor_factor",
    "schedule.dose_times",
    "schedule.chi0",
    "schedule.mode",
    "schedule.width",
    "control.t_end",
    "control.dt_max",
    "control.cfl_safety",
    "control.save_every",
    "output.dir",
    "output.snapshots",
    "entropy.zeta",
    "entropy.varrho",
    "certify.tol_rel",
    "certify.tol_abs",
    "certify.m1_override",
    "certify.tau_star_override",
    "oracle.dt",
];

fn is_known(key: &str) -> bool {
    if FIXED_KEYS.contains(&key) {
        return true;
    }
    match key.split_once('.') {
        Some((s, k)) => INITIAL_SECTIONS.contains(&s) && INITIAL_KEYS.contains(&k),
        None => false,
    }
}

/// Raw `key -> (line, value)` table with typed, line-aware accessors.
struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> CResult<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::at(
                    line,
                    format!("expected `section.key = value`, got `{content}`"),
                ));
            };
            let key = key.trim();
            if !is_known(key) {
                return Err(ConfigError::at(line, format!("unknown key `{key}`")));
            }
            if let Some((first, _)) = map.get(key) {
                return Err(ConfigError::at(
                    line,
                    format!("duplicate key `{key}` (first set at line {first})"),
                ));
            }
            map.insert(key.to_string(), (line, value.trim().to_string()));
        }
        Ok(Self { map })
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.0)
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn raw(&self, key: &str) -> CResult<Option<(usize, &str)>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((l, v)) if v.is_empty() && key != "schedule.dose_times" => {
                Err(ConfigError::at(*l, format!("`{key}` has no value")))
            }
            Some((l, v)) => Ok(Some((*l, v.as_str()))),
        }
    }

    fn float(&self, key: &str) -> CResult<Option<(usize, f64)>> {
        let Some((l, v)) = self.raw(key)? else {
            return Ok(None);
        };
        Ok(Some((l, parse_number(l, key, v)?)))
    }

    /// Numeric value satisfying `rule`, or `default` when absent.
    fn number(&self, key: &str, default: Option<f64>, rule: Rule) -> CResult<f64> {
        match self.float(key)? {
            Some((l, v)) => {
                rule.check(key, v).map_err(|m| ConfigError::at(l, m))?;
                Ok(v)
            }
            None => {
                default.ok_or_else(|| ConfigError::global(format!("missing required key `{key}`")))
            }
        }
    }

    fn optional(&self, key: &str, rule: Rule) -> CResult<Option<f64>> {
        match self.float(key)? {
            Some((l, v)) => {
                rule.check(key, v).map_err(|m| ConfigError::at(l, m))?;
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    fn count(&self, key: &str, default: Option<usize>) -> CResult<usize> {
        match self.raw(key)? {
            Some((l, v)) => v.parse::<usize>().map_err(|_| {
                ConfigError::at(
                    l,
                    format!("`{key}` must be a non-negative integer, got `{v}`"),
                )
            }),
            None => {
                default.ok_or_else(|| ConfigError::global(format!("missing required key `{key}`")))
            }
        }
    }

    fn flag(&self, key: &str, default: bool) -> CResult<bool> {
        match self.raw(key)? {
            Some((_, "true")) => Ok(true),
            Some((_, "false")) => Ok(false),
            Some((l, v)) => Err(ConfigError::at(
                l,
                format!("`{key}` must be true or false, got `{v}`"),
            )),
            None => Ok(default),
        }
    }

    fn word<'a>(&'a self, key: &str, default: &'a str) -> CResult<(Option<usize>, &'a str)> {
        Ok(match self.raw(key)? {
            Some((l, v)) => (Some(l), v),
            None => (None, default),
        })
    }
}

fn parse_number(line: usize, key: &str, v: &str) -> CResult<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(ConfigError::at(
            line,
            format!("`{key}` is not a finite decimal number: `{v}`"),
        )),
    }
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Positive,
    NonNegative,
    /// Half-open `[lo, hi)`.
    Range(f64, f64),
    Above(f64),
}

impl Rule {
    fn check(self, key: &str, v: f64) -> std::result::Result<(), String> {
        let ok = match self {
            Rule::Positive => v > 0.0,
            Rule::NonNegative => v >= 0.0,
            Rule::Range(lo, hi) => lo <= v && v < hi,
            Rule::Above(lo) => v > lo,
        };
        if ok {
            return Ok(());
        }
        Err(match self {
            Rule::Positive => format!("`{key}` must be strictly positive (> 0), got {v}"),
            Rule::NonNegative => format!("`{key}` must be non-negative (>= 0), got {v}"),
            Rule::Range(lo, hi) => format!("`{key}` must lie in [{lo}, {hi}), got {v}"),
            Rule::Above(lo) => format!("`{key}` must exceed {lo}, got {v}"),
        })
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> CResult<RunConfig> {
    let e = Entries::parse(text)?;

    let dim = e.count("grid.dim", Some(1))?;
    if dim != 1 && dim != 2 {
        return Err(ConfigError::at(
            e.line("grid.dim").unwrap_or(0),
            format!("grid.dim must be 1 or 2, got {dim}"),
        ));
    }
    if dim == 1 {
        for key in ["grid.ny", "grid.ly"] {
            if let Some(l) = e.line(key) {
                return Err(ConfigError::at(
                    l,
                    format!("`{key}` only applies when grid.dim = 2"),
                ));
            }
        }
    }
    let nx = e.count("grid.nx", None)?;
    let ny = if dim == 2 {
        e.count("grid.ny", None)?
    } else {
        1
    };
    for (key, n) in [("grid.nx", nx), ("grid.ny", ny)] {
        if n < 3 && (key == "grid.nx" || dim == 2) {
            return Err(ConfigError::at(
                e.line(key).unwrap_or(0),
                format!("`{key}` must be at least 3, got {n}"),
            ));
        }
    }
    let grid = GridSpec {
        dim,
        nx,
        ny,
        lx: e.number("grid.lx", Some(1.0), Rule::Positive)?,
        ly: if dim == 2 {
            e.number("grid.ly", Some(1.0), Rule::Positive)?
        } else {
            1.0
        },
    };

    let d = ModelParams::default();
    let params = ModelParams {
        a1: e.number("params.a1", Some(d.a1), Rule::Positive)?,
        a2: e.number("params.a2", Some(d.a2), Rule::Positive)?,
        b_tau: e.number("params.b_tau", Some(d.b_tau), Rule::Positive)?,
        b_chi: e.number("params.b_chi", Some(d.b_chi), Rule::Positive)?,
        d_chi: e.number("params.d_chi", Some(d.d_chi), Rule::Positive)?,
        a_chi: e.number("params.a_chi", Some(d.a_chi), Rule::Positive)?,
        beta: e.number("params.beta", Some(d.beta), Rule::Positive)?,
        delta: e.number("params.delta", Some(d.delta), Rule::Positive)?,
        mu: e.number("params.mu", Some(d.mu), Rule::Positive)?,
        eps: e.number("params.eps", Some(d.eps), Rule::Range(0.0, 1.0))?,
        theta: e.number(
            "params.theta",
            Some(d.theta),
            Rule::Above((dim as f64).max(2.0)),
        )?,
    };

    let floor = e.number(
        "rates.floor_factor",
        Some(DEFAULT_RATE_FLOOR),
        Rule::Range(0.0, 1.0),
    )?;
    let alpha1 = rate(&e, "alpha1", RateKind::Saturating, 0.5, 0.5, floor)?;
    let alpha2 = rate(&e, "alpha2", RateKind::Constant, 0.25, 1.0, floor)?;

    let dose_times = match e.raw("schedule.dose_times")? {
        Some((l, v)) => dose_list(l, v)?,
        None => (0..7).map(|k| 3.0 * k as f64).collect(),
    };
    let (mode_line, mode) = e.word("schedule.mode", "pulse")?;
    let mode = match mode {
        "pulse" => DoseMode::Pulse,
        "jump" => DoseMode::Jump,
        other => {
            return Err(ConfigError::at(
                mode_line.unwrap_or(0),
                format!("schedule.mode must be pulse or jump, got `{other}`"),
            ))
        }
    };
    let schedule = SupplySchedule {
        dose_times,
        chi0: e.number("schedule.chi0", Some(1.0), Rule::NonNegative)?,
        mode,
        pulse_width: e.number("schedule.width", Some(1.0), Rule::Positive)?,
    };
    schedule.validate().map_err(|err| {
        ConfigError::at(e.line("schedule.dose_times").unwrap_or(0), err.to_string())
    })?;

    let t_end = e.number("control.t_end", None, Rule::NonNegative)?;
    let dt_max = e.number("control.dt_max", None, Rule::Positive)?;
    let default_save = if t_end > 0.0 { t_end / 10.0 } else { 1.0 };
    let control = StepControl {
        dt_max,
        cfl_safety: e.number("control.cfl_safety", Some(0.5), Rule::Positive)?,
        t_end,
        save_every: e.number("control.save_every", Some(default_save), Rule::Positive)?,
    };
    if control.cfl_safety > 1.0 {
        return Err(ConfigError::at(
            e.line("control.cfl_safety").unwrap_or(0),
            format!(
                "control.cfl_safety must not exceed 1, got {}",
                control.cfl_safety
            ),
        ));
    }

    let output = OutputSpec {
        dir: PathBuf::from(e.word("output.dir", "out")?.1),
        snapshots: e.flag("output.snapshots", true)?,
    };

    let monitor = MonitorConfig {
        entropy: EntropyParams {
            zeta: e.number("entropy.zeta", Some(1.0), Rule::Positive)?,
            varrho: e.number("entropy.varrho", Some(0.0), Rule::NonNegative)?,
        },
        tol: Tolerances {
            rel: e.number(
                "certify.tol_rel",
                Some(Tolerances::default().rel),
                Rule::NonNegative,
            )?,
            abs: e.number(
                "certify.tol_abs",
                Some(Tolerances::default().abs),
                Rule::NonNegative,
            )?,
        },
        m1_override: e.optional("certify.m1_override", Rule::NonNegative)?,
        tau_star_override: e.optional("certify.tau_star_override", Rule::NonNegative)?,
    };

    let oracle_dt = e.number("oracle.dt", Some(dt_max / 100.0), Rule::Positive)?;

    let grid_built = grid
        .build()
        .map_err(|err| ConfigError::global(err.to_string()))?;
    let mut initial = Vec::with_capacity(4);
    for (k, section) in INITIAL_SECTIONS.iter().enumerate() {
        let init = initializer(&e, section)?;
        check_initial(&e, section, k, &init, grid_built)?;
        initial.push(init);
    }
    let initial: [Initializer; 4] = initial.try_into().expect("four initial fields");

    Ok(RunConfig {
        grid,
        params,
        alpha1,
        alpha2,
        schedule,
        initial,
        control,
        output,
        monitor,
        oracle_dt,
    })
}

fn rate(
    e: &Entries,
    name: &str,
    kind: RateKind,
    amplitude: f64,
    half: f64,
    floor: f64,
) -> CResult<RateFunction> {
    let kind_key = format!("rates.{name}_kind");
    let (l, word) = e.word(
        &kind_key,
        if kind == RateKind::Constant {
            "constant"
        } else {
            "saturating"
        },
    )?;
    let kind = match word {
        "constant" => RateKind::Constant,
        "saturating" => RateKind::Saturating,
        other => {
            return Err(ConfigError::at(
                l.unwrap_or(0),
                format!("`{kind_key}` must be constant or saturating, got `{other}`"),
            ))
        }
    };
    Ok(RateFunction {
        kind,
        amplitude: e.number(
            &format!("rates.{name}_amplitude"),
            Some(amplitude),
            Rule::Positive,
        )?,
        half_saturation: e.number(
            &format!("rates.{name}_half_saturation"),
            Some(half),
            Rule::Positive,
        )?,
        floor_factor: floor,
    })
}

fn dose_list(line: usize, v: &str) -> CResult<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| {
            let x = parse_number(line, "schedule.dose_times", s.trim())?;
            Rule::NonNegative
                .check("schedule.dose_times", x)
                .map_err(|m| ConfigError::at(line, m))?;
            Ok(x)
        })
        .collect()
}

fn initializer(e: &Entries, section: &str) -> CResult<Initializer> {
    let key = |k: &str| format!("{section}.{k}");
    let present: Vec<&str> = INITIAL_KEYS
        .iter()
        .copied()
        .filter(|k| e.has(&key(k)))
        .collect();
    let first_line = present.iter().filter_map(|k| e.line(&key(k))).min();
    let conflict = |what: &str| {
        ConfigError::at(
            first_line.unwrap_or(0),
            format!("`{section}.{what}` cannot be combined with other {section} keys"),
        )
    };
    if present.is_empty() {
        return Err(ConfigError::global(format!(
            "missing initial data for {section}: set {section}.uniform, {section}.mean or {section}.file"
        )));
    }
    if e.has(&key("uniform")) {
        if present.len() > 1 {
            return Err(conflict("uniform"));
        }
        let v = e.float(&key("uniform"))?.expect("present").1;
        return Ok(Initializer::Uniform(v));
    }
    if e.has(&key("file")) {
        if present.len() > 1 {
            return Err(conflict("file"));
        }
        return Ok(Initializer::File(PathBuf::from(
            e.raw(&key("file"))?.expect("present").1,
        )));
    }
    let mean = e
        .number(&key("mean"), None, Rule::NonNegative)
        .map_err(|err| match err.line {
            Some(_) => err,
            None => ConfigError::at(
                first_line.unwrap_or(0),
                format!("{section} cosine data needs `{section}.mean`"),
            ),
        })?;
    Ok(Initializer::Cosine {
        mean,
        amplitude: e.number(&key("amplitude"), Some(0.0), Rule::NonNegative)?,
        k: [e.count(&key("kx"), Some(0))?, e.count(&key("ky"), Some(0))?],
    })
}

fn check_initial(
    e: &Entries,
    section: &str,
    k: usize,
    init: &Initializer,
    grid: Grid,
) -> CResult<()> {
    let line = INITIAL_KEYS
        .iter()
        .filter_map(|key| e.line(&format!("{section}.{key}")))
        .min();
    let at = |m: String| match line {
        Some(l) => ConfigError::at(l, m),
        None => ConfigError::global(m),
    };
    let field = init
        .build(grid, k)
        .map_err(|err| at(format!("{section}: {err}")))?;
    let min = field.min();
    if k >= 2 && !(min > 0.0) {
        return Err(at(format!(
            "initial {section} must be strictly positive everywhere (chi0, tau0 > 0), minimum is {min}"
        )));
    }
    if k < 2 && !(min >= 0.0) {
        return Err(at(format!(
            "initial {section} must be non-negative everywhere (c10, c20 >= 0), minimum is {min}"
        )));
    }
    Ok(())
}

/// Shortest round-trip decimal, without a trailing `.0`.
fn num(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

impl RunConfig {
    /// Every key with its effective value, in a form [`parse_config`] accepts.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let g = &self.grid;
        put("grid.dim", g.dim.to_string());
        put("grid.nx", g.nx.to_string());
        put("grid.lx", num(g.lx));
        if g.dim == 2 {
            put("grid.ny", g.ny.to_string());
            put("grid.ly", num(g.ly));
        }
        let p = &self.params;
        for (k, v) in [
            ("a1", p.a1),
            ("a2", p.a2),
            ("b_tau", p.b_tau),
            ("b_chi", p.b_chi),
            ("d_chi", p.d_chi),
            ("a_chi", p.a_chi),
            ("beta", p.beta),
            ("delta", p.delta),
            ("mu", p.mu),
            ("eps", p.eps),
            ("theta", p.theta),
        ] {
            put(&format!("params.{k}"), num(v));
        }
        for (name, r) in [("alpha1", &self.alpha1), ("alpha2", &self.alpha2)] {
            let kind = match r.kind {
                RateKind::Constant => "constant",
                RateKind::Saturating => "saturating",
            };
            put(&format!("rates.{name}_kind"), kind.to_string());
            put(&format!("rates.{name}_amplitude"), num(r.amplitude));
            put(
                &format!("rates.{name}_half_saturation"),
                num(r.half_saturation),
            );
        }
        put("rates.floor_factor", num(self.alpha1.floor_factor));
        let sc = &self.schedule;
        put(
            "schedule.dose_times",
            sc.dose_times
                .iter()
                .map(|&t| num(t))
                .collect::<Vec<_>>()
                .join(", "),
        );
        put("schedule.chi0", num(sc.chi0));
        let mode = match sc.mode {
            DoseMode::Pulse => "pulse",
            DoseMode::Jump => "jump",
        };
        put("schedule.mode", mode.to_string());
        put("schedule.width", num(sc.pulse_width));
        for (section, init) in INITIAL_SECTIONS.iter().zip(&self.initial) {
            match init {
                Initializer::Uniform(v) => put(&format!("{section}.uniform"), num(*v)),
                Initializer::File(path) => {
                    put(&format!("{section}.file"), path.display().to_string())
                }
                Initializer::Cosine { mean, amplitude, k } => {
                    put(&format!("{section}.mean"), num(*mean));
                    put(&format!("{section}.amplitude"), num(*amplitude));
                    put(&format!("{section}.kx"), k[0].to_string());
                    put(&format!("{section}.ky"), k[1].to_string());
                }
            }
        }
        let c = &self.control;
        put("control.t_end", num(c.t_end));
        put("control.dt_max", num(c.dt_max));
        put("control.cfl_safety", num(c.cfl_safety));
        put("control.save_every", num(c.save_every));
        put("output.dir", self.output.dir.display().to_string());
        put("output.snapshots", self.output.snapshots.to_string());
        let m = &self.monitor;
        put("entropy.zeta", num(m.entropy.zeta));
        put("entropy.varrho", num(m.entropy.varrho));
        put("certify.tol_rel", num(m.tol.rel));
        put("certify.tol_abs", num(m.tol.abs));
        if let Some(v) = m.m1_override {
            put("certify.m1_override", num(v));
        }
        if let Some(v) = m.tau_star_override {
            put("certify.tau_star_override", num(v));
        }
        put("oracle.dt", num(self.oracle_dt));
        s
    }

    pub fn model(&self) -> Model {
        Model::new(self.params, self.alpha1, self.alpha2, self.schedule.clone())
    }

    pub fn grid(&self) -> crate::error::Result<Grid> {
        self.grid.build()
    }

    pub fn initial_state(&self) -> crate::error::Result<SimState> {
        initial_state(self.grid()?, &self.initial)
    }

    pub fn scenario(&self) -> crate::error::Result<Scenario> {
        Ok(Scenario {
            initial: self.initial_state()?,
            model: self.model(),
            control: self.control,
            monitor: self.monitor,
        })
    }

    /// Uniform initial values, when every field is given as `.uniform`.
    pub fn uniform_initial(&self) -> Option<[f64; 4]> {
        let mut out = [0.0; 4];
        for (o, init) in out.iter_mut().zip(&self.initial) {
            match init {
                Initializer::Uniform(v) => *o = *v,
                _ => return None,
            }
        }
        Some(out)
    }
}
