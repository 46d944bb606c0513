//! Experiment configuration: a TOML file with one table per subcommand.
//!
//! Unknown keys are rejected so that typos fail loudly instead of silently
//! falling back to defaults.

use anneal_core::potential::{make_builtin, Potential};
use anneal_core::schedule::Schedule;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Landscape,
    Equilibrium,
    Simulate,
    Fpe,
    Hardy,
    Capacity,
    Verify,
    Dichotomy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Landscape => "landscape",
            Command::Equilibrium => "equilibrium",
            Command::Simulate => "simulate",
            Command::Fpe => "fpe",
            Command::Hardy => "hardy",
            Command::Capacity => "capacity",
            Command::Verify => "verify",
            Command::Dichotomy => "dichotomy",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Optional; must agree with the subcommand given on the command line.
    pub subcommand: Option<String>,
    pub seed: Option<u64>,
    pub potential: PotentialSpec,
    pub schedule: Option<ScheduleSpec>,
    pub landscape: Option<LandscapeCfg>,
    pub equilibrium: Option<EquilibriumCfg>,
    pub simulate: Option<SimulateCfg>,
    pub fpe: Option<FpeCfg>,
    pub hardy: Option<HardyCfg>,
    pub capacity: Option<CapacityCfg>,
    pub verify: Option<VerifyCfg>,
    pub dichotomy: Option<DichotomyCfg>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Logarithmic {
        c: f64,
        #[serde(default = "default_t_offset")]
        t_offset: f64,
    },
    Constant {
        sigma0: f64,
    },
    Power {
        c: f64,
        t_offset: f64,
        exponent: f64,
    },
}

fn default_t_offset() -> f64 {
    std::f64::consts::E
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeCfg {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
}

impl Default for LandscapeCfg {
    fn default() -> Self {
        LandscapeCfg { lo: vec![-3.0], hi: vec![3.0], resolution: 4001 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumCfg {
    pub sigmas: Vec<f64>,
    pub tail_radius: f64,
}

impl Default for EquilibriumCfg {
    fn default() -> Self {
        EquilibriumCfg { sigmas: vec![0.1, 0.05, 0.025], tail_radius: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitCfg {
    Point { x: Vec<f64> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateCfg {
    pub n_traj: usize,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub dt_exponent: f64,
    /// Defaults to `[t_end]`.
    pub record_times: Vec<f64>,
    /// Defaults to the argmin of the potential.
    pub init: Option<InitCfg>,
    pub radii: Vec<f64>,
    pub histogram_lo: f64,
    pub histogram_hi: f64,
    pub histogram_bins: usize,
}

impl Default for SimulateCfg {
    fn default() -> Self {
        SimulateCfg {
            n_traj: 10_000,
            t0: 0.0,
            t_end: 10.0,
            dt: 1e-3,
            dt_exponent: 0.0,
            record_times: Vec::new(),
            init: None,
            radii: vec![0.2, 0.5],
            histogram_lo: -3.0,
            histogram_hi: 3.0,
            histogram_bins: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FpeInit {
    Gaussian { mean: f64, var: f64 },
    Equilibrium { sigma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpeCfg {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub t0: f64,
    pub t_end: f64,
    /// Defaults to 50 log-spaced times in `(t0, t_end]`.
    pub record_times: Vec<f64>,
    pub dt0: f64,
    pub growth: f64,
    pub dt_max: Option<f64>,
    /// Diffusive step cap `cfl h^2 / sigma`; omitted means no cap.
    pub cfl: Option<f64>,
    /// Defaults to a narrow Gaussian at the argmin.
    pub init: Option<FpeInit>,
    /// Also write the density at every record time.
    pub write_density: bool,
}

impl Default for FpeCfg {
    fn default() -> Self {
        FpeCfg {
            lo: -4.0,
            hi: 4.0,
            cells: 800,
            t0: 0.0,
            t_end: 100.0,
            record_times: Vec::new(),
            dt0: 1e-3,
            growth: 1e-3,
            dt_max: Some(1.0),
            cfl: None,
            init: None,
            write_density: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardyCfg {
    pub sigmas: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    /// Tail exponent for `beta`; omitted means `beta = 1`.
    pub tail_alpha: Option<f64>,
}

impl Default for HardyCfg {
    fn default() -> Self {
        HardyCfg { sigmas: vec![0.1, 0.05, 0.025], lo: -2.5, hi: 2.5, nodes: 20_001, tail_alpha: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyCfg {
    Intervals,
    Sublevel,
    /// Intervals with the support optimized too (cubic cost).
    Exact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityCfg {
    pub sigmas: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    /// Fixed `kappa`; omitted means `kappa_fraction` of the mass outside the
    /// basin of the global minimum.
    pub kappa: Option<f64>,
    pub kappa_fraction: f64,
    pub family: FamilyCfg,
}

impl Default for CapacityCfg {
    fn default() -> Self {
        CapacityCfg {
            sigmas: vec![0.1, 0.05, 0.025],
            lo: -2.0,
            hi: 2.0,
            cells: 2000,
            kappa: None,
            kappa_fraction: 0.5,
            family: FamilyCfg::Intervals,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyCfg {
    /// Random (measure, function) pairs per Orlicz/entropy suite.
    pub trials: usize,
    /// Random functions for the one-point inequality.
    pub corpus_size: usize,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub kappa: f64,
}

impl Default for VerifyCfg {
    fn default() -> Self {
        VerifyCfg { trials: 10_000, corpus_size: 10_000, sigma: 0.4, lo: -2.0, hi: 2.0, cells: 100, kappa: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DichotomyCfg {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub t_end: f64,
    pub factor_super: f64,
    pub factor_sub: f64,
    pub t_offset: f64,
    pub init_var: f64,
    pub dt0: f64,
    pub growth: f64,
    pub dt_max: f64,
    pub records: usize,
    pub landscape_lo: f64,
    pub landscape_hi: f64,
    pub landscape_resolution: usize,
}

impl Default for DichotomyCfg {
    fn default() -> Self {
        DichotomyCfg {
            lo: -4.0,
            hi: 4.0,
            cells: 800,
            t_end: 1e4,
            factor_super: 2.0,
            factor_sub: 0.3,
            t_offset: std::f64::consts::E,
            init_var: 1e-3,
            dt0: 1e-3,
            growth: 1e-3,
            dt_max: 1.0,
            records: 60,
            landscape_lo: -3.0,
            landscape_hi: 3.0,
            landscape_resolution: 4001,
        }
    }
}

/// A config that passed validation, with names resolved.
#[derive(Debug, Clone)]
pub struct Validated {
    pub command: Command,
    pub config: Config,
    pub potential: Potential,
    pub schedule: Option<Schedule>,
    pub seed: Option<u64>,
}

pub fn parse(text: &str) -> Result<Config, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} = {v} must be positive and finite"))
    }
}

fn box_ok(name: &str, lo: f64, hi: f64) -> Result<(), String> {
    if lo.is_finite() && hi.is_finite() && hi > lo {
        Ok(())
    } else {
        Err(format!("{name}: need finite lo < hi, got [{lo}, {hi}]"))
    }
}

fn sigmas_ok(s: &[f64]) -> Result<(), String> {
    if s.is_empty() {
        return Err("sigmas must be nonempty".into());
    }
    s.iter().try_for_each(|v| positive("sigma", *v))
}

fn one_d(p: &Potential, what: &str) -> Result<(), String> {
    if p.dimension == 1 {
        Ok(())
    } else {
        Err(format!("{what} needs a one-dimensional potential"))
    }
}

/// Resolves names and checks every parameter the subcommand will use.
pub fn validate(command: Command, mut config: Config, seed_override: Option<u64>) -> Result<Validated, String> {
    if let Some(s) = &config.subcommand {
        if s != command.name() {
            return Err(format!("config is for `{s}` but `{}` was requested", command.name()));
        }
    }
    let potential = make_builtin(&config.potential.name, &config.potential.params).map_err(|e| e.to_string())?;
    let schedule = match &config.schedule {
        None => None,
        Some(ScheduleSpec::Logarithmic { c, t_offset }) => Some(Schedule::logarithmic(*c, *t_offset)),
        Some(ScheduleSpec::Constant { sigma0 }) => Some(Schedule::constant(*sigma0)),
        Some(ScheduleSpec::Power { c, t_offset, exponent }) => Some(Schedule::power(*c, *t_offset, *exponent)),
    }
    .transpose()
    .map_err(|e| e.to_string())?;
    if seed_override.is_some() {
        config.seed = seed_override;
    }
    let seed = config.seed;
    let p = &potential;

    match command {
        Command::Landscape => {
            let c = config.landscape.get_or_insert_with(Default::default);
            if c.lo.len() != p.dimension || c.hi.len() != p.dimension {
                return Err(format!("landscape box must have {} coordinates", p.dimension));
            }
            for (a, b) in c.lo.iter().zip(&c.hi) {
                box_ok("landscape", *a, *b)?;
            }
            if c.resolution < 4 {
                return Err("landscape.resolution must be at least 4".into());
            }
        }
        Command::Equilibrium => {
            let c = config.equilibrium.get_or_insert_with(Default::default);
            sigmas_ok(&c.sigmas)?;
            positive("tail_radius", c.tail_radius)?;
        }
        Command::Simulate => {
            let c = config.simulate.get_or_insert_with(Default::default);
            if schedule.is_none() {
                return Err("simulate needs a [schedule] table".into());
            }
            if seed.is_none() {
                return Err("simulate needs an explicit seed".into());
            }
            if c.n_traj == 0 {
                return Err("simulate.n_traj must be positive".into());
            }
            positive("dt", c.dt)?;
            if !(c.t_end > c.t0) {
                return Err("simulate needs t_end > t0".into());
            }
            if c.record_times.is_empty() {
                c.record_times = vec![c.t_end];
            }
            if c.record_times.windows(2).any(|w| w[1] <= w[0])
                || c.record_times.iter().any(|t| *t < c.t0 || *t > c.t_end)
            {
                return Err("record_times must increase within [t0, t_end]".into());
            }
            box_ok("histogram", c.histogram_lo, c.histogram_hi)?;
            if c.histogram_bins == 0 {
                return Err("histogram_bins must be positive".into());
            }
            match &c.init {
                Some(InitCfg::Point { x }) if x.len() != p.dimension => {
                    return Err("init point has the wrong dimension".into())
                }
                Some(InitCfg::Box { lo, hi }) if lo.len() != p.dimension || hi.len() != p.dimension => {
                    return Err("init box has the wrong dimension".into())
                }
                _ => {}
            }
        }
        Command::Fpe => {
            one_d(p, "fpe")?;
            let c = config.fpe.get_or_insert_with(Default::default);
            if schedule.is_none() {
                return Err("fpe needs a [schedule] table".into());
            }
            box_ok("fpe", c.lo, c.hi)?;
            if c.cells < 3 {
                return Err("fpe.cells must be at least 3".into());
            }
            positive("dt0", c.dt0)?;
            if !(c.t_end > c.t0) {
                return Err("fpe needs t_end > t0".into());
            }
            if c.record_times.is_empty() {
                let (a, b) = ((c.t0 + 1e-3).max(1e-3), c.t_end);
                c.record_times = (1..=50).map(|k| a * (b / a).powf(k as f64 / 50.0)).collect();
                *c.record_times.last_mut().unwrap() = b;
                c.record_times.retain(|t| *t > c.t0);
            }
            match c.init {
                Some(FpeInit::Gaussian { var, .. }) => positive("init.var", var)?,
                Some(FpeInit::Equilibrium { sigma }) => positive("init.sigma", sigma)?,
                None => {}
            }
        }
        Command::Hardy => {
            one_d(p, "hardy")?;
            let c = config.hardy.get_or_insert_with(Default::default);
            sigmas_ok(&c.sigmas)?;
            box_ok("hardy", c.lo, c.hi)?;
            if c.nodes < 3 {
                return Err("hardy.nodes must be at least 3".into());
            }
            if let Some(a) = c.tail_alpha {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(format!("tail_alpha = {a} must lie in (0, 1]"));
                }
            }
        }
        Command::Capacity => {
            one_d(p, "capacity")?;
            let c = config.capacity.get_or_insert_with(Default::default);
            sigmas_ok(&c.sigmas)?;
            box_ok("capacity", c.lo, c.hi)?;
            if c.cells < 2 {
                return Err("capacity.cells must be at least 2".into());
            }
            if let Some(k) = c.kappa {
                if !(k > 0.0 && k < 0.5) {
                    return Err(format!("kappa = {k} must lie in (0, 1/2)"));
                }
            }
            if !(c.kappa_fraction > 0.0 && c.kappa_fraction <= 1.0) {
                return Err("kappa_fraction must lie in (0, 1]".into());
            }
        }
        Command::Verify => {
            one_d(p, "verify")?;
            let c = config.verify.get_or_insert_with(Default::default);
            if seed.is_none() {
                return Err("verify needs an explicit seed".into());
            }
            positive("sigma", c.sigma)?;
            box_ok("verify", c.lo, c.hi)?;
            if c.cells < 2 {
                return Err("verify.cells must be at least 2".into());
            }
            if !(c.kappa > 0.0 && c.kappa < 0.5) {
                return Err(format!("kappa = {} must lie in (0, 1/2)", c.kappa));
            }
        }
        Command::Dichotomy => {
            one_d(p, "dichotomy")?;
            let c = config.dichotomy.get_or_insert_with(Default::default);
            box_ok("dichotomy", c.lo, c.hi)?;
            box_ok("dichotomy landscape", c.landscape_lo, c.landscape_hi)?;
            for (n, v) in [
                ("t_end", c.t_end),
                ("factor_super", c.factor_super),
                ("factor_sub", c.factor_sub),
                ("init_var", c.init_var),
                ("dt0", c.dt0),
                ("dt_max", c.dt_max),
            ] {
                positive(n, v)?;
            }
            if c.t_offset < std::f64::consts::E {
                return Err("t_offset must be at least e".into());
            }
            if c.cells < 3 || c.records < 2 || c.landscape_resolution < 4 {
                return Err("dichotomy grid sizes are too small".into());
            }
        }
    }
    Ok(Validated { command, config, potential, schedule, seed })
}
