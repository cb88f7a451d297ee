//! Run configuration: JSON files, built-in presets and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sps_core::experiments::{InputModel, InputSpec, NoiseModel, Scenario, ShapeGrid};
use sps_core::regions::DEFAULT_GRID_CAP;
use sps_core::sps::DEFAULT_M_CAP;
use sps_core::{resolve_mq, Confidence, GridSpec, ParamVector};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Region,
    Coverage,
    RankUniformity,
    Consistency,
    Shape,
    Enumerate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Simulate => "simulate",
            Command::Region => "region",
            Command::Coverage => "coverage",
            Command::RankUniformity => "rank-uniformity",
            Command::Consistency => "consistency",
            Command::Shape => "shape",
            Command::Enumerate => "enumerate",
        };
        f.write_str(s)
    }
}

/// One run, as read from a config file or built from a preset.
///
/// Only the fields a command uses may be present; see [`RunConfig::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// True parameter `theta*` as `{"a": [...], "b": [...]}`.
    pub system: ParamVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Confidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_grid: Option<ShapeGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Ellipsoid inflation as a fraction of `mu sigma_hat^2` (shape only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflation: Option<f64>,
    /// Fixed noise magnitudes for exhaustive enumeration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_noise: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_init: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_init: Option<Vec<f64>>,
    /// Dataset CSV analysed by `region` instead of a simulated one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub regenerate_input: bool,
}

/// Flag values that override a config or preset.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub m: Option<usize>,
    pub q: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    #[value(name = "sec6-n40")]
    N40,
    #[value(name = "sec6-n400")]
    N400,
    #[value(name = "sec6-n4000")]
    N4000,
}

impl Preset {
    pub fn n(self) -> usize {
        match self {
            Preset::N40 => 40,
            Preset::N400 => 400,
            Preset::N4000 => 4000,
        }
    }
}

const REF_A: f64 = -0.7;
const REF_B: f64 = 1.0;

/// Fixed grid shared by the three sample sizes: `theta*` +- 0.15, 61 nodes per axis.
pub fn reference_grid() -> GridSpec {
    GridSpec::centered(&[REF_A, REF_B], &[0.15, 0.15], 61).expect("valid grid")
}

/// The reference experiment: `Y_t = 0.7 Y_{t-1} + U_{t-1} + N_t`, Laplacian noise of
/// variance 0.1, AR(1) input with coefficient 0.75, `m = 100`, `q = 5`.
pub fn preset(preset: Preset, command: Command) -> RunConfig {
    let mut c = RunConfig {
        command: Some(command),
        system: ParamVector::new(vec![REF_A], vec![REF_B]).expect("valid parameter"),
        input: Some(InputSpec {
            model: InputModel::Ar1 {
                coeff: 0.75,
                drive_variance: 1.0,
            },
            seed: 1,
        }),
        noise: Some(NoiseModel::laplacian(0.1)),
        n: Some(preset.n()),
        p: None,
        m: Some(100),
        q: Some(5),
        grid: None,
        grid_cap: None,
        shape_grid: None,
        n_list: None,
        trials: None,
        master_seed: 0,
        inflation: None,
        abs_noise: None,
        y_init: None,
        u_init: None,
        dataset: None,
        regenerate_input: false,
    };
    match command {
        Command::Simulate => {
            c.m = None;
            c.q = None;
        }
        Command::Region => c.grid = Some(reference_grid()),
        Command::Coverage => c.trials = Some(10_000),
        Command::RankUniformity => {
            c.m = Some(10);
            c.q = Some(1);
            c.trials = Some(10_000);
        }
        Command::Consistency => {
            c.n = None;
            c.n_list = Some(vec![40, 400, 4000]);
            c.grid = Some(reference_grid());
            c.trials = Some(50);
        }
        Command::Shape => {
            c.p = Some(Confidence::new(19, 20).expect("valid confidence"));
            c.q = None;
            c.trials = Some(20);
            c.inflation = Some(0.05);
            c.shape_grid = Some(ShapeGrid::Aligned {
                points_per_axis: 21,
                half_width: 1.5,
            });
        }
        Command::Enumerate => {
            c.n = None;
            c.noise = None;
            c.m = Some(2);
            c.q = Some(1);
            c.abs_noise = Some(vec![0.7, 1.3]);
        }
    }
    c
}

/// Field names present in the config, paired with the commands that accept them.
fn field_usage(c: &RunConfig) -> Vec<(&'static str, bool, &'static [Command])> {
    use Command::*;
    const ALL: &[Command] = &[Simulate, Region, Coverage, RankUniformity, Consistency, Shape, Enumerate];
    const SPS: &[Command] = &[Region, Coverage, RankUniformity, Consistency, Shape, Enumerate];
    const MC: &[Command] = &[Coverage, RankUniformity, Consistency, Shape];
    vec![
        ("input", c.input.is_some(), ALL),
        ("noise", c.noise.is_some(), &[Simulate, Region, Coverage, RankUniformity, Consistency, Shape]),
        ("n", c.n.is_some(), &[Simulate, Region, Coverage, RankUniformity, Shape, Enumerate]),
        ("p", c.p.is_some(), SPS),
        ("m", c.m.is_some(), SPS),
        ("q", c.q.is_some(), &[Region, Coverage, RankUniformity, Consistency, Enumerate]),
        ("grid", c.grid.is_some(), &[Region, Consistency]),
        ("grid_cap", c.grid_cap.is_some(), &[Region, Consistency]),
        ("shape_grid", c.shape_grid.is_some(), &[Shape]),
        ("n_list", c.n_list.is_some(), &[Consistency]),
        ("trials", c.trials.is_some(), MC),
        ("inflation", c.inflation.is_some(), &[Shape]),
        ("abs_noise", c.abs_noise.is_some(), &[Enumerate]),
        ("y_init", c.y_init.is_some(), &[Simulate, Region, Enumerate]),
        ("u_init", c.u_init.is_some(), &[Simulate, Region, Enumerate]),
        ("dataset", c.dataset.is_some(), &[Region]),
        ("regenerate_input", c.regenerate_input, &[Coverage, RankUniformity]),
    ]
}

fn required(command: Command, c: &RunConfig) -> Vec<&'static str> {
    let mut need = Vec::new();
    let dataset_given = c.dataset.is_some();
    if !dataset_given {
        need.push("input");
    }
    match command {
        Command::Simulate => need.extend(["noise", "n"]),
        Command::Region => {
            need.push("grid");
            if !dataset_given {
                need.extend(["noise", "n"]);
            }
        }
        Command::Coverage | Command::RankUniformity => need.extend(["noise", "n", "trials"]),
        Command::Consistency => need.extend(["noise", "n_list", "grid", "trials"]),
        Command::Shape => need.extend(["noise", "n", "p", "m", "trials", "shape_grid"]),
        Command::Enumerate => need.push("abs_noise"),
    }
    need
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(t) = o.trials {
            self.trials = Some(t);
        }
        if let Some(m) = o.m {
            self.m = Some(m);
        }
        if let Some(q) = o.q {
            self.q = Some(q);
        }
    }

    pub fn command(&self) -> Result<Command, CliError> {
        self.command.ok_or_else(|| CliError::Config("command: missing".into()))
    }

    /// Checks that exactly the fields needed by the command are present and
    /// that they are mutually consistent.
    pub fn validate(&self) -> Result<(), CliError> {
        let command = self.command()?;
        for (name, present, allowed) in field_usage(self) {
            if present && !allowed.contains(&command) {
                return Err(CliError::Config(format!("{name}: not used by `{command}`")));
            }
        }
        let present: Vec<&str> = field_usage(self)
            .into_iter()
            .filter(|f| f.1)
            .map(|f| f.0)
            .collect();
        for name in required(command, self) {
            if !present.contains(&name) {
                return Err(CliError::Config(format!("{name}: required by `{command}`")));
            }
        }
        if command != Command::Simulate {
            self.mq()?;
        }
        if command == Command::Enumerate {
            let len = self.abs_noise.as_ref().map_or(0, Vec::len);
            if self.n.is_some_and(|n| n != len) {
                return Err(CliError::Config(format!("n: must equal the length of abs_noise ({len})")));
            }
        }
        if command == Command::Shape && self.inflation.is_some_and(|v| v.is_nan() || v < 0.0) {
            return Err(CliError::Config("inflation: must be non-negative".into()));
        }
        if self.trials == Some(0) {
            return Err(CliError::Config("trials: must be at least 1".into()));
        }
        let order = self.system.order();
        for (name, v, len) in [("y_init", &self.y_init, order.na), ("u_init", &self.u_init, order.nb)] {
            if let Some(v) = v {
                if v.len() != len {
                    return Err(CliError::Config(format!("{name}: expected {len} values, found {}", v.len())));
                }
            }
        }
        if let Some(g) = &self.grid {
            g.validate(order.dim(), self.grid_cap())
                .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        }
        Ok(())
    }

    /// `(m, q)` with defaults applied; the shape experiment uses `q = floor((1 - p) m)`.
    pub fn mq(&self) -> Result<(usize, usize), CliError> {
        if self.command == Some(Command::Shape) {
            let (p, m) = (self.p.ok_or_else(|| missing("p"))?, self.m.ok_or_else(|| missing("m"))?);
            let q = p.floor_q(m);
            if q == 0 || q >= m {
                return Err(CliError::Config(format!("m: floor((1 - p) m) = {q} must lie in 1..m")));
            }
            return Ok((m, q));
        }
        resolve_mq(self.p, self.m, self.q, DEFAULT_M_CAP).map_err(|e| CliError::Config(format!("p/m/q: {e}")))
    }

    pub fn grid_cap(&self) -> usize {
        self.grid_cap.unwrap_or(DEFAULT_GRID_CAP)
    }

    pub fn y_init(&self) -> Vec<f64> {
        self.y_init.clone().unwrap_or_else(|| vec![0.0; self.system.order().na])
    }

    pub fn u_init(&self) -> Option<Vec<f64>> {
        self.u_init.clone()
    }

    /// Monte Carlo scenario; `n` falls back to 1 for commands that set it per run.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        Ok(Scenario {
            theta_star: self.system.clone(),
            input: self.input.clone().ok_or_else(|| missing("input"))?,
            noise: self.noise.clone().ok_or_else(|| missing("noise"))?,
            n: self.n.unwrap_or(1),
            master_seed: self.master_seed,
            regenerate_input: self.regenerate_input,
        })
    }
}

fn missing(name: &str) -> CliError {
    CliError::Config(format!("{name}: missing"))
}
