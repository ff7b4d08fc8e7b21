//! JSON scenario files for every subcommand.

use std::path::Path;

use delayfbsde_core::control::{ControlProblem, MinimizerRule};
use delayfbsde_core::pricing::{Claim, MarketModel};
use delayfbsde_core::sdde::ScalarDelayModel;
use delayfbsde_core::segment::{GridSpec, Segment, SegmentFunctional};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{LabError, LabResult};

/// The initial segment `x(θ)`, `θ ∈ [−r, 0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape", deny_unknown_fields)]
pub enum InitialSegment {
    Constant {
        value: f64,
    },
    /// `value + slope·θ`.
    Affine {
        value: f64,
        slope: f64,
    },
    /// `offset + amp·cos(freq·θ + phase)`.
    Wave {
        offset: f64,
        amp: f64,
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl InitialSegment {
    pub fn value(&self, theta: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Affine { value, slope } => value + slope * theta,
            Self::Wave {
                offset,
                amp,
                freq,
                phase,
            } => offset + amp * (freq * theta + phase).cos(),
        }
    }

    /// Coefficients in `θ` when the shape is a polynomial.
    pub fn polynomial(&self) -> Option<Vec<f64>> {
        match *self {
            Self::Constant { value } => Some(vec![value]),
            Self::Affine { value, slope } => Some(vec![value, slope]),
            Self::Wave { .. } => None,
        }
    }

    pub fn segment(&self, grid: GridSpec) -> LabResult<Segment> {
        if grid.dim_n() != 1 {
            return Err(LabError::Config(
                "initial segments are scalar; set dim_n = 1".into(),
            ));
        }
        Ok(Segment::from_fn(grid, |t| self.value(t))?)
    }
}

/// Command-line values that replace the corresponding scenario fields.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// A scenario file of one subcommand.
pub trait Scenario: Serialize + DeserializeOwned {
    fn seed(&self) -> u64;
    fn apply(&mut self, overrides: &Overrides) -> LabResult<()>;
    fn validate(&self) -> LabResult<()>;
}

pub fn load<S: Scenario>(path: &Path, overrides: &Overrides) -> LabResult<S> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut scenario: S = serde_json::from_str(&text)
        .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
    scenario.apply(overrides)?;
    scenario.validate()?;
    Ok(scenario)
}

/// Re-grids to step `dt`, keeping the delay: `m = r/dt` must be a whole
/// number.
pub fn retime(grid: &GridSpec, dt: f64) -> LabResult<GridSpec> {
    let r = grid.delay();
    let m = (r / dt).round();
    if !(dt > 0.0) || m < 1.0 || (m * dt - r).abs() > 1e-9 * r {
        return Err(LabError::Config(format!(
            "grid coupling m·Δt = r violated: Δt = {dt} does not divide the delay r = {r}"
        )));
    }
    Ok(GridSpec::with_step(
        dt,
        m as usize,
        grid.dim_n(),
        grid.dim_d(),
    )?)
}

fn check_span(grid: &GridSpec, start: f64, horizon: f64) -> LabResult<()> {
    delayfbsde_core::noise::steps_between(start, horizon, grid.step())
        .map(|_| ())
        .map_err(|e| LabError::Config(format!("horizon: {e}")))
}

fn check_paths(paths: usize) -> LabResult<()> {
    if paths == 0 {
        return Err(LabError::Config("paths must be positive".into()));
    }
    Ok(())
}

/// Fields shared by the scenarios that simulate one scalar delay equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub seed: u64,
    pub paths: usize,
    pub grid: GridSpec,
    #[serde(default)]
    pub start: f64,
    pub horizon: f64,
    pub initial: InitialSegment,
}

impl Sampling {
    fn apply(&mut self, o: &Overrides) -> LabResult<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(paths) = o.paths {
            self.paths = paths;
        }
        if let Some(dt) = o.dt {
            self.grid = retime(&self.grid, dt)?;
        }
        Ok(())
    }

    fn validate(&self) -> LabResult<()> {
        check_paths(self.paths)?;
        check_span(&self.grid, self.start, self.horizon)
    }

    pub fn segment(&self) -> LabResult<Segment> {
        self.initial.segment(self.grid)
    }
}

/// Optional per-run files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Export {
    #[serde(default)]
    pub csv: bool,
    #[serde(default)]
    pub binary: bool,
}

macro_rules! sampled_scenario {
    ($t:ty) => {
        impl Scenario for $t {
            fn seed(&self) -> u64 {
                self.sampling.seed
            }

            fn apply(&mut self, overrides: &Overrides) -> LabResult<()> {
                self.sampling.apply(overrides)
            }

            fn validate(&self) -> LabResult<()> {
                self.sampling.validate()?;
                self.check()
            }
        }
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateScenario {
    #[serde(flatten)]
    pub sampling: Sampling,
    pub model: ScalarDelayModel,
    #[serde(default)]
    pub export: Export,
}

impl SimulateScenario {
    fn check(&self) -> LabResult<()> {
        Ok(())
    }
}

sampled_scenario!(SimulateScenario);

/// Self-financing replication ladder run after pricing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationSettings {
    /// Time steps, coarsest first; each must divide the delay.
    pub steps: Vec<f64>,
    pub paths: usize,
    pub pricing_paths: usize,
    #[serde(default = "default_relative_error")]
    pub max_relative_error: f64,
    /// Step at which the bound applies; the finest step when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_step: Option<f64>,
}

fn default_relative_error() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceScenario {
    #[serde(flatten)]
    pub sampling: Sampling,
    pub market: MarketModel,
    pub claim: Claim,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replication: Option<ReplicationSettings>,
    /// Relative slack on top of 5 SE for the closed-form comparison.
    #[serde(default = "default_price_slack")]
    pub closed_form_slack: f64,
    #[serde(default)]
    pub export: Export,
}

fn default_price_slack() -> f64 {
    0.005
}

impl PriceScenario {
    fn check(&self) -> LabResult<()> {
        self.market.validate(&self.sampling.grid)?;
        if let Some(rep) = &self.replication {
            if rep.steps.is_empty() {
                return Err(LabError::Config(
                    "replication needs at least one time step".into(),
                ));
            }
            check_paths(rep.paths)?;
            check_paths(rep.pricing_paths)?;
            for &dt in &rep.steps {
                retime(&self.sampling.grid, dt)?;
            }
            if let Some(s) = rep.reference_step {
                if !rep.steps.iter().any(|d| (d - s).abs() <= 1e-12 * s) {
                    return Err(LabError::Config(format!(
                        "reference step {s} is not on the ladder"
                    )));
                }
            }
        }
        Ok(())
    }
}

sampled_scenario!(PriceScenario);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tournament {
    pub constants: usize,
    pub piecewise: usize,
    pub pieces: usize,
}

impl Default for Tournament {
    fn default() -> Self {
        Self {
            constants: 20,
            piecewise: 10,
            pieces: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlScenario {
    #[serde(flatten)]
    pub sampling: Sampling,
    pub model: ScalarDelayModel,
    pub problem: ControlProblem,
    #[serde(default)]
    pub rule: MinimizerRule,
    #[serde(default)]
    pub tournament: Tournament,
    #[serde(default)]
    pub export: Export,
}

impl ControlScenario {
    fn check(&self) -> LabResult<()> {
        self.problem.validate()?;
        Ok(())
    }
}

sampled_scenario!(ControlScenario);

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QvScenario {
    #[serde(flatten)]
    pub sampling: Sampling,
    pub model: ScalarDelayModel,
    pub functional: SegmentFunctional,
    pub epsilons: Vec<f64>,
    pub window: (f64, f64),
    #[serde(default)]
    pub export: Export,
}

impl QvScenario {
    fn check(&self) -> LabResult<()> {
        if self.epsilons.is_empty() {
            return Err(LabError::Config("ε ladder is empty".into()));
        }
        Ok(())
    }
}

sampled_scenario!(QvScenario);

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MalliavinScenario {
    #[serde(flatten)]
    pub sampling: Sampling,
    pub model: ScalarDelayModel,
    pub functional: SegmentFunctional,
    /// Time `s` of the differentiated increment.
    pub base_time: f64,
    #[serde(default = "default_bump")]
    pub bump: f64,
    #[serde(default = "default_rel_tol")]
    pub relative_tolerance: f64,
    #[serde(default = "default_fraction")]
    pub required_fraction: f64,
    #[serde(default)]
    pub export: Export,
}

fn default_bump() -> f64 {
    1e-4
}

fn default_rel_tol() -> f64 {
    0.01
}

fn default_fraction() -> f64 {
    0.95
}

impl MalliavinScenario {
    pub fn base_step(&self) -> LabResult<usize> {
        let s = &self.sampling;
        let steps = delayfbsde_core::noise::steps_between(s.start, s.horizon, s.grid.step())?;
        let k = (self.base_time - s.start) / s.grid.step();
        if (k - k.round()).abs() > 1e-9 || k < 0.0 || k.round() as usize >= steps {
            return Err(LabError::Config(format!(
                "base time {} must be a grid time before the horizon {}",
                self.base_time, s.horizon
            )));
        }
        Ok(k.round() as usize)
    }

    fn check(&self) -> LabResult<()> {
        self.base_step().map(|_| ())
    }
}

sampled_scenario!(MalliavinScenario);

/// Problem sizes of the verification suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// The sizes of the acceptance criteria.
    Full,
    /// Fewer paths and coarser steps, same tolerances.
    Quick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyScenario {
    pub seed: u64,
    pub scale: Scale,
    #[serde(default = "all_criteria")]
    pub criteria: Vec<u8>,
    /// Skip the hamiltonian parts (criteria 3 and 7) and the control
    /// tournament (criterion 6).
    #[serde(default)]
    pub linear_only: bool,
}

fn all_criteria() -> Vec<u8> {
    (1..=8).collect()
}

impl Scenario for VerifyScenario {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn apply(&mut self, o: &Overrides) -> LabResult<()> {
        if o.paths.is_some() || o.dt.is_some() {
            return Err(LabError::Config(
                "--paths and --dt do not apply to verify; pick a scale instead".into(),
            ));
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        Ok(())
    }

    fn validate(&self) -> LabResult<()> {
        match self.criteria.iter().find(|c| !(1..=8).contains(*c)) {
            Some(c) => Err(LabError::Config(format!(
                "unknown criterion {c}; verify runs criteria 1 to 8"
            ))),
            None => Ok(()),
        }
    }
}
