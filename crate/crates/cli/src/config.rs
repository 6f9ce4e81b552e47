//! TOML run configuration.
//!
//! ```toml
//! [demand]
//! reference_price = 0.5
//! variation = { law = "constant" }
//!
//! [[demand.atoms]]
//! gamma = 0.5
//! weight = 1.0
//! family = { kind = "uniform", lo = 0.0, hi = 1.0 }
//!
//! [design]
//! kind = "two_price"
//! reference_price = 0.5
//! eps = 0.01
//! q = 0.3
//! delta = 1e-4
//!
//! [buyer]
//! belief = "zero"
//!
//! [run]
//! replications = 200
//! seed = 1
//! out = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use switchback::harness::sweep::{DesignTemplate, HorizonPolicy, SweepSpec};
use switchback::{
    ConditionalDemandFamily, DemandProcess, EstimatorId, HorizonMode, PatienceAtom, PatienceMixture,
    PostExperimentBelief, SwitchbackDesign, TimeVariation,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub demand: DemandConfig,
    pub design: DesignConfig,
    #[serde(default)]
    pub buyer: BuyerConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    pub reference_price: f64,
    /// Minimum distance between any patience level and 1.
    #[serde(default = "default_gap")]
    pub patience_gap: f64,
    #[serde(default)]
    pub variation: TimeVariation,
    pub atoms: Vec<AtomConfig>,
}

fn default_gap() -> f64 {
    PatienceMixture::DEFAULT_GAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub gamma: f64,
    pub weight: f64,
    pub family: ConditionalDemandFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignConfig {
    TwoPrice { reference_price: f64, eps: f64, q: f64, delta: f64 },
    ThreePrice { reference_price: f64, eps: f64, q1: f64, q2: f64, delta: f64 },
    Explicit { prices: Vec<f64>, probs: Vec<f64>, delta: f64, price_cap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerConfig {
    #[serde(default)]
    pub belief: PostExperimentBelief,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Run every experiment for exactly this many periods instead of a
    /// geometric horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_horizon: Option<usize>,
    /// Sweep grid of ending probabilities; defaults to the design's.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    /// Sweep grid of discount steps; defaults to the design's.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    /// Estimators to report; defaults to every one the design supports.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimators: Vec<EstimatorId>,
    /// Ladder shift of the dynamic gradient check.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_replications() -> usize {
    200
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_alpha() -> f64 {
    0.01
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            replications: default_replications(),
            seed: 0,
            out: default_out(),
            fixed_horizon: None,
            deltas: Vec::new(),
            epsilons: Vec::new(),
            estimators: Vec::new(),
            alpha: default_alpha(),
        }
    }
}

/// Parameters of the observational-gap check run by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub h: f64,
    pub gamma2: f64,
    pub q: f64,
    pub eps: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { h: 0.5, gamma2: 0.5, q: 0.3, eps: 0.05 }
    }
}

/// Command-line values that replace config scalars.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub replications: Option<usize>,
    pub fixed_horizon: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.run.seed = seed;
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
        if let Some(r) = o.replications {
            self.run.replications = r;
        }
        if let Some(t) = o.fixed_horizon {
            self.run.fixed_horizon = Some(t);
        }
    }

    pub fn process(&self) -> Result<DemandProcess, CliError> {
        let d = &self.demand;
        let atoms = d.atoms.iter().map(|a| PatienceAtom { gamma: a.gamma, weight: a.weight }).collect();
        let mixture = PatienceMixture::new(atoms, d.patience_gap)?;
        let families = d.atoms.iter().map(|a| a.family).collect();
        Ok(DemandProcess::new(mixture, families, d.variation, d.reference_price)?)
    }

    pub fn design(&self) -> Result<SwitchbackDesign, CliError> {
        Ok(match &self.design {
            DesignConfig::TwoPrice { reference_price, eps, q, delta } => {
                SwitchbackDesign::two_price(*reference_price, *eps, *q, *delta)?
            }
            DesignConfig::ThreePrice { reference_price, eps, q1, q2, delta } => {
                SwitchbackDesign::three_price(*reference_price, *eps, *q1, *q2, *delta)?
            }
            DesignConfig::Explicit { prices, probs, delta, price_cap } => {
                SwitchbackDesign::new(prices.clone(), probs.clone(), *delta, *price_cap)?
            }
        })
    }

    /// Builds the process and design and checks they agree on `p*`.
    pub fn validated(&self) -> Result<(DemandProcess, SwitchbackDesign), CliError> {
        let process = self.process()?;
        let design = self.design()?;
        let (a, b) = (process.reference_price(), design.reference_price());
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(CliError::Validation(format!(
                "reference price mismatch: [demand] reference_price = {a} but [design] prices start at {b}"
            )));
        }
        if self.run.replications == 0 {
            return Err(CliError::Validation("run.replications must be at least 1".into()));
        }
        if self.run.fixed_horizon == Some(0) {
            return Err(CliError::Validation("run.fixed_horizon must be positive".into()));
        }
        Ok((process, design))
    }

    pub fn belief(&self) -> PostExperimentBelief {
        self.buyer.belief
    }

    pub fn horizon(&self) -> HorizonMode {
        self.run.fixed_horizon.map_or(HorizonMode::Geometric, HorizonMode::Fixed)
    }

    /// Requested estimators, or all that fit the design.
    pub fn estimators(&self, levels: usize) -> Result<Vec<EstimatorId>, CliError> {
        if self.run.estimators.is_empty() {
            return Ok(EstimatorId::ALL.into_iter().filter(|e| e.levels() <= levels).collect());
        }
        if let Some(e) = self.run.estimators.iter().find(|e| e.levels() > levels) {
            return Err(CliError::Validation(format!("{e} needs a three-price design")));
        }
        Ok(self.run.estimators.clone())
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let (process, design) = self.validated()?;
        let (template, eps, delta) = match self.design {
            DesignConfig::TwoPrice { eps, q, delta, .. } => (DesignTemplate::TwoPrice { q }, eps, delta),
            DesignConfig::ThreePrice { eps, q1, q2, delta, .. } => (DesignTemplate::ThreePrice { q1, q2 }, eps, delta),
            DesignConfig::Explicit { .. } => {
                return Err(CliError::Validation("sweeps need a two_price or three_price design".into()))
            }
        };
        let or = |grid: &Vec<f64>, x: f64| if grid.is_empty() { vec![x] } else { grid.clone() };
        Ok(SweepSpec {
            process,
            template,
            belief: self.belief(),
            deltas: or(&self.run.deltas, delta),
            epsilons: or(&self.run.epsilons, eps),
            replications: self.run.replications,
            estimators: self.estimators(design.levels())?,
            seed: self.run.seed,
            horizon: self.run.fixed_horizon.map_or(HorizonPolicy::Geometric, HorizonPolicy::Fixed),
        })
    }
}
