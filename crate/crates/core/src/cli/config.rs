use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CsvSchema, PanelDataset, Policy, TreatmentLabels};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceSettings;
use crate::pipeline::{EstimationSettings, EstimatorKind};
use crate::scalar::Real;
use crate::simulator::{
    BenchEstimator, BenchmarkSpec, DgpConfig, EnumerableDgpConfig, DEFAULT_ORACLE_DRAWS,
};
use crate::trimming::TrimRule;

/// Environment variable giving the default worker count.
pub const WORKERS_ENV: &str = "SEQDML_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Estimate,
    TrimReport,
    Benchmark,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::TrimReport => "trim-report",
            Command::Benchmark => "benchmark",
        }
    }
}

/// A treatment given by numeric id or by its label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreatmentRef {
    Id(usize),
    Label(String),
}

impl TreatmentRef {
    fn resolve(&self, labels: &[String], period: u8) -> Result<usize> {
        match self {
            TreatmentRef::Id(i) => Ok(*i),
            TreatmentRef::Label(s) => labels
                .iter()
                .position(|l| l == s)
                .or_else(|| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("unknown period-{period} treatment `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKindConfig {
    Static,
    Dynamic,
}

/// One policy as written in the run file. Static policies give `d2`;
/// dynamic ones give both branches keyed on the decision variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: String,
    #[serde(default)]
    pub kind: Option<PolicyKindConfig>,
    pub d1: TreatmentRef,
    #[serde(default)]
    pub d2: Option<TreatmentRef>,
    #[serde(default)]
    pub d2_if_v1_zero: Option<TreatmentRef>,
    #[serde(default)]
    pub d2_if_v1_one: Option<TreatmentRef>,
}

impl PolicyConfig {
    pub fn resolve(&self, labels: &TreatmentLabels) -> Result<Policy> {
        let d1 = self.d1.resolve(&labels.period1, 1)?;
        let r2 = |t: &TreatmentRef| t.resolve(&labels.period2, 2);
        let bad = |m: &str| Error::Config(format!("policy `{}`: {m}", self.name));
        let kind = match (self.kind, &self.d2) {
            (Some(k), _) => k,
            (None, Some(_)) => PolicyKindConfig::Static,
            (None, None) => PolicyKindConfig::Dynamic,
        };
        match kind {
            PolicyKindConfig::Static => {
                let d2 = self
                    .d2
                    .as_ref()
                    .ok_or_else(|| bad("static policy needs `d2`"))?;
                if self.d2_if_v1_zero.is_some() || self.d2_if_v1_one.is_some() {
                    return Err(bad("static policy takes `d2`, not branch treatments"));
                }
                Ok(Policy::static_sequence(&self.name, d1, r2(d2)?))
            }
            PolicyKindConfig::Dynamic => {
                if self.d2.is_some() {
                    return Err(bad("dynamic policy takes branch treatments, not `d2`"));
                }
                let z = self
                    .d2_if_v1_zero
                    .as_ref()
                    .ok_or_else(|| bad("missing `d2_if_v1_zero`"))?;
                let o = self
                    .d2_if_v1_one
                    .as_ref()
                    .ok_or_else(|| bad("missing `d2_if_v1_one`"))?;
                Ok(Policy::dynamic(&self.name, d1, r2(z)?, r2(o)?))
            }
        }
    }

    pub fn from_policy(p: &Policy) -> Self {
        let id = |i| Some(TreatmentRef::Id(i));
        if p.is_static() {
            PolicyConfig {
                name: p.name.clone(),
                kind: Some(PolicyKindConfig::Static),
                d1: TreatmentRef::Id(p.d1_target),
                d2: id(p.d2_if_v1_zero),
                d2_if_v1_zero: None,
                d2_if_v1_one: None,
            }
        } else {
            PolicyConfig {
                name: p.name.clone(),
                kind: Some(PolicyKindConfig::Dynamic),
                d1: TreatmentRef::Id(p.d1_target),
                d2: None,
                d2_if_v1_zero: id(p.d2_if_v1_zero),
                d2_if_v1_one: id(p.d2_if_v1_one),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    pub schema: CsvSchema,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerPreset {
    #[default]
    Forest,
    /// Logistic propensities and ridge outcome models.
    Parametric,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub method: EstimatorKind,
    pub folds: usize,
    /// Starting point for the learners; `nuisance` replaces it when given.
    pub learners: LearnerPreset,
    pub nuisance: Option<NuisanceSettings>,
    pub trim: TrimRule,
    pub refit_after_trim: bool,
    pub precision: Precision,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        let s = EstimationSettings::default();
        EstimationConfig {
            method: s.method,
            folds: s.folds,
            learners: LearnerPreset::default(),
            nuisance: None,
            trim: s.trim,
            refit_after_trim: s.refit_after_trim,
            precision: Precision::default(),
        }
    }
}

impl EstimationConfig {
    pub fn settings(&self, seed: u64) -> EstimationSettings {
        let nuisance = self
            .nuisance
            .clone()
            .unwrap_or_else(|| match self.learners {
                LearnerPreset::Forest => NuisanceSettings::default(),
                LearnerPreset::Parametric => NuisanceSettings::parametric(),
            });
        EstimationSettings {
            method: self.method,
            folds: self.folds,
            seed,
            nuisance: nuisance.with_seed(seed),
            trim: self.trim,
            refit_after_trim: self.refit_after_trim,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dump_nuisances: bool,
    pub dump_scores: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpFamily {
    #[default]
    Continuous,
    Enumerable,
}

/// Which simulator to run and how big a sample to draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub family: DgpFamily,
    /// `dynamic_confounding`, `randomized` or `thin_overlap` for the
    /// continuous family; `calibrated` or `constant_propensity` for the
    /// enumerable one.
    pub preset: Option<String>,
    pub n: Option<usize>,
    /// Selection strength of the `thin_overlap` preset.
    pub strength: f64,
    /// Full model tables, used instead of a preset.
    pub continuous: Option<DgpConfig>,
    pub enumerable: Option<EnumerableDgpConfig>,
    /// CSV file name inside the output directory.
    pub file: String,
    pub oracle_draws: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            family: DgpFamily::default(),
            preset: None,
            n: None,
            strength: 2.0,
            continuous: None,
            enumerable: None,
            file: "simulated.csv".into(),
            oracle_draws: DEFAULT_ORACLE_DRAWS,
        }
    }
}

/// A concrete simulator built from [`SimulateConfig`].
#[derive(Clone, Debug, PartialEq)]
pub enum Dgp {
    Continuous(DgpConfig),
    Enumerable(EnumerableDgpConfig),
}

impl SimulateConfig {
    pub fn build(&self) -> Result<Dgp> {
        let unknown = |p: &str| {
            Err(Error::Config(format!(
                "unknown {:?} preset `{p}`",
                self.family
            )))
        };
        let dgp = match self.family {
            DgpFamily::Continuous => {
                let mut c = match (&self.continuous, self.preset.as_deref()) {
                    (Some(c), _) => c.clone(),
                    (None, None | Some("dynamic_confounding")) => {
                        DgpConfig::dynamic_confounding(5000)
                    }
                    (None, Some("randomized")) => {
                        DgpConfig::randomized(5000, vec![0.0, 0.0], vec![0.0, 0.0, 0.0])
                    }
                    (None, Some("thin_overlap")) => DgpConfig::thin_overlap(5000, self.strength),
                    (None, Some(p)) => return unknown(p),
                };
                if let Some(n) = self.n {
                    c.n = n;
                }
                c.validate()?;
                Dgp::Continuous(c)
            }
            DgpFamily::Enumerable => {
                let mut c = match (&self.enumerable, self.preset.as_deref()) {
                    (Some(c), _) => c.clone(),
                    (None, None | Some("calibrated")) => EnumerableDgpConfig::calibrated(20_000),
                    (None, Some("constant_propensity")) => {
                        EnumerableDgpConfig::constant_propensity(20_000)
                    }
                    (None, Some(p)) => return unknown(p),
                };
                if let Some(n) = self.n {
                    c.n = n;
                }
                c.validate()?;
                Dgp::Enumerable(c)
            }
        };
        Ok(dgp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub seeds: usize,
    pub n: Option<usize>,
    pub estimators: Vec<BenchEstimator>,
    pub oracle_draws: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let s = BenchmarkSpec::default();
        BenchmarkConfig {
            seeds: s.seeds,
            n: s.n,
            estimators: s.estimators,
            oracle_draws: s.oracle_draws,
        }
    }
}

/// Everything one run needs, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub input: Option<InputConfig>,
    /// Column holding group labels; overrides `input.schema.z0`.
    pub group: Option<String>,
    pub policies: Vec<PolicyConfig>,
    pub estimation: EstimationConfig,
    pub output: OutputConfig,
    pub simulate: SimulateConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            seed: 0,
            workers: None,
            output_dir: PathBuf::from("seqdml-out"),
            input: None,
            group: None,
            policies: Vec::new(),
            estimation: EstimationConfig::default(),
            output: OutputConfig::default(),
            simulate: SimulateConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Read a run file; relative paths in it are taken from its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        if let Some(inp) = &mut self.input {
            if inp.path.is_relative() {
                inp.path = base.join(&inp.path);
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Schema with the group override applied.
    pub fn schema(&self) -> Result<CsvSchema> {
        let inp = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Config("`input` section is required for this command".into()))?;
        let mut s = inp.schema.clone();
        if let Some(g) = &self.group {
            s.z0 = Some(g.clone());
        }
        Ok(s)
    }

    pub fn validate(&self, cmd: Command) -> Result<()> {
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.estimation.folds < 2 {
            return Err(Error::Config(format!(
                "need at least 2 folds, got {}",
                self.estimation.folds
            )));
        }
        self.estimation.settings(self.seed).nuisance.validate()?;
        match cmd {
            Command::Estimate | Command::TrimReport => {
                let inp = self.input.as_ref().ok_or_else(|| {
                    Error::Config("`input` section is required for this command".into())
                })?;
                if !inp.path.is_file() {
                    return Err(Error::Config(format!(
                        "input file {} does not exist",
                        inp.path.display()
                    )));
                }
                if self.policies.is_empty() {
                    return Err(Error::Config("policy list is empty".into()));
                }
            }
            Command::Simulate => {
                self.simulate.build()?;
            }
            Command::Benchmark => {
                self.simulate.build()?;
                if self.policies.is_empty() {
                    return Err(Error::Config("policy list is empty".into()));
                }
                if self.benchmark.seeds == 0 {
                    return Err(Error::Config("benchmark needs at least one seed".into()));
                }
            }
        }
        Ok(())
    }

    pub fn resolve_policies<T: Real>(&self, ds: &PanelDataset<T>) -> Result<Vec<Policy>> {
        self.policies
            .iter()
            .map(|p| p.resolve(ds.labels()))
            .collect()
    }

    /// Policies against numeric labels of the given treatment counts.
    pub fn numeric_policies(&self, m1: usize, m2: usize) -> Result<Vec<Policy>> {
        let labels = TreatmentLabels::numeric(m1, m2);
        self.policies.iter().map(|p| p.resolve(&labels)).collect()
    }
}
