//! Scenario documents: strict TOML configuration binding a graph, a
//! potential, initial data, integrator settings, and output placement into
//! one reproducible run description.
//!
//! Parsing is strict (unknown keys are errors) and emit/parse is an
//! identity on scenarios, so the canonical emitted document doubles as the
//! hash input for run manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fpgraph_core::{
    generate_family_scaled, gibbs_density, Density, GraphFamily, IntegratorConfig,
    IntegratorMethod, Potential, TruncationMode, WeightedGraph,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Master seed; seeded sub-generators default to it.
    #[serde(default)]
    pub seed: u64,
    pub graph: GraphSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Path,
    Cycle,
    LatticeZ,
    BinaryTree,
    RandomSparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    /// Edge-list text file; mutually exclusive with `family`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyName>,
    /// Family size: path/cycle vertex count, lattice window, tree depth,
    /// random-graph vertex count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    /// Average degree for the random family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    /// Seed for the random family; defaults to the scenario seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_seed: Option<u64>,
    #[serde(default = "default_mode")]
    pub mode: TruncationMode,
    #[serde(default = "default_scale")]
    pub weight_scale: f64,
}

fn default_mode() -> TruncationMode {
    TruncationMode::Closed
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    Linear,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Slope of the linear-in-distance potential.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Zero,
            c: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Uniform,
    Perturbed,
    Gibbs,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub kind: InitKind,
    /// Relative amplitude of the multiplicative perturbation, in (0, 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Seed for the perturbation; defaults to the scenario seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            kind: InitKind::Uniform,
            amplitude: None,
            init_seed: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default = "default_method")]
    pub method: MethodName,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Rk45,
    SemiImplicit,
}

fn default_method() -> MethodName {
    MethodName::Rk45
}
fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-12
}
fn default_dt_init() -> f64 {
    1e-3
}
fn default_dt_min() -> f64 {
    1e-12
}
fn default_dt_max() -> f64 {
    1.0
}
fn default_floor() -> f64 {
    0.1
}
fn default_horizon() -> f64 {
    10.0
}
fn default_record_every() -> usize {
    10
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            method: default_method(),
            rtol: default_rtol(),
            atol: default_atol(),
            dt_init: default_dt_init(),
            dt_min: default_dt_min(),
            dt_max: default_dt_max(),
            positivity_floor: default_floor(),
            horizon: default_horizon(),
            record_every: default_record_every(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Even exponents for the recorded distances to Gibbs.
    #[serde(default = "default_exponents")]
    pub exponents: Vec<u32>,
    /// Tolerance band of the matched set in partition diagnostics.
    #[serde(default = "default_band")]
    pub matched_tolerance: f64,
}

fn default_exponents() -> Vec<u32> {
    vec![2, 4, 8]
}
fn default_band() -> f64 {
    1e-12
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            exponents: default_exponents(),
            matched_tolerance: default_band(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_prefix() -> String {
    "run".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            prefix: default_prefix(),
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::Parse(format!("{}: {e}", path.as_ref().display()))
        })?;
        Self::parse(&text)
    }

    /// Canonical emitted document; `parse(emit(s)) == s`.
    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    /// Hash of the canonical document.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.emit().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.graph.file, &self.graph.family) {
            (Some(_), Some(_)) => {
                return Err(CliError::Validation(
                    "graph.file and graph.family are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Validation(
                    "graph needs either `file` or `family`".into(),
                ))
            }
            (None, Some(_)) if self.graph.size.is_none() => {
                return Err(CliError::Validation("graph.family needs `size`".into()))
            }
            _ => {}
        }
        if self.graph.family == Some(FamilyName::RandomSparse) && self.graph.degree.is_none() {
            return Err(CliError::Validation(
                "random_sparse graphs need `degree`".into(),
            ));
        }
        if self.potential.kind == PotentialKind::Linear && self.potential.c.is_none() {
            return Err(CliError::Validation("linear potential needs `c`".into()));
        }
        if self.potential.kind == PotentialKind::File && self.potential.file.is_none() {
            return Err(CliError::Validation("file potential needs `file`".into()));
        }
        if self.init.kind == InitKind::File && self.init.file.is_none() {
            return Err(CliError::Validation("file init needs `file`".into()));
        }
        if let Some(a) = self.init.amplitude {
            if !(0.0 < a && a < 1.0) {
                return Err(CliError::Validation(
                    "init.amplitude must lie in (0, 1)".into(),
                ));
            }
        }
        for &p in &self.analysis.exponents {
            if p == 0 || p % 2 != 0 {
                return Err(CliError::Validation(format!(
                    "analysis exponent {p} must be even and positive"
                )));
            }
        }
        self.integrator_config().validate().map_err(CliError::from)
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let s = &self.integrator;
        IntegratorConfig {
            method: match s.method {
                MethodName::Rk45 => IntegratorMethod::AdaptiveRk45,
                MethodName::SemiImplicit => IntegratorMethod::SemiImplicit,
            },
            rtol: s.rtol,
            atol: s.atol,
            dt_init: s.dt_init,
            dt_min: s.dt_min,
            dt_max: s.dt_max,
            positivity_floor: s.positivity_floor,
            horizon: s.horizon,
            record_every: s.record_every,
            norm_exponents: self.analysis.exponents.clone(),
        }
    }

    pub fn build_graph(&self) -> Result<WeightedGraph, CliError> {
        if let Some(path) = &self.graph.file {
            return Ok(fpgraph_core::formats::read_graph_text(path)?);
        }
        let size = self.graph.size.expect("validated");
        let family = match self.graph.family.expect("validated") {
            FamilyName::Path => GraphFamily::Path { n: size },
            FamilyName::Cycle => GraphFamily::Cycle { n: size },
            FamilyName::LatticeZ => GraphFamily::LatticeZ { window: size },
            FamilyName::BinaryTree => GraphFamily::BinaryTree { depth: size },
            FamilyName::RandomSparse => GraphFamily::RandomSparse {
                n: size,
                degree: self.graph.degree.expect("validated"),
                seed: self.graph.graph_seed.unwrap_or(self.seed),
            },
        };
        Ok(generate_family_scaled(
            &family,
            self.graph.mode,
            self.graph.weight_scale,
        )?)
    }

    pub fn build_potential(&self, g: &WeightedGraph) -> Result<Potential, CliError> {
        match self.potential.kind {
            PotentialKind::Zero => Ok(Potential::zero(g)),
            PotentialKind::Linear => Ok(Potential::from_distance(
                g,
                self.potential.c.expect("validated"),
            )),
            PotentialKind::File => {
                let values = fpgraph_core::formats::read_values_json(
                    self.potential.file.as_ref().expect("validated"),
                )?;
                Ok(Potential::new(values, g)?)
            }
        }
    }

    pub fn build_init(
        &self,
        g: &WeightedGraph,
        psi: &Potential,
    ) -> Result<Density, CliError> {
        match self.init.kind {
            InitKind::Uniform => Ok(Density::uniform(g)),
            InitKind::Gibbs => Ok(gibbs_density(g, psi)?.0),
            InitKind::Perturbed => {
                let amplitude = self.init.amplitude.unwrap_or(0.5);
                let seed = self.init.init_seed.unwrap_or(self.seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let raw: Vec<f64> = (0..g.n())
                    .map(|_| 1.0 + amplitude * rng.random_range(-1.0..1.0f64))
                    .collect();
                Ok(Density::new(&raw, g)?.0)
            }
            InitKind::File => {
                let values = fpgraph_core::formats::read_values_json(
                    self.init.file.as_ref().expect("validated"),
                )?;
                Ok(Density::new(&values, g)?.0)
            }
        }
    }
}

/// Applies a dotted-path override like `potential.c = 2.0` to a scenario
/// document and reparses it strictly. Values are parsed as integer, float,
/// boolean, or string, in that order.
pub fn apply_override(base: &Scenario, path: &str, raw_value: &str) -> Result<Scenario, CliError> {
    let mut value: toml::Value = toml::from_str(&base.emit())
        .map_err(|e| CliError::Parse(format!("internal re-parse failed: {e}")))?;
    let parsed = parse_toml_scalar(raw_value);

    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::Validation(format!("bad override path `{path}`")));
    }
    let mut cursor = &mut value;
    for seg in &segments[..segments.len() - 1] {
        cursor = cursor
            .as_table_mut()
            .and_then(|t| t.get_mut(*seg))
            .ok_or_else(|| CliError::Validation(format!("unknown override table `{seg}`")))?;
    }
    let table = cursor
        .as_table_mut()
        .ok_or_else(|| CliError::Validation(format!("override path `{path}` is not a table")))?;
    table.insert(segments.last().unwrap().to_string(), parsed);

    let scenario: Scenario = value
        .try_into()
        .map_err(|e| CliError::Parse(format!("override `{path}`: {e}")))?;
    scenario.validate()?;
    Ok(scenario)
}

fn parse_toml_scalar(raw: &str) -> toml::Value {
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    toml::Value::String(raw.to_string())
}
