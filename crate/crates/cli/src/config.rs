//! Run configuration, read from a TOML file with optional `--set` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use multilink::fitting::{grid_values, FitOptions};
use multilink::link::{GeneratingFamily, MultinomialLink, Standardization};
use multilink::model::{Dataset, ModelSpec, Term};
use multilink::percentile::{CovarianceScale, PercentileQuery, RegionMethod, TraceGrid};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset path. Relative paths are taken from the config file's
    /// directory.
    pub data: PathBuf,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub percentile: PercentileConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Terms per category such as `["1", "x1", "x2"]`. When absent every
    /// category gets an intercept and all covariates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyChoice {
    #[default]
    Czado,
    Identity,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizationChoice {
    #[default]
    AtIntercepts,
    AtZero,
}

impl From<StandardizationChoice> for Standardization {
    fn from(s: StandardizationChoice) -> Self {
        match s {
            StandardizationChoice::AtIntercepts => Standardization::AtIntercepts,
            StandardizationChoice::AtZero => Standardization::AtZero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

/// Which link parameters are estimated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActiveSet {
    /// Chosen by forward stepwise selection.
    Auto(Auto),
    /// One flag per parameter and category. An empty mask means none.
    Mask(Vec<Vec<bool>>),
}

impl Default for ActiveSet {
    fn default() -> Self {
        ActiveSet::Mask(Vec::new())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    #[serde(default)]
    pub family: FamilyChoice,
    #[serde(default)]
    pub standardization: StandardizationChoice,
    #[serde(default)]
    pub active: ActiveSet,
}

impl LinkConfig {
    pub fn is_auto(&self) -> bool {
        matches!(self.active, ActiveSet::Auto(_))
    }

    /// The configured link for `q` categories. With `active = "auto"` every
    /// parameter is active; stepwise selection starts from this link.
    pub fn build(&self, q: usize) -> CliResult<MultinomialLink> {
        let standardization = self.standardization.into();
        let families = match self.family {
            FamilyChoice::Identity => {
                if matches!(&self.active, ActiveSet::Mask(m) if m.iter().flatten().any(|&a| a)) {
                    return Err(CliError::Input("the identity family has no link parameters".into()));
                }
                vec![GeneratingFamily::identity(); q]
            }
            FamilyChoice::Czado => match &self.active {
                ActiveSet::Auto(_) => vec![GeneratingFamily::czado([true, true]); q],
                ActiveSet::Mask(m) if m.is_empty() => vec![GeneratingFamily::czado([false, false]); q],
                ActiveSet::Mask(m) => {
                    if m.len() != q || m.iter().any(|row| row.len() != 2) {
                        return Err(CliError::Input(format!(
                            "link.active needs {q} rows of two flags, got {m:?}"
                        )));
                    }
                    m.iter().map(|row| GeneratingFamily::czado([row[0], row[1]])).collect()
                }
            },
        };
        Ok(MultinomialLink::new(families, standardization))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethodChoice {
    #[default]
    FisherScoring,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lo: -3.0,
            hi: 3.0,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub method: FitMethodChoice,
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub grid: GridConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        let opts = FitOptions::default();
        FitConfig {
            method: FitMethodChoice::default(),
            tol: opts.tol,
            max_iter: opts.max_iter,
            max_halvings: opts.max_halvings,
            grid: GridConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            max_halvings: self.max_halvings,
        }
    }

    pub fn grid_axis(&self) -> CliResult<Vec<f64>> {
        let g = &self.grid;
        if !(g.step > 0.0 && g.lo <= g.hi) {
            return Err(CliError::Input(format!(
                "invalid grid {} to {} step {}",
                g.lo, g.hi, g.step
            )));
        }
        Ok(grid_values(g.lo, g.hi, g.step))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Conservative,
    Lr,
    Score,
}

impl From<MethodChoice> for RegionMethod {
    fn from(m: MethodChoice) -> Self {
        match m {
            MethodChoice::Conservative => RegionMethod::Conservative,
            MethodChoice::Lr => RegionMethod::LikelihoodRatio,
            MethodChoice::Score => RegionMethod::ScoreTest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    pub n1: usize,
    pub n2: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        let g = TraceGrid::default();
        TraceConfig { n1: g.n1, n2: g.n2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PercentileConfig {
    pub pi0: Vec<f64>,
    pub tau_prime: f64,
    /// `[lo, hi]` per covariate.
    pub window: Vec<[f64; 2]>,
    pub covariance_scale: CovarianceScale,
    pub methods: Vec<MethodChoice>,
    pub trace: TraceConfig,
}

impl Default for PercentileConfig {
    fn default() -> Self {
        let q = PercentileQuery::new(vec![0.75, 0.2]);
        PercentileConfig {
            pi0: q.pi0,
            tau_prime: q.tau_prime,
            window: q.window.iter().map(|&(lo, hi)| [lo, hi]).collect(),
            covariance_scale: q.covariance_scale,
            methods: vec![MethodChoice::Conservative, MethodChoice::Lr, MethodChoice::Score],
            trace: TraceConfig::default(),
        }
    }
}

impl PercentileConfig {
    pub fn query(&self) -> CliResult<PercentileQuery> {
        let query = PercentileQuery {
            pi0: self.pi0.clone(),
            tau_prime: self.tau_prime,
            window: self.window.iter().map(|w| (w[0], w[1])).collect(),
            covariance_scale: self.covariance_scale,
        };
        query.validate()?;
        Ok(query)
    }

    pub fn methods(&self) -> Vec<RegionMethod> {
        let mut out: Vec<RegionMethod> = Vec::new();
        for &m in &self.methods {
            let m = m.into();
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    pub fn trace_grid(&self) -> CliResult<TraceGrid> {
        if self.trace.n1 == 0 || self.trace.n2 == 0 {
            return Err(CliError::Input("trace resolution must be positive".into()));
        }
        Ok(TraceGrid {
            n1: self.trace.n1,
            n2: self.trace.n2,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// `report.txt`
    Txt,
    /// `report.kv` and `region_meta.kv`
    Kv,
    /// `covariance.csv` and `region_<method>.csv`
    Csv,
    /// `regions.svg`
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory, relative to the config file's directory.
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            formats: vec![Format::Txt, Format::Kv, Format::Csv, Format::Svg],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl RunConfig {
    /// Parse a config document without resolving paths.
    pub fn from_toml(text: &str) -> CliResult<Self> {
        Self::from_table(parse_table(text)?)
    }

    fn from_table(table: Table) -> CliResult<Self> {
        Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Input(format!("invalid config: {}", e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Read `path` (or start from an empty document), apply `key=value`
    /// overrides and resolve relative paths against the file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (parse_table(&text)?, base)
            }
            None => (Table::new(), PathBuf::new()),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut config = Self::from_table(table)?;
        if config.data.is_relative() {
            config.data = base.join(&config.data);
        }
        if config.output.dir.is_relative() {
            config.output.dir = base.join(&config.output.dir);
        }
        Ok(config)
    }

    pub fn load_data(&self) -> CliResult<Dataset> {
        if !self.data.exists() {
            return Err(CliError::Input(format!("data file not found: {}", self.data.display())));
        }
        Ok(multilink::csv::load_csv(&self.data)?)
    }

    pub fn model_spec(&self, data: &Dataset) -> CliResult<ModelSpec> {
        let spec = match &self.model.terms {
            None => ModelSpec::first_order(data.q(), data.k()),
            Some(terms) => {
                let parsed = terms
                    .iter()
                    .map(|row| row.iter().map(|t| t.parse::<Term>()).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()?;
                ModelSpec::new(parsed)?
            }
        };
        spec.check_dataset(data)?;
        Ok(spec)
    }
}

fn parse_table(text: &str) -> CliResult<Table> {
    text.parse::<Table>()
        .map_err(|e| CliError::Input(format!("invalid config: {}", e.message())))
}

/// Set the dotted `key` of `table` to `value`, read as a TOML value when it
/// parses as one and as a string otherwise.
pub fn apply_override(table: &mut Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("--set expects key=value, got `{assignment}`")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Input(format!("invalid key `{key}`")));
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for part in parents {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Input(format!("`{part}` in `{key}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
