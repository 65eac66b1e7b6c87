//! Run configuration (TOML).
//!
//! Every table rejects unknown keys. `--set a.b=value` overrides are applied
//! to the parsed document before it is checked; the value is read as a TOML
//! literal when possible and as a bare string otherwise.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{IlsOptions, SlopeThresholdGrid, ThresholdGrid};
use crate::exec::Exec;
use crate::experiments::{mstar_companion_dgp, mtar_companion_dgp, Estimator, McConfig};
use crate::model::{CoefficientSet, ModelKind, ModelSpec, SimOptions, TransitionFunction, TransitionSource};
use crate::tensor::MatrixNormalSpec;

pub const OUT_DIR_ENV: &str = "MATREG_OUT_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Input series for `estimate`, `lmtest` and `forecast`.
    pub series: Option<PathBuf>,
    /// Fit document for `forecast`.
    pub fit: Option<PathBuf>,
    pub dgp: Option<DgpConfig>,
    pub estimate: EstimateConfig,
    pub lmtest: LmTestConfig,
    pub mc: Option<McSection>,
    pub forecast: ForecastConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Uniformly drawn threshold-model coefficients.
    MtarCompanion,
    /// `A = B = 0.2 I`, `C = D = 0.75 I` smooth-transition model.
    MstarCompanion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTable {
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

impl CoefficientTable {
    fn to_set(&self, what: &str) -> Result<CoefficientSet> {
        let conv = |rows: &[Vec<f64>], side: &str| {
            crate::tensor::rows::from_rows(rows).map_err(|e| Error::Config(format!("dgp.{what}.{side}: {e}")))
        };
        CoefficientSet::new(conv(&self.left, "left")?, conv(&self.right, "right")?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub kind: ModelKind,
    pub t_len: usize,
    pub preset: Option<Preset>,
    /// `[m, n]`, required with a preset.
    pub dims: Option<[usize; 2]>,
    /// Seed of the preset's coefficient draw.
    pub preset_seed: Option<u64>,
    pub regime1: Option<CoefficientTable>,
    pub regime2: Option<CoefficientTable>,
    pub threshold: Option<f64>,
    pub slope: Option<f64>,
    /// Isotropic noise variance; ignored when `noise` is given.
    #[serde(default = "one")]
    pub noise_scale: f64,
    pub noise: Option<MatrixNormalSpec>,
    #[serde(default = "trend")]
    pub source: TransitionSource,
    pub initial: Option<Vec<Vec<f64>>>,
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub allow_nonstationary: bool,
}

fn one() -> f64 {
    1.0
}

fn trend() -> TransitionSource {
    TransitionSource::NormalizedTrend
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Simulation,
    /// Standardizes the series before estimation unless told otherwise.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub model: ModelKind,
    pub mode: Mode,
    pub standardize: Option<bool>,
    /// Transition source recorded in the fit (used by `forecast`).
    pub source: TransitionSource,
    pub threshold_grid: Option<ThresholdGrid>,
    pub slope_grid: Option<SlopeThresholdGrid>,
    pub ils: IlsOptions,
    pub inference: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            model: ModelKind::Mar,
            mode: Mode::Simulation,
            standardize: None,
            source: TransitionSource::NormalizedTrend,
            threshold_grid: None,
            slope_grid: None,
            ils: IlsOptions::default(),
            inference: true,
        }
    }
}

impl EstimateConfig {
    pub fn standardize(&self) -> bool {
        self.standardize.unwrap_or(self.mode == Mode::Empirical)
    }

    pub fn threshold_grid(&self) -> ThresholdGrid {
        self.threshold_grid.clone().unwrap_or_default()
    }

    pub fn slope_grid(&self) -> SlopeThresholdGrid {
        self.slope_grid.clone().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmTestConfig {
    pub order: usize,
}

impl Default for LmTestConfig {
    fn default() -> Self {
        LmTestConfig {
            order: crate::linearity::DEFAULT_TAYLOR_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub replications: usize,
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub noise_free: bool,
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub exec: Exec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// Overrides the source-implied `s_{T+1}`; required for exogenous sources.
    pub s_next: Option<f64>,
}

impl DgpConfig {
    pub fn model(&self) -> Result<ModelSpec> {
        let two_regime = self.kind != ModelKind::Mar;
        if !two_regime && (self.regime2.is_some() || self.threshold.is_some() || self.slope.is_some()) {
            return Err(Error::Config(
                "dgp.kind = \"mar\" does not take regime2, threshold or slope".into(),
            ));
        }
        if self.kind == ModelKind::Mtar && self.slope.is_some() {
            return Err(Error::Config("dgp.kind = \"mtar\" does not take a slope".into()));
        }
        let spec = match self.preset {
            Some(preset) => {
                if self.regime1.is_some() || self.regime2.is_some() {
                    return Err(Error::Config("dgp.preset excludes explicit regime1/regime2".into()));
                }
                let [m, n] = self
                    .dims
                    .ok_or_else(|| Error::Config("dgp.preset needs dgp.dims = [m, n]".into()))?;
                let c = self
                    .threshold
                    .ok_or_else(|| Error::Config("dgp.threshold is required".into()))?;
                match (preset, self.kind) {
                    (Preset::MtarCompanion, ModelKind::Mtar) => {
                        mtar_companion_dgp(m, n, c, self.preset_seed.unwrap_or(0))?
                    }
                    (Preset::MstarCompanion, ModelKind::Mstar) => {
                        let g = self
                            .slope
                            .ok_or_else(|| Error::Config("dgp.slope is required".into()))?;
                        mstar_companion_dgp(m, n, g, c)?
                    }
                    (p, k) => return Err(Error::Config(format!("preset {p:?} does not describe a {k} model"))),
                }
            }
            None => {
                if self.dims.is_some() || self.preset_seed.is_some() {
                    return Err(Error::Config(
                        "dgp.dims and dgp.preset_seed only apply to presets".into(),
                    ));
                }
                let r1 = self
                    .regime1
                    .as_ref()
                    .ok_or_else(|| Error::Config("dgp.regime1 is required".into()))?
                    .to_set("regime1")?;
                let r2 = if two_regime {
                    Some(
                        self.regime2
                            .as_ref()
                            .ok_or_else(|| Error::Config("dgp.regime2 is required".into()))?
                            .to_set("regime2")?,
                    )
                } else {
                    None
                };
                let (m, n) = r1.dims();
                let transition = match self.kind {
                    ModelKind::Mar => None,
                    ModelKind::Mtar => Some(TransitionFunction::indicator(
                        self.threshold
                            .ok_or_else(|| Error::Config("dgp.threshold is required".into()))?,
                    )?),
                    ModelKind::Mstar => Some(TransitionFunction::logistic(
                        self.slope
                            .ok_or_else(|| Error::Config("dgp.slope is required".into()))?,
                        self.threshold
                            .ok_or_else(|| Error::Config("dgp.threshold is required".into()))?,
                    )?),
                };
                ModelSpec {
                    kind: self.kind,
                    regime1: r1,
                    regime2: r2,
                    transition,
                    noise: MatrixNormalSpec::isotropic(m, n, 1.0),
                    source: self.source,
                }
            }
        };
        let (m, n) = spec.dims();
        let noise = match &self.noise {
            Some(nz) => nz.clone(),
            None => MatrixNormalSpec::isotropic(m, n, self.noise_scale),
        };
        let spec = ModelSpec {
            noise,
            source: self.source,
            ..spec
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sim_options(&self, seed: u64) -> Result<SimOptions> {
        let initial = match &self.initial {
            Some(rows) => {
                Some(crate::tensor::rows::from_rows(rows).map_err(|e| Error::Config(format!("dgp.initial: {e}")))?)
            }
            None => None,
        };
        Ok(SimOptions {
            seed,
            burn_in: self.burn_in,
            initial,
            allow_nonstationary: self.allow_nonstationary,
            exogenous: None,
        })
    }
}

impl Config {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {e}")))?;
        apply_overrides(&mut doc, overrides)?;
        let cfg: Config = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides).map_err(|e| match (e, path) {
            (Error::Config(msg), Some(p)) => Error::Config(format!("{}: {msg}", p.display())),
            (e, _) => e,
        })
    }

    /// Grids must match `estimate.model`. Only `estimate` enforces this: a
    /// Monte Carlo run may use both grids.
    pub fn check_model_grids(&self) -> Result<()> {
        let e = &self.estimate;
        match e.model {
            ModelKind::Mar if e.threshold_grid.is_some() || e.slope_grid.is_some() => {
                return Err(Error::Config(
                    "estimate.model = \"mar\" takes neither threshold_grid nor slope_grid".into(),
                ))
            }
            ModelKind::Mtar if e.slope_grid.is_some() => {
                return Err(Error::Config(
                    "estimate.model = \"mtar\" takes threshold_grid, not slope_grid".into(),
                ))
            }
            ModelKind::Mstar if e.threshold_grid.is_some() => {
                return Err(Error::Config(
                    "estimate.model = \"mstar\" takes slope_grid, not threshold_grid".into(),
                ))
            }
            _ => {}
        }
        Ok(())
    }

    /// Cross-field rules serde cannot express.
    fn check(&self) -> Result<()> {
        if self.lmtest.order == 0 {
            return Err(Error::Usage("lmtest.order (Taylor order K) must be at least 1".into()));
        }
        if let Some(d) = &self.dgp {
            d.model()?;
        }
        Ok(())
    }

    /// `--out`, then `MATREG_OUT_DIR`, then `out_dir`, then `./out`.
    pub fn resolve_out_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn mc_config(&self) -> Result<McConfig> {
        let dgp = self
            .dgp
            .as_ref()
            .ok_or_else(|| Error::Config("mc needs a [dgp] table".into()))?;
        let mc = self
            .mc
            .as_ref()
            .ok_or_else(|| Error::Config("mc needs an [mc] table".into()))?;
        let mut cfg = McConfig::new(dgp.model()?, dgp.t_len, mc.replications, mc.estimators.clone());
        cfg.threshold_grid = self.estimate.threshold_grid();
        cfg.slope_grid = self.estimate.slope_grid();
        cfg.ils = self.estimate.ils.clone();
        cfg.base_seed = self.seed;
        cfg.burn_in = dgp.burn_in;
        cfg.noise_free = mc.noise_free;
        cfg.record_timing = mc.record_timing;
        cfg.exec = mc.exec;
        Ok(cfg)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `key.path=value` overrides in order; later ones win.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<()> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, ov) in overrides.iter().enumerate() {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override `{ov}` is not of the form key=value")))?;
        let key = key.trim();
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Usage(format!("override key `{key}` is malformed")));
        }
        if let Some(prev) = seen.insert(key.to_string(), i) {
            log::info!(
                "override `{key}` given more than once; `{}` replaces `{}`",
                ov,
                overrides[prev]
            );
        }
        let mut table = &mut *doc;
        for p in &parts[..parts.len() - 1] {
            let entry = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
        }
        let last = parts[parts.len() - 1];
        let value = parse_value(raw.trim());
        if let Some(old) = table.insert(last.to_string(), value) {
            log::info!("override `{key}` replaces config value {old}");
        }
    }
    Ok(())
}
