//! Run configuration: JSON schema, validation, and resolution against the
//! chart catalog.
//!
//! A configuration names a manifold (catalog entry or inline descriptor),
//! optionally pins a base point, a sampling protocol, a curve, tolerance
//! overrides, and an apex candidate. Every field is validated before any
//! numerics run; violations surface as [`CliError::Config`] and exit
//! code 2.

use std::fmt;
use std::path::Path;

use holonomy_core::catalog::{self, ChartDescriptor};
use holonomy_core::transport::{LoopSpec, SamplingProtocol};
use holonomy_core::{Chart64, Tolerances};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Failure carrying the exit-code class: configuration problems exit 2,
/// numerical failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }

    /// Wraps a core error raised while computing (not while validating
    /// input); everything at that stage counts as numerical.
    pub fn numerical(err: holonomy_core::Error) -> Self {
        CliError::Numerical(err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

fn cfg(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Catalog entry name or inline chart descriptor.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ManifoldRef {
    Name(String),
    Inline(ChartDescriptor),
}

/// Explicit curve for `holonomy` and `develop`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveConfig {
    /// Coordinate rectangle in the plane of coordinates `(i, j)`.
    Rectangle { i: usize, j: usize, scale: f64 },
    /// Loop winding a periodic coordinate.
    Winding {
        coord: usize,
        #[serde(default = "default_turns")]
        turns: i64,
    },
    /// Piecewise-straight curve through explicit chart points; the first
    /// point is the base. Closed polylines are required by `holonomy`,
    /// open ones are fine for `develop`.
    Polyline { points: Vec<Vec<f64>> },
}

fn default_turns() -> i64 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifold: ManifoldRef,
    /// Base point in chart coordinates; defaults to the catalog entry's
    /// base and is mandatory for inline descriptors.
    #[serde(default)]
    pub base: Option<Vec<f64>>,
    /// Loop sampling protocol. The seed has no default: randomized runs
    /// must pin it, either here or with `--seed`.
    #[serde(default)]
    pub protocol: Option<SamplingProtocol>,
    /// RK4 step in curve-parameter units; defaults to `tolerances.rk4_step`.
    #[serde(default)]
    pub step: Option<f64>,
    /// Partial tolerance overrides; omitted fields keep their defaults.
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    /// Candidate apex in base-frame coordinates for `cone-check`.
    #[serde(default)]
    pub p_star: Option<Vec<f64>>,
    #[serde(default)]
    pub curve: Option<CurveConfig>,
    /// Largest winding multiplicity probed by translation-growth reports.
    #[serde(default)]
    pub k_max: Option<usize>,
}

/// Flag overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides<'a> {
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub tol_file: Option<&'a Path>,
}

/// A validated, buildable run: chart constructed, base checked, tolerances
/// merged.
pub struct Resolved {
    pub chart: Chart64,
    pub base: DVector<f64>,
    /// Catalog name, or the chart label for inline descriptors.
    pub name: String,
    pub descriptor: ChartDescriptor,
    pub protocol: Option<SamplingProtocol>,
    pub step: f64,
    pub tol: Tolerances,
    pub p_star: Option<DVector<f64>>,
    pub curve: Option<CurveConfig>,
    pub k_max: usize,
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| cfg(format!("{}: {e}", path.display())))
}

pub fn load_tolerances(path: &Path) -> CliResult<Tolerances> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg(format!("cannot read {}: {e}", path.display())))?;
    let tol: Tolerances =
        serde_json::from_str(&text).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
    tol.validate().map_err(cfg)?;
    Ok(tol)
}

pub fn resolve(config: RunConfig, over: Overrides<'_>) -> CliResult<Resolved> {
    let (descriptor, name, default_base) = match &config.manifold {
        ManifoldRef::Name(name) => {
            let entry = catalog::lookup(name).ok_or_else(|| {
                let known: Vec<String> =
                    catalog::entries().into_iter().map(|e| e.name).collect();
                cfg(format!(
                    "unknown catalog entry {name:?}; available: {}",
                    known.join(", ")
                ))
            })?;
            (entry.descriptor, entry.name, Some(entry.base))
        }
        ManifoldRef::Inline(d) => (d.clone(), String::new(), None),
    };
    let chart = descriptor
        .build::<f64>()
        .map_err(|e| cfg(e.to_string()))?;
    let name = if name.is_empty() {
        chart.label().to_string()
    } else {
        name
    };

    let base_vec = config
        .base
        .or(default_base)
        .ok_or_else(|| cfg("inline manifold descriptors need an explicit base point"))?;
    if base_vec.len() != chart.dim() {
        return Err(cfg(format!(
            "base point has {} coordinates, chart {name} has dimension {}",
            base_vec.len(),
            chart.dim()
        )));
    }
    let base = DVector::from_vec(base_vec);
    if !chart.in_domain(&base) {
        return Err(cfg(format!("base point {base:?} is outside the {name} domain")));
    }

    let mut tol = match over.tol_file {
        Some(path) => load_tolerances(path)?,
        None => config.tolerances.unwrap_or_default(),
    };
    tol.validate().map_err(cfg)?;
    if let Some(step) = over.step.or(config.step) {
        if !(step.is_finite() && step > 0.0) {
            return Err(cfg(format!("step must be finite and positive, got {step}")));
        }
        tol.rk4_step = step;
    }
    let step = tol.rk4_step;

    let mut protocol = config.protocol;
    if let Some(seed) = over.seed {
        match &mut protocol {
            Some(p) => p.seed = seed,
            None => protocol = Some(SamplingProtocol::with_seed(seed)),
        }
    }
    if let Some(p) = &protocol {
        p.validate(chart.dim()).map_err(|e| cfg(e.to_string()))?;
    }

    let p_star = match config.p_star {
        Some(v) => {
            if v.len() != chart.dim() {
                return Err(cfg(format!(
                    "p_star has {} coordinates, chart {name} has dimension {}",
                    v.len(),
                    chart.dim()
                )));
            }
            Some(DVector::from_vec(v))
        }
        None => None,
    };

    if let Some(curve) = &config.curve {
        validate_curve(curve, &chart)?;
    }

    Ok(Resolved {
        base,
        name,
        descriptor,
        protocol,
        step,
        tol,
        p_star,
        curve: config.curve,
        k_max: config.k_max.unwrap_or(5),
        chart,
    })
}

fn validate_curve(curve: &CurveConfig, chart: &Chart64) -> CliResult<()> {
    let m = chart.dim();
    match curve {
        CurveConfig::Rectangle { i, j, scale } => {
            if *i >= m || *j >= m || i == j {
                return Err(cfg(format!(
                    "rectangle plane ({i}, {j}) is not a coordinate pair in dimension {m}"
                )));
            }
            if !(scale.is_finite() && *scale > 0.0) {
                return Err(cfg("rectangle scale must be finite and positive"));
            }
        }
        CurveConfig::Winding { coord, turns } => {
            if *coord >= m {
                return Err(cfg(format!("winding coordinate {coord} out of range for dimension {m}")));
            }
            if chart.periods()[*coord].is_none() {
                return Err(cfg(format!("coordinate {coord} of {} is not periodic", chart.label())));
            }
            if *turns == 0 {
                return Err(cfg("winding needs a nonzero turn count"));
            }
        }
        CurveConfig::Polyline { points } => {
            if points.len() < 2 {
                return Err(cfg("polyline needs at least two points"));
            }
            if points.iter().any(|p| p.len() != m) {
                return Err(cfg(format!("every polyline point needs {m} coordinates")));
            }
        }
    }
    Ok(())
}

impl Resolved {
    /// Builds the configured curve as a loop/segment chain. Rectangle and
    /// winding curves start at the resolved base; a polyline starts at its
    /// own first point.
    pub fn curve_spec(&self) -> CliResult<LoopSpec<f64>> {
        let curve = self
            .curve
            .as_ref()
            .ok_or_else(|| cfg("this command needs a \"curve\" block in the configuration"))?;
        match curve {
            CurveConfig::Rectangle { i, j, scale } => {
                Ok(LoopSpec::rectangle(self.base.clone(), *i, *j, *scale))
            }
            CurveConfig::Winding { coord, turns } => {
                let period = self.chart.periods()[*coord]
                    .expect("validated: coordinate is periodic");
                Ok(LoopSpec::winding(self.base.clone(), *coord, period, *turns))
            }
            CurveConfig::Polyline { points } => {
                let pts = points
                    .iter()
                    .map(|p| DVector::from_vec(p.clone()))
                    .collect();
                LoopSpec::param_curve(pts).map_err(|e| cfg(e.to_string()))
            }
        }
    }

    /// Protocol with the seed requirement enforced: absent protocols are a
    /// configuration error for commands that sample.
    pub fn protocol_required(&self) -> CliResult<SamplingProtocol> {
        self.protocol.clone().ok_or_else(|| {
            cfg("this command samples random loops; provide a \"protocol\" with a seed or pass --seed")
        })
    }
}
