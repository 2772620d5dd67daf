//! Experiment configuration: JSON parsing, validation with line-level diagnostics, and the canonical
//! form used for hashing.

use std::fmt;
use std::path::PathBuf;

use pam_core::manifold::{point_from_coords, ModelKind, Point, QuadratureMesh};
use pam_core::measure::InitialMeasure;
use pam_core::solver::{Simulator, SolverConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// A rejected configuration, with the offending field and its line when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config")?;
        if let Some(l) = self.line {
            write!(f, " at line {l}")?;
            if let Some(c) = self.column {
                write!(f, ", column {c}")?;
            }
        }
        if let Some(field) = &self.field {
            write!(f, " (field `{field}`)")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    VerifyGeometry(GeometryParams),
    VerifyKernels(KernelParams),
    VerifyNoise(NoiseParams),
    VerifyIntegrals(IntegralParams),
    Moments(MomentsParams),
    Simulate(SimulateParams),
    Intermittency(IntermittencyParams),
    Compare(CompareParams),
    Holder(HolderParams),
    Report(ReportParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::VerifyGeometry(_) => "verify-geometry",
            Experiment::VerifyKernels(_) => "verify-kernels",
            Experiment::VerifyNoise(_) => "verify-noise",
            Experiment::VerifyIntegrals(_) => "verify-integrals",
            Experiment::Moments(_) => "moments",
            Experiment::Simulate(_) => "simulate",
            Experiment::Intermittency(_) => "intermittency",
            Experiment::Compare(_) => "compare",
            Experiment::Holder(_) => "holder",
            Experiment::Report(_) => "report",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Experiment::VerifyNoise(_) | Experiment::Report(_))
    }
}

fn all_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    #[serde(default = "all_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "GeometryParams::default_samples")]
    pub samples: usize,
    #[serde(default = "GeometryParams::default_zeta_samples")]
    pub zeta_samples: usize,
}

impl GeometryParams {
    fn default_samples() -> usize {
        100_000
    }
    fn default_zeta_samples() -> usize {
        100_000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default = "all_models")]
    pub models: Vec<ModelKind>,
    /// Point pairs for the circle image-sum comparison.
    #[serde(default = "KernelParams::default_pairs")]
    pub pairs: usize,
    #[serde(default = "KernelParams::default_times")]
    pub times: usize,
    #[serde(default = "KernelParams::default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

impl KernelParams {
    fn default_pairs() -> usize {
        64
    }
    fn default_times() -> usize {
        25
    }
    fn default_epsilon() -> f64 {
        1.0
    }
}

fn default_slack() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    #[serde(default = "all_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "NoiseParams::default_bandwidth")]
    pub bandwidth: usize,
    /// `α` used for the Riesz envelope sweep on each model.
    #[serde(default = "NoiseParams::default_riesz_alpha")]
    pub riesz_alpha: Vec<f64>,
}

impl NoiseParams {
    fn default_bandwidth() -> usize {
        64
    }
    fn default_riesz_alpha() -> Vec<f64> {
        vec![0.25, 0.75, 1.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralModel {
    pub model: ModelKind,
    pub alpha: f64,
    pub mesh_resolution: usize,
    pub refined_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralParams {
    pub models: Vec<IntegralModel>,
    #[serde(default = "IntegralParams::default_time_range")]
    pub time_range: (f64, f64),
    #[serde(default = "IntegralParams::default_time_points")]
    pub time_points: usize,
    #[serde(default = "IntegralParams::default_tuples")]
    pub tuples: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

impl IntegralParams {
    fn default_time_range() -> (f64, f64) {
        (1e-3, 4.0)
    }
    fn default_time_points() -> usize {
        12
    }
    fn default_tuples() -> usize {
        12
    }
}

/// Initial measure: point masses plus a constant multiple of the volume measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub at: Vec<f64>,
    #[serde(default = "one")]
    pub mass: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub model: ModelKind,
    pub bandwidth: usize,
    pub noise_bandwidth: usize,
    #[serde(default)]
    pub mesh_resolution: Option<usize>,
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    pub horizon: f64,
    pub smoothing: f64,
    pub paths: usize,
}

impl SolverBlock {
    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            model: self.model,
            bandwidth: self.bandwidth,
            noise_bandwidth: self.noise_bandwidth,
            mesh_resolution: self.mesh_resolution,
            alpha: self.alpha,
            rho: self.rho,
            beta: self.beta,
            dt: self.dt,
            horizon: self.horizon,
            smoothing: self.smoothing,
            paths: self.paths,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesBlock {
    pub bandwidth: usize,
    pub noise_bandwidth: usize,
    #[serde(default = "SeriesBlock::default_intervals")]
    pub time_intervals: usize,
    pub orders: usize,
}

impl SeriesBlock {
    fn default_intervals() -> usize {
        256
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsParams {
    pub model: ModelKind,
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    pub time: f64,
    pub smoothing: f64,
    pub at: Vec<f64>,
    pub initial: MeasureSpec,
    pub series: SeriesBlock,
    /// Monte Carlo ensemble compared with the series at `time`.
    #[serde(default)]
    pub cross_check: Option<CrossCheckBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossCheckBlock {
    pub bandwidth: usize,
    pub noise_bandwidth: usize,
    pub dt: f64,
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub solver: SolverBlock,
    pub initial: MeasureSpec,
    pub checkpoints: usize,
    pub probes: Vec<Vec<f64>>,
    /// Number of leading paths written to `trajectories.bin`.
    #[serde(default)]
    pub dump_paths: usize,
    #[serde(default)]
    pub positivity_levels: Vec<f64>,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntermittencyParams {
    pub solver: SolverBlock,
    pub initial: MeasureSpec,
    /// The solver block's `beta` is replaced by each of these in turn.
    pub betas: Vec<f64>,
    pub window: (f64, f64),
    pub checkpoint_spacing: f64,
    pub probe: Vec<f64>,
    #[serde(default = "IntermittencyParams::default_resamples")]
    pub bootstrap: usize,
}

impl IntermittencyParams {
    fn default_resamples() -> usize {
        400
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareParams {
    pub solver: SolverBlock,
    pub lower: MeasureSpec,
    pub upper: MeasureSpec,
    /// Time steps to run; each should be half the previous.
    pub dts: Vec<f64>,
    pub checkpoints: usize,
    #[serde(default = "CompareParams::default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "CompareParams::default_max_violation")]
    pub max_violation: f64,
}

impl CompareParams {
    fn default_tolerance() -> f64 {
        1e-10
    }
    fn default_max_violation() -> f64 {
        1e-3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderParams {
    pub solver: SolverBlock,
    pub initial: MeasureSpec,
    /// Time of the spatial snapshot.
    pub time: f64,
    pub probe: Vec<f64>,
    pub spatial_window: (f64, f64),
    /// Temporal lags, as multiples of `dt`.
    pub lags: Vec<usize>,
    #[serde(default = "HolderParams::default_orders")]
    pub orders: Vec<u32>,
    /// Decreasing total times for the weak continuity check at time zero.
    #[serde(default)]
    pub weak_times: Vec<f64>,
    #[serde(default = "HolderParams::default_weak_tolerance")]
    pub weak_tolerance: f64,
}

impl HolderParams {
    fn default_orders() -> Vec<u32> {
        vec![2, 4]
    }
    fn default_weak_tolerance() -> f64 {
        1e-3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParams {
    pub directory: PathBuf,
}

/// A parsed configuration plus its canonical JSON and hash.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: Option<u64>,
    /// Output directory; not part of the hash.
    pub output: Option<PathBuf>,
    pub experiment: Experiment,
    pub canonical: Value,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(canonical_string(&self.canonical).as_bytes()).into()
    }

    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| ConfigError {
            line: None,
            column: None,
            field: Some("seed".into()),
            message: format!(
                "`{}` is stochastic and needs a seed (in the config or via --seed)",
                self.experiment.kind()
            ),
        })
    }
}

/// Compact JSON with object keys in sorted order.
pub fn canonical_string(v: &Value) -> String {
    // serde_json's default map is a BTreeMap, so keys serialize sorted
    serde_json::to_string(v).expect("JSON values always serialize")
}

fn line_of_field(raw: &str, field: &str) -> Option<usize> {
    let needle = format!("\"{field}\"");
    raw.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

fn field_error(raw: &str, field: &str, message: String) -> ConfigError {
    ConfigError {
        line: line_of_field(raw, field),
        column: None,
        field: Some(field.to_string()),
        message,
    }
}

/// Parses and validates a configuration. `seed` overrides the file's seed.
pub fn parse_config(
    raw: &str,
    default_id: &str,
    seed: Option<u64>,
) -> Result<ExperimentConfig, ConfigError> {
    let mut value: Value = serde_json::from_str(raw).map_err(|e| ConfigError {
        line: Some(e.line()),
        column: Some(e.column()),
        field: None,
        message: e.to_string(),
    })?;
    let obj = value.as_object_mut().ok_or_else(|| ConfigError {
        line: Some(1),
        column: None,
        field: None,
        message: "top level must be a JSON object".into(),
    })?;
    let id = match obj.remove("id") {
        None => default_id.to_string(),
        Some(Value::String(s)) if !s.is_empty() => s,
        Some(_) => return Err(field_error(raw, "id", "must be a nonempty string".into())),
    };
    let file_seed = match obj.remove("seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| field_error(raw, "seed", "must be a nonnegative integer".into()))?,
        ),
    };
    let output = match obj.remove("output") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
        Some(_) => {
            return Err(field_error(
                raw,
                "output",
                "must be a nonempty path string".into(),
            ))
        }
    };
    if !obj.contains_key("kind") {
        return Err(ConfigError {
            line: None,
            column: None,
            field: Some("kind".into()),
            message: "missing experiment kind".into(),
        });
    }
    let experiment: Experiment = serde_json::from_value(value.clone()).map_err(|e| {
        let msg = e.to_string();
        let field = backticked(&msg);
        let line = field.as_deref().and_then(|f| line_of_field(raw, f));
        ConfigError {
            line,
            column: None,
            field,
            message: msg,
        }
    })?;
    let seed = seed.or(file_seed);
    let mut canonical = serde_json::to_value(&experiment).expect("configs serialize");
    if let Some(o) = canonical.as_object_mut() {
        o.insert("id".into(), Value::String(id.clone()));
        o.insert("seed".into(), seed.map_or(Value::Null, Value::from));
    }
    let cfg = ExperimentConfig {
        id,
        seed,
        output,
        experiment,
        canonical,
    };
    validate(&cfg, raw)?;
    if cfg.experiment.is_stochastic() {
        cfg.require_seed()?;
    }
    Ok(cfg)
}

fn check(
    raw: &str,
    ok: bool,
    field: &str,
    message: impl FnOnce() -> String,
) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(field_error(raw, field, message()))
    }
}

fn validate_solver(raw: &str, s: &SolverBlock) -> Result<(), ConfigError> {
    s.solver_config(0).validate().map_err(|e| {
        let msg = e.to_string();
        let field = [
            "alpha",
            "dt",
            "horizon",
            "smoothing",
            "paths",
            "bandwidth",
            "beta",
        ]
        .into_iter()
        .find(|f| msg.contains(f))
        .unwrap_or("solver");
        field_error(raw, field, msg)
    })
}

fn validate_measure(
    raw: &str,
    name: &str,
    m: &MeasureSpec,
    model: ModelKind,
) -> Result<(), ConfigError> {
    check(raw, m.volume >= 0.0 && m.volume.is_finite(), name, || {
        "volume weight must be finite and nonnegative".into()
    })?;
    check(raw, !m.atoms.is_empty() || m.volume > 0.0, name, || {
        "initial measure has zero total mass".into()
    })?;
    for a in &m.atoms {
        check(raw, a.mass > 0.0 && a.mass.is_finite(), "mass", || {
            format!("atom mass must be positive, got {}", a.mass)
        })?;
        point_from_coords(model, &a.at).map_err(|e| field_error(raw, "at", e.to_string()))?;
    }
    Ok(())
}

fn validate(cfg: &ExperimentConfig, raw: &str) -> Result<(), ConfigError> {
    match &cfg.experiment {
        Experiment::VerifyGeometry(p) => {
            check(raw, p.samples > 0 && p.zeta_samples > 0, "samples", || {
                "sample counts must be positive".into()
            })
        }
        Experiment::VerifyKernels(p) => {
            check(raw, p.pairs > 0, "pairs", || {
                "need at least one point pair".into()
            })?;
            check(raw, p.times >= 5 && p.times % 2 == 1, "times", || {
                "need an odd number of times, at least five, so both ends of the grid are fitted"
                    .into()
            })
        }
        Experiment::VerifyNoise(p) => check(raw, p.bandwidth >= 8, "bandwidth", || {
            "bandwidth must be at least 8".into()
        }),
        Experiment::VerifyIntegrals(p) => {
            check(raw, !p.models.is_empty(), "models", || {
                "no models listed".into()
            })?;
            check(
                raw,
                p.time_range.0 > 0.0 && p.time_range.1 > p.time_range.0,
                "time_range",
                || "time range must be increasing and positive".into(),
            )?;
            for m in &p.models {
                check(
                    raw,
                    m.refined_resolution > m.mesh_resolution,
                    "refined_resolution",
                    || "refined resolution must exceed mesh resolution".into(),
                )?;
            }
            Ok(())
        }
        Experiment::Moments(p) => {
            check(raw, p.time > 0.0, "time", || "time must be positive".into())?;
            check(raw, p.smoothing >= 0.0, "smoothing", || {
                "smoothing must be nonnegative".into()
            })?;
            point_from_coords(p.model, &p.at).map_err(|e| field_error(raw, "at", e.to_string()))?;
            validate_measure(raw, "initial", &p.initial, p.model)
        }
        Experiment::Simulate(p) => {
            validate_solver(raw, &p.solver)?;
            validate_measure(raw, "initial", &p.initial, p.solver.model)?;
            check(raw, p.checkpoints >= 2, "checkpoints", || {
                "need at least two checkpoints".into()
            })?;
            check(raw, !p.probes.is_empty(), "probes", || {
                "need at least one probe".into()
            })?;
            for pr in &p.probes {
                point_from_coords(p.solver.model, pr)
                    .map_err(|e| field_error(raw, "probes", e.to_string()))?;
            }
            Ok(())
        }
        Experiment::Intermittency(p) => {
            validate_solver(raw, &p.solver)?;
            validate_measure(raw, "initial", &p.initial, p.solver.model)?;
            check(raw, !p.betas.is_empty(), "betas", || {
                "no betas listed".into()
            })?;
            check(
                raw,
                p.window.0 > 0.0
                    && p.window.1 > p.window.0
                    && p.window.1 <= p.solver.horizon + 1e-12,
                "window",
                || "window must be increasing and inside (0, horizon]".into(),
            )?;
            check(
                raw,
                p.checkpoint_spacing > 0.0,
                "checkpoint_spacing",
                || "spacing must be positive".into(),
            )?;
            point_from_coords(p.solver.model, &p.probe)
                .map_err(|e| field_error(raw, "probe", e.to_string()))?;
            Ok(())
        }
        Experiment::Compare(p) => {
            validate_solver(raw, &p.solver)?;
            validate_measure(raw, "lower", &p.lower, p.solver.model)?;
            validate_measure(raw, "upper", &p.upper, p.solver.model)?;
            check(
                raw,
                !p.dts.is_empty() && p.dts.iter().all(|d| *d > 0.0),
                "dts",
                || "time steps must be positive".into(),
            )?;
            check(raw, p.checkpoints >= 1, "checkpoints", || {
                "need at least one checkpoint".into()
            })
        }
        Experiment::Holder(p) => {
            validate_solver(raw, &p.solver)?;
            validate_measure(raw, "initial", &p.initial, p.solver.model)?;
            check(
                raw,
                p.time > 0.0 && p.time < p.solver.horizon,
                "time",
                || "snapshot time must lie inside (0, horizon)".into(),
            )?;
            check(
                raw,
                p.orders.iter().all(|o| *o == 2 || *o == 4),
                "orders",
                || "orders must be 2 or 4".into(),
            )?;
            check(
                raw,
                p.spatial_window.0 > 0.0 && p.spatial_window.1 > p.spatial_window.0,
                "spatial_window",
                || "spatial window must be increasing and positive".into(),
            )?;
            check(
                raw,
                p.weak_times.is_empty() || p.weak_times.len() >= 2,
                "weak_times",
                || "need at least two weak times".into(),
            )?;
            point_from_coords(p.solver.model, &p.probe)
                .map_err(|e| field_error(raw, "probe", e.to_string()))?;
            Ok(())
        }
        Experiment::Report(_) => Ok(()),
    }
}

impl MeasureSpec {
    pub fn build(&self, sim: &Simulator) -> pam_core::error::Result<InitialMeasure> {
        self.build_on(sim.config.model, &sim.mesh)
    }

    pub fn build_on(
        &self,
        kind: ModelKind,
        mesh: &QuadratureMesh<f64>,
    ) -> pam_core::error::Result<InitialMeasure> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Ok((point_from_coords(kind, &a.at)?, a.mass)))
            .collect::<pam_core::error::Result<Vec<_>>>()?;
        let density = (self.volume > 0.0).then(|| (mesh.clone(), vec![self.volume; mesh.len()]));
        InitialMeasure::new(atoms, density)
    }
}

pub fn point(kind: ModelKind, coords: &[f64]) -> pam_core::error::Result<Point<f64>> {
    point_from_coords(kind, coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIMULATE: &str = r#"{
  "kind": "simulate",
  "seed": 3,
  "solver": {"model": "circle", "bandwidth": 8, "noise_bandwidth": 4, "alpha": 1.0, "rho": 6.3,
             "beta": 0.5, "dt": 0.01, "horizon": 0.2, "smoothing": 0.02, "paths": 10},
  "initial": {"atoms": [{"at": [0.0]}]},
  "checkpoints": 4,
  "probes": [[0.0]]
}"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = parse_config(SIMULATE, "fallback", None).unwrap();
        assert_eq!(cfg.id, "fallback");
        assert_eq!(cfg.seed, Some(3));
        let Experiment::Simulate(p) = &cfg.experiment else {
            panic!("wrong kind")
        };
        assert_eq!(p.slack, 0.1);
        assert_eq!(p.initial.atoms[0].mass, 1.0);
        assert_eq!(parse_config(SIMULATE, "x", Some(9)).unwrap().seed, Some(9));
    }

    #[test]
    fn hash_ignores_field_order_and_whitespace() {
        let reordered = r#"{"probes": [[0.0]], "checkpoints": 4, "initial": {"atoms": [{"at": [0.0]}]},
            "solver": {"paths": 10, "smoothing": 0.02, "horizon": 0.2, "dt": 0.01, "beta": 0.5, "rho": 6.3,
                       "alpha": 1.0, "noise_bandwidth": 4, "bandwidth": 8, "model": "circle"},
            "seed": 3, "kind": "simulate"}"#;
        let a = parse_config(SIMULATE, "x", None).unwrap();
        let b = parse_config(reordered, "x", None).unwrap();
        assert_eq!(a.hash_hex(), b.hash_hex());
        assert_ne!(
            a.hash_hex(),
            parse_config(SIMULATE, "x", Some(4)).unwrap().hash_hex()
        );
        assert_ne!(
            a.hash_hex(),
            parse_config(SIMULATE, "y", None).unwrap().hash_hex()
        );
    }

    #[test]
    fn output_directory_is_not_hashed() {
        let with_output = SIMULATE.replacen('{', r#"{"output": "somewhere","#, 1);
        let a = parse_config(SIMULATE, "x", None).unwrap();
        let b = parse_config(&with_output, "x", None).unwrap();
        assert_eq!(b.output.as_deref(), Some(std::path::Path::new("somewhere")));
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let e = parse_config("{\n  \"kind\": \"simulate\",\n  oops\n}", "x", None).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.column.is_some());
        assert!(e.to_string().contains("line 3"));
    }

    #[test]
    fn unknown_fields_are_located() {
        let raw = SIMULATE.replace(
            "\"checkpoints\": 4",
            "\"checkpoints\": 4,\n  \"checkpionts\": 5",
        );
        let e = parse_config(&raw, "x", None).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("checkpionts"));
        assert_eq!(e.line, Some(8));
    }

    #[test]
    fn stochastic_kinds_need_a_seed() {
        let raw = SIMULATE.replace("\"seed\": 3,", "");
        let e = parse_config(&raw, "x", None).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("seed"));
        assert!(parse_config(&raw, "x", Some(1)).is_ok());
        assert!(parse_config(r#"{"kind": "verify-noise"}"#, "x", None).is_ok());
    }

    #[test]
    fn invalid_values_name_their_field() {
        let raw = SIMULATE.replace("\"alpha\": 1.0", "\"alpha\": -0.7");
        let e = parse_config(&raw, "x", None).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("alpha"));
        assert_eq!(e.line, Some(4));
        let raw = SIMULATE.replace("\"at\": [0.0]", "\"at\": [0.0, 1.0]");
        assert_eq!(
            parse_config(&raw, "x", None).unwrap_err().field.as_deref(),
            Some("at")
        );
        let e = parse_config(r#"{"seed": 1}"#, "x", None).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("kind"));
        let e = parse_config(
            r#"{"kind": "verify-kernels", "seed": 1, "times": 24}"#,
            "x",
            None,
        )
        .unwrap_err();
        assert_eq!(e.field.as_deref(), Some("times"));
    }
}
