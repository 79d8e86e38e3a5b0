//! Config-driven experiments: problem construction, training, evaluation
//! and the artifacts written for each run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{
    coating_extents, load_point_cloud, sample_box, sample_comb, test_grid, BcAssignment, BoxShape, CollocationSet,
    CombSpec, Counts, Pairing, Shape, TimeGrid, COATING_GRID, CUBE_GRID,
};
use crate::materials::{CaseId, MaterialModel, MaterialSpecs, PhysicalConstants, PropertySpecDef};
use crate::mms::{error_report, ErrorReport, ManufacturedProblem, Quantity};
use crate::network::{Architecture, ModelState, Normalization};
use crate::physics::{PreparedProblem, TermId};
use crate::training::{init_model_with, Checkpoint, TrainConfig, TrainRecord, Trainer};
use crate::{Error, Result};

/// Boundary-condition file names written by [`write_artifacts`].
pub const CONFIG_FILE: &str = "config.toml";
pub const METADATA_FILE: &str = "metadata.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const POINT_ERRORS_FILE: &str = "point_errors.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeConfig {
    Cube {
        #[serde(default = "unit_extents")]
        extents: [[f64; 2]; 3],
        #[serde(default = "cube_grid")]
        grid: [usize; 3],
    },
    Coating {
        size_ratio: f64,
        #[serde(default = "coating_grid")]
        grid: [usize; 3],
    },
    Comb(CombSpec),
    PointCloud {
        path: PathBuf,
    },
}

fn unit_extents() -> [[f64; 2]; 3] {
    [[0.0, 1.0]; 3]
}

fn cube_grid() -> [usize; 3] {
    CUBE_GRID
}

fn coating_grid() -> [usize; 3] {
    COATING_GRID
}

impl ShapeConfig {
    /// Boundary assignment used when the config does not give one.
    pub fn default_bc(&self) -> BcAssignment {
        match self {
            ShapeConfig::Cube { .. } => BcAssignment::AllDirichlet,
            ShapeConfig::Coating { .. } => BcAssignment::TOP_NEUMANN,
            ShapeConfig::Comb(spec) => BcAssignment::DirichletWhere {
                axis: 1,
                min: 0.5 * spec.width,
            },
            ShapeConfig::PointCloud { .. } => BcAssignment::AllDirichlet,
        }
    }

    pub fn default_pairing(&self) -> Pairing {
        match self {
            ShapeConfig::Comb(_) => Pairing::Random { seed: 0, per_point: 2 },
            _ => Pairing::Tensor,
        }
    }

    /// Membership shape for test grids; point clouds have none.
    pub fn shape(&self) -> Result<Option<Shape>> {
        Ok(match self {
            ShapeConfig::Cube { extents, .. } => {
                Some(Shape::Box(BoxShape::new(extents.map(|e| e[0]), extents.map(|e| e[1]))?))
            }
            ShapeConfig::Coating { size_ratio, .. } => {
                let e = coating_extents(*size_ratio)?;
                Some(Shape::Box(BoxShape::new(e.map(|v| v[0]), e.map(|v| v[1]))?))
            }
            ShapeConfig::Comb(spec) => Some(spec.shape()),
            ShapeConfig::PointCloud { .. } => None,
        })
    }

    pub fn collocation(&self, time: TimeGrid<f64>, bc: BcAssignment, pairing: Pairing) -> Result<CollocationSet<f64>> {
        match self {
            ShapeConfig::Cube { extents, grid } => sample_box(*extents, *grid, time, bc, pairing),
            ShapeConfig::Coating { size_ratio, grid } => {
                sample_box(coating_extents(*size_ratio)?, *grid, time, bc, pairing)
            }
            ShapeConfig::Comb(spec) => sample_comb(spec, time, bc, pairing),
            ShapeConfig::PointCloud { path } => CollocationSet::from_cloud(load_point_cloud(path)?, time, pairing),
        }
    }
}

/// Custom property fields replacing those of the built-in case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyOverrides {
    pub kappa: PropertySpecDef,
    pub rho: PropertySpecDef,
    pub c: PropertySpecDef,
    pub e: PropertySpecDef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(default = "default_case")]
    pub case: CaseId,
    #[serde(default)]
    pub constants: PhysicalConstants<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub properties: Option<PropertyOverrides>,
}

fn default_case() -> CaseId {
    CaseId::Case1
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            case: CaseId::Case1,
            constants: PhysicalConstants::default(),
            properties: None,
        }
    }
}

impl MaterialConfig {
    pub fn model(&self) -> Result<MaterialModel<f64>> {
        match &self.properties {
            None => MaterialModel::builtin(self.case, self.constants),
            Some(p) => {
                let specs = MaterialSpecs {
                    kappa: p.kappa.to_spec("material.properties.kappa")?,
                    rho: p.rho.to_spec("material.properties.rho")?,
                    c: p.c.to_spec("material.properties.c")?,
                    e: p.e.to_spec("material.properties.e")?,
                };
                MaterialModel::new(specs, self.constants)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub times: Vec<f64>,
    pub quantities: Vec<Quantity>,
    /// Cells per axis of the interior test grid added to the surface
    /// samples; `0` scores the surface only.
    pub grid: usize,
    /// Also write per-node relative errors.
    pub point_errors: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            times: vec![0.95],
            quantities: Quantity::TABLE.to_vec(),
            grid: 11,
            point_errors: false,
        }
    }
}

/// One experiment: everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub shape: ShapeConfig,
    #[serde(default)]
    pub material: MaterialConfig,
    pub architecture: Architecture,
    #[serde(default)]
    pub normalization: Normalization,
    pub time: TimeGrid<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc: Option<BcAssignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<Pairing>,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    /// Output directory; runs without one write nothing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` object of a run's metadata file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let meta: RunMetadata =
                serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            meta.config.validate()?;
            return Ok(meta.config);
        }
        Self::from_toml(&text)
    }

    /// Applies `key=value` overrides; see [`apply_overrides`].
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut table = self.to_table()?;
        apply_overrides(&mut table, overrides)?;
        Self::from_table(table)
    }

    fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// The fully resolved config as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// SHA-256 of the resolved TOML.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn bc(&self) -> BcAssignment {
        self.bc.unwrap_or_else(|| self.shape.default_bc())
    }

    pub fn pairing(&self) -> Pairing {
        self.pairing.unwrap_or_else(|| self.shape.default_pairing())
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.time.validate()?;
        self.training.validate()?;
        self.bc().validate()?;
        match &self.shape {
            ShapeConfig::Coating { size_ratio, .. } => {
                coating_extents(*size_ratio)?;
            }
            ShapeConfig::Comb(spec) => {
                spec.validate()?;
                if matches!(self.bc(), BcAssignment::Faces { .. }) {
                    return Err(Error::config("bc", "per-face assignment needs a box shape"));
                }
            }
            ShapeConfig::PointCloud { path } if path.as_os_str().is_empty() => {
                return Err(Error::config("shape.path", "must not be empty"));
            }
            _ => {}
        }
        if let Some(Pairing::Random { per_point: 0, .. }) = self.pairing {
            return Err(Error::config("pairing.per_point", "must be at least 1"));
        }
        let (t0, tf) = (self.time.t0, self.time.tf);
        if let Some(t) = self.evaluation.times.iter().find(|t| !(**t >= t0 && **t <= tf)) {
            return Err(Error::config(
                "evaluation.times",
                format!("{t} lies outside [{t0}, {tf}]"),
            ));
        }
        if self.evaluation.times.is_empty() || self.evaluation.quantities.is_empty() {
            return Err(Error::config("evaluation", "needs at least one time and one quantity"));
        }
        self.material.model()?;
        Ok(())
    }
}

/// Applies `key=value` overrides to a config table.
///
/// Keys are dotted paths (`training.iterations`) or bare names that occur
/// exactly once anywhere in the table (`iterations`). Values are parsed as
/// TOML, falling back to a plain string; integers assigned to float fields
/// are widened.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override `{item}` is not key=value")))?;
        let key = key.trim();
        let value = parse_value(raw.trim());
        let path: Vec<String> = if key.contains('.') {
            key.split('.').map(str::to_string).collect()
        } else {
            let mut hits = Vec::new();
            find_key(table, key, &mut Vec::new(), &mut hits);
            match hits.len() {
                1 => hits.pop().expect("one hit"),
                0 => vec![key.to_string()],
                _ => {
                    let names: Vec<String> = hits.iter().map(|h| h.join(".")).collect();
                    return Err(Error::config(
                        key,
                        format!("ambiguous key; use one of {}", names.join(", ")),
                    ));
                }
            }
        };
        set_path(table, &path, value).map_err(|m| Error::config(key, m))?;
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn find_key(table: &toml::Table, key: &str, prefix: &mut Vec<String>, hits: &mut Vec<Vec<String>>) {
    for (k, v) in table {
        prefix.push(k.clone());
        if k == key {
            hits.push(prefix.clone());
        }
        if let toml::Value::Table(inner) = v {
            find_key(inner, key, prefix, hits);
        }
        prefix.pop();
    }
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> std::result::Result<(), String> {
    let (last, parents) = path.split_last().ok_or("empty key")?;
    let mut cur = table;
    for p in parents {
        cur = match cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        {
            toml::Value::Table(t) => t,
            _ => return Err(format!("`{p}` is not a table")),
        };
    }
    let value = match (cur.get(last), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    cur.insert(last.clone(), value);
    Ok(())
}

/// A constructed problem, ready to train and score.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub colloc: CollocationSet<f64>,
    pub problem: ManufacturedProblem<f64>,
    pub prepared: PreparedProblem<f64>,
    pub test_nodes: Vec<[f64; 3]>,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let colloc = config.shape.collocation(config.time, config.bc(), config.pairing())?;
        let problem = ManufacturedProblem::new(config.material.model()?);
        let prepared = PreparedProblem::new(&colloc, &problem)?;
        let surface: Vec<[f64; 3]> = colloc.cloud.boundary.iter().map(|b| b.x).collect();
        let test_nodes = match (config.shape.shape()?, config.evaluation.grid) {
            (Some(shape), n) if n > 0 => test_grid(&shape, &surface, n),
            (None, n) if n > 0 => surface.iter().chain(&colloc.cloud.interior).copied().collect(),
            _ => surface,
        };
        Ok(Self {
            config: config.clone(),
            colloc,
            problem,
            prepared,
            test_nodes,
        })
    }

    pub fn init_model(&self) -> Result<ModelState<f64>> {
        init_model_with(
            &self.config.architecture,
            &self.colloc,
            &self.problem,
            self.config.seed,
            self.config.normalization,
        )
    }

    /// Trains a fresh model. `checkpoint` receives every checkpoint,
    /// including the one taken when training aborts.
    pub fn train(
        &self,
        checkpoint: Option<&mut dyn FnMut(Checkpoint) -> Result<()>>,
    ) -> Result<(ModelState<f64>, TrainRecord<f64>)> {
        let mut model = self.init_model()?;
        let mut trainer = Trainer::new(&self.prepared, &model, self.config.training)?;
        match checkpoint {
            Some(sink) => {
                let mut hook =
                    |it: usize, m: &ModelState<f64>, opt: &_, w: &_| sink(Checkpoint::capture(it, m, opt, w));
                trainer.run(&mut model, Some(&mut hook))?;
            }
            None => trainer.run(&mut model, None)?,
        }
        Ok((model, trainer.record))
    }

    pub fn evaluate(&self, model: &ModelState<f64>) -> Result<ErrorReport<f64>> {
        let eval = &self.config.evaluation;
        error_report(
            model,
            &self.problem.material,
            &self.test_nodes,
            &eval.times,
            &eval.quantities,
            eval.point_errors,
        )
    }
}

/// Provenance written next to every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub counts: CountsRecord,
    pub num_params: usize,
    pub test_nodes: usize,
    pub config: ExperimentConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsRecord {
    pub pde: usize,
    pub ic: usize,
    pub ic_velocity: usize,
    pub nbc: usize,
    pub dbc: usize,
}

impl From<Counts> for CountsRecord {
    fn from(c: Counts) -> Self {
        Self {
            pde: c.pde,
            ic: c.ic,
            ic_velocity: c.ic_velocity,
            nbc: c.nbc,
            dbc: c.dbc,
        }
    }
}

/// Everything a finished run produced.
pub struct RunOutcome {
    pub model: ModelState<f64>,
    pub record: TrainRecord<f64>,
    pub report: ErrorReport<f64>,
    pub metadata: RunMetadata,
}

/// Builds, trains and evaluates `config`. With `config.out` set, the
/// artifacts are written there, including a checkpoint if training aborts.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let exp = Experiment::build(config)?;
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join(CONFIG_FILE), &config.to_toml()?)?;
    }
    let mut sink = |ck: Checkpoint| match &config.out {
        Some(dir) => ck.save(&dir.join(CHECKPOINT_FILE)),
        None => Ok(()),
    };
    let (model, record) = exp.train(Some(&mut sink))?;
    let report = exp.evaluate(&model)?;
    let metadata = RunMetadata {
        name: config.name.clone(),
        seed: config.seed,
        config_hash: config.hash()?,
        version: env!("CARGO_PKG_VERSION").into(),
        iterations: record.losses.len(),
        wall_time_s: start.elapsed().as_secs_f64(),
        counts: exp.colloc.counts().into(),
        num_params: model.num_params(),
        test_nodes: exp.test_nodes.len(),
        config: config.clone(),
    };
    let outcome = RunOutcome {
        model,
        record,
        report,
        metadata,
    };
    if let Some(dir) = &config.out {
        write_artifacts(dir, &outcome)?;
    }
    Ok(outcome)
}

/// Re-scores a saved checkpoint under `config`.
pub fn evaluate_checkpoint(config: &ExperimentConfig, checkpoint: &Path) -> Result<ErrorReport<f64>> {
    let exp = Experiment::build(config)?;
    let model = Checkpoint::load(checkpoint)?.model()?;
    let report = exp.evaluate(&model)?;
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_error_table(&dir.join(ERRORS_FILE), &report)?;
        if config.evaluation.point_errors {
            write_point_errors(&dir.join(POINT_ERRORS_FILE), &report)?;
        }
    }
    Ok(report)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serde(format!("{}: {other:?}", path.display())),
    }
}

fn finish(path: &Path, mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_artifacts(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = serde_json::to_string_pretty(&outcome.metadata).map_err(|e| Error::Serde(e.to_string()))?;
    write_text(&dir.join(METADATA_FILE), &meta)?;
    write_train_log(&dir.join(TRAIN_LOG_FILE), &outcome.record)?;
    write_weight_log(&dir.join(WEIGHTS_FILE), &outcome.record)?;
    write_error_table(&dir.join(ERRORS_FILE), &outcome.report)?;
    if !outcome.report.points.is_empty() {
        write_point_errors(&dir.join(POINT_ERRORS_FILE), &outcome.report)?;
    }
    Ok(())
}

fn term_names(prefix: &str) -> impl Iterator<Item = String> + '_ {
    TermId::ALL.iter().map(move |t| format!("{prefix}{}", t.name()))
}

/// `iteration,total,<term losses>,<term weights>`; weights are the ones in
/// force at each iteration.
pub fn write_train_log(path: &Path, record: &TrainRecord<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let header: Vec<String> = ["iteration".to_string(), "total".to_string()]
        .into_iter()
        .chain(term_names(""))
        .chain(term_names("w_"))
        .collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let mut snaps = record.weights.iter().peekable();
    let mut current = [1.0; crate::physics::NUM_TERMS];
    for row in &record.losses {
        while let Some(s) = snaps.next_if(|s| s.iteration <= row.iteration) {
            current = s.weights;
        }
        let fields: Vec<String> = [row.iteration.to_string(), format!("{:e}", row.total)]
            .into_iter()
            .chain(row.losses.iter().map(|v| format!("{v:e}")))
            .chain(current.iter().map(|v| format!("{v:e}")))
            .collect();
        w.write_record(&fields).map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

/// One row per balancing update with `Θ`, weights and gradient statistics.
pub fn write_weight_log(path: &Path, record: &TrainRecord<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let header: Vec<String> = ["iteration".to_string(), "theta".into(), "degenerate".into()]
        .into_iter()
        .chain(term_names("w_"))
        .chain(term_names("max_"))
        .chain(term_names("mean_"))
        .collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for s in &record.weights {
        let fields: Vec<String> = [
            s.iteration.to_string(),
            format!("{:e}", s.theta),
            s.degenerate.to_string(),
        ]
        .into_iter()
        .chain(s.weights.iter().map(|v| format!("{v:e}")))
        .chain(s.max.iter().map(|v| format!("{v:e}")))
        .chain(s.mean.iter().map(|v| format!("{v:e}")))
        .collect();
        w.write_record(&fields).map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

pub fn write_error_table(path: &Path, report: &ErrorReport<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["quantity", "time", "global_error"])
        .map_err(|e| csv_error(path, e))?;
    for r in &report.global {
        w.write_record([
            r.quantity.to_string(),
            r.time.to_string(),
            format!("{:e}", r.global_error),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

pub fn write_point_errors(path: &Path, report: &ErrorReport<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x1", "x2", "x3", "time", "quantity", "relative_error", "absolute"])
        .map_err(|e| csv_error(path, e))?;
    for r in &report.points {
        w.write_record([
            format!("{:?}", r.x[0]),
            format!("{:?}", r.x[1]),
            format!("{:?}", r.x[2]),
            r.time.to_string(),
            r.quantity.to_string(),
            format!("{:e}", r.relative_error),
            r.absolute.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

/// One swept parameter and its values.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Result of one sweep row.
#[derive(Clone, Debug)]
pub struct SweepRow {
    /// `key=value` assignments of this row.
    pub assignment: Vec<(String, String)>,
    pub outcome: std::result::Result<ErrorReport<f64>, String>,
}

/// Cartesian product of the axes, first axis slowest.
pub fn sweep_assignments(axes: &[SweepAxis]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut row = prefix.clone();
                    row.push((axis.key.clone(), v.clone()));
                    row
                })
            })
            .collect()
    })
}

/// Runs every combination of the axes on top of `base`, `parallel` rows
/// at a time. A failing row is recorded and the sweep continues. Each row
/// writes its artifacts to `<out>/<index>` when `base.out` is set.
pub fn sweep(base: &ExperimentConfig, axes: &[SweepAxis], parallel: usize) -> Result<Vec<SweepRow>> {
    if axes.is_empty() || axes.iter().any(|a| a.values.is_empty()) {
        return Err(Error::Usage("sweep needs at least one axis with values".into()));
    }
    let rows = sweep_assignments(axes);
    let configs: Vec<std::result::Result<ExperimentConfig, String>> = rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let overrides: Vec<String> = row.iter().map(|(key, v)| format!("{key}={v}")).collect();
            let mut cfg = base.with_overrides(&overrides).map_err(|e| e.to_string())?;
            cfg.out = base.out.as_ref().map(|d| d.join(format!("{k:03}")));
            Ok(cfg)
        })
        .collect();

    let run_row = |cfg: &std::result::Result<ExperimentConfig, String>| match cfg {
        Ok(cfg) => run(cfg).map(|o| o.report).map_err(|e| e.to_string()),
        Err(msg) => Err(msg.clone()),
    };
    let mut results: Vec<Option<std::result::Result<ErrorReport<f64>, String>>> = vec![None; configs.len()];
    let workers = parallel.max(1).min(configs.len());
    if workers == 1 {
        for (slot, cfg) in results.iter_mut().zip(&configs) {
            *slot = Some(run_row(cfg));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let done = std::sync::Mutex::new(&mut results);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if k >= configs.len() {
                        break;
                    }
                    let r = run_row(&configs[k]);
                    done.lock().expect("sweep results")[k] = Some(r);
                });
            }
        });
    }
    let out: Vec<SweepRow> = rows
        .into_iter()
        .zip(results)
        .map(|(assignment, r)| SweepRow {
            assignment,
            outcome: r.expect("every row ran"),
        })
        .collect();
    if let Some(dir) = &base.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_sweep_table(&dir.join("sweep.csv"), axes, &base.evaluation, &out)?;
    }
    Ok(out)
}

/// One row per combination: the swept values, a status, then one column
/// per quantity (suffixed `@t` when several times are scored).
pub fn write_sweep_table(path: &Path, axes: &[SweepAxis], eval: &EvalConfig, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let multi = eval.times.len() > 1;
    let columns: Vec<(Quantity, f64)> = eval
        .times
        .iter()
        .flat_map(|&t| eval.quantities.iter().map(move |&q| (q, t)))
        .collect();
    let header: Vec<String> = axes
        .iter()
        .map(|a| a.key.clone())
        .chain(["status".to_string()])
        .chain(
            columns
                .iter()
                .map(|(q, t)| if multi { format!("{q}@{t}") } else { q.to_string() }),
        )
        .collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        let mut fields: Vec<String> = row.assignment.iter().map(|(_, v)| v.clone()).collect();
        match &row.outcome {
            Ok(report) => {
                fields.push("ok".into());
                for (q, t) in &columns {
                    fields.push(report.get(*q, *t).map(|v| format!("{v:e}")).unwrap_or_default());
                }
            }
            Err(msg) => {
                fields.push(format!("failed: {msg}"));
                fields.extend(columns.iter().map(|_| String::new()));
            }
        }
        w.write_record(&fields).map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}
