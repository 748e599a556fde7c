//! Command implementations behind the `auctionlab` binary.
//!
//! Each command reads a config file, computes through the library, and
//! writes its artifacts into an output directory. Outputs are staged to
//! temporary files and renamed only after every artifact has been produced,
//! so a failing run never leaves partial primary outputs behind. Every run
//! also writes `run_manifest.json` echoing the effective configuration, which
//! is enough to replay it.
//!
//! Exit-code convention (see [`crate::Error::exit_code`]): 0 success, 2
//! usage/config errors, 3 runtime failures.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::allocation::{gfp_rank, match_optimal, total_score, Matching};
use crate::calibration::{
    dispersion_report, fit_power_law, read_observations_csv, required_weight, DispersionReport,
    PowerLawFit,
};
use crate::error::{Error, Result};
use crate::mdp::{read_episodes_csv, value_iteration, learn_and_plan, MdpModel, ModelSkeleton};
use crate::metrics::{relevance, revenue};
use crate::score::{
    score_position_aware, slot_average, QueryInstance, ScoreCombiner, SquareMatrix,
};
use crate::simulation::{run_sweep, SimulationConfig, SimulationReport};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn check_schema(version: u32, what: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{what}: unsupported schema_version {version}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))
}

/// Resolves `path` against the directory containing `config`, so configs can
/// name their companion files relatively.
fn resolve_sibling(config: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        config.parent().unwrap_or_else(|| Path::new(".")).join(path)
    }
}

/// All primary outputs staged first, renamed together at the end.
struct Stage {
    out_dir: PathBuf,
    pending: Vec<(NamedTempFile, PathBuf)>,
}

impl Stage {
    fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        Ok(Stage { out_dir: out_dir.to_path_buf(), pending: Vec::new() })
    }

    fn add(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let mut temp = NamedTempFile::new_in(&self.out_dir)?;
        temp.write_all(contents.as_bytes())?;
        let target = self.out_dir.join(name);
        self.pending.push((temp, target.clone()));
        Ok(target)
    }

    fn commit(self) -> Result<()> {
        for (temp, target) in self.pending {
            temp.persist(&target).map_err(|e| e.error)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct RunManifest<C: Serialize> {
    schema_version: u32,
    command: String,
    seed: Option<u64>,
    config: C,
    outputs: Vec<String>,
}

fn manifest_json<C: Serialize>(
    command: &str,
    seed: Option<u64>,
    config: C,
    outputs: &[&str],
) -> Result<String> {
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        seed,
        config,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    Ok(format!("{}\n", serde_json::to_string_pretty(&manifest)?))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimulateOpts {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub per_seeker: bool,
}

#[derive(Debug, Deserialize)]
struct SimulateFileConfig {
    #[serde(default = "default_schema_version")]
    schema_version: u32,
    #[serde(flatten)]
    simulation: SimulationConfig,
}

#[derive(Debug)]
pub struct SimulateOutputs {
    pub summary_csv: PathBuf,
    pub per_seeker_csv: Option<PathBuf>,
    pub manifest: PathBuf,
    pub report: SimulationReport,
}

/// Renders the depth summaries as CSV. Floats use Rust's shortest
/// round-trip formatting, so equal reports give byte-identical files.
pub fn summary_csv(report: &SimulationReport) -> String {
    let mut out = String::from(
        "n,rev_gfp,rev_vcg,rel_gfp,rel_vcg,se_rev_gfp,se_rev_vcg,se_rel_gfp,se_rel_vcg\n",
    );
    for d in &report.depths {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            d.n,
            d.summary.rev_gfp,
            d.summary.rev_vcg,
            d.summary.rel_gfp,
            d.summary.rel_vcg,
            d.se_rev_gfp,
            d.se_rev_vcg,
            d.se_rel_gfp,
            d.se_rel_vcg,
        ));
    }
    out
}

pub fn per_seeker_csv(report: &SimulationReport) -> Option<String> {
    let rows = report.per_seeker.as_ref()?;
    let mut out = String::from("seeker_id,n,mechanism,revenue,relevance\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.seeker_id, r.n, r.mechanism, r.revenue, r.relevance
        ));
    }
    Some(out)
}

pub fn run_simulate(opts: &SimulateOpts) -> Result<SimulateOutputs> {
    let file: SimulateFileConfig = load_json(&opts.config)?;
    check_schema(file.schema_version, "simulate config")?;
    let mut config = file.simulation;
    if let Some(seed) = opts.seed_override {
        config.seed = seed;
    }
    config.validate()?;

    let report = run_sweep(&config, opts.per_seeker)?;

    let mut stage = Stage::new(&opts.out_dir)?;
    let mut outputs = vec!["summary.csv"];
    let summary_path = stage.add("summary.csv", &summary_csv(&report))?;
    let per_seeker_path = match per_seeker_csv(&report) {
        Some(csv) => {
            outputs.push("per_seeker.csv");
            Some(stage.add("per_seeker.csv", &csv)?)
        }
        None => None,
    };
    outputs.push("run_manifest.json");
    let manifest_path = stage.add(
        "run_manifest.json",
        &manifest_json("simulate", Some(config.seed), &config, &outputs)?,
    )?;
    stage.commit()?;

    Ok(SimulateOutputs {
        summary_csv: summary_path,
        per_seeker_csv: per_seeker_path,
        manifest: manifest_path,
        report,
    })
}

// ---------------------------------------------------------------------------
// allocate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AllocateOpts {
    pub config: PathBuf,
    pub out_dir: PathBuf,
}

/// Instance file: one auction to allocate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default = "default_instance_id")]
    pub seeker_id: String,
    pub bids: Vec<f64>,
    pub pctr: Vec<Vec<f64>>,
    pub erelevance: Vec<Vec<f64>>,
    pub seeker_weight: f64,
    #[serde(default)]
    pub combiner: ScoreCombiner,
}

fn default_instance_id() -> String {
    "instance".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanismReport {
    pub assignment: Matching,
    /// Total position-aware score of this mechanism's matching.
    pub total_position_aware_score: f64,
    pub revenue: f64,
    pub relevance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationReport {
    pub schema_version: u32,
    pub seeker_id: String,
    pub n: usize,
    pub combiner: ScoreCombiner,
    pub gfp: MechanismReport,
    pub vcg: MechanismReport,
}

#[derive(Debug)]
pub struct AllocateOutputs {
    pub allocation_json: PathBuf,
    pub manifest: PathBuf,
    pub report: AllocationReport,
}

pub fn run_allocate(opts: &AllocateOpts) -> Result<AllocateOutputs> {
    let file: InstanceFile = load_json(&opts.config)?;
    check_schema(file.schema_version, "instance file")?;
    file.combiner.validate()?;
    let instance = QueryInstance::new(
        file.seeker_id.clone(),
        file.bids.clone(),
        SquareMatrix::from_rows(file.pctr.clone())?,
        SquareMatrix::from_rows(file.erelevance.clone())?,
        file.seeker_weight,
    )?;

    let scores = score_position_aware(&instance, file.combiner)?;
    let view = slot_average(&instance, &scores)?;

    let gfp_matching = gfp_rank(&view.score_bar)?;
    let gfp = MechanismReport {
        total_position_aware_score: total_score(&scores, &gfp_matching),
        revenue: revenue(&instance, &gfp_matching)?,
        relevance: relevance(&instance, &gfp_matching)?,
        assignment: gfp_matching,
    };

    let optimal = match_optimal(&scores)?;
    let vcg = MechanismReport {
        total_position_aware_score: optimal.total_score,
        revenue: revenue(&instance, &optimal.matching)?,
        relevance: relevance(&instance, &optimal.matching)?,
        assignment: optimal.matching,
    };

    let report = AllocationReport {
        schema_version: SCHEMA_VERSION,
        seeker_id: instance.seeker_id.clone(),
        n: instance.n(),
        combiner: file.combiner,
        gfp,
        vcg,
    };

    let mut stage = Stage::new(&opts.out_dir)?;
    let allocation_path =
        stage.add("allocation.json", &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    let manifest_path = stage.add(
        "run_manifest.json",
        &manifest_json("allocate", None, &file, &["allocation.json", "run_manifest.json"])?,
    )?;
    stage.commit()?;

    Ok(AllocateOutputs { allocation_json: allocation_path, manifest: manifest_path, report })
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CalibrateOpts {
    /// Observations CSV: `segment_id,seeker_weight,relevance[,arm]`.
    pub config: PathBuf,
    pub out_dir: PathBuf,
    /// Optional targets CSV: `segment_id,target_relevance`.
    pub targets: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct TargetRow {
    segment_id: String,
    target_relevance: f64,
}

#[derive(Debug, Serialize)]
struct FitFile<'a> {
    schema_version: u32,
    alpha: f64,
    alpha_se: f64,
    r_squared: f64,
    n_obs: usize,
    alpha_in_domain: bool,
    z: &'a BTreeMap<String, f64>,
}

#[derive(Debug)]
pub struct CalibrateOutputs {
    pub fit_json: PathBuf,
    pub required_weights_csv: Option<PathBuf>,
    pub dispersion_csv: Option<PathBuf>,
    pub manifest: PathBuf,
    pub fit: PowerLawFit,
    pub dispersion: Option<DispersionReport>,
}

fn dispersion_csv_text(report: &DispersionReport) -> String {
    let mut out = String::from("cohort,mean,median,q1,q3,iqr\n");
    for (name, s) in [("before", &report.before), ("after", &report.after)] {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            name, s.mean, s.median, s.q1, s.q3, s.iqr
        ));
    }
    out
}

pub fn run_calibrate(opts: &CalibrateOpts) -> Result<CalibrateOutputs> {
    let csv_file = fs::File::open(&opts.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", opts.config.display())))?;
    let observations = read_observations_csv(csv_file)?;
    let fit = fit_power_law(&observations)?;

    let mut stage = Stage::new(&opts.out_dir)?;
    let mut outputs = vec!["fit.json"];
    let fit_file = FitFile {
        schema_version: SCHEMA_VERSION,
        alpha: fit.alpha,
        alpha_se: fit.alpha_se,
        r_squared: fit.r_squared,
        n_obs: fit.n_obs,
        alpha_in_domain: fit.alpha_in_domain,
        z: &fit.z,
    };
    let fit_path =
        stage.add("fit.json", &format!("{}\n", serde_json::to_string_pretty(&fit_file)?))?;

    let mut required_weights_path = None;
    let mut dispersion_path = None;
    let mut dispersion = None;
    if let Some(targets_path) = &opts.targets {
        let targets_file = fs::File::open(targets_path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", targets_path.display())))?;
        let mut reader = csv::Reader::from_reader(targets_file);
        let mut new_weights = BTreeMap::new();
        let mut weights_csv = String::from("segment_id,target_relevance,required_weight\n");
        for row in reader.deserialize::<TargetRow>() {
            let row = row?;
            let w = required_weight(&fit, &row.segment_id, row.target_relevance)?;
            weights_csv
                .push_str(&format!("{},{},{}\n", row.segment_id, row.target_relevance, w));
            new_weights.insert(row.segment_id, w);
        }
        outputs.push("required_weights.csv");
        required_weights_path = Some(stage.add("required_weights.csv", &weights_csv)?);

        let report = dispersion_report(&fit, &observations, &new_weights)?;
        outputs.push("dispersion.csv");
        dispersion_path = Some(stage.add("dispersion.csv", &dispersion_csv_text(&report))?);
        dispersion = Some(report);
    }

    outputs.push("run_manifest.json");
    let manifest_path = stage.add(
        "run_manifest.json",
        &manifest_json(
            "calibrate",
            None,
            serde_json::json!({
                "observations": opts.config.display().to_string(),
                "targets": opts.targets.as_ref().map(|p| p.display().to_string()),
            }),
            &outputs,
        )?,
    )?;
    stage.commit()?;

    Ok(CalibrateOutputs {
        fit_json: fit_path,
        required_weights_csv: required_weights_path,
        dispersion_csv: dispersion_path,
        manifest: manifest_path,
        fit,
        dispersion,
    })
}

// ---------------------------------------------------------------------------
// optimize-weights
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OptimizeOpts {
    pub config: PathBuf,
    pub out_dir: PathBuf,
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_iters() -> usize {
    100_000
}

/// Config for `optimize-weights`: either a complete model (inline or by
/// path), or episodes plus a skeleton to learn the kernel from.
#[derive(Debug, Deserialize)]
struct OptimizeFileConfig {
    #[serde(default = "default_schema_version")]
    schema_version: u32,
    model: Option<MdpModel>,
    model_path: Option<PathBuf>,
    episodes_path: Option<PathBuf>,
    skeleton: Option<ModelSkeleton>,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_max_iters")]
    max_iters: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub schema_version: u32,
    pub states: Vec<String>,
    pub actions: Vec<f64>,
    pub values: Vec<f64>,
    /// Chosen action index per state.
    pub policy: Vec<usize>,
    /// Chosen weight per state (`actions[policy[x]]`).
    pub policy_weights: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    /// (state, action) pairs never observed when the kernel was estimated.
    pub unvisited: Vec<(usize, usize)>,
}

#[derive(Debug)]
pub struct OptimizeOutputs {
    pub policy_json: PathBuf,
    pub manifest: PathBuf,
    pub policy: PolicyFile,
}

pub fn run_optimize_weights(opts: &OptimizeOpts) -> Result<OptimizeOutputs> {
    let file: OptimizeFileConfig = load_json(&opts.config)?;
    check_schema(file.schema_version, "optimize-weights config")?;

    let sources =
        [file.model.is_some(), file.model_path.is_some(), file.episodes_path.is_some()];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(Error::Config(
            "provide exactly one of `model`, `model_path`, or `episodes_path`".into(),
        ));
    }
    if !file.tolerance.is_finite() || file.tolerance <= 0.0 {
        return Err(Error::Config(format!("tolerance {} must be positive", file.tolerance)));
    }

    let (model, convergence, unvisited) = if let Some(episodes_path) = &file.episodes_path {
        let skeleton = file.skeleton.ok_or_else(|| {
            Error::Config("`episodes_path` requires a `skeleton` with gain and discount".into())
        })?;
        let resolved = resolve_sibling(&opts.config, episodes_path);
        let episodes_file = fs::File::open(&resolved)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", resolved.display())))?;
        let episodes = read_episodes_csv(episodes_file)?;
        let plan = learn_and_plan(&episodes, &skeleton, file.tolerance, file.max_iters)?;
        (plan.model, plan.convergence, plan.unvisited)
    } else {
        let model = match file.model {
            Some(model) => model,
            None => {
                let path = resolve_sibling(&opts.config, file.model_path.as_ref().unwrap());
                load_json(&path)?
            }
        };
        model.validate().map_err(|e| Error::Config(e.to_string()))?;
        let convergence = value_iteration(&model, file.tolerance, file.max_iters)?;
        (model, convergence, Vec::new())
    };

    let policy = PolicyFile {
        schema_version: SCHEMA_VERSION,
        policy_weights: convergence
            .policy
            .actions
            .iter()
            .map(|&a| model.actions[a])
            .collect(),
        states: model.states.clone(),
        actions: model.actions.clone(),
        values: convergence.value.values.clone(),
        policy: convergence.policy.actions.clone(),
        iterations: convergence.iterations,
        residual: convergence.residual,
        tolerance: file.tolerance,
        unvisited,
    };

    let mut stage = Stage::new(&opts.out_dir)?;
    let policy_path =
        stage.add("policy.json", &format!("{}\n", serde_json::to_string_pretty(&policy)?))?;
    let manifest_path = stage.add(
        "run_manifest.json",
        &manifest_json(
            "optimize-weights",
            None,
            serde_json::json!({
                "config": opts.config.display().to_string(),
                "tolerance": file.tolerance,
                "max_iters": file.max_iters,
            }),
            &["policy.json", "run_manifest.json"],
        )?,
    )?;
    stage.commit()?;

    Ok(OptimizeOutputs { policy_json: policy_path, manifest: manifest_path, policy })
}
