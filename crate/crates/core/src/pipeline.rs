//! Stage orchestration over persisted artifacts.
//!
//! Every stage reads its inputs from the output directory and writes its
//! results back there, so stages can run in separate processes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::abstraction::{build_symbolic_model, write_json, DeltaSemantics, Grid, SymbolicModel};
use crate::certify::{
    assemble_constraints, compute_alpha_psi, compute_bisim_psi, compute_epsilon_rho0, solve_asf,
    verify_certificate, AsfCertificate, Dataset, EpsilonReport, SolveOptions, VerificationReport,
    VerifyOptions,
};
use crate::data::{
    build_data_matrix, check_rank, collect_with_retry, ExcitationPlan, RankReport, TrajectoryBatch,
};
use crate::plant::{CaseStudy, Plant};
use crate::poly::{build_upsilon, interface_basis, MonomialDictionary};
use crate::region::Region;
use crate::runtime::{
    export_trace, simulate_closed_loop, AbstractUpdate, HybridInterface, Monitor,
    SimulationOptions, Verdicts,
};
use crate::synthesis::{synthesize, MarginMode, Specification, SymbolicController};
use crate::{Error, Result};

/// Prefix of environment variables overriding configuration keys; nested
/// keys are joined with `__`, e.g. `DDABS_GRIDS__STATE_SPACING=[0.01,0.01]`.
pub const ENV_PREFIX: &str = "DDABS_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantSource {
    Builtin(CaseStudy),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictSpec {
    /// All monomials of degree 1 through `dmax`.
    Dmax(u32),
    /// Explicit exponent vectors in graded-lex order.
    Monomials(Vec<Vec<u32>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub state_spacing: Vec<f64>,
    pub input_spacing: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub max_steps: usize,
    pub abstract_update: AbstractUpdate,
    pub clamp_input: bool,
    /// Explicit initial states; when empty, starts are drawn from the grid.
    pub initial_states: Vec<Vec<f64>>,
    /// Grid cells whose centers lie here are candidate starts (default: all).
    pub initial_region: Option<Region>,
    /// Number of random candidate starts; all of them when absent.
    pub runs: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            max_steps: 100,
            abstract_update: AbstractUpdate::Table,
            clamp_input: false,
            initial_states: vec![],
            initial_region: None,
            runs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub plant: PlantSource,
    pub dict: DictSpec,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    pub gamma: f64,
    pub mu: f64,
    #[serde(default = "default_eta1")]
    pub eta1: f64,
    #[serde(default = "default_eta2")]
    pub eta2: f64,
    #[serde(default = "default_eta3")]
    pub eta3: f64,
    /// Bound on `‖B‖`, enabling the bisimulation offset in the report.
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default = "default_verify_samples")]
    pub verify_samples: usize,
    pub grids: GridConfig,
    #[serde(default)]
    pub delta_semantics: DeltaSemantics,
    pub spec: Specification,
    #[serde(default)]
    pub mode: MarginMode,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

fn default_attempts() -> usize {
    20
}
fn default_eta1() -> f64 {
    0.99
}
fn default_eta2() -> f64 {
    0.9
}
fn default_eta3() -> f64 {
    1.5
}
fn default_verify_samples() -> usize {
    10_000
}

impl PipelineConfig {
    /// Ready-made configuration for one of the two benchmark set-ups.
    pub fn case_study(which: CaseStudy) -> Self {
        let cube = |d, lo, hi| Region::cube(d, lo, hi).expect("static box");
        // Safety: a fine grid keeps ε small enough that the ε-deflated safe
        // set is non-empty, and robust labelling then guarantees the plant
        // state stays in the box.
        let (spacing, mode, spec, simulation) = match which {
            CaseStudy::Safety => (
                0.0025,
                MarginMode::Robust,
                Specification::Safety {
                    safe: cube(2, -0.5, 0.5),
                },
                SimulationConfig {
                    runs: Some(20),
                    ..SimulationConfig::default()
                },
            ),
            CaseStudy::ReachAvoid => (
                0.02,
                MarginMode::Nominal,
                Specification::ReachAvoid {
                    target: cube(2, 0.7, 1.0),
                    avoid: vec![Region::new(vec![-0.5, -1.0], vec![0.5, 0.5]).expect("static box")],
                },
                SimulationConfig {
                    max_steps: 300,
                    initial_region: Some(
                        Region::new(vec![-1.0, -1.0], vec![-0.6, -0.5]).expect("static box"),
                    ),
                    ..SimulationConfig::default()
                },
            ),
        };
        PipelineConfig {
            plant: PlantSource::Builtin(which),
            dict: DictSpec::Dmax(2),
            horizon: 9,
            seed: 1,
            max_attempts: default_attempts(),
            gamma: 0.99,
            mu: 0.01,
            eta1: default_eta1(),
            eta2: default_eta2(),
            eta3: default_eta3(),
            beta2: None,
            verify_samples: default_verify_samples(),
            grids: GridConfig {
                state_spacing: vec![spacing; 2],
                input_spacing: vec![0.1],
            },
            delta_semantics: DeltaSemantics::HalfDiagonal,
            spec,
            mode,
            simulation,
        }
    }

    /// Reads a JSON file, applies environment overrides, and validates.
    /// Relative plant paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))?;
        let mut cfg = Self::from_value(value, std::env::vars())
            .map_err(|e| Error::artifact(path, e.to_string()))?;
        if let PlantSource::File(p) = &mut cfg.plant {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Builds a configuration from JSON plus `DDABS_*` overrides. Override
    /// values are parsed as JSON, falling back to plain strings.
    pub fn from_value(
        mut value: Value,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_lowercase(), v)))
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
            set_path(&mut value, &key.split("__").collect::<Vec<_>>(), parsed)?;
        }
        let cfg: PipelineConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, v: f64, lo: f64, hi: f64| {
            if v > lo && v < hi {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must lie in ({lo}, {hi}), got {v}"
                )))
            }
        };
        open("gamma", self.gamma, 0.0, 1.0)?;
        open("eta1", self.eta1, 0.0, 1.0)?;
        open("eta2", self.eta2, 0.0, 1.0)?;
        open("eta3", self.eta3, 1.0, 2.0)?;
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        let spacing = self
            .grids
            .state_spacing
            .iter()
            .chain(&self.grids.input_spacing);
        if spacing.clone().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("grid spacings must be positive"));
        }
        if self.beta2.is_some_and(|b| !(b >= 0.0)) {
            return Err(Error::invalid("beta2 must be non-negative"));
        }
        if self.max_attempts == 0 || self.verify_samples == 0 {
            return Err(Error::invalid(
                "max_attempts and verify_samples must be positive",
            ));
        }
        let m = self.dictionary_len()?;
        if self.horizon < m + 1 {
            return Err(Error::invalid(format!(
                "horizon {} is too short for a {m}-monomial dictionary (need at least {})",
                self.horizon,
                m + 1
            )));
        }
        Ok(())
    }

    fn dictionary_len(&self) -> Result<usize> {
        match &self.dict {
            DictSpec::Monomials(e) => Ok(e.len()),
            DictSpec::Dmax(d) => {
                let n = self.grids.state_spacing.len();
                Ok(MonomialDictionary::full(n, *d)?.len())
            }
        }
    }
}

fn set_path(value: &mut Value, path: &[&str], new: Value) -> Result<()> {
    let (head, rest) = path
        .split_first()
        .ok_or_else(|| Error::invalid("empty override key"))?;
    if !value.is_object() {
        *value = Value::Object(Default::default());
    }
    let map = value.as_object_mut().expect("object ensured above");
    if rest.is_empty() {
        map.insert(head.to_string(), new);
        Ok(())
    } else {
        set_path(
            map.entry(head.to_string()).or_insert(Value::Null),
            rest,
            new,
        )
    }
}

/// File names of the artifacts inside the output directory.
pub mod artifacts {
    pub const PLANT: &str = "plant.json";
    pub const TRAJECTORY_1: &str = "trajectory_1.csv";
    pub const TRAJECTORY_2: &str = "trajectory_2.csv";
    pub const RANK: &str = "rank.json";
    pub const CERTIFICATE: &str = "certificate.json";
    pub const VERIFICATION: &str = "verification.json";
    pub const EPSILON: &str = "epsilon.json";
    pub const MODEL: &str = "model.bin";
    pub const CONTROLLER: &str = "controller.bin";
    pub const TRACES: &str = "traces";
    pub const VERDICTS: &str = "verdicts.json";
}

pub fn load_plant(cfg: &PipelineConfig) -> Result<Plant> {
    match &cfg.plant {
        PlantSource::Builtin(c) => Ok(Plant::case_study(*c)),
        PlantSource::File(p) => Plant::load(p),
    }
}

pub fn dictionary(cfg: &PipelineConfig, n: usize) -> Result<MonomialDictionary> {
    match &cfg.dict {
        DictSpec::Dmax(d) => MonomialDictionary::full(n, *d),
        DictSpec::Monomials(e) => MonomialDictionary::from_exponents(n, e),
    }
}

fn grids(cfg: &PipelineConfig, plant: &Plant) -> Result<(Grid, Grid)> {
    Ok((
        Grid::new(plant.state_box().clone(), &cfg.grids.state_spacing)?,
        Grid::new(plant.input_box().clone(), &cfg.grids.input_spacing)?,
    ))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankFile {
    pub first: RankReport,
    pub second: RankReport,
    pub attempts: [usize; 2],
}

/// Records two excited trajectories of the plant.
pub fn cmd_collect(cfg: &PipelineConfig, out: &Path) -> Result<RankFile> {
    ensure_dir(out)?;
    let plant = load_plant(cfg)?;
    let dict = dictionary(cfg, plant.state_box().dim())?;
    let plan = ExcitationPlan {
        initial_region: plant.state_box().clone(),
        input_region: plant.input_box().clone(),
        guard: None,
    };
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seeds = [0u64; 2];
    for s in &mut seeds {
        *s = rand::Rng::gen(&mut master);
    }
    let a = collect_with_retry(
        &plant,
        &dict,
        &plan,
        cfg.horizon,
        cfg.max_attempts,
        seeds[0],
    )?;
    let b = collect_with_retry(
        &plant,
        &dict,
        &plan,
        cfg.horizon,
        cfg.max_attempts,
        seeds[1],
    )?;
    write_json(&out.join(artifacts::PLANT), &plant_public(&plant))?;
    a.batch.save(&out.join(artifacts::TRAJECTORY_1))?;
    b.batch.save(&out.join(artifacts::TRAJECTORY_2))?;
    let rank = RankFile {
        first: a.report,
        second: b.report,
        attempts: [a.attempts, b.attempts],
    };
    write_json(&out.join(artifacts::RANK), &rank)?;
    Ok(rank)
}

/// The public facts about the plant: its dimensions and operating boxes.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct PlantPublic {
    n: usize,
    m: usize,
    state_box: Region,
    input_box: Region,
}

fn plant_public(p: &Plant) -> PlantPublic {
    PlantPublic {
        n: p.state_box().dim(),
        m: p.input_box().dim(),
        state_box: p.state_box().clone(),
        input_box: p.input_box().clone(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsilonFile {
    pub delta_semantics: DeltaSemantics,
    pub delta: f64,
    pub delta_half_diagonal: f64,
    pub delta_diameter: f64,
    pub psi_half_diagonal: f64,
    pub psi_diameter: f64,
    pub beta1: f64,
    pub bisim_psi: Option<f64>,
    pub condition_number: f64,
    pub report: EpsilonReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifySummary {
    pub verification: VerificationReport,
    pub epsilon: EpsilonFile,
}

struct Trajectories {
    first: TrajectoryBatch,
    second: TrajectoryBatch,
}

fn load_trajectories(out: &Path) -> Result<Trajectories> {
    Ok(Trajectories {
        first: TrajectoryBatch::load(&out.join(artifacts::TRAJECTORY_1))?,
        second: TrajectoryBatch::load(&out.join(artifacts::TRAJECTORY_2))?,
    })
}

fn load_public(out: &Path) -> Result<PlantPublic> {
    read_json(&out.join(artifacts::PLANT))
}

fn verify_against_data(
    cfg: &PipelineConfig,
    cert: &AsfCertificate,
    t: &Trajectories,
    state_box: &Region,
) -> Result<VerificationReport> {
    let dict = &cert.dict;
    let ups = build_upsilon(dict);
    let d1 = build_data_matrix(dict, &t.first)?;
    let d2 = build_data_matrix(dict, &t.second)?;
    let mut opts = VerifyOptions::new(state_box.clone());
    opts.samples = cfg.verify_samples;
    opts.seed = cfg.seed;
    verify_certificate(
        cert,
        &ups,
        Dataset {
            batch: &t.first,
            data: &d1,
        },
        Dataset {
            batch: &t.second,
            data: &d2,
        },
        &opts,
    )
}

/// Solves for and verifies the simulation function, then evaluates `ε`.
pub fn cmd_certify(cfg: &PipelineConfig, out: &Path) -> Result<CertifySummary> {
    let public = load_public(out)?;
    let t = load_trajectories(out)?;
    let dict = dictionary(cfg, public.n)?;
    let ups = build_upsilon(&dict);
    let d1 = build_data_matrix(&dict, &t.first)?;
    let d2 = build_data_matrix(&dict, &t.second)?;
    for (name, d, b) in [("first", &d1, &t.first), ("second", &d2, &t.second)] {
        let rep = check_rank(d, dict.len(), b.horizon());
        if !rep.pass {
            return Err(Error::invalid(format!(
                "{name} trajectory fails the rank condition: rank {} of {} with horizon {}",
                rep.rank, rep.required_rank, rep.horizon
            )));
        }
    }
    let basis = interface_basis(dict.nvars(), dict.max_degree());
    let cs = assemble_constraints(
        &dict,
        &ups,
        Dataset {
            batch: &t.first,
            data: &d1,
        },
        Dataset {
            batch: &t.second,
            data: &d2,
        },
        &basis,
    )?;
    let cert = solve_asf(&cs, cfg.gamma, cfg.mu, &SolveOptions::default())?;
    let verification = verify_against_data(cfg, &cert, &t, &public.state_box)?;
    cert.save(&out.join(artifacts::CERTIFICATE))?;
    write_json(&out.join(artifacts::VERIFICATION), &verification)?;
    if !verification.passed {
        return Err(Error::Unverified(format!(
            "independent verification failed: {verification:?}"
        )));
    }
    let epsilon = epsilon_file(cfg, &cert, &public)?;
    write_json(&out.join(artifacts::EPSILON), &epsilon)?;
    Ok(CertifySummary {
        verification,
        epsilon,
    })
}

fn epsilon_file(
    cfg: &PipelineConfig,
    cert: &AsfCertificate,
    public: &PlantPublic,
) -> Result<EpsilonFile> {
    let sg = Grid::new(public.state_box.clone(), &cfg.grids.state_spacing)?;
    let ig = Grid::new(public.input_box.clone(), &cfg.grids.input_spacing)?;
    let half = DeltaSemantics::HalfDiagonal.delta(&sg);
    let diam = DeltaSemantics::Diameter.delta(&sg);
    let delta = cfg.delta_semantics.delta(&sg);
    let (alpha, psi) = compute_alpha_psi(&cert.p, cert.mu, delta)?;
    let mut report = compute_epsilon_rho0(alpha, cert.gamma, psi, cfg.eta1)?;
    // ν only matters when ρ > 0, which never holds for these certificates.
    report.nu = ig
        .points()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let bisim_psi = cfg
        .beta2
        .map(|b2| compute_bisim_psi(&cert.p, cert.mu, delta, ig.beta1(), b2))
        .transpose()?;
    Ok(EpsilonFile {
        delta_semantics: cfg.delta_semantics,
        delta,
        delta_half_diagonal: half,
        delta_diameter: diam,
        psi_half_diagonal: compute_alpha_psi(&cert.p, cert.mu, half)?.1,
        psi_diameter: compute_alpha_psi(&cert.p, cert.mu, diam)?.1,
        beta1: ig.beta1(),
        bisim_psi,
        condition_number: cert.condition_number(),
        report,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AbstractSummary {
    pub states: usize,
    pub inputs: usize,
    pub transitions: usize,
    pub out_of_domain: usize,
}

/// Builds the symbolic model by querying the plant on the grids.
pub fn cmd_abstract(cfg: &PipelineConfig, out: &Path) -> Result<AbstractSummary> {
    ensure_dir(out)?;
    let plant = load_plant(cfg)?;
    let (sg, ig) = grids(cfg, &plant)?;
    let model = build_symbolic_model(&plant, &sg, &ig)?;
    model.save(&out.join(artifacts::MODEL))?;
    Ok(AbstractSummary {
        states: model.num_states(),
        inputs: model.num_inputs(),
        transitions: model.table().len(),
        out_of_domain: model
            .table()
            .iter()
            .filter(|s| **s == crate::abstraction::OUT_OF_DOMAIN)
            .count(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthSummary {
    pub domain_size: usize,
    pub states: usize,
    pub iterations: usize,
    pub epsilon: f64,
}

/// Synthesizes the controller; robust mode reads `ε` from the certify stage.
pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<SynthSummary> {
    let model = SymbolicModel::load(&out.join(artifacts::MODEL))?;
    let epsilon = match cfg.mode {
        MarginMode::Nominal => 0.0,
        MarginMode::Robust => {
            read_json::<EpsilonFile>(&out.join(artifacts::EPSILON))?
                .report
                .epsilon
        }
    };
    let ctrl = synthesize(&model, &cfg.spec, cfg.mode, epsilon)?;
    ctrl.save(&out.join(artifacts::CONTROLLER))?;
    if ctrl.domain_size() == 0 {
        return Err(Error::EmptyDomain("the controller domain is empty".into()));
    }
    Ok(SynthSummary {
        domain_size: ctrl.domain_size(),
        states: model.num_states(),
        iterations: ctrl.metadata().iterations,
        epsilon,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub x0: Vec<f64>,
    pub trace: String,
    #[serde(flatten)]
    pub verdicts: Verdicts,
}

/// Aggregate over all runs; each flag is the worst case across runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerdictsFile {
    pub stayed_safe: bool,
    pub reached_target: bool,
    pub hit_avoid: bool,
    pub eps_violated: bool,
    pub max_error: f64,
    pub steps: usize,
    pub epsilon: f64,
    pub runs: Vec<RunRecord>,
}

/// Closed-loop runs of the plant under the refined controller, using only
/// persisted artifacts (the plant itself is queried as a black box).
pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path) -> Result<VerdictsFile> {
    let plant = load_plant(cfg)?;
    let public = load_public(out)?;
    let model = SymbolicModel::load(&out.join(artifacts::MODEL))?;
    let ctrl = SymbolicController::load(&out.join(artifacts::CONTROLLER))?;
    let cert = AsfCertificate::load(&out.join(artifacts::CERTIFICATE))?;
    let eps: EpsilonFile = read_json(&out.join(artifacts::EPSILON))?;
    let t = load_trajectories(out)?;
    let report = verify_against_data(cfg, &cert, &t, &public.state_box)?;
    let iface = HybridInterface::new(&cert, &report, &t.first, &t.second)?;
    let monitor = Monitor {
        p: cert.p.clone(),
        epsilon: eps.report.epsilon,
        relation_level: eps.report.relation_level(),
    };
    let starts = initial_states(cfg, &ctrl);
    if starts.is_empty() {
        return Err(Error::EmptyDomain(
            "no controller-domain grid point lies in the initial region".into(),
        ));
    }
    let opts = SimulationOptions {
        max_steps: cfg.simulation.max_steps,
        update: cfg.simulation.abstract_update,
        clamp_input: cfg.simulation.clamp_input,
    };
    let trace_dir = out.join(artifacts::TRACES);
    ensure_dir(&trace_dir)?;
    let (n, m) = (public.n, public.m);
    let mut runs = Vec::with_capacity(starts.len());
    for (i, x0) in starts.into_iter().enumerate() {
        let trace = simulate_closed_loop(&plant, &model, &ctrl, &iface, &monitor, &x0, &opts)?;
        let name = format!("trace_{i:03}.csv");
        export_trace(&trace, n, m, &trace_dir.join(&name))?;
        runs.push(RunRecord {
            x0,
            trace: format!("{}/{name}", artifacts::TRACES),
            verdicts: trace.verdicts,
        });
    }
    let all = |f: fn(&Verdicts) -> bool| runs.iter().all(|r| f(&r.verdicts));
    let any = |f: fn(&Verdicts) -> bool| runs.iter().any(|r| f(&r.verdicts));
    let verdicts = VerdictsFile {
        stayed_safe: all(|v| v.stayed_safe),
        reached_target: all(|v| v.reached_target),
        hit_avoid: any(|v| v.hit_avoid),
        eps_violated: any(|v| v.eps_violated),
        max_error: runs
            .iter()
            .map(|r| r.verdicts.max_error)
            .fold(0.0, f64::max),
        steps: runs.iter().map(|r| r.verdicts.steps).max().unwrap_or(0),
        epsilon: monitor.epsilon,
        runs,
    };
    write_json(&out.join(artifacts::VERDICTS), &verdicts)?;
    Ok(verdicts)
}

/// Explicit starts, or controller-domain grid points in the initial region
/// (a seeded random subset when `runs` is set).
pub fn initial_states(cfg: &PipelineConfig, ctrl: &SymbolicController) -> Vec<Vec<f64>> {
    if !cfg.simulation.initial_states.is_empty() {
        return cfg.simulation.initial_states.clone();
    }
    let g = ctrl.state_grid();
    let mut cells: Vec<Vec<f64>> = ctrl
        .domain()
        .into_iter()
        .map(|s| g.point(s))
        .filter(|p| {
            cfg.simulation
                .initial_region
                .as_ref()
                .is_none_or(|r| r.contains(p))
        })
        .collect();
    if let Some(k) = cfg.simulation.runs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picked: Vec<Vec<f64>> = cells.choose_multiple(&mut rng, k).cloned().collect();
        picked.sort_by(|a, b| a.partial_cmp(b).expect("grid points are finite"));
        cells = picked;
    }
    cells
}

/// Per-stage summaries of a full run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub rank: RankFile,
    pub certify: CertifySummary,
    pub abstraction: AbstractSummary,
    pub synthesis: SynthSummary,
    pub verdicts: VerdictsFile,
}

pub fn run_all(cfg: &PipelineConfig, out: &Path) -> Result<CaseStudyReport> {
    let rank = cmd_collect(cfg, out)?;
    let certify = cmd_certify(cfg, out)?;
    let abstraction = cmd_abstract(cfg, out)?;
    let synthesis = cmd_synth(cfg, out)?;
    let verdicts = cmd_simulate(cfg, out)?;
    write_json(&out.join("config.json"), cfg)?;
    Ok(CaseStudyReport {
        rank,
        certify,
        abstraction,
        synthesis,
        verdicts,
    })
}

/// Compact summary of the run for display.
pub fn summarize(report: &CaseStudyReport) -> BTreeMap<&'static str, Value> {
    let v = &report.verdicts;
    BTreeMap::from([
        ("epsilon", Value::from(v.epsilon)),
        (
            "condition_number",
            Value::from(report.certify.epsilon.condition_number),
        ),
        ("domain_size", Value::from(report.synthesis.domain_size)),
        ("runs", Value::from(v.runs.len())),
        ("stayed_safe", Value::from(v.stayed_safe)),
        ("reached_target", Value::from(v.reached_target)),
        ("hit_avoid", Value::from(v.hit_avoid)),
        ("eps_violated", Value::from(v.eps_violated)),
        ("max_error", Value::from(v.max_error)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_nested_keys() {
        let base = serde_json::to_value(PipelineConfig::case_study(CaseStudy::Safety)).unwrap();
        let env = vec![
            ("DDABS_GAMMA".to_string(), "0.95".to_string()),
            (
                "DDABS_GRIDS__STATE_SPACING".to_string(),
                "[0.05,0.05]".to_string(),
            ),
            (
                "DDABS_SIMULATION__ABSTRACT_UPDATE".to_string(),
                "requantize".to_string(),
            ),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let cfg = PipelineConfig::from_value(base, env).unwrap();
        assert_eq!(cfg.gamma, 0.95);
        assert_eq!(cfg.grids.state_spacing, vec![0.05, 0.05]);
        assert_eq!(cfg.simulation.abstract_update, AbstractUpdate::Requantize);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let base = serde_json::to_value(PipelineConfig::case_study(CaseStudy::Safety)).unwrap();
        for (k, v) in [
            ("DDABS_GAMMA", "1.0"),
            ("DDABS_MU", "0"),
            ("DDABS_ETA1", "1.2"),
            ("DDABS_HORIZON", "5"),
            ("DDABS_GRIDS__INPUT_SPACING", "[0]"),
        ] {
            let r = PipelineConfig::from_value(base.clone(), [(k.to_string(), v.to_string())]);
            assert!(r.is_err(), "{k}={v} accepted");
        }
        let mut no_seed = base.clone();
        no_seed.as_object_mut().unwrap().remove("seed");
        assert!(PipelineConfig::from_value(no_seed, []).is_err());
    }

    #[test]
    fn builtin_configs_round_trip() {
        for c in [CaseStudy::Safety, CaseStudy::ReachAvoid] {
            let cfg = PipelineConfig::case_study(c);
            let v = serde_json::to_value(&cfg).unwrap();
            assert_eq!(PipelineConfig::from_value(v, []).unwrap(), cfg);
        }
    }
}
