//! The `run` and `post` subcommands.

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use avf_core::config::RunConfig;
use avf_core::fem::{read_checkpoint, run, write_checkpoint, RunPlan, Simulation, SimulationState, StepEvent};
use avf_core::mesh::{Mesh, PatchLabel};
use avf_core::post::{slice_velocity, write_vtk, wss, PressureTrace, SliceGrid, WssSummary, PA_PER_MMHG};
use avf_core::waveform::classify;

use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const PRESSURE_TRACE_NAME: &str = "pressure_trace.csv";
pub const WSS_SUMMARY_NAME: &str = "wss_summary.csv";
const SUMMARY_NAME: &str = "summary.json";

/// Solver statistics of one period.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodStats {
    pub period: usize,
    pub steps: usize,
    pub picard_iterations: usize,
    pub linear_iterations: usize,
    pub max_linear_iterations: usize,
    /// Largest |sum of boundary fluxes| over the peak inflow.
    pub max_mass_imbalance_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the configuration document as read.
    pub config_hash: String,
    pub code_version: String,
    pub started: String,
    pub finished: String,
    pub threads: usize,
    pub total_steps: usize,
    pub periods: Vec<PeriodStats>,
    /// Emitted files relative to the output directory, sorted.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunSummary {
    flow_type: String,
    mean_da_rel: f64,
    /// Time-averaged p(PA) - p(FV) over the recorded period.
    mean_pressure_drop_pa: Option<f64>,
    mean_pressure_drop_mmhg: Option<f64>,
    peak_wss_pa: f64,
    peak_inflow_m3_s: f64,
    max_mass_imbalance_rel: f64,
}

/// Tracks files written below the output directory.
struct OutputDir {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl OutputDir {
    fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new() })
    }

    fn path(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        let p = self.path(rel)?;
        std::fs::write(&p, contents)?;
        self.files.push(p);
        Ok(())
    }

    fn snapshot(&mut self, rel: &str, mesh: &Mesh, state: &SimulationState, shear: &avf_core::post::WallShearField) -> Result<(), CliError> {
        let p = self.path(rel)?;
        self.files.extend(write_vtk(mesh, state, Some(shear), &p)?);
        Ok(())
    }

    fn checkpoint(&mut self, state: &SimulationState, dir: &str) -> Result<(), CliError> {
        let p = self.path(&format!("{dir}/checkpoint_{:07}.bin", state.step))?;
        write_checkpoint(state, &p).map_err(|e| CliError::Input(e.to_string()))?;
        self.files.push(p);
        Ok(())
    }

    fn relative_files(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .files
            .iter()
            .map(|f| f.strip_prefix(&self.root).unwrap_or(f).components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"))
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

fn slice_csv(grid: &SliceGrid) -> String {
    let mut s = String::from("i,j,x_m,y_m,z_m,ux_m_s,uy_m_s,uz_m_s,speed_m_s\n");
    let n = grid.plane.resolution;
    for j in 0..n {
        for i in 0..n {
            let x = grid.plane.sample_point(i, j);
            let _ = write!(s, "{i},{j},{:.9e},{:.9e},{:.9e}", x.x, x.y, x.z);
            match grid.velocity[j * n + i] {
                Some(u) => {
                    let _ = writeln!(s, ",{:.9e},{:.9e},{:.9e},{:.9e}", u.x, u.y, u.z, u.norm());
                }
                None => s.push_str(",NaN,NaN,NaN,NaN\n"),
            }
        }
    }
    s
}

/// Snapshot VTK files and slices for one state.
fn emit_fields(out: &mut OutputDir, cfg: &RunConfig, mesh: &Mesh, state: &SimulationState, prefix: &str) -> Result<(), CliError> {
    let shear = wss(mesh, state, &cfg.material);
    if cfg.output.vtk {
        out.snapshot(&format!("{prefix}vtk/snapshot_{:07}.vtk", state.step), mesh, state, &shear)?;
    }
    for (k, plane) in cfg.slices.iter().enumerate() {
        let grid = slice_velocity(mesh, state, plane)?;
        out.write(&format!("{prefix}slices/slice{k}_{:07}.csv", state.step), &slice_csv(&grid))?;
    }
    Ok(())
}

/// Largest total inflow through Dirichlet patches over one period.
fn peak_inflow(sim: &Simulation, plan: &RunPlan, dt: f64) -> f64 {
    let labels: Vec<PatchLabel> = [PatchLabel::PA, PatchLabel::DA].into_iter().filter(|&l| sim.mesh().has_label(l)).collect();
    (0..plan.steps_per_period)
        .map(|k| {
            let t = k as f64 * dt;
            labels.iter().map(|&l| (-sim.waveforms().get(l).expect("flow label").sample(t)).max(0.0)).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

struct Recorder<'a> {
    cfg: &'a RunConfig,
    plan: RunPlan,
    mesh: &'a Mesh,
    out: OutputDir,
    peak_inflow: f64,
    trace: PressureTrace,
    wss: WssSummary,
    peak_wss: f64,
    periods: Vec<PeriodStats>,
    error: Option<CliError>,
}

impl Recorder<'_> {
    fn observe(&mut self, ev: &StepEvent) -> ControlFlow<()> {
        match self.try_observe(ev) {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                self.error = Some(e);
                ControlFlow::Break(())
            }
        }
    }

    fn try_observe(&mut self, ev: &StepEvent) -> Result<(), CliError> {
        let state = ev.state;
        if let Some(r) = ev.report {
            let imbalance = r.flux_sum.abs() / if self.peak_inflow > 0.0 { self.peak_inflow } else { 1.0 };
            info!(
                "step={} t={:.6e} picard={} linear_iterations={} residual={:.3e} mass_balance={:.3e}",
                r.step, r.t, r.picard_iterations, r.linear_iterations, r.linear_residual, imbalance
            );
            if imbalance > 5e-3 {
                warn!("step {}: boundary fluxes sum to {:.3e} of peak inflow", r.step, imbalance);
            }
            let period = state.period;
            while self.periods.len() <= period {
                let next = self.periods.len();
                self.periods.push(PeriodStats { period: next, ..Default::default() });
            }
            let s = &mut self.periods[period];
            s.steps += 1;
            s.picard_iterations += r.picard_iterations;
            s.linear_iterations += r.linear_iterations;
            s.max_linear_iterations = s.max_linear_iterations.max(r.linear_iterations);
            s.max_mass_imbalance_rel = s.max_mass_imbalance_rel.max(imbalance);
            if let Some(k) = self.cfg.output.checkpoint_every {
                if r.step % k == 0 && r.step < self.plan.total_steps() {
                    self.out.checkpoint(state, "checkpoints")?;
                }
            }
        }
        if ev.recording {
            self.trace.record(self.mesh, state)?;
            let field = wss(self.mesh, state, &self.cfg.material);
            self.peak_wss = self.peak_wss.max(field.max());
            self.wss.record(self.mesh, &field);
            if (state.step - self.plan.record_start()) % self.cfg.output.cadence == 0 {
                emit_fields(&mut self.out, self.cfg, self.mesh, state, "")?;
            }
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Loads the configuration and everything it references.
fn prepare(config: &Path) -> Result<(RunConfig, String, Simulation), CliError> {
    let bytes = std::fs::read(config).map_err(|e| CliError::Input(format!("cannot read {}: {e}", config.display())))?;
    let hash = hex::encode(Sha256::digest(&bytes));
    let cfg = RunConfig::load(config)?;
    let mesh = cfg.build_mesh()?;
    let (_, waves) = cfg.load_waveforms()?;
    let sim = Simulation::new(mesh, waves, cfg.sim_config())?;
    Ok((cfg, hash, sim))
}

fn thread_pool(n: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Input(format!("thread pool: {e}")))
}

/// Runs the configured simulation from rest (or from `resume`), writing
/// traces, snapshots, checkpoints and the manifest into the output
/// directory.
pub fn cmd_run(config: &Path, resume: Option<&Path>) -> Result<RunManifest, CliError> {
    let started = now();
    let (cfg, config_hash, sim) = prepare(config)?;
    let plan = cfg.plan()?;
    let mesh = sim.mesh();
    let class = classify(sim.waveforms(), cfg.one_way_epsilon)?;
    info!(
        "mesh: {} nodes, {} tets; waveforms {}; {} steps of {:e} s over {} periods",
        mesh.n_nodes(),
        mesh.n_el(),
        class,
        plan.total_steps(),
        cfg.scheme.dt,
        plan.n_periods
    );
    let start = match resume {
        Some(p) => {
            let s = read_checkpoint(p).map_err(|e| CliError::Input(e.to_string()))?;
            if s.n_nodes() != mesh.n_nodes() {
                return Err(CliError::Input(format!("checkpoint has {} nodes, mesh has {}", s.n_nodes(), mesh.n_nodes())));
            }
            info!("resuming from step {}", s.step);
            s
        }
        None => SimulationState::zeros(mesh.n_nodes()),
    };
    let mut rec = Recorder {
        cfg: &cfg,
        plan,
        mesh,
        out: OutputDir::create(&cfg.output.dir)?,
        peak_inflow: peak_inflow(&sim, &plan, cfg.scheme.dt),
        trace: PressureTrace::default(),
        wss: WssSummary::new(cfg.output.wss_threshold),
        peak_wss: 0.0,
        periods: Vec::new(),
        error: None,
    };
    let last = thread_pool(cfg.threads)?.install(|| run(&sim, &plan, start, |ev| rec.observe(ev)))?;
    if let Some(e) = rec.error.take() {
        return Err(e);
    }
    rec.out.checkpoint(&last, "checkpoints")?;
    rec.out.write(PRESSURE_TRACE_NAME, &rec.trace.to_csv())?;
    rec.out.write(WSS_SUMMARY_NAME, &rec.wss.to_csv())?;

    let dt = cfg.scheme.dt;
    let window = (plan.record_start() as f64 * dt, plan.total_steps() as f64 * dt);
    let drop = rec.trace.mean_drop(PatchLabel::PA, PatchLabel::FV, window.0, window.1).ok().filter(|d| d.is_finite());
    if let Some(d) = drop {
        info!("time-averaged pressure drop PA-FV: {:.6e} Pa = {:.6} mmHg", d, d / PA_PER_MMHG);
    }
    let summary = RunSummary {
        flow_type: class.flow_type.code().to_string(),
        mean_da_rel: class.mean_da_rel,
        mean_pressure_drop_pa: drop,
        mean_pressure_drop_mmhg: drop.map(|d| d / PA_PER_MMHG),
        peak_wss_pa: rec.peak_wss,
        peak_inflow_m3_s: rec.peak_inflow,
        max_mass_imbalance_rel: rec.periods.iter().map(|p| p.max_mass_imbalance_rel).fold(0.0, f64::max),
    };
    rec.out.write(SUMMARY_NAME, &serde_json::to_string_pretty(&summary).expect("serializable"))?;

    let mut files = rec.out.relative_files();
    files.push(MANIFEST_NAME.to_string());
    files.sort();
    let manifest = RunManifest {
        config_hash,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: now(),
        threads: cfg.threads,
        total_steps: plan.total_steps(),
        periods: rec.periods,
        files,
    };
    write_atomic(&cfg.output.dir.join(MANIFEST_NAME), &serde_json::to_string_pretty(&manifest).expect("serializable"))?;
    Ok(manifest)
}

/// Recomputes snapshots, slices, pressures and WSS statistics from
/// checkpoints into `<output dir>/post/`. Returns the files written.
pub fn cmd_post(config: &Path, checkpoints: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    if checkpoints.is_empty() {
        return Err(CliError::Input("no checkpoints given".into()));
    }
    let cfg = RunConfig::load(config)?;
    let mesh = cfg.build_mesh()?;
    let mut states = Vec::new();
    for p in checkpoints {
        let s = read_checkpoint(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        if s.n_nodes() != mesh.n_nodes() {
            return Err(CliError::Input(format!("{}: {} nodes, mesh has {}", p.display(), s.n_nodes(), mesh.n_nodes())));
        }
        states.push(s);
    }
    states.sort_by(|a, b| a.t.total_cmp(&b.t));
    states.dedup_by(|a, b| a.step == b.step);
    let mut out = OutputDir::create(&cfg.output.dir)?;
    let mut trace = PressureTrace::default();
    let mut summary = WssSummary::new(cfg.output.wss_threshold);
    thread_pool(cfg.threads)?.install(|| -> Result<(), CliError> {
        for s in &states {
            trace.record(&mesh, s)?;
            summary.record(&mesh, &wss(&mesh, s, &cfg.material));
            emit_fields(&mut out, &cfg, &mesh, s, "post/")?;
        }
        Ok(())
    })?;
    out.write(&format!("post/{PRESSURE_TRACE_NAME}"), &trace.to_csv())?;
    out.write(&format!("post/{WSS_SUMMARY_NAME}"), &summary.to_csv())?;
    Ok(out.files)
}
