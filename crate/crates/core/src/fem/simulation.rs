//! Time marching and steady solves.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::assembly::{apply_dirichlet, Assembler, KernelParams};
use super::inflow::{build_inflow_profile, InflowProfile};
use super::{DirichletSet, FemError, MaterialProps, PicardConfig, ProfileShape, SimulationState, Stabilization, TimeScheme};
use crate::krylov::{gpbicg, norm, SolveReport, SolverConfig, SparseSystem};
use crate::mesh::{Mesh, PatchLabel};
use crate::waveform::WaveformSet;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimConfig {
    pub props: MaterialProps,
    pub scheme: TimeScheme,
    pub stab: Stabilization,
    pub picard: PicardConfig,
    pub solver: SolverConfig,
    pub profile: ProfileShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub picard_iterations: usize,
    /// Linear-solver iterations summed over Picard iterations.
    pub linear_iterations: usize,
    /// Final relative residual of the last linear solve.
    pub linear_residual: f64,
    /// Sum of all boundary fluxes, m³/s.
    pub flux_sum: f64,
    /// Total flow entering through Dirichlet patches, m³/s.
    pub inflow: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyReport {
    pub picard_iterations: usize,
    pub linear_iterations: usize,
    /// Relative velocity change of the last Picard update.
    pub update: f64,
    pub converged: bool,
}

/// A mesh, its boundary data and numerical settings, ready to step.
#[derive(Debug, Clone)]
pub struct Simulation {
    mesh: Mesh,
    waveforms: WaveformSet,
    config: SimConfig,
    assembler: Assembler,
    profiles: Vec<InflowProfile>,
    walls: DirichletSet,
}

impl Simulation {
    pub fn new(mesh: Mesh, waveforms: WaveformSet, config: SimConfig) -> Result<Self, FemError> {
        config.props.validate()?;
        config.scheme.validate()?;
        if config.picard.max_iter == 0 {
            return Err(FemError::InvalidParameter("picard.max_iter must be at least 1".into()));
        }
        let mut profiles = Vec::new();
        for label in [PatchLabel::PA, PatchLabel::DA] {
            let w = waveforms.get(label).expect("flow label");
            if mesh.has_label(label) {
                profiles.push(build_inflow_profile(&mesh, label, config.profile)?);
            } else if w.max_abs() > 1e-9 * waveforms.pa().max_abs() {
                return Err(FemError::MissingPatch(label));
            }
        }
        if !mesh.has_label(PatchLabel::PA) {
            return Err(FemError::MissingPatch(PatchLabel::PA));
        }
        let walls = DirichletSet::walls(&mesh);
        let assembler = Assembler::new(&mesh);
        Ok(Simulation { mesh, waveforms, config, assembler, profiles, walls })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn waveforms(&self) -> &WaveformSet {
        &self.waveforms
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn profiles(&self) -> &[InflowProfile] {
        &self.profiles
    }

    /// Wall no-slip plus the PA and DA profiles at time `t`; wall wins on
    /// shared rim nodes.
    pub fn dirichlet_at(&self, t: f64) -> DirichletSet {
        let mut d = self.walls.clone();
        for prof in &self.profiles {
            let q = self.waveforms.get(prof.label).expect("flow label").sample(t);
            d.merge(&prof.fragment(self.mesh.n_nodes(), q));
        }
        d
    }

    fn inflow_at(&self, t: f64) -> f64 {
        self.profiles.iter().map(|p| (-self.waveforms.get(p.label).unwrap().sample(t)).max(0.0)).sum()
    }

    fn solve(&self, sys: &SparseSystem, guess: &[f64], step: usize, t: f64) -> Result<(Vec<f64>, SolveReport), FemError> {
        let (x, rep) = gpbicg(&sys.matrix, &sys.rhs, guess, &self.config.solver)?;
        if !rep.converged {
            return Err(FemError::Solver { step, t, report: rep });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FemError::NonFinite { step, t, what: "solution".into() });
        }
        Ok((x, rep))
    }

    /// One time step from `state`.
    pub fn advance(&self, state: &SimulationState) -> Result<(SimulationState, StepReport), FemError> {
        if !state.is_finite() {
            return Err(FemError::NonFinite { step: state.step, t: state.t, what: "state".into() });
        }
        let dt = self.config.scheme.dt;
        let step = state.step + 1;
        let t = step as f64 * dt;
        let bc = self.dirichlet_at(t);
        let fixed = bc.dof_values();
        let k = KernelParams::transient(self.config.props, dt, self.config.scheme.theta, self.config.stab);

        let mut iterate = state.clone();
        bc.impose(&mut iterate);
        let mut x = iterate.to_dofs();
        let mut report = StepReport { step, t, picard_iterations: 0, linear_iterations: 0, linear_residual: 0.0, flux_sum: 0.0, inflow: 0.0 };
        let max_iter = if self.config.stab.convection { self.config.picard.max_iter } else { 1 };
        let mut sys = self.assembler.assemble(&self.mesh, &state.u, &iterate.u, &k);
        apply_dirichlet(&mut sys, &fixed);
        let r0 = residual_norm(&sys, &x);
        for it in 0..max_iter {
            let (xn, rep) = self.solve(&sys, &x, step, t)?;
            report.picard_iterations += 1;
            report.linear_iterations += rep.iterations;
            report.linear_residual = rep.residual;
            x = xn;
            iterate.set_dofs(&x);
            if it + 1 == max_iter {
                break;
            }
            sys = self.assembler.assemble(&self.mesh, &state.u, &iterate.u, &k);
            apply_dirichlet(&mut sys, &fixed);
            if residual_norm(&sys, &x) <= self.config.picard.residual_drop * r0 {
                break;
            }
        }
        iterate.t = t;
        iterate.step = step;
        report.flux_sum = crate::post::total_flux(&self.mesh, &iterate);
        report.inflow = self.inflow_at(t);
        Ok((iterate, report))
    }

    /// Steady solution with boundary data sampled at time `t_bc`: the state
    /// that time marching with the configured step would settle to.
    ///
    /// Solved by pseudo-time continuation: each iteration is one implicit
    /// step of size `pseudo_dt` linearized at the previous iterate, while the
    /// stabilization parameters keep the configured step. The pseudo-time
    /// terms vanish at the fixed point. Iteration stops when the relative
    /// velocity update falls below `tol` or after `max_iter` solves.
    pub fn solve_steady(&self, t_bc: f64, pseudo_dt: f64, max_iter: usize, tol: f64) -> Result<(SimulationState, SteadyReport), FemError> {
        if !(pseudo_dt > 0.0) {
            return Err(FemError::InvalidParameter(format!("pseudo_dt {pseudo_dt} must be positive")));
        }
        let bc = self.dirichlet_at(t_bc);
        let fixed = bc.dof_values();
        let mut k = KernelParams::steady(self.config.props, self.config.scheme.dt, self.config.stab);
        k.inv_dt = 1.0 / pseudo_dt;
        let mut state = SimulationState::zeros(self.mesh.n_nodes());
        bc.impose(&mut state);
        let mut x = state.to_dofs();
        let mut report = SteadyReport { picard_iterations: 0, linear_iterations: 0, update: f64::INFINITY, converged: false };
        for _ in 0..max_iter.max(1) {
            let mut sys = self.assembler.assemble(&self.mesh, &state.u, &state.u, &k);
            apply_dirichlet(&mut sys, &fixed);
            let (xn, rep) = self.solve(&sys, &x, 0, t_bc)?;
            report.picard_iterations += 1;
            report.linear_iterations += rep.iterations;
            let prev = state.u.clone();
            state.set_dofs(&xn);
            x = xn;
            let du: f64 = state.u.iter().zip(&prev).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
            let un: f64 = state.u.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
            report.update = if un > 0.0 { du / un } else { 0.0 };
            if report.update <= tol {
                report.converged = true;
                break;
            }
        }
        state.t = t_bc;
        Ok((state, report))
    }
}

fn residual_norm(sys: &SparseSystem, x: &[f64]) -> f64 {
    let ax = sys.matrix.spmv(x);
    let r: Vec<f64> = sys.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    norm(&r)
}

/// Step bookkeeping for a multi-period run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunPlan {
    pub steps_per_period: usize,
    pub n_periods: usize,
}

impl RunPlan {
    /// Requires `period` to be an integer multiple of `dt`.
    pub fn new(period: f64, dt: f64, n_periods: usize) -> Result<Self, FemError> {
        if !(period > 0.0 && dt > 0.0) || n_periods == 0 {
            return Err(FemError::InvalidParameter("period, dt and n_periods must be positive".into()));
        }
        let ratio = period / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
            return Err(FemError::InvalidParameter(format!("period {period} s is not a multiple of dt {dt} s")));
        }
        Ok(RunPlan { steps_per_period: steps as usize, n_periods })
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_period * self.n_periods
    }

    /// Zero-based period containing the interval that ends at `step`.
    pub fn period_of(&self, step: usize) -> usize {
        if step == 0 {
            0
        } else {
            (step - 1) / self.steps_per_period
        }
    }

    /// First step of the recorded window (start of the final period).
    pub fn record_start(&self) -> usize {
        (self.n_periods - 1) * self.steps_per_period
    }

    /// Steps from the start to the end of the final period are recorded,
    /// so the window is closed at both ends.
    pub fn is_recorded(&self, step: usize) -> bool {
        step >= self.record_start()
    }
}

pub struct StepEvent<'a> {
    pub state: &'a SimulationState,
    /// `None` for the initial state.
    pub report: Option<&'a StepReport>,
    pub recording: bool,
}

/// Advances `start` to the end of the plan, calling `observer` after every
/// step. The observer may stop the run early (e.g. to checkpoint).
pub fn run<F>(sim: &Simulation, plan: &RunPlan, start: SimulationState, mut observer: F) -> Result<SimulationState, FemError>
where
    F: FnMut(&StepEvent) -> ControlFlow<()>,
{
    let mut state = start;
    state.period = plan.period_of(state.step);
    if state.step == 0 {
        let ev = StepEvent { state: &state, report: None, recording: plan.is_recorded(0) };
        if observer(&ev).is_break() {
            return Ok(state);
        }
    }
    while state.step < plan.total_steps() {
        let (mut next, report) = sim.advance(&state)?;
        next.period = plan.period_of(next.step);
        state = next;
        let ev = StepEvent { state: &state, report: Some(&report), recording: plan.is_recorded(state.step) };
        if observer(&ev).is_break() {
            break;
        }
    }
    Ok(state)
}
