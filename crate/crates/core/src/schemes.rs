//! Time discretizations of the anisotropic nonlinear heat equation.
//!
//! `P` is the linearized implicit Euler scheme on the original singular
//! problem. The three AP variants solve for the pair `(u, q)` where
//! `ε ∇_∥q = u^m ∇_∥u`, which keeps the linear systems bounded as `ε → 0`:
//!
//! * `E_AP`: implicit Euler, nonlinearity lagged at `u^n`;
//! * `CN_AP`: Crank–Nicolson with the nonlinearity extrapolated to
//!   `t^{n+1/2}` (not L-stable, fails for large steps);
//! * `RK_AP`: two-stage L-stable DIRK with `λ = 1 − 1/√2` and linear
//!   extrapolation of the nonlinearity to each stage time.
//!
//! Multi-level schemes start from `u^{−1} := u^0`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::assembly::{
    assemble_mass, assemble_par, assemble_par_nl, assemble_perp, assemble_robin, l2_norm,
    l2_norm_error, min_at_quadrature, Coefficients, DofVector, ErrorMode,
};
use crate::error::{Error, Result};
use crate::field::{Anisotropy, Point};
use crate::grid::{BoundaryKind, Grid};
use crate::sparse::{BlockSystem, DirectSolver, SparseMatrix};

/// Diagonal-pivot threshold for the coupled `(u, q)` systems, which are
/// factored node by node with `u` ahead of `q`.
const COUPLED_PIVOT_THRESHOLD: f64 = 1e-8;

/// DIRK coefficient `1 − 1/√2`.
pub const RK_LAMBDA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// Weak right-hand side `∫ f v + ∫_Γ g v` at a given time.
pub trait Sources: Send + Sync {
    fn load(&self, grid: &Grid, t: f64) -> Result<DofVector>;
}

/// No volume forcing and no boundary source.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSources;

impl Sources for NoSources {
    fn load(&self, grid: &Grid, _t: f64) -> Result<DofVector> {
        Ok(vec![0.0; grid.num_nodes()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    P,
    EAp,
    CnAp,
    RkAp,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [Self::P, Self::EAp, Self::CnAp, Self::RkAp];

    pub fn name(self) -> &'static str {
        match self {
            Self::P => "P",
            Self::EAp => "E_AP",
            Self::CnAp => "CN_AP",
            Self::RkAp => "RK_AP",
        }
    }

    /// Whether the scheme reads `u^{n−1}`.
    pub fn is_multilevel(self) -> bool {
        matches!(self, Self::CnAp | Self::RkAp)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_uppercase())
            .collect();
        match key.as_str() {
            "P" => Ok(Self::P),
            "EAP" => Ok(Self::EAp),
            "CNAP" => Ok(Self::CnAp),
            "RKAP" => Ok(Self::RkAp),
            _ => Err(Error::Config(format!(
                "unknown scheme '{s}', expected one of P, E_AP, CN_AP, RK_AP"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub eps: f64,
    pub tau: f64,
    /// Robin coefficient on inflow/outflow edges.
    pub gamma: f64,
    pub exponent: f64,
    pub lambda: f64,
    pub coeffs: Coefficients,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, eps: f64, tau: f64) -> Self {
        Self {
            kind,
            eps,
            tau,
            gamma: 1.0,
            exponent: 2.5,
            lambda: RK_LAMBDA,
            coeffs: Coefficients::unit(),
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        if self.kind == SchemeKind::RkAp && (self.lambda - RK_LAMBDA).abs() > 1e-15 {
            return Err(Error::Config(format!(
                "RK_AP requires lambda = 1 - 1/sqrt(2), got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Discrete state at `t^n`.
#[derive(Debug, Clone)]
pub struct TimeState {
    pub t: f64,
    pub step: usize,
    pub u: DofVector,
    /// `u^{n−1}`; absent before the first step.
    pub u_prev: Option<DofVector>,
    pub q: Option<DofVector>,
}

impl TimeState {
    pub fn initial(t: f64, u: DofVector) -> Self {
        Self {
            t,
            step: 0,
            u,
            u_prev: None,
            q: None,
        }
    }

    /// `u^{n−1}`, or `u^n` on the first step.
    pub fn previous(&self) -> &[f64] {
        self.u_prev.as_deref().unwrap_or(&self.u)
    }

    fn advance(&self, t: f64, u: DofVector, q: Option<DofVector>) -> Self {
        Self {
            t,
            step: self.step + 1,
            u_prev: Some(self.u.clone()),
            u,
            q,
        }
    }
}

/// Wall-clock split of a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Timing {
    pub setup: Duration,
    pub assemble: Duration,
    pub solve: Duration,
}

/// One-step advance operator. Owns the time-independent matrices and the
/// solver workspace for a fixed grid, field and configuration.
pub struct Stepper<'a> {
    grid: &'a Grid,
    field: &'a dyn Anisotropy,
    sources: &'a dyn Sources,
    config: SchemeConfig,
    mass: SparseMatrix,
    /// `A_⊥ + γB`.
    diffusion: SparseMatrix,
    par: SparseMatrix,
    inflow: Vec<usize>,
    solver: DirectSolver,
    timing: Timing,
}

impl<'a> Stepper<'a> {
    /// `grid` must have its boundary classified against `field`.
    pub fn new(
        grid: &'a Grid,
        field: &'a dyn Anisotropy,
        sources: &'a dyn Sources,
        config: SchemeConfig,
    ) -> Result<Self> {
        config.validate()?;
        let start = Instant::now();
        let mass = assemble_mass(grid);
        let perp = assemble_perp(grid, field, &config.coeffs)?;
        let robin = assemble_robin(grid, config.gamma)?;
        let diffusion = perp.add_scaled(1.0, &robin, 1.0)?;
        let par = assemble_par(grid, field, &config.coeffs)?;
        let inflow = grid.boundary_nodes(BoundaryKind::Inflow)?;
        let solver = match config.kind {
            SchemeKind::P => DirectSolver::new(),
            _ => DirectSolver::interleaved(grid.num_nodes(), COUPLED_PIVOT_THRESHOLD),
        };
        Ok(Self {
            grid,
            field,
            sources,
            config,
            mass,
            diffusion,
            par,
            inflow,
            solver,
            timing: Timing {
                setup: start.elapsed(),
                ..Default::default()
            },
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn timing(&self) -> Timing {
        self.timing
    }

    /// Nodes where the multiplier is fixed to zero.
    pub fn inflow_nodes(&self) -> &[usize] {
        &self.inflow
    }

    pub fn step(&mut self, state: &TimeState) -> Result<TimeState> {
        match self.config.kind {
            SchemeKind::P => self.step_p(state),
            SchemeKind::EAp => self.step_e_ap(state),
            SchemeKind::CnAp => self.step_cn_ap(state),
            SchemeKind::RkAp => self.step_rk_ap(state),
        }
    }

    /// `[M + τ(A_⊥ + γB + A_nl(u^n)/ε)] u^{n+1} = M u^n + τ F(t^{n+1})`.
    pub fn step_p(&mut self, state: &TimeState) -> Result<TimeState> {
        let SchemeConfig { tau, eps, .. } = self.config;
        let t_new = state.t + tau;
        let clock = Instant::now();
        let nl = self.nonlinear(&state.u)?;
        let lhs = SparseMatrix::combine(&[
            (1.0, &self.mass),
            (tau, &self.diffusion),
            (tau / eps, &nl),
        ])?;
        let load = self.sources.load(self.grid, t_new)?;
        let rhs = axpy(&self.mass.mul_vec(&state.u), tau, &load);
        self.timing.assemble += clock.elapsed();

        let clock = Instant::now();
        let u = self.solver.solve(&lhs, &rhs)?;
        self.timing.solve += clock.elapsed();
        Ok(state.advance(t_new, u, None))
    }

    /// Implicit Euler AP step with the nonlinearity lagged at `u^n`.
    pub fn step_e_ap(&mut self, state: &TimeState) -> Result<TimeState> {
        let tau = self.config.tau;
        let (u, q) = self.dirk_stage(&state.u, &state.u, tau, state.t + tau, None)?;
        Ok(state.advance(state.t + tau, u, Some(q)))
    }

    /// Crank–Nicolson AP step with extrapolant `(3u^n − u^{n−1}) / 2`.
    pub fn step_cn_ap(&mut self, state: &TimeState) -> Result<TimeState> {
        let SchemeConfig { tau, eps, .. } = self.config;
        let t_new = state.t + tau;
        let clock = Instant::now();
        let ext = combine(1.5, &state.u, -0.5, state.previous());
        let nl = self.nonlinear(&ext)?;
        let uu = self.mass.add_scaled(1.0, &self.diffusion, 0.5 * tau)?;
        let f_old = self.sources.load(self.grid, state.t)?;
        let f_new = self.sources.load(self.grid, t_new)?;
        let explicit = self.diffusion.mul_vec(&state.u);
        let mut rhs_u = self.mass.mul_vec(&state.u);
        for i in 0..rhs_u.len() {
            rhs_u[i] += -0.5 * tau * explicit[i] + 0.5 * tau * (f_old[i] + f_new[i]);
        }
        let rhs_q: Vec<f64> = nl.mul_vec(&state.u).iter().map(|v| -0.5 * v).collect();
        let system = BlockSystem {
            uu,
            uq: self.par.scaled(tau),
            qu: nl.scaled(0.5),
            qq: self.par.scaled(-eps),
            rhs_u,
            rhs_q,
            constrained_q: self.inflow.clone(),
        };
        self.timing.assemble += clock.elapsed();
        let (u, q) = self.solve_block(&system)?;
        self.check_positive(&u)?;
        Ok(state.advance(t_new, u, Some(q)))
    }

    /// Two-stage DIRK AP step; returns the second-stage pair.
    pub fn step_rk_ap(&mut self, state: &TimeState) -> Result<TimeState> {
        let SchemeConfig { tau, lambda, .. } = self.config;
        let (u1, _) = self.rk_stage_one(state)?;
        let un = &state.u;
        let ext2 = combine(2.0, un, -1.0, state.previous());
        let correction: Vec<f64> = u1.iter().zip(un).map(|(a, b)| a - b).collect();
        let (u, q) = self.dirk_stage(
            un,
            &ext2,
            tau * lambda,
            state.t + tau,
            Some(((1.0 - lambda) / lambda, &correction)),
        )?;
        self.check_positive(&u)?;
        Ok(state.advance(state.t + tau, u, Some(q)))
    }

    /// First DIRK stage, extrapolant `u^n + λ(u^n − u^{n−1})` at `t^n + λτ`.
    pub fn rk_stage_one(&mut self, state: &TimeState) -> Result<(DofVector, DofVector)> {
        let SchemeConfig { tau, lambda, .. } = self.config;
        let ext1 = combine(1.0 + lambda, &state.u, -lambda, state.previous());
        self.dirk_stage(&state.u, &ext1, tau * lambda, state.t + lambda * tau, None)
    }

    /// Solves `[M + s(A_⊥ + γB)] u + s A_∥ q = M u^n + c M d + s F(t)` together
    /// with `A_nl(ψ) u − ε A_∥ q = 0`, where `(c, d)` is an optional stage
    /// correction.
    fn dirk_stage(
        &mut self,
        un: &[f64],
        psi: &[f64],
        s: f64,
        t: f64,
        correction: Option<(f64, &[f64])>,
    ) -> Result<(DofVector, DofVector)> {
        let eps = self.config.eps;
        let clock = Instant::now();
        let nl = self.nonlinear(psi)?;
        let uu = self.mass.add_scaled(1.0, &self.diffusion, s)?;
        let load = self.sources.load(self.grid, t)?;
        let mut rhs_u = axpy(&self.mass.mul_vec(un), s, &load);
        if let Some((c, d)) = correction {
            let md = self.mass.mul_vec(d);
            rhs_u.iter_mut().zip(md).for_each(|(r, v)| *r += c * v);
        }
        let n = rhs_u.len();
        let system = BlockSystem {
            uu,
            uq: self.par.scaled(s),
            qu: nl,
            qq: self.par.scaled(-eps),
            rhs_u,
            rhs_q: vec![0.0; n],
            constrained_q: self.inflow.clone(),
        };
        self.timing.assemble += clock.elapsed();
        self.solve_block(&system)
    }

    fn nonlinear(&self, psi: &[f64]) -> Result<SparseMatrix> {
        assemble_par_nl(
            self.grid,
            self.field,
            &self.config.coeffs,
            psi,
            self.config.exponent,
        )
    }

    fn solve_block(&mut self, system: &BlockSystem) -> Result<(DofVector, DofVector)> {
        let clock = Instant::now();
        let (a, b) = system.compose()?;
        let x = self.solver.solve(&a, &b)?;
        self.timing.solve += clock.elapsed();
        Ok(system.split(x))
    }

    fn check_positive(&self, u: &[f64]) -> Result<()> {
        let (value, [x, y]) = min_at_quadrature(self.grid, u);
        if value > 0.0 {
            Ok(())
        } else {
            Err(Error::NegativeState { x, y, value })
        }
    }
}

fn axpy(base: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    base.iter().zip(x).map(|(b, xi)| b + a * xi).collect()
}

fn combine(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + b * yi).collect()
}

/// Per-step summary of `u_h`; min and max are nodal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub min: f64,
    pub max: f64,
    pub l2: f64,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunDiagnostics {
    /// One record per step, plus the initial state.
    pub records: Vec<StepRecord>,
    pub final_state: TimeState,
    pub timing: Timing,
    pub wall: Duration,
}

impl RunDiagnostics {
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("initial record always present")
    }

    pub fn final_abs_error(&self) -> Option<f64> {
        self.last().abs_error
    }

    pub fn final_rel_error(&self) -> Option<f64> {
        self.last().rel_error
    }
}

pub type ExactFn<'a> = &'a (dyn Fn(f64, Point) -> f64 + Sync);
pub type StepHook<'a> = &'a mut dyn FnMut(&TimeState, &StepRecord);

/// Optional hooks for [`run`].
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Exact solution; enables per-step error records.
    pub exact: Option<ExactFn<'a>>,
    /// Called after each record is produced, including the initial one.
    pub on_step: Option<StepHook<'a>>,
}

/// Number of steps of size `tau` that reach `t_end`.
pub fn step_count(t_end: f64, tau: f64) -> Result<usize> {
    let k = (t_end / tau).round();
    if !(k >= 0.0) || (k * tau - t_end).abs() > 1e-12 * t_end.abs().max(1.0) {
        return Err(Error::Config(format!(
            "t_end = {t_end} is not an integer multiple of tau = {tau}"
        )));
    }
    Ok(k as usize)
}

/// Steps `initial` from `t = 0` to `t_end`. A failing step is reported as
/// [`Error::Step`] carrying the index of the step that failed.
pub fn run(
    initial: DofVector,
    config: SchemeConfig,
    grid: &Grid,
    field: &dyn Anisotropy,
    sources: &dyn Sources,
    t_end: f64,
    mut options: RunOptions<'_>,
) -> Result<RunDiagnostics> {
    let wall = Instant::now();
    let steps = step_count(t_end, config.tau)?;
    let tau = config.tau;
    let mut stepper = Stepper::new(grid, field, sources, config)?;
    let mut state = TimeState::initial(0.0, initial);
    let mut records = Vec::with_capacity(steps + 1);

    let record = |state: &TimeState| -> Result<StepRecord> {
        let (min, max) = state
            .u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (abs_error, rel_error) = match options.exact {
            Some(exact) => (
                Some(l2_norm_error(grid, &state.u, exact, state.t, ErrorMode::Absolute)?),
                l2_norm_error(grid, &state.u, exact, state.t, ErrorMode::Relative).ok(),
            ),
            None => (None, None),
        };
        Ok(StepRecord {
            step: state.step,
            t: state.t,
            min,
            max,
            l2: l2_norm(grid, &state.u),
            abs_error,
            rel_error,
        })
    };

    let first = record(&state)?;
    if let Some(cb) = options.on_step.as_mut() {
        cb(&state, &first);
    }
    records.push(first);
    for n in 1..=steps {
        let mut next = stepper.step(&state).map_err(|e| Error::Step {
            step: n,
            source: Box::new(e),
        })?;
        // avoid drift from repeated addition
        next.t = n as f64 * tau;
        state = next;
        let rec = record(&state)?;
        if let Some(cb) = options.on_step.as_mut() {
            cb(&state, &rec);
        }
        records.push(rec);
    }
    Ok(RunDiagnostics {
        records,
        final_state: state,
        timing: stepper.timing(),
        wall: wall.elapsed(),
    })
}
