//! Explicit time integration of `u_t = J * G(u) - G(u)`, the one-phase and
//! regularized variants, the Picard fixed-point oracle, and accumulation of
//! the Baiocchi variable `w(t) = int_0^t G(u(s)) ds`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::grid::{default_eps, integral, Field, Grid};
use crate::kernel::{DiscreteKernel, KernelSpec};

/// Largest admissible time step.
pub const DT_MAX: f64 = 0.5;

/// When an integration stops before `t_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopRule {
    FixedHorizon,
    /// Stop once `||G(u)||_1 < tol`.
    GammaL1Below {
        tol: f64,
    },
    /// `GammaL1Below` with `tol = 1e-8 (1 + ||f||_1)`.
    Auto,
}

impl StopRule {
    pub fn tolerance(&self, f: &Field) -> Option<f64> {
        match self {
            StopRule::FixedHorizon => None,
            StopRule::GammaL1Below { tol } => Some(*tol),
            StopRule::Auto => Some(auto_tolerance(f)),
        }
    }
}

/// `1e-8 (1 + ||f||_1)`.
pub fn auto_tolerance(f: &Field) -> f64 {
    1e-8 * (1.0 + f.l1_norm())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub kernel: KernelSpec,
    pub graph: Graph,
    pub dt: f64,
    pub t_end: f64,
    /// Record a snapshot every `stride` steps (the final state is always kept).
    pub stride: usize,
    /// Guard band width in nodes; defaults to `ceil(R_J / h)`.
    pub margin: Option<usize>,
    pub stop: StopRule,
    /// Support threshold; defaults to `1e-10 max(1, ||f||_inf)`.
    pub eps: Option<f64>,
}

impl SimConfig {
    pub fn new(kernel: KernelSpec, dt: f64, t_end: f64) -> Self {
        Self {
            kernel,
            graph: Graph::Canonical,
            dt,
            t_end,
            stride: 1,
            margin: None,
            stop: StopRule::FixedHorizon,
            eps: None,
        }
    }

    pub fn with_graph(mut self, graph: Graph) -> Self {
        self.graph = graph;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn min_margin(&self, grid: &Grid) -> usize {
        (self.kernel.radius / grid.spacing() - 1e-9).ceil() as usize
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= DT_MAX) {
            return Err(Error::InvalidConfig(format!("dt must lie in (0, {DT_MAX}], got {}", self.dt)));
        }
        if self.dt * self.graph.lipschitz() > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "dt * slope = {} exceeds 1; the explicit step would not be monotone",
                self.dt * self.graph.lipschitz()
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        if let Some(margin) = self.margin {
            let min = self.min_margin(grid);
            if margin < min {
                return Err(Error::InvalidConfig(format!("margin {margin} < ceil(R_J/h) = {min}")));
            }
        }
        if let StopRule::GammaL1Below { tol } = self.stop {
            if !(tol > 0.0) {
                return Err(Error::InvalidConfig(format!("stop tolerance must be positive, got {tol}")));
            }
        }
        self.graph.validate()
    }
}

/// Per-snapshot diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub linf: f64,
    pub l1_gamma: f64,
    pub supp_plus_count: usize,
    pub supp_minus_count: usize,
}

fn diagnostics(t: f64, u: &Field, v: &Field, eps: f64) -> Diagnostics {
    Diagnostics {
        t,
        mass: integral(u),
        linf: u.sup_norm(),
        l1_gamma: v.l1_norm(),
        supp_plus_count: v.values().iter().filter(|&&x| x > eps).count(),
        supp_minus_count: v.values().iter().filter(|&&x| x < -eps).count(),
    }
}

/// Recorded evolution: enthalpy and Baiocchi snapshots plus diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub graph: Graph,
    pub dt: f64,
    pub eps: f64,
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub w: Vec<Field>,
    pub diagnostics: Vec<Diagnostics>,
    pub steps: usize,
    /// True when the stop rule fired (always true for a fixed horizon run
    /// that reached `t_end`).
    pub stop_reached: bool,
    /// `max_k |mass(u_k) - mass(f)|` over every step, recorded or not.
    pub max_mass_drift: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &Field {
        &self.u[0]
    }

    pub fn final_u(&self) -> &Field {
        self.u.last().expect("trajectory holds the initial snapshot")
    }

    pub fn final_w(&self) -> &Field {
        self.w.last().expect("trajectory holds the initial snapshot")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial snapshot")
    }

    pub fn grid(&self) -> &Grid {
        self.u[0].grid()
    }

    /// Snapshot index whose time is within `dt/2` of `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 0.5 * self.dt)
    }

    pub fn at(&self, t: f64) -> Option<&Field> {
        self.index_at(t).map(|i| &self.u[i])
    }

    /// Diagnostics CSV: `t,mass,linf,l1_gamma,supp_plus_count,supp_minus_count`.
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("t,mass,linf,l1_gamma,supp_plus_count,supp_minus_count\n");
        for d in &self.diagnostics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                d.t, d.mass, d.linf, d.l1_gamma, d.supp_plus_count, d.supp_minus_count
            );
        }
        out
    }
}

/// Single explicit Euler step with the support guard.
pub fn step_explicit(u: &Field, kernel: &DiscreteKernel, graph: &Graph, dt: f64) -> Result<Field> {
    if !(dt > 0.0 && dt <= DT_MAX) {
        return Err(Error::InvalidConfig(format!("dt must lie in (0, {DT_MAX}], got {dt}")));
    }
    let grid = u.grid();
    let margin = (kernel.radius() / grid.spacing() - 1e-9).ceil() as usize;
    let mut stepper = Stepper::from_parts(u.clone(), kernel.clone(), *graph, dt, margin, default_eps(u));
    stepper.step()?;
    Ok(stepper.u)
}

/// Explicit Euler stepper holding the current state.
///
/// `w` accumulates `dt * G(u_k)` (left endpoint), so that
/// `u_k = f + J * w_k - w_k` holds to roundoff at every step.
#[derive(Clone, Debug)]
pub struct Stepper {
    kernel: DiscreteKernel,
    graph: Graph,
    dt: f64,
    margin: usize,
    eps: f64,
    steps: usize,
    u: Field,
    v: Field,
    w: Vec<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    pub fn new(f: &Field, config: &SimConfig) -> Result<Self> {
        let grid = f.grid();
        config.validate(grid)?;
        let kernel = config.kernel.build(grid)?;
        let margin = config.margin.unwrap_or_else(|| config.min_margin(grid));
        let eps = config.eps.unwrap_or_else(|| default_eps(f));
        // the initial data itself must keep clear of the guard band
        if let Some((node, value)) = guard_violation(f, margin, eps) {
            return Err(Error::SupportGuard { t: 0.0, node, value });
        }
        Ok(Self::from_parts(f.clone(), kernel, config.graph, config.dt, margin, eps))
    }

    fn from_parts(f: Field, kernel: DiscreteKernel, graph: Graph, dt: f64, margin: usize, eps: f64) -> Self {
        let v = graph.apply_field(&f);
        let n = f.values().len();
        Self { kernel, graph, dt, margin, eps, steps: 0, u: f, v, w: vec![0.0; n], scratch: vec![0.0; n] }
    }

    pub fn t(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn u(&self) -> &Field {
        &self.u
    }

    /// Temperature `G(u)` of the current state.
    pub fn v(&self) -> &Field {
        &self.v
    }

    pub fn w(&self) -> Field {
        Field::from_raw(self.u.grid(), self.w.clone())
    }

    pub fn kernel(&self) -> &DiscreteKernel {
        &self.kernel
    }

    pub fn graph(&self) -> Graph {
        self.graph
    }

    /// Switches the graph for subsequent steps.
    pub fn set_graph(&mut self, graph: Graph) {
        self.graph = graph;
        self.v = graph.apply_field(&self.u);
    }

    /// `||G(u)||_1` of the current state.
    pub fn gamma_l1(&self) -> f64 {
        self.v.l1_norm()
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.t();
        if let Some((node, value)) = guard_violation(&self.v, self.margin, self.eps) {
            return Err(Error::SupportGuard { t, node, value });
        }
        let grid = self.u.grid().clone();
        self.kernel.convolve_into(&grid, self.v.values(), &mut self.scratch);
        let dt = self.dt;
        let v = self.v.values();
        for (i, ui) in self.u.values_mut().iter_mut().enumerate() {
            *ui += dt * (self.scratch[i] - v[i]);
            self.w[i] += dt * v[i];
        }
        if let Some(node) = self.u.values().iter().position(|x| !x.is_finite()) {
            return Err(Error::BlowUp { t: t + dt, node });
        }
        self.v = self.graph.apply_field(&self.u);
        self.steps += 1;
        Ok(())
    }
}

fn guard_violation(v: &Field, margin: usize, eps: f64) -> Option<(usize, f64)> {
    let grid = v.grid();
    v.values()
        .iter()
        .enumerate()
        .find(|&(i, x)| x.abs() > eps && grid.boundary_distance(i) < margin)
        .map(|(i, &x)| (i, x))
}

fn run(f: &Field, config: &SimConfig) -> Result<Trajectory> {
    let mut stepper = Stepper::new(f, config)?;
    let tol = config.stop.tolerance(f);
    let n_steps = (config.t_end / config.dt - 1e-9).ceil().max(0.0) as usize;
    let mass0 = integral(f);
    let eps = stepper.eps;
    let mut traj = Trajectory {
        graph: config.graph,
        dt: config.dt,
        eps,
        times: vec![0.0],
        u: vec![f.clone()],
        w: vec![Field::zeros(f.grid())],
        diagnostics: vec![diagnostics(0.0, f, stepper.v(), eps)],
        steps: 0,
        stop_reached: tol.is_none(),
        max_mass_drift: 0.0,
    };
    let mut recorded_last = true;
    for k in 0..n_steps {
        if let Some(tol) = tol {
            if stepper.gamma_l1() < tol {
                traj.stop_reached = true;
                break;
            }
        }
        stepper.step()?;
        traj.max_mass_drift = traj.max_mass_drift.max((integral(stepper.u()) - mass0).abs());
        recorded_last = (k + 1) % config.stride == 0 || k + 1 == n_steps;
        if recorded_last {
            record(&mut traj, &stepper);
        }
    }
    if let Some(tol) = tol {
        if !traj.stop_reached && stepper.gamma_l1() < tol {
            traj.stop_reached = true;
        }
    }
    if !recorded_last {
        record(&mut traj, &stepper);
    }
    traj.steps = stepper.steps();
    Ok(traj)
}

fn record(traj: &mut Trajectory, stepper: &Stepper) {
    let t = stepper.t();
    traj.times.push(t);
    traj.u.push(stepper.u().clone());
    traj.w.push(stepper.w());
    traj.diagnostics.push(diagnostics(t, stepper.u(), stepper.v(), stepper.eps));
}

/// Integrates with `config.graph` from `f`.
pub fn integrate(f: &Field, config: &SimConfig) -> Result<Trajectory> {
    run(f, config)
}

/// Integrates `u_t = J * (u-1)_+ - (u-1)_+` from nonnegative data.
pub fn integrate_one_phase(f: &Field, config: &SimConfig) -> Result<Trajectory> {
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &x)| x < 0.0) {
        return Err(Error::NegativeData { node, value });
    }
    run(f, &SimConfig { graph: Graph::OnePhase, ..config.clone() })
}

/// Integrates with the strictly monotone graph `gamma_n`.
pub fn integrate_regularized(f: &Field, config: &SimConfig, n: u32) -> Result<Trajectory> {
    run(f, &SimConfig { graph: Graph::Regularized { n }, ..config.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardOptions {
    /// Inner time-mesh spacing upper bound.
    pub mesh_dt: f64,
    pub max_iterations: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { mesh_dt: 2.5e-4, max_iterations: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct PicardSolution {
    /// Fixed point evaluated at the final time.
    pub u: Field,
    pub iterations: usize,
    /// `sup_t ||u^{k+1}(t) - u^k(t)||_1` per sweep.
    pub distances: Vec<f64>,
}

impl PicardSolution {
    /// Successive distance ratios, ignoring sweeps already at the
    /// roundoff floor `floor`.
    pub fn contraction_ratios(&self, floor: f64) -> Vec<f64> {
        self.distances.windows(2).filter(|w| w[0] > floor && w[1] > floor).map(|w| w[1] / w[0]).collect()
    }
}

/// Fixed-point iteration of `(T u)(t) = f + int_0^t (J * G(u) - G(u)) ds` on
/// `[0, t0]`, trapezoid quadrature on a uniform inner mesh.
pub fn picard_solve(
    f: &Field,
    kernel: &DiscreteKernel,
    graph: &Graph,
    t0: f64,
    tol: f64,
    options: PicardOptions,
) -> Result<PicardSolution> {
    if !(t0 > 0.0 && t0 < 0.5) {
        return Err(Error::InvalidConfig(format!("Picard horizon must lie in (0, 1/2), got {t0}")));
    }
    let grid = f.grid();
    let n = f.values().len();
    let mesh = (t0 / options.mesh_dt - 1e-9).ceil().max(1.0) as usize;
    let dt = t0 / mesh as f64;
    let cell = grid.cell_volume();
    let mut iterate: Vec<Vec<f64>> = vec![f.values().to_vec(); mesh + 1];
    let mut rhs: Vec<Vec<f64>> = vec![vec![0.0; n]; mesh + 1];
    let mut v = vec![0.0; n];
    let mut distances = Vec::new();
    for sweep in 1..=options.max_iterations {
        for (u, g) in iterate.iter().zip(rhs.iter_mut()) {
            for (vi, &ui) in v.iter_mut().zip(u) {
                *vi = graph.apply(ui);
            }
            kernel.convolve_into(grid, &v, g);
            for (gi, &vi) in g.iter_mut().zip(&v) {
                *gi -= vi;
            }
        }
        let mut distance: f64 = 0.0;
        let mut running = f.values().to_vec();
        for j in 0..=mesh {
            if j > 0 {
                for i in 0..n {
                    running[i] += 0.5 * dt * (rhs[j - 1][i] + rhs[j][i]);
                }
            }
            let d: f64 = running.iter().zip(&iterate[j]).map(|(a, b)| (a - b).abs()).sum();
            distance = distance.max(cell * d);
            iterate[j].copy_from_slice(&running);
        }
        distances.push(distance);
        if distance < tol {
            let u = Field::new(grid.clone(), iterate.pop().expect("mesh has nodes"))?;
            return Ok(PicardSolution { u, iterations: sweep, distances });
        }
    }
    Err(Error::PicardDiverged {
        iterations: options.max_iterations,
        distance: distances.last().copied().unwrap_or(f64::INFINITY),
    })
}
