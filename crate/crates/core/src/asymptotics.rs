//! Long-time limits: the one-phase projection `P`, the nonlocal biobstacle
//! problem solved by time integration and by a direct projected sweep, the
//! non-interaction test and decomposition, and the general-data dispatch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{auto_tolerance, integrate_one_phase, Diagnostics, SimConfig, Stepper, StopRule, Trajectory};
use crate::graph::{gamma, Graph};
use crate::grid::{default_eps, integral, l1_distance, set_distance, support_mask, Field};
use crate::kernel::{convolve, DiscreteKernel};

/// Settings for runs that continue until the temperature has died out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    /// Kernel, time step and guard settings. Its `t_end` is the span of
    /// recorded trajectories (decomposition); `graph` and `stop` are ignored.
    pub sim: SimConfig,
    /// Longest time a limit run may take.
    pub horizon: f64,
    /// Stop once `||G(u)||_1 < tol`; defaults to `1e-8 (1 + ||f||_1)`.
    pub tol: Option<f64>,
}

impl LimitConfig {
    pub fn new(sim: SimConfig, horizon: f64) -> Self {
        Self { sim, horizon, tol: None }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn tol_for(&self, f: &Field) -> f64 {
        self.tol.unwrap_or_else(|| auto_tolerance(f))
    }

    fn sim_with(&self, graph: Graph) -> SimConfig {
        SimConfig { graph, stop: StopRule::FixedHorizon, t_end: self.horizon, ..self.sim.clone() }
    }
}

/// Runs `graph` dynamics from `f` until `||G(u)||_1 < tol` or the horizon.
pub(crate) fn run_to_rest(f: &Field, graph: Graph, cfg: &LimitConfig) -> Result<Stepper> {
    let tol = cfg.tol_for(f);
    let mut stepper = Stepper::new(f, &cfg.sim_with(graph))?;
    let max_steps = (cfg.horizon / cfg.sim.dt).ceil() as usize;
    while stepper.gamma_l1() >= tol {
        if stepper.steps() >= max_steps {
            return Err(Error::HorizonExhausted { horizon: cfg.horizon, tol, residual: stepper.gamma_l1() });
        }
        stepper.step()?;
    }
    Ok(stepper)
}

/// Limit of a one-phase run: `P f` and the Baiocchi limit `w_inf`.
#[derive(Clone, Debug)]
pub struct OnePhaseLimit {
    pub projection: Field,
    pub baiocchi: Field,
    pub time: f64,
    pub residual: f64,
}

pub fn one_phase_limit(f: &Field, cfg: &LimitConfig) -> Result<OnePhaseLimit> {
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &x)| x < 0.0) {
        return Err(Error::NegativeData { node, value });
    }
    let stepper = run_to_rest(f, Graph::OnePhase, cfg)?;
    Ok(OnePhaseLimit {
        projection: stepper.u().clone(),
        baiocchi: stepper.w(),
        time: stepper.t(),
        residual: stepper.gamma_l1(),
    })
}

/// Projection `P f` of nonnegative data.
pub fn project_one_phase(f: &Field, cfg: &LimitConfig) -> Result<Field> {
    Ok(one_phase_limit(f, cfg)?.projection)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BopMethod {
    TimeIntegration,
    DirectSweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BopResiduals {
    /// `max_i min(|w_i|, dist(f~_i, sign(w_i)))`, with `(|f~_i| - 1)_+` where `w_i = 0`.
    pub complementarity: f64,
    /// `max_i (|f~_i| - 1)_+`.
    pub bound: f64,
    /// Time integration: `||f~ - u_final||_1`. Direct sweep: last max update.
    pub fixed_point: f64,
}

#[derive(Clone, Debug)]
pub struct BopResult {
    pub method: BopMethod,
    pub w_inf: Field,
    pub f_tilde: Field,
    pub residuals: BopResiduals,
    /// Steps (time integration) or sweeps (direct).
    pub iterations: usize,
}

#[derive(Serialize)]
struct BopExport<'a> {
    method: BopMethod,
    residuals: &'a BopResiduals,
    w_inf_file: &'a str,
    f_tilde_file: &'a str,
}

impl BopResult {
    /// `{method, residuals, w_inf_file, f_tilde_file}`.
    pub fn to_json(&self, w_inf_file: &str, f_tilde_file: &str) -> String {
        serde_json::to_string(&BopExport { method: self.method, residuals: &self.residuals, w_inf_file, f_tilde_file })
            .expect("bop export cannot fail")
    }
}

fn limit_enthalpy(f: &Field, w: &Field, kernel: &DiscreteKernel) -> Result<Field> {
    let jw = convolve(kernel, w)?;
    Ok(Field::from_raw(
        f.grid(),
        f.values().iter().zip(jw.values()).zip(w.values()).map(|((a, b), c)| a + b - c).collect(),
    ))
}

fn residuals(w: &Field, f_tilde: &Field) -> (f64, f64) {
    let mut comp: f64 = 0.0;
    let mut bound: f64 = 0.0;
    for (&wi, &fi) in w.values().iter().zip(f_tilde.values()) {
        let excess = (fi.abs() - 1.0).max(0.0);
        bound = bound.max(excess);
        let r = if wi > 0.0 {
            wi.abs().min((fi - 1.0).abs())
        } else if wi < 0.0 {
            wi.abs().min((fi + 1.0).abs())
        } else {
            excess
        };
        comp = comp.max(r);
    }
    (comp, bound)
}

fn is_one_signed(f: &Field) -> bool {
    f.values().iter().all(|&x| x >= 0.0) || f.values().iter().all(|&x| x <= 0.0)
}

/// Biobstacle solution through the Baiocchi limit `w_inf = int_0^inf G(u)`.
pub fn solve_bop_time(f: &Field, cfg: &LimitConfig) -> Result<BopResult> {
    if !is_one_signed(f) {
        let check = check_noninteraction(f, cfg)?;
        if check.level == InteractionLevel::None {
            return Err(Error::PhasesInteract(format!(
                "temperature distance {} < R_J = {}",
                check.temperature_distance, cfg.sim.kernel.radius
            )));
        }
    }
    solve_bop_time_unchecked(f, cfg)
}

fn solve_bop_time_unchecked(f: &Field, cfg: &LimitConfig) -> Result<BopResult> {
    let stepper = run_to_rest(f, Graph::Canonical, cfg)?;
    let w_inf = stepper.w();
    let f_tilde = limit_enthalpy(f, &w_inf, stepper.kernel())?;
    let (complementarity, bound) = residuals(&w_inf, &f_tilde);
    let fixed_point = l1_distance(&f_tilde, stepper.u())?;
    Ok(BopResult {
        method: BopMethod::TimeIntegration,
        w_inf,
        f_tilde,
        residuals: BopResiduals { complementarity, bound, fixed_point },
        iterations: stepper.steps(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOrder {
    Ascending,
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub max_sweeps: usize,
    /// Stop once the largest nodewise update of a sweep is below this.
    pub tol: f64,
    pub order: SweepOrder,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { max_sweeps: 200_000, tol: 1e-12, order: SweepOrder::Ascending }
    }
}

/// Projected nodewise relaxation for `0 <= sign(w)(f + J*w - w) <= 1`,
/// additionally enforcing `|f + J*w - w| <= 1` where `w = 0`.
///
/// At node `i`, with the other nodes frozen, solve `f_i + (J*w)_i - w_i = 1`
/// and keep the root if positive, else solve with `-1` and keep the root if
/// negative, else set `w_i = 0`.
pub fn solve_bop_direct(f: &Field, kernel: &DiscreteKernel, options: SweepOptions) -> Result<BopResult> {
    let grid = f.grid();
    let n = grid.len();
    let denom = 1.0 - kernel.diagonal();
    let fv = f.values();
    let mut w = vec![0.0; n];
    let mut history = Vec::new();
    let order: Vec<usize> = match options.order {
        SweepOrder::Ascending => (0..n).collect(),
        SweepOrder::Descending => (0..n).rev().collect(),
    };
    for sweep in 1..=options.max_sweeps {
        let mut max_update: f64 = 0.0;
        for &i in &order {
            let base = fv[i] + kernel.off_diagonal_at(grid, &w, i);
            let up = (base - 1.0) / denom;
            let down = (base + 1.0) / denom;
            let next = if up > 0.0 {
                up
            } else if down < 0.0 {
                down
            } else {
                0.0
            };
            max_update = max_update.max((next - w[i]).abs());
            w[i] = next;
        }
        history.push(max_update);
        if max_update < options.tol {
            let w_inf = Field::new(grid.clone(), w)?;
            let f_tilde = limit_enthalpy(f, &w_inf, kernel)?;
            let (complementarity, bound) = residuals(&w_inf, &f_tilde);
            return Ok(BopResult {
                method: BopMethod::DirectSweep,
                w_inf,
                f_tilde,
                residuals: BopResiduals { complementarity, bound, fixed_point: max_update },
                iterations: sweep,
            });
        }
    }
    Err(Error::SweepDiverged {
        sweeps: options.max_sweeps,
        last_update: history.last().copied().unwrap_or(f64::INFINITY),
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionLevel {
    None,
    /// Ultimate temperature supports at least `R_J` apart.
    Temperature,
    /// Supports of the two projections more than `2 R_J` apart.
    Strong,
}

#[derive(Clone, Debug)]
pub struct NonInteraction {
    pub level: InteractionLevel,
    /// Distance between the supports of the Baiocchi limits of `f_+` and `f_-`,
    /// i.e. between the regions the two temperatures ever occupy.
    pub temperature_distance: f64,
    /// Distance between `supp P f_+` and `supp P f_-`.
    pub support_distance: f64,
    pub plus: OnePhaseLimit,
    pub minus: OnePhaseLimit,
}

/// Runs both one-phase projections and classifies how far apart the phases stay.
pub fn check_noninteraction(f: &Field, cfg: &LimitConfig) -> Result<NonInteraction> {
    let plus = one_phase_limit(&f.positive_part(), cfg)?;
    let minus = one_phase_limit(&f.negative_part(), cfg)?;
    let grid = f.grid();
    let eps = cfg.sim.eps.unwrap_or_else(|| default_eps(f));
    let temperature_distance =
        set_distance(&support_mask(&plus.baiocchi, eps), &support_mask(&minus.baiocchi, eps), grid);
    let support_distance =
        set_distance(&support_mask(&plus.projection, eps), &support_mask(&minus.projection, eps), grid);
    let radius = cfg.sim.kernel.radius;
    let level = if support_distance > 2.0 * radius {
        InteractionLevel::Strong
    } else if temperature_distance >= radius {
        InteractionLevel::Temperature
    } else {
        InteractionLevel::None
    };
    Ok(NonInteraction { level, temperature_distance, support_distance, plus, minus })
}

/// Predicted trajectory `U+(t) - U-(t)` from two one-phase runs over
/// `[0, cfg.sim.t_end]`.
pub fn decompose_noninteracting(f: &Field, cfg: &LimitConfig) -> Result<Trajectory> {
    let check = check_noninteraction(f, cfg)?;
    decompose_checked(f, &cfg.sim, &check)
}

/// As [`decompose_noninteracting`] with a precomputed classification.
pub fn decompose_checked(f: &Field, sim: &SimConfig, check: &NonInteraction) -> Result<Trajectory> {
    if check.level != InteractionLevel::Strong {
        return Err(Error::NotApplicable(format!(
            "decomposition needs projection supports more than 2 R_J apart (distance {})",
            check.support_distance
        )));
    }
    let sim = SimConfig { stop: StopRule::FixedHorizon, ..sim.clone() };
    let plus = integrate_one_phase(&f.positive_part(), &sim)?;
    let minus = integrate_one_phase(&f.negative_part(), &sim)?;
    let eps = sim.eps.unwrap_or_else(|| default_eps(f));
    let mut out = Trajectory {
        graph: Graph::Canonical,
        dt: sim.dt,
        eps,
        times: plus.times.clone(),
        u: Vec::new(),
        w: Vec::new(),
        diagnostics: Vec::new(),
        steps: plus.steps,
        stop_reached: true,
        max_mass_drift: plus.max_mass_drift + minus.max_mass_drift,
    };
    for k in 0..plus.times.len() {
        let u = plus.u[k].zip_with(&minus.u[k], |a, b| a - b)?;
        let w = plus.w[k].zip_with(&minus.w[k], |a, b| a - b)?;
        let v = u.map(gamma);
        out.diagnostics.push(Diagnostics {
            t: plus.times[k],
            mass: integral(&u),
            linf: u.sup_norm(),
            l1_gamma: v.l1_norm(),
            supp_plus_count: v.values().iter().filter(|&&x| x > eps).count(),
            supp_minus_count: v.values().iter().filter(|&&x| x < -eps).count(),
        });
        out.u.push(u);
        out.w.push(w);
    }
    Ok(out)
}

/// How [`project_general`] obtained its answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "kebab-case")]
pub enum LimitRoute {
    /// `|f| <= 1`: nothing moves.
    Stationary,
    /// Non-interacting phases: biobstacle limit.
    Biobstacle { level: InteractionLevel },
    /// The temperature died out before either phase disappeared.
    Decay { t: f64 },
    /// One phase vanished at `t_loss`; the rest is one-phase dynamics.
    PhaseLoss { t_loss: f64, lost: LostPhase },
    /// Interacting phases with no loss and no decay by the horizon.
    Unresolved { t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LostPhase {
    /// `u >= -1` everywhere from `t_loss` on.
    Negative,
    /// `u <= 1` everywhere from `t_loss` on.
    Positive,
}

#[derive(Clone, Debug)]
pub struct GeneralLimit {
    pub field: Field,
    pub route: LimitRoute,
}

/// Tolerance for deciding that a phase has been lost.
pub const LOSS_TOL: f64 = 1e-10;

/// Which phase, if any, has disappeared from `u`.
pub fn lost_phase(u: &Field, tol: f64) -> Option<LostPhase> {
    if u.min() >= -1.0 - tol {
        Some(LostPhase::Negative)
    } else if u.max() <= 1.0 + tol {
        Some(LostPhase::Positive)
    } else {
        None
    }
}

/// Asymptotic enthalpy for general data.
///
/// Non-interacting data go through the biobstacle problem. Otherwise the
/// two-phase evolution runs until the temperature vanishes or one phase is
/// lost; after a loss the canonical graph coincides with the one-phase graph
/// (shifted for a lost positive phase) on the reachable states, so the same
/// run continues to the limit. Interacting data that neither decay nor lose a
/// phase within the horizon come back tagged [`LimitRoute::Unresolved`].
pub fn project_general(f: &Field, cfg: &LimitConfig) -> Result<GeneralLimit> {
    if f.sup_norm() <= 1.0 {
        return Ok(GeneralLimit { field: f.clone(), route: LimitRoute::Stationary });
    }
    if is_one_signed(f) {
        let bop = solve_bop_time_unchecked(f, cfg)?;
        return Ok(GeneralLimit {
            field: bop.f_tilde,
            route: LimitRoute::Biobstacle { level: InteractionLevel::Strong },
        });
    }
    let check = check_noninteraction(f, cfg)?;
    if check.level >= InteractionLevel::Temperature {
        let bop = solve_bop_time_unchecked(f, cfg)?;
        return Ok(GeneralLimit { field: bop.f_tilde, route: LimitRoute::Biobstacle { level: check.level } });
    }
    let tol = cfg.tol_for(f);
    let mut stepper = Stepper::new(f, &cfg.sim_with(Graph::Canonical))?;
    let max_steps = (cfg.horizon / cfg.sim.dt).ceil() as usize;
    let mut loss: Option<(f64, LostPhase)> = None;
    loop {
        if loss.is_none() {
            loss = lost_phase(stepper.u(), LOSS_TOL).map(|p| (stepper.t(), p));
        }
        if stepper.gamma_l1() < tol {
            let route = match loss {
                Some((t_loss, lost)) => LimitRoute::PhaseLoss { t_loss, lost },
                None => LimitRoute::Decay { t: stepper.t() },
            };
            return Ok(GeneralLimit { field: stepper.u().clone(), route });
        }
        if stepper.steps() >= max_steps {
            // a lost phase with unfinished decay is a horizon problem, not an open case
            if loss.is_some() {
                return Err(Error::HorizonExhausted { horizon: cfg.horizon, tol, residual: stepper.gamma_l1() });
            }
            return Ok(GeneralLimit { field: stepper.u().clone(), route: LimitRoute::Unresolved { t: stepper.t() } });
        }
        stepper.step()?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::kernel::KernelSpec;

    fn cfg() -> LimitConfig {
        LimitConfig::new(SimConfig::new(KernelSpec::tent(1.0), 0.1, 5.0), 2000.0).with_tol(1e-11)
    }

    fn bump(g: &Grid, lo: f64, hi: f64, height: f64) -> Field {
        Field::from_fn(g, |x| if x[0] >= lo - 1e-9 && x[0] <= hi + 1e-9 { height } else { 0.0 }).unwrap()
    }

    #[test]
    fn projection_of_mushy_data_is_identity() {
        let g = Grid::centered_line(8.0, 0.1).unwrap();
        let f = bump(&g, -1.0, 1.0, 0.9);
        assert_eq!(project_one_phase(&f, &cfg()).unwrap(), f);
    }

    #[test]
    fn projection_caps_plateau_and_keeps_mass() {
        let g = Grid::centered_line(10.0, 0.1).unwrap();
        let f = bump(&g, -1.0, 1.0, 3.0);
        let pf = project_one_phase(&f, &cfg()).unwrap();
        assert!(pf.max() <= 1.0 + 1e-9);
        assert!(pf.min() >= 0.0);
        assert!((integral(&pf) - integral(&f)).abs() <= 1e-9 * integral(&f));
        let again = project_one_phase(&pf, &cfg()).unwrap();
        assert!(l1_distance(&again, &pf).unwrap() <= 1e-10);
    }

    #[test]
    fn horizon_exhaustion_is_reported() {
        let g = Grid::centered_line(10.0, 0.1).unwrap();
        let f = bump(&g, -1.0, 1.0, 3.0);
        let short = LimitConfig { horizon: 1.0, ..cfg() };
        assert!(matches!(project_one_phase(&f, &short), Err(Error::HorizonExhausted { .. })));
    }

    #[test]
    fn direct_sweep_on_small_data_is_trivial() {
        let g = Grid::centered_line(5.0, 0.1).unwrap();
        let k = KernelSpec::tent(1.0).build(&g).unwrap();
        let f = bump(&g, -1.0, 1.0, 0.7);
        let r = solve_bop_direct(&f, &k, SweepOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.w_inf.sup_norm(), 0.0);
        assert_eq!(r.f_tilde, f);
    }

    #[test]
    fn direct_sweep_is_odd_and_order_insensitive() {
        let g = Grid::centered_line(8.0, 0.1).unwrap();
        let k = KernelSpec::tent(1.0).build(&g).unwrap();
        let f = Field::from_fn(&g, |x| {
            if (-3.0..=-1.0).contains(&x[0]) {
                2.5
            } else if (1.5..=2.5).contains(&x[0]) {
                -3.0
            } else {
                0.0
            }
        })
        .unwrap();
        let a = solve_bop_direct(&f, &k, SweepOptions::default()).unwrap();
        let neg = solve_bop_direct(&f.map(|x| -x), &k, SweepOptions::default()).unwrap();
        assert_eq!(neg.w_inf, a.w_inf.map(|x| -x));
        let desc =
            solve_bop_direct(&f, &k, SweepOptions { order: SweepOrder::Descending, ..Default::default() }).unwrap();
        assert!(l1_distance(&desc.w_inf, &a.w_inf).unwrap() < 1e-6);
        assert!(a.residuals.complementarity < 1e-9);
        assert!((integral(&a.f_tilde) - integral(&f)).abs() < 1e-9 * f.l1_norm());
    }

    #[test]
    fn one_signed_time_and_direct_agree() {
        let g = Grid::centered_line(10.0, 0.1).unwrap();
        let f = bump(&g, -1.0, 1.0, 3.0);
        let c = cfg();
        let k = c.sim.kernel.build(&g).unwrap();
        let t = solve_bop_time(&f, &c).unwrap();
        let d = solve_bop_direct(&f, &k, SweepOptions::default()).unwrap();
        assert!(l1_distance(&t.w_inf, &d.w_inf).unwrap() < 1e-6);
        assert!(t.residuals.fixed_point < 1e-10);
        let pf = project_one_phase(&f, &c).unwrap();
        assert!(l1_distance(&t.f_tilde, &pf).unwrap() < 1e-8);
    }

    #[test]
    fn one_signed_data_is_strongly_noninteracting() {
        let g = Grid::centered_line(8.0, 0.1).unwrap();
        let check = check_noninteraction(&bump(&g, -1.0, 1.0, 2.0), &cfg()).unwrap();
        assert_eq!(check.level, InteractionLevel::Strong);
        assert_eq!(check.support_distance, f64::INFINITY);
    }

    #[test]
    fn touching_bumps_interact() {
        let g = Grid::centered_line(10.0, 0.1).unwrap();
        let f = bump(&g, -2.0, 0.0, 3.0).zip_with(&bump(&g, 0.5, 2.5, -3.0), |a, b| a + b).unwrap();
        let check = check_noninteraction(&f, &cfg()).unwrap();
        assert_eq!(check.level, InteractionLevel::None);
        assert!(matches!(solve_bop_time(&f, &cfg()), Err(Error::PhasesInteract(_))));
        assert!(matches!(decompose_noninteracting(&f, &cfg()), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn general_projection_of_small_data() {
        let g = Grid::centered_line(6.0, 0.1).unwrap();
        let f = bump(&g, -1.0, 1.0, -0.4);
        let out = project_general(&f, &cfg()).unwrap();
        assert_eq!(out.route, LimitRoute::Stationary);
        assert_eq!(out.field, f);
    }
}
