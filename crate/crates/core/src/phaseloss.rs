//! Sufficient condition for finite-time loss of the negative phase.
//!
//! With `v0 = G(f)` confined to a ball `B_R`, let
//! `alpha = min_{B_R} J * v0_+`, `beta = sup_{B_2R} J`, `b = beta ||v0_-||_1`
//! and `eta_bar = alpha - b`. When `eta_bar > 0`,
//! `kappa = max_{0 < eta < eta_bar} eta ln(alpha / (eta + b))`, attained at
//! `eta*`, and `t1 = ln(alpha / (eta* + b))`. If moreover
//! `||f_-||_inf <= 1 + kappa`, then `u(., t1) >= -1` everywhere.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::{lost_phase, run_to_rest, LimitConfig, LostPhase, LOSS_TOL};
use crate::error::{Error, Result};
use crate::evolution::{SimConfig, Stepper, StopRule};
use crate::graph::{gamma, Graph};
use crate::grid::{default_eps, Field};
use crate::kernel::{convolve, kernel_sup_ball, DiscreteKernel};

/// Confinement radius estimate from a run over `[0, horizon]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub r: f64,
    pub horizon: f64,
    /// Largest `|x|` over all temperature supports seen; 0 if none.
    pub max_support_radius: f64,
}

/// Largest radius of `supp G(u(t))` over the run `[0, sim.t_end]`, plus `margin`.
pub fn estimate_r(f: &Field, sim: &SimConfig, margin: f64) -> Result<RadiusEstimate> {
    let sim = SimConfig { graph: Graph::Canonical, stop: StopRule::FixedHorizon, ..sim.clone() };
    let mut stepper = Stepper::new(f, &sim)?;
    let eps = stepper.eps();
    let grid = f.grid().clone();
    let n_steps = (sim.t_end / sim.dt - 1e-9).ceil().max(0.0) as usize;
    let mut radius: f64 = 0.0;
    loop {
        for (i, v) in stepper.v().values().iter().enumerate() {
            if v.abs() > eps {
                radius = radius.max(grid.radius(i));
            }
        }
        if stepper.steps() >= n_steps {
            break;
        }
        stepper.step()?;
    }
    Ok(RadiusEstimate { r: radius + margin, horizon: sim.t_end, max_support_radius: radius })
}

/// `min_{|x| <= R} (J * v0_+)(x)`; 0 when no node lies in the ball.
pub fn alpha_of(v0: &Field, kernel: &DiscreteKernel, r: f64) -> Result<f64> {
    let spread = convolve(kernel, &v0.positive_part())?;
    let grid = v0.grid();
    let tol = 1e-12 * grid.spacing();
    let min = spread
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| grid.radius(*i) <= r + tol)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    Ok(if min.is_finite() { min } else { 0.0 })
}

/// `sup_{|x| <= 2R} J(x)`.
pub fn beta_of(kernel: &DiscreteKernel, r: f64) -> f64 {
    kernel_sup_ball(kernel, 2.0 * r)
}

/// `phi(eta) = eta ln(alpha / (eta + b))`.
pub fn phi(eta: f64, alpha: f64, b: f64) -> f64 {
    eta * (alpha / (eta + b)).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaSolution {
    pub kappa: f64,
    pub eta_star: f64,
    pub t1: f64,
}

/// `phi'(eta)`, strictly decreasing on `(0, eta_bar)`.
fn phi_slope(eta: f64, alpha: f64, b: f64) -> f64 {
    (alpha / (eta + b)).ln() - eta / (eta + b)
}

/// Maximizes the concave `phi` on `(0, eta_bar)` by bisecting on `phi' = 0`.
///
/// A direct golden-section search on `phi` stalls near `sqrt(f64::EPSILON)`
/// relative accuracy in `eta*` because the maximum is flat.
pub fn kappa_of(alpha: f64, beta: f64, v_minus_l1: f64) -> Result<KappaSolution> {
    let b = beta * v_minus_l1;
    let eta_bar = alpha - b;
    if !(eta_bar > 0.0) {
        return Err(Error::CriterionHypothesis { eta_bar });
    }
    let (mut lo, mut hi) = (0.0, eta_bar);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi_slope(mid, alpha, b) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta_star = 0.5 * (lo + hi);
    let t1 = (alpha / (eta_star + b)).ln();
    Ok(KappaSolution { kappa: eta_star * t1, eta_star, t1 })
}

/// Where the confinement radius comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadiusSource {
    /// Caller-certified radius.
    Fixed { r: f64 },
    /// Measured from a run. The horizon starts at `sim.t_end` and is
    /// extended to `t1` when needed, so the measured confinement covers the
    /// whole window the bound relies on. `margin` defaults to one grid spacing.
    Estimated { margin: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseLossConfig {
    pub sim: SimConfig,
    pub radius: RadiusSource,
    /// Also run the evolution and measure the first loss time.
    pub verify: bool,
    pub verify_horizon: f64,
    /// `min u >= -1 - loss_tol` counts as loss.
    pub loss_tol: f64,
}

impl PhaseLossConfig {
    pub fn new(sim: SimConfig) -> Self {
        Self {
            sim,
            radius: RadiusSource::Estimated { margin: None },
            verify: true,
            verify_horizon: 50.0,
            loss_tol: LOSS_TOL,
        }
    }

    /// Hex SHA-256 of the JSON form of this configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization cannot fail");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseLossReport {
    #[serde(rename = "R")]
    pub r: f64,
    pub r_source: String,
    /// Window over which an estimated `R` was measured.
    pub r_horizon: Option<f64>,
    /// Whether the measured window covers `[0, t1]`.
    pub r_certified: bool,
    pub alpha: f64,
    pub beta: f64,
    pub eta_bar: f64,
    pub kappa: Option<f64>,
    pub eta_star: Option<f64>,
    pub t1: Option<f64>,
    pub v_minus_l1: f64,
    pub f_minus_sup: f64,
    pub criterion_holds: bool,
    /// `||f_-||_inf <= 1`: the conclusion already holds at `t = 0`.
    pub trivially_holds: bool,
    /// `1 + kappa - ||f_-||_inf` (negative when the depth condition fails).
    pub depth_margin: Option<f64>,
    pub failure: Option<String>,
    pub measured_loss_time: Option<f64>,
    /// `measured_loss_time <= t1 + dt`, when both are known and the criterion holds.
    pub bound_respected: Option<bool>,
    pub config_hash: String,
}

impl PhaseLossReport {
    /// Time by which loss is guaranteed when the criterion holds.
    pub fn guaranteed_time(&self) -> Option<f64> {
        if self.trivially_holds {
            Some(0.0)
        } else if self.criterion_holds {
            self.t1
        } else {
            None
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

struct Quantities {
    alpha: f64,
    beta: f64,
    eta_bar: f64,
    kappa: Option<KappaSolution>,
}

fn quantities(v0: &Field, kernel: &DiscreteKernel, r: f64, v_minus_l1: f64) -> Result<Quantities> {
    let alpha = alpha_of(v0, kernel, r)?;
    let beta = beta_of(kernel, r);
    let eta_bar = alpha - beta * v_minus_l1;
    let kappa = if eta_bar > 0.0 { Some(kappa_of(alpha, beta, v_minus_l1)?) } else { None };
    Ok(Quantities { alpha, beta, eta_bar, kappa })
}

/// First time at which `min u >= -1 - loss_tol`, if it happens by `horizon`.
pub fn measure_loss_time(f: &Field, sim: &SimConfig, horizon: f64, loss_tol: f64) -> Result<Option<f64>> {
    let sim = SimConfig { graph: Graph::Canonical, stop: StopRule::FixedHorizon, ..sim.clone() };
    let mut stepper = Stepper::new(f, &sim)?;
    let max_steps = (horizon / sim.dt - 1e-9).ceil() as usize;
    loop {
        if stepper.u().min() >= -1.0 - loss_tol {
            return Ok(Some(stepper.t()));
        }
        if stepper.steps() >= max_steps {
            return Ok(None);
        }
        stepper.step()?;
    }
}

/// Assembles every criterion quantity and, if configured, verifies the bound.
pub fn criterion(f: &Field, cfg: &PhaseLossConfig) -> Result<PhaseLossReport> {
    let grid = f.grid();
    let kernel = cfg.sim.kernel.build(grid)?;
    let v0 = f.map(gamma);
    let v_minus_l1 = v0.negative_part().l1_norm();
    let f_minus_sup = f.negative_part().sup_norm();

    let (r, r_source, r_horizon, q) = match cfg.radius {
        RadiusSource::Fixed { r } => {
            if !(r > 0.0) {
                return Err(Error::InvalidConfig(format!("R must be positive, got {r}")));
            }
            (r, "fixed".to_string(), None, quantities(&v0, &kernel, r, v_minus_l1)?)
        }
        RadiusSource::Estimated { margin } => {
            let margin = margin.unwrap_or(grid.spacing());
            let mut horizon = cfg.sim.t_end;
            let mut round = 0;
            loop {
                let est = estimate_r(f, &cfg.sim.clone().with_t_end(horizon), margin)?;
                let q = quantities(&v0, &kernel, est.r, v_minus_l1)?;
                let needed = q.kappa.map(|k| k.t1);
                round += 1;
                match needed {
                    Some(t1) if t1 > horizon && round < 8 => {
                        horizon = (t1 / cfg.sim.dt).ceil() * cfg.sim.dt;
                    }
                    _ => break (est.r, "estimated".to_string(), Some(horizon), q),
                }
            }
        }
    };

    let trivially_holds = f_minus_sup <= 1.0;
    let kappa = q.kappa;
    let depth_ok = kappa.is_some_and(|k| f_minus_sup <= 1.0 + k.kappa);
    let criterion_holds = trivially_holds || (q.eta_bar > 0.0 && depth_ok);
    let failure = if trivially_holds {
        None
    } else if q.alpha <= 0.0 {
        Some("alpha = 0: J * v0_+ vanishes somewhere in B_R".to_string())
    } else if q.eta_bar <= 0.0 {
        Some("eta_bar <= 0: negative temperature too large relative to alpha / beta".to_string())
    } else if !depth_ok {
        Some("||f_-||_inf exceeds 1 + kappa".to_string())
    } else {
        None
    };
    let r_certified = match (r_horizon, kappa) {
        (Some(h), Some(k)) => k.t1 <= h + 1e-12,
        (Some(_), None) => false,
        (None, _) => true,
    };

    let mut report = PhaseLossReport {
        r,
        r_source,
        r_horizon,
        r_certified,
        alpha: q.alpha,
        beta: q.beta,
        eta_bar: q.eta_bar,
        kappa: kappa.map(|k| k.kappa),
        eta_star: kappa.map(|k| k.eta_star),
        t1: kappa.map(|k| k.t1),
        v_minus_l1,
        f_minus_sup,
        criterion_holds,
        trivially_holds,
        depth_margin: kappa.map(|k| 1.0 + k.kappa - f_minus_sup),
        failure,
        measured_loss_time: None,
        bound_respected: None,
        config_hash: cfg.hash(),
    };
    if cfg.verify {
        report.measured_loss_time = measure_loss_time(f, &cfg.sim, cfg.verify_horizon, cfg.loss_tol)?;
        if let Some(bound) = report.guaranteed_time() {
            report.bound_respected = Some(report.measured_loss_time.is_some_and(|t| t <= bound + cfg.sim.dt));
        }
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct AfterLoss {
    /// State at the first loss time.
    pub f_star: Field,
    pub t_loss: f64,
    pub lost: LostPhase,
    pub limit: Field,
}

/// Runs until one phase is lost, then continues with one-phase dynamics
/// from the restart state `f*` (mirrored when the positive phase is lost).
pub fn asymptotic_after_loss(f: &Field, cfg: &LimitConfig) -> Result<AfterLoss> {
    let sim = SimConfig { graph: Graph::Canonical, stop: StopRule::FixedHorizon, ..cfg.sim.clone() };
    let mut stepper = Stepper::new(f, &sim)?;
    let max_steps = (cfg.horizon / sim.dt).ceil() as usize;
    let lost = loop {
        if let Some(lost) = lost_phase(stepper.u(), LOSS_TOL) {
            break lost;
        }
        if stepper.steps() >= max_steps {
            return Err(Error::NotApplicable(format!("no phase was lost by t = {}", cfg.horizon)));
        }
        stepper.step()?;
    };
    let f_star = stepper.u().clone();
    let t_loss = stepper.t();
    let restart_cfg = LimitConfig { tol: Some(cfg.tol_for(f)), ..cfg.clone() };
    let limit = match lost {
        LostPhase::Negative => run_to_rest(&f_star, Graph::OnePhase, &restart_cfg)?.u().clone(),
        LostPhase::Positive => {
            let mirrored = f_star.map(|x| -x);
            run_to_rest(&mirrored, Graph::OnePhase, &restart_cfg)?.u().map(|x| -x)
        }
    };
    Ok(AfterLoss { f_star, t_loss, lost, limit })
}

/// Default support threshold for `f`, re-exported for report consumers.
pub fn support_eps(f: &Field) -> f64 {
    default_eps(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::kernel::KernelSpec;
    use std::f64::consts::E;

    #[test]
    fn closed_form_when_no_negative_temperature() {
        let k = kappa_of(1.0, 0.3, 0.0).unwrap();
        assert!((k.kappa - 1.0 / E).abs() < 1e-10);
        assert!((k.eta_star - 1.0 / E).abs() < 1e-10);
        let k = kappa_of(E, 0.3, 0.0).unwrap();
        assert!((k.kappa - 1.0).abs() < 1e-10);
        assert!((k.t1 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn maximizer_matches_grid_scan() {
        let (alpha, b) = (1.0, 0.1);
        let sol = kappa_of(alpha, 1.0, b).unwrap();
        let eta_bar = alpha - b;
        let n = 1_000_000;
        let mut best: f64 = 0.0;
        for i in 1..n {
            best = best.max(phi(eta_bar * i as f64 / n as f64, alpha, b));
        }
        assert!((sol.kappa - best).abs() < 1e-9);
        assert!((sol.kappa - sol.eta_star * sol.t1).abs() < 1e-10);
    }

    #[test]
    fn hypothesis_failure_is_an_error() {
        assert!(matches!(kappa_of(1.0, 1.0, 1.0), Err(Error::CriterionHypothesis { .. })));
    }

    #[test]
    fn kappa_decreases_with_negative_mass() {
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let k = kappa_of(0.8, 0.125, i as f64 * 0.1).unwrap().kappa;
            assert!(k <= last);
            last = k;
        }
    }

    #[test]
    fn alpha_and_beta_examples() {
        let g = Grid::centered_line(10.0, 0.1).unwrap();
        let k = KernelSpec::tent(1.0).build(&g).unwrap();
        assert_eq!(alpha_of(&Field::zeros(&g), &k, 2.0).unwrap(), 0.0);
        let wide = Field::from_fn(&g, |x| if x[0].abs() <= 4.0 { 1.0 } else { 0.0 }).unwrap();
        assert!((alpha_of(&wide, &k, 2.0).unwrap() - 1.0).abs() < 1e-14);
        let j0 = k.weight([0, 0]);
        assert_eq!(beta_of(&k, 3.0), j0);
        assert_eq!(beta_of(&k, 1e-9), j0);
    }

    #[test]
    fn nonnegative_data_hold_trivially() {
        let g = Grid::centered_line(8.0, 0.1).unwrap();
        let f = Field::from_fn(&g, |x| if x[0].abs() <= 1.0 { 3.0 } else { 0.0 }).unwrap();
        let cfg = PhaseLossConfig::new(SimConfig::new(KernelSpec::tent(1.0), 0.1, 1.0));
        let report = criterion(&f, &cfg).unwrap();
        assert!(report.criterion_holds && report.trivially_holds);
        assert_eq!(report.measured_loss_time, Some(0.0));
        assert_eq!(report.bound_respected, Some(true));
    }

    #[test]
    fn estimated_radius_of_stationary_data_is_the_margin() {
        let g = Grid::centered_line(8.0, 0.1).unwrap();
        let f = Field::from_fn(&g, |x| if x[0].abs() <= 1.0 { 0.5 } else { 0.0 }).unwrap();
        let sim = SimConfig::new(KernelSpec::tent(1.0), 0.1, 1.0);
        let est = estimate_r(&f, &sim, 1.0).unwrap();
        assert_eq!(est.r, 1.0);
        let hot = f.map(|x| 6.0 * x);
        assert!(estimate_r(&hot, &sim, 0.0).unwrap().r >= 1.0);
    }
}
