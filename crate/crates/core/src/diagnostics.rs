//! Checkable predicates over recorded trajectories: finite-speed support
//! growth, retention of temperature supports, L1 contraction, and the
//! subcaloric inequality for the signed temperature parts.
//!
//! Every check is a pure function of its inputs. Violations are report
//! content, not errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::graph::{gamma, Graph};
use crate::grid::{l1_distance, l1_positive_part_distance, set_distance, support_mask, Field, NodeSet};
use crate::kernel::{convolve, kernel_sup, DiscreteKernel};

/// Cap on the number of violations stored in a report.
const MAX_RECORDED: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub node: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one check; serializes as `{check, pass, violations: [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub violations: Vec<Violation>,
    /// Total number of violations, including those beyond the stored cap.
    pub violation_count: usize,
}

impl CheckReport {
    fn new(check: &str) -> Self {
        Self { check: check.to_string(), pass: true, violations: Vec::new(), violation_count: 0 }
    }

    fn push(&mut self, v: Violation) {
        self.pass = false;
        self.violation_count += 1;
        if self.violations.len() < MAX_RECORDED {
            self.violations.push(v);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }
}

/// Growth rate data for the finite-speed support estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthBound {
    /// `sup J * ||G(f)||_1`
    pub c0: f64,
    /// `1 / c0`
    pub t0: f64,
    pub base: NodeSet,
    pub radius: f64,
}

impl GrowthBound {
    /// `floor(t / t0) + 1`
    pub fn n_of_t(&self, t: f64) -> usize {
        (t / self.t0).floor() as usize + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SupportBound {
    /// `G(f) = 0`: supports never move.
    Stationary,
    Growing(GrowthBound),
}

pub fn support_bound(f: &Field, kernel: &DiscreteKernel, eps: f64) -> SupportBound {
    let temperature = f.map(gamma).l1_norm();
    if temperature == 0.0 {
        return SupportBound::Stationary;
    }
    let c0 = kernel_sup(kernel) * temperature;
    SupportBound::Growing(GrowthBound { c0, t0: 1.0 / c0, base: support_mask(f, eps), radius: kernel.radius() })
}

/// Checks `supp u(t) ⊆ supp f + n(t) B_R` and `supp G(u(t)) ⊆ supp f + (n(t)-1) B_R`.
pub fn check_support_growth(traj: &Trajectory, bound: &SupportBound, eps: f64) -> CheckReport {
    let mut report = CheckReport::new("support_growth");
    let grid = traj.grid();
    let (growth, base) = match bound {
        SupportBound::Stationary => {
            let base = support_mask(traj.initial(), eps);
            (None, base)
        }
        SupportBound::Growing(b) => (Some(b), b.base.clone()),
    };
    let mut dilations: BTreeMap<usize, NodeSet> = BTreeMap::new();
    let mut dilated = |n: usize| -> NodeSet {
        dilations.entry(n).or_insert_with(|| base.dilate(grid, n as f64 * growth.map_or(0.0, |b| b.radius))).clone()
    };
    for (t, u) in traj.times.iter().zip(&traj.u) {
        let n = growth.map_or(0, |b| b.n_of_t(*t));
        let allowed_u = dilated(n);
        let allowed_v = dilated(n.saturating_sub(1));
        let radius = growth.map_or(0.0, |b| b.radius);
        let u_mask = support_mask(u, eps);
        let v_mask = support_mask(&traj.graph.apply_field(u), eps);
        for (mask, allowed, reach) in [(&u_mask, &allowed_u, n), (&v_mask, &allowed_v, n.saturating_sub(1))] {
            for node in mask.difference(allowed) {
                let single = NodeSet::from_indices(grid.len(), [node]);
                report.push(Violation {
                    t: *t,
                    node,
                    lhs: set_distance(&single, &base, grid),
                    rhs: reach as f64 * radius,
                });
            }
        }
    }
    report
}

/// Retention of the signed temperature supports.
///
/// Two shadows of the continuum statement are checked between consecutive
/// snapshots `s < t`:
/// * a node with `|G(u)_±(s)| > eps` still has `G(u)_±(t) > 0`;
/// * on each maximal run of snapshots where `J * G(u)` keeps the sign of
///   the phase at a node, `G(u)_±(t) >= exp(-(t - s)) G(u)_±(s) - tol` with
///   `s` the run start and `tol = 1e-8 + 2 dt ||G(u)||_inf`.
///
/// Runs are formed from recorded snapshots, so stride-1 trajectories give
/// the sharpest check.
pub fn check_retention(traj: &Trajectory, kernel: &DiscreteKernel, eps: f64) -> Result<CheckReport> {
    let mut report = CheckReport::new("retention");
    let temps: Vec<Field> = traj.u.iter().map(|u| traj.graph.apply_field(u)).collect();
    let spreads: Vec<Field> = temps.iter().map(|v| convolve(kernel, v)).collect::<Result<_>>()?;
    let vmax = temps.iter().map(Field::sup_norm).fold(0.0, f64::max);
    let tol = 1e-8 + 2.0 * traj.dt * vmax;

    for k in 1..temps.len() {
        let (prev, next) = (temps[k - 1].values(), temps[k].values());
        for i in 0..prev.len() {
            let kept = (prev[i] > eps && next[i] <= 0.0) || (prev[i] < -eps && next[i] >= 0.0);
            if kept {
                report.push(Violation { t: traj.times[k], node: i, lhs: next[i], rhs: 0.0 });
            }
        }
    }

    let n = traj.grid().len();
    for sign in [1.0, -1.0] {
        for i in 0..n {
            let mut start: Option<usize> = None;
            for k in 0..temps.len() {
                let in_window = sign * spreads[k].values()[i] >= 0.0;
                if !in_window {
                    start = None;
                    continue;
                }
                let s = *start.get_or_insert(k);
                let base = (sign * temps[s].values()[i]).max(0.0);
                if base == 0.0 {
                    // the run restarts at the first snapshot with this phase present
                    start = Some(k);
                    continue;
                }
                let now = (sign * temps[k].values()[i]).max(0.0);
                let rhs = (-(traj.times[k] - traj.times[s])).exp() * base - tol;
                if now < rhs {
                    report.push(Violation { t: traj.times[k], node: i, lhs: now, rhs });
                }
            }
        }
    }
    Ok(report)
}

/// `||u_A(t) - u_B(t)||_1` and `int (u_A - u_B)_+` over shared snapshot times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionSeries {
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
    pub positive: Vec<f64>,
}

impl ContractionSeries {
    /// Largest step-to-step increase over both series.
    pub fn max_increase(&self) -> f64 {
        [&self.l1, &self.positive].iter().flat_map(|s| s.windows(2).map(|w| w[1] - w[0])).fold(0.0, f64::max)
    }

    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.max_increase() <= slack
    }
}

pub fn monitor_contraction(a: &Trajectory, b: &Trajectory) -> Result<ContractionSeries> {
    if a.times != b.times {
        return Err(Error::InvalidConfig("trajectories were recorded at different times".into()));
    }
    let mut series = ContractionSeries { times: a.times.clone(), l1: Vec::new(), positive: Vec::new() };
    for (ua, ub) in a.u.iter().zip(&b.u) {
        series.l1.push(l1_distance(ua, ub)?);
        series.positive.push(l1_positive_part_distance(ua, ub)?);
    }
    Ok(series)
}

/// Discrete subcaloric inequality for `chi` in `{G(u)_+, G(u)_-, |G(u)|}`:
/// `(chi_{k+1} - chi_k) / dt <= J * chi_k - chi_k + c dt + slack`,
/// checked between consecutive snapshots one step apart.
pub fn check_subcaloric(traj: &Trajectory, kernel: &DiscreteKernel, c: f64, slack: f64) -> Result<CheckReport> {
    let mut report = CheckReport::new("subcaloric");
    let dt = traj.dt;
    let parts: [fn(f64) -> f64; 3] = [|v| v.max(0.0), |v| (-v).max(0.0), f64::abs];
    for k in 1..traj.u.len() {
        let gap = traj.times[k] - traj.times[k - 1];
        if (gap - dt).abs() > 1e-9 * dt {
            continue;
        }
        let v0 = traj.graph.apply_field(&traj.u[k - 1]);
        let v1 = traj.graph.apply_field(&traj.u[k]);
        for part in parts {
            let chi0 = v0.map(part);
            let chi1 = v1.map(part);
            let spread = convolve(kernel, &chi0)?;
            for i in 0..chi0.values().len() {
                let lhs = (chi1.values()[i] - chi0.values()[i]) / dt;
                let rhs = spread.values()[i] - chi0.values()[i] + c * dt;
                if lhs > rhs + slack {
                    report.push(Violation { t: traj.times[k], node: i, lhs, rhs });
                }
            }
        }
    }
    Ok(report)
}

/// `|mass(u(t)) - mass(f)| <= rel_tol * max(1, |mass(f)|)` at every step.
pub fn check_conservation(traj: &Trajectory, rel_tol: f64) -> CheckReport {
    let mut report = CheckReport::new("conservation");
    let m0 = traj.diagnostics[0].mass;
    let allowed = rel_tol * m0.abs().max(1.0);
    if traj.max_mass_drift > allowed {
        report.push(Violation { t: traj.final_time(), node: 0, lhs: traj.max_mass_drift, rhs: allowed });
    }
    for d in &traj.diagnostics {
        let drift = (d.mass - m0).abs();
        if drift > allowed {
            report.push(Violation { t: d.t, node: 0, lhs: drift, rhs: allowed });
        }
    }
    report
}

/// `||u(t)||_inf <= ||f||_inf + slack`.
pub fn check_linf_bound(traj: &Trajectory, slack: f64) -> CheckReport {
    let mut report = CheckReport::new("linf_bound");
    let bound = traj.initial().sup_norm() + slack;
    for (t, u) in traj.times.iter().zip(&traj.u) {
        if let Some((node, v)) = u.values().iter().enumerate().find(|(_, v)| v.abs() > bound) {
            report.push(Violation { t: *t, node, lhs: v.abs(), rhs: bound });
        }
    }
    report
}

/// Temperature-support masks of `G(u)_+` and `G(u)_-` at one snapshot.
pub fn signed_supports(u: &Field, graph: &Graph, eps: f64) -> (NodeSet, NodeSet) {
    let v = graph.apply_field(u);
    (support_mask(&v.positive_part(), eps), support_mask(&v.negative_part(), eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{integrate, SimConfig};
    use crate::grid::Grid;
    use crate::kernel::KernelSpec;

    fn plateau(g: &Grid, height: f64) -> Field {
        Field::from_fn(g, |x| if x[0].abs() <= 1.0 + 1e-9 { height } else { 0.0 }).unwrap()
    }

    #[test]
    fn bound_arithmetic() {
        let g = Grid::centered_line(12.0, 0.05).unwrap();
        let k = KernelSpec::tent(1.0).build(&g).unwrap();
        let f = plateau(&g, 3.0);
        let SupportBound::Growing(b) = support_bound(&f, &k, 1e-10) else { panic!() };
        let temperature = 41.0 * 0.05 * 2.0;
        assert!((b.c0 - k.weight([0, 0]) * temperature).abs() < 1e-12);
        assert_eq!(b.t0, 1.0 / b.c0);
        let SupportBound::Growing(b2) = support_bound(&plateau(&g, 5.0), &k, 1e-10) else { panic!() };
        assert!((b2.t0 - 0.5 * b.t0).abs() < 1e-12);
        assert_eq!(support_bound(&plateau(&g, 1.0), &k, 1e-10), SupportBound::Stationary);
    }

    #[test]
    fn stationary_data_passes_every_check() {
        let g = Grid::centered_line(6.0, 0.05).unwrap();
        let k = KernelSpec::tent(1.0).build(&g).unwrap();
        let f = plateau(&g, 0.8);
        let traj = integrate(&f, &SimConfig::new(KernelSpec::tent(1.0), 0.1, 1.0)).unwrap();
        let bound = support_bound(&f, &k, 1e-10);
        assert!(check_support_growth(&traj, &bound, 1e-10).pass);
        assert!(check_retention(&traj, &k, 1e-10).unwrap().pass);
        let (p0, m0) = signed_supports(traj.initial(), &traj.graph, 1e-10);
        let (p1, m1) = signed_supports(traj.final_u(), &traj.graph, 1e-10);
        assert_eq!((p0, m0), (p1, m1));
        let series = monitor_contraction(&traj, &traj).unwrap();
        assert!(series.l1.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn plateau_support_growth_and_retention() {
        let g = Grid::centered_line(14.0, 0.05).unwrap();
        let cfg = SimConfig::new(KernelSpec::tent(1.0), 0.1, 20.0);
        let k = cfg.kernel.build(&g).unwrap();
        let f = plateau(&g, 3.0);
        let traj = integrate(&f, &cfg).unwrap();
        let bound = support_bound(&f, &k, 1e-10);
        let report = check_support_growth(&traj, &bound, 1e-10);
        assert!(report.pass, "{:?}", &report.violations[..report.violations.len().min(3)]);
        // dilation by zero of the initial mask already contains supp G(u(0))
        let SupportBound::Growing(b) = &bound else { panic!() };
        let (p, _) = signed_supports(traj.initial(), &traj.graph, 1e-10);
        assert!(p.is_subset(&b.base));
        assert!(check_retention(&traj, &k, 1e-10).unwrap().pass);
        assert!(check_subcaloric(&traj, &k, 0.0, 1e-12).unwrap().pass);
        assert!(check_conservation(&traj, 1e-12).pass);
        assert!(check_linf_bound(&traj, 1e-12).pass);
    }

    #[test]
    fn larger_eps_never_adds_violations() {
        let g = Grid::centered_line(10.0, 0.05).unwrap();
        let cfg = SimConfig::new(KernelSpec::tent(1.0), 0.1, 5.0);
        let k = cfg.kernel.build(&g).unwrap();
        let f = plateau(&g, 3.0);
        let traj = integrate(&f, &cfg).unwrap();
        let bound = support_bound(&f, &k, 1e-10);
        let a = check_support_growth(&traj, &bound, 1e-10).violation_count;
        let b = check_support_growth(&traj, &bound, 1e-6).violation_count;
        assert!(b <= a);
    }

    #[test]
    fn report_json_shape() {
        let mut r = CheckReport::new("demo");
        r.push(Violation { t: 0.5, node: 3, lhs: 1.0, rhs: 0.5 });
        assert_eq!(
            r.to_json(),
            r#"{"check":"demo","pass":false,"violations":[{"t":0.5,"node":3,"lhs":1.0,"rhs":0.5}],"violation_count":1}"#
        );
    }
}
