use nlstefan::asymptotics::{project_general, LimitConfig, LimitRoute};
use nlstefan::grid::l1_distance;
use nlstefan::phaseloss::{asymptotic_after_loss, criterion, PhaseLossConfig};
use nlstefan::{Field, Grid, KernelSpec, SimConfig};

fn scenario(depth: f64) -> Field {
    let g = Grid::centered_line(40.0, 0.05).unwrap();
    Field::from_fn(&g, |x| {
        let x = x[0];
        if x.abs() <= 4.0 + 1e-9 {
            5.0
        } else if (6.0 - 1e-9..=6.5 + 1e-9).contains(&x) {
            -depth
        } else {
            0.0
        }
    })
    .unwrap()
}

fn sim() -> SimConfig {
    SimConfig::new(KernelSpec::tent(8.0), 0.1, 0.5)
}

#[test]
fn shallow_dip_is_lost_within_the_bound() {
    let f = scenario(1.2);
    let report = criterion(&f, &PhaseLossConfig::new(sim())).unwrap();
    println!("{}", report.to_json());
    assert!(report.criterion_holds, "{report:?}");
    assert!(report.r_certified);
    assert!(report.alpha > 0.9 && report.eta_bar > 0.0);
    let t1 = report.t1.unwrap();
    let measured = report.measured_loss_time.unwrap();
    assert!(measured <= t1 + 0.1, "{measured} > {t1}");
    assert_eq!(report.bound_respected, Some(true));
}

#[test]
fn deep_dip_fails_the_criterion() {
    let base = criterion(&scenario(1.2), &PhaseLossConfig::new(sim())).unwrap();
    let depth = 2.0 + base.kappa.unwrap();
    let mut cfg = PhaseLossConfig::new(sim());
    cfg.verify = false;
    let report = criterion(&scenario(depth), &cfg).unwrap();
    assert!(!report.criterion_holds, "{report:?}");
}

#[test]
fn restart_after_loss_matches_the_two_phase_limit() {
    let f = scenario(1.2);
    let cfg = LimitConfig::new(sim(), 4000.0);
    let after = asymptotic_after_loss(&f, &cfg).unwrap();
    assert!((after.t_loss - 0.2).abs() < 1e-9, "{}", after.t_loss);
    let general = project_general(&f, &cfg).unwrap();
    assert!(matches!(general.route, LimitRoute::PhaseLoss { .. }), "{:?}", general.route);
    let d = l1_distance(&after.limit, &general.field).unwrap();
    assert!(d <= 1e-8, "{d}");
}
