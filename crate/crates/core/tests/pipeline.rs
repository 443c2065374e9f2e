mod common;

use semmap::evaluation::evaluate;
use semmap::exploration::{coverage, Termination};
use semmap::semantic::{update_pass, write_change_log};

#[test]
fn golden_scenarios_explore_to_exhaustion() {
    for name in ["room", "updates", "corridor-loop"] {
        let s = common::load(name);
        let p = common::run_pipeline(&s);
        assert_eq!(p.explored.termination, Termination::FrontiersExhausted, "{name}");
        let cov = coverage(&p.occupancy, &s.world, s.world_spec.start.position());
        assert!(cov >= 0.95, "{name}: coverage {cov}");
        assert_eq!(p.tour.order.first(), p.tour.order.last(), "{name}");
    }
}

#[test]
fn pipeline_is_deterministic() {
    let s = common::load("updates");
    let a = common::run_pipeline(&s);
    let b = common::run_pipeline(&s);
    assert_eq!(a.explored.trajectory.to_text(), b.explored.trajectory.to_text());
    assert_eq!(a.tour.to_text(), b.tour.to_text());
    assert_eq!(a.built.map.to_json(), b.built.map.to_json());
    assert_eq!(write_change_log(&a.built.changes), write_change_log(&b.built.changes));

    let c = &s.config;
    let world = s.world_for_phase("update1").unwrap();
    let ua = update_pass(&world, a.built.map.clone(), &a.tour, &c.semantic, c.seed, "update1").unwrap();
    let ub = update_pass(&world, b.built.map.clone(), &b.tour, &c.semantic, c.seed, "update1").unwrap();
    assert_eq!(write_change_log(&ua.changes), write_change_log(&ub.changes));
    let ra = evaluate(&ua.map, &world, None).unwrap();
    let rb = evaluate(&ub.map, &world, None).unwrap();
    assert_eq!(ra.to_json(), rb.to_json());
}

#[test]
fn perfect_construction_scores_full_marks() {
    let s = common::load("room");
    let p = common::run_pipeline(&s);
    let report = evaluate(&p.built.map, &s.world, None).unwrap();
    for (category, row) in &report.categories {
        assert_eq!((row.fp, row.fn_), (0, 0), "{category}");
        assert_eq!(row.ap, 1.0, "{category}");
    }
    assert_eq!(report.mean_ap, 1.0);
}

#[test]
fn realistic_detector_false_positives_lower_precision() {
    let s = common::load("corridor-loop");
    let p = common::run_pipeline(&s);
    let report = evaluate(&p.built.map, &s.world, None).unwrap();
    let table = report.to_table();
    assert!(
        report.categories.values().any(|row| row.fp > 0 && row.precision < 1.0),
        "{table}"
    );
    for (category, row) in &report.categories {
        assert_eq!(row.tp + row.fp, row.mapped, "{category}");
        assert_eq!(row.tp + row.fn_, row.gt, "{category}");
        assert!((0.0..=1.0).contains(&row.ap), "{category}");
    }
    assert!(report.mean_ap > 0.0 && report.mean_ap <= 1.0, "{table}");
}
