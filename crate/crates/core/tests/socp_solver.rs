mod common;

use common::planted_program;
use hris_core::socp::{solve, ConeKind, ConicProgram, LinExpr, SolveStatus, SolverSettings};

#[test]
fn lp_special_case() {
    let mut p = ConicProgram::new(vec!["t".into()]);
    p.set_objective(&LinExpr::var(0, 1.0));
    p.add(ConeKind::NonNegative, "le3", &[LinExpr::var(0, -1.0).plus_constant(3.0)]).unwrap();
    p.add(ConeKind::NonNegative, "le5", &[LinExpr::var(0, -1.0).plus_constant(5.0)]).unwrap();
    let r = solve(&p, &SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.primal[0] - 3.0).abs() < 1e-8, "{}", r.primal[0]);
}

#[test]
fn projection_onto_unit_ball() {
    // max -s  s.t. ||x - c|| <= s, ||x|| <= 1, c = (2, 0) -> s* = 1, x* = (1, 0)
    for c in [[2.0, 0.0], [0.0, -2.0], [2f64.sqrt(), 2f64.sqrt()]] {
        let mut p = ConicProgram::new(vec!["s".into(), "x0".into(), "x1".into()]);
        p.set_objective(&LinExpr::var(0, -1.0));
        p.add(
            ConeKind::SecondOrder,
            "dist",
            &[
                LinExpr::var(0, 1.0),
                LinExpr::var(1, 1.0).plus_constant(-c[0]),
                LinExpr::var(2, 1.0).plus_constant(-c[1]),
            ],
        )
        .unwrap();
        p.add(
            ConeKind::SecondOrder,
            "ball",
            &[LinExpr::constant(1.0), LinExpr::var(1, 1.0), LinExpr::var(2, 1.0)],
        )
        .unwrap();
        let r = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.primal[0] - 1.0).abs() < 1e-8);
        assert!((r.primal[1] - c[0] / 2.0).abs() < 1e-8);
        assert!((r.primal[2] - c[1] / 2.0).abs() < 1e-8);
    }
}

#[test]
fn rotated_cone_bounds_a_square() {
    // max y s.t. y^2 <= 2 * u * v with u = 2, v = 1 -> y = 2
    let mut p = ConicProgram::new(vec!["y".into()]);
    p.set_objective(&LinExpr::var(0, 1.0));
    p.add(
        ConeKind::RotatedSecondOrder,
        "sq",
        &[LinExpr::constant(2.0), LinExpr::constant(1.0), LinExpr::var(0, 1.0)],
    )
    .unwrap();
    let r = solve(&p, &SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.primal[0] - 2.0).abs() < 1e-7);
}

#[test]
fn planted_optima_are_recovered() {
    for seed in 0..50 {
        let (p, value) = planted_program(seed);
        let r = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal, "seed {seed}: {:?}", r.residuals);
        assert!(
            (r.objective_value - value).abs() <= 1e-6 * value.abs().max(1.0),
            "seed {seed}: {} vs {value}",
            r.objective_value
        );
        assert!(p.max_violation(&r.primal) <= 1e-6, "seed {seed}");
    }
}

#[test]
fn infeasible_programs_are_flagged() {
    let mut p = ConicProgram::with_vars(1);
    p.add(ConeKind::NonNegative, "le", &[LinExpr::var(0, -1.0).plus_constant(-1.0)]).unwrap();
    p.add(ConeKind::NonNegative, "ge", &[LinExpr::var(0, 1.0).plus_constant(-1.0)]).unwrap();
    assert_eq!(solve(&p, &SolverSettings::default()).unwrap().status, SolveStatus::Infeasible);

    // ||x|| <= 1 and x0 >= 2
    let mut p = ConicProgram::with_vars(2);
    p.set_objective(&LinExpr::var(1, 1.0));
    p.add(
        ConeKind::SecondOrder,
        "ball",
        &[LinExpr::constant(1.0), LinExpr::var(0, 1.0), LinExpr::var(1, 1.0)],
    )
    .unwrap();
    p.add(ConeKind::NonNegative, "far", &[LinExpr::var(0, 1.0).plus_constant(-2.0)]).unwrap();
    assert_eq!(solve(&p, &SolverSettings::default()).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn unbounded_program_is_flagged() {
    let mut p = ConicProgram::with_vars(2);
    p.set_objective(&LinExpr::var(0, 1.0));
    p.add(ConeKind::NonNegative, "pos", &[LinExpr::var(0, 1.0), LinExpr::var(1, 1.0)]).unwrap();
    p.add(ConeKind::NonNegative, "cap", &[LinExpr::var(1, -1.0).plus_constant(1.0)]).unwrap();
    assert_eq!(solve(&p, &SolverSettings::default()).unwrap().status, SolveStatus::Unbounded);
}

#[test]
fn iteration_limit_is_reported() {
    let (p, _) = planted_program(3);
    let settings = SolverSettings {
        max_iterations: 2,
        ..SolverSettings::default()
    };
    assert_eq!(solve(&p, &settings).unwrap().status, SolveStatus::IterationLimit);
}

#[test]
fn solve_is_deterministic() {
    let (p, _) = planted_program(11);
    let a = solve(&p, &SolverSettings::default()).unwrap();
    let b = solve(&p, &SolverSettings::default()).unwrap();
    assert_eq!(a, b);
}
