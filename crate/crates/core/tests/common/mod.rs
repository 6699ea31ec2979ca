use hris_core::socp::{ConeKind, ConicProgram, LinExpr};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A random SOCP whose optimum is known from a planted primal point and a
/// complementary dual certificate.
pub fn planted_program(seed: u64) -> (ConicProgram, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..10);
    let blocks = rng.random_range(3..8);
    let x_star = DVector::from_fn(n, |_, _| normal(&mut rng));
    let mut program = ConicProgram::with_vars(n);
    let mut objective = DVector::zeros(n);

    for b in 0..blocks {
        let soc = rng.random_bool(0.6);
        let d = if soc { rng.random_range(2..6) } else { rng.random_range(1..4) };
        let m = DMatrix::from_fn(d, n, |_, _| normal(&mut rng));
        let (s, z) = if soc {
            match rng.random_range(0..3) {
                0 => {
                    let u = DVector::from_fn(d - 1, |_, _| normal(&mut rng)).normalize();
                    let (a, c) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
                    let mut s = DVector::zeros(d);
                    let mut z = DVector::zeros(d);
                    s[0] = a;
                    z[0] = c;
                    for i in 1..d {
                        s[i] = a * u[i - 1];
                        z[i] = -c * u[i - 1];
                    }
                    (s, z)
                }
                1 => {
                    let mut s = DVector::from_fn(d, |_, _| normal(&mut rng) * 0.3);
                    s[0] = s.rows(1, d - 1).norm() + 1.0;
                    (s, DVector::zeros(d))
                }
                _ => {
                    let mut z = DVector::from_fn(d, |_, _| normal(&mut rng) * 0.3);
                    z[0] = z.rows(1, d - 1).norm() + 1.0;
                    (DVector::zeros(d), z)
                }
            }
        } else {
            let mut s = DVector::zeros(d);
            let mut z = DVector::zeros(d);
            for i in 0..d {
                if rng.random_bool(0.5) {
                    s[i] = rng.random_range(0.2..2.0);
                } else {
                    z[i] = rng.random_range(0.2..2.0);
                }
            }
            (s, z)
        };
        let q = &s - &m * &x_star;
        objective -= m.transpose() * &z;
        let rows: Vec<LinExpr> = (0..d)
            .map(|i| {
                let mut e = LinExpr::constant(q[i]);
                for j in 0..n {
                    e.terms.push((j, m[(i, j)]));
                }
                e
            })
            .collect();
        let kind = if soc { ConeKind::SecondOrder } else { ConeKind::NonNegative };
        program.add(kind, format!("b{b}"), &rows).unwrap();
    }
    let mut obj = LinExpr::default();
    for j in 0..n {
        obj.terms.push((j, objective[j]));
    }
    program.set_objective(&obj);
    let value = objective.dot(&x_star);
    (program, value)
}
