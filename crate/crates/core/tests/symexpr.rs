use jdexpand::symexpr::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn at(e: &Expr, x: &[f64], t: f64) -> f64 {
    evaluate(e, &EvalPoint::new(x.to_vec(), t)).unwrap()
}

fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * scale.max(a.abs()).max(b.abs()).max(f64::MIN_POSITIVE)
}

/// A random DAG kept alongside a plain-f64 description of every node.
#[derive(Clone, Copy)]
enum Op {
    Const(f64),
    X(usize),
    T,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(f64, usize),
    Exp(usize),
    LogOnePlusSq(usize),
    SqrtOnePlusSq(usize),
    Cdf(usize),
    Pdf(usize),
    Erf(usize),
    Cube(usize),
}

struct Dag {
    ops: Vec<Op>,
    nodes: Vec<Expr>,
}

fn build(op: Op, nodes: &[Expr]) -> Expr {
    let one = constant(1.0);
    match op {
        Op::Const(c) => constant(c),
        Op::X(i) => state(i),
        Op::T => time(),
        Op::Add(a, b) => add(&nodes[a], &nodes[b]),
        Op::Sub(a, b) => sub(&nodes[a], &nodes[b]),
        Op::Mul(a, b) => mul(&nodes[a], &nodes[b]),
        Op::Neg(a) => neg(&nodes[a]),
        Op::Scale(c, a) => scale(c, &nodes[a]),
        Op::Exp(a) => exp(&nodes[a]),
        Op::LogOnePlusSq(a) => log(&add(&one, &powf(&nodes[a], 2.0))),
        Op::SqrtOnePlusSq(a) => sqrt(&add(&one, &mul(&nodes[a], &nodes[a]))),
        Op::Cdf(a) => normal_cdf_expr(&nodes[a]),
        Op::Pdf(a) => normal_pdf_expr(&nodes[a]),
        Op::Erf(a) => erf(&nodes[a]),
        Op::Cube(a) => powf(&nodes[a], 3.0),
    }
}

fn random_dag(rng: &mut ChaCha8Rng, size: usize) -> Dag {
    let mut ops = vec![Op::X(0), Op::X(1), Op::T];
    let mut nodes: Vec<Expr> = ops.iter().map(|&o| build(o, &[])).collect();
    while ops.len() < size {
        let n = ops.len();
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let op = match rng.gen_range(0..15) {
            0 => Op::Const(*[0.0, 1.0, -1.0, rng.gen_range(-2.0..2.0)].get(rng.gen_range(0..4)).unwrap()),
            1 | 2 => Op::Add(a, b),
            3 => Op::Sub(a, b),
            4 | 5 => Op::Mul(a, b),
            6 => Op::Neg(a),
            7 => Op::Scale(*[0.0, 1.0, -1.0, 0.5].get(rng.gen_range(0..4)).unwrap(), a),
            8 => Op::Exp(a),
            9 => Op::LogOnePlusSq(a),
            10 => Op::SqrtOnePlusSq(a),
            11 => Op::Cdf(a),
            12 => Op::Pdf(a),
            13 => Op::Erf(a),
            _ => Op::Cube(a),
        };
        nodes.push(build(op, &nodes));
        ops.push(op);
    }
    Dag { ops, nodes }
}

/// Direct evaluation returning each node's value and a bound on the
/// magnitude of rounding it can accumulate (sum of absolute contributions).
fn oracle(ops: &[Op], x: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let mut v: Vec<f64> = Vec::with_capacity(ops.len());
    let mut m: Vec<f64> = Vec::with_capacity(ops.len());
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    for &op in ops {
        let (val, mag) = match op {
            Op::Const(c) => (c, c.abs()),
            Op::X(i) => (x[i], x[i].abs()),
            Op::T => (t, t.abs()),
            Op::Add(a, b) => (v[a] + v[b], m[a] + m[b]),
            Op::Sub(a, b) => (v[a] - v[b], m[a] + m[b]),
            Op::Mul(a, b) => (v[a] * v[b], m[a] * m[b]),
            Op::Neg(a) => (-v[a], m[a]),
            Op::Scale(c, a) => (c * v[a], c.abs() * m[a]),
            Op::Exp(a) => {
                let e = v[a].exp();
                (e, e + e * m[a])
            }
            Op::LogOnePlusSq(a) => {
                let z = v[a];
                ((1.0 + z * z).ln(), (1.0 + z * z).ln() + 2.0 * z.abs() / (1.0 + z * z) * m[a])
            }
            Op::SqrtOnePlusSq(a) => {
                let z = v[a];
                let s = (1.0 + z * z).sqrt();
                (s, s + z.abs() / s * m[a])
            }
            Op::Cdf(a) => {
                let c = 0.5 * libm::erfc(-v[a] / std::f64::consts::SQRT_2);
                (c, c + pdf(v[a]) * m[a])
            }
            Op::Pdf(a) => {
                let p = pdf(v[a]);
                (p, p + p * v[a].abs() * m[a])
            }
            Op::Erf(a) => {
                let e = libm::erf(v[a]);
                (e, e.abs() + 2.0 * pdf(v[a] * std::f64::consts::SQRT_2) * std::f64::consts::SQRT_2 * m[a])
            }
            Op::Cube(a) => (v[a].powi(3), m[a].powi(3) + 3.0 * v[a] * v[a] * m[a]),
        };
        v.push(val);
        m.push(mag);
    }
    (v, m)
}

#[test]
fn random_dags_simplify_without_changing_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0usize;
    for _ in 0..1000 {
        let size = rng.gen_range(6..40);
        let dag = random_dag(&mut rng, size);
        let root = dag.nodes.last().unwrap();
        let simple = simplify(root);
        assert_eq!(simplify(&simple), simple);
        for _ in 0..10 {
            let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
            let t = rng.gen_range(0.0..1.0);
            let (vals, mags) = oracle(&dag.ops, &x, t);
            let (want, scale) = (*vals.last().unwrap(), *mags.last().unwrap());
            if !want.is_finite() || !scale.is_finite() {
                continue;
            }
            let got = evaluate(root, &EvalPoint::new(x.to_vec(), t)).unwrap();
            let got_simple = evaluate(&simple, &EvalPoint::new(x.to_vec(), t)).unwrap();
            assert!(close(got, want, 1e-12, scale), "{got} vs {want}: {}", to_sexpr(root));
            assert!(close(got_simple, got, 1e-12, scale), "{got_simple} vs {got}");
            checked += 1;
        }
    }
    assert!(checked > 9000, "{checked}");
}

#[test]
fn evaluation_visits_each_node_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let dag = random_dag(&mut rng, 60);
        let root = dag.nodes.last().unwrap();
        if let Ok((_, stats)) = evaluate_with_stats(root, &EvalPoint::new(vec![0.3, -0.2], 0.5)) {
            assert!(stats.node_evals <= root.node_count());
        }
    }
}

#[test]
fn identities_and_folding() {
    assert_eq!(simplify(&add(&mul(&state(0), &one()), &zero())), state(0));
    assert_eq!(simplify(&mul(&constant(2.0), &constant(3.0))), constant(6.0));
    assert_eq!(simplify(&neg(&neg(&state(1)))), state(1));
    assert_eq!(simplify(&mul(&exp(&state(0)), &zero())), zero());
    assert_eq!(simplify(&powf(&state(0), 1.0)), state(0));
    assert_eq!(simplify(&powf(&state(0), 0.0)), one());
}

#[test]
fn shift_examples() {
    let sq = powf(&state(0), 2.0);
    assert_eq!(at(&shift(&sq, &[1.0]).unwrap(), &[2.0], 0.0), 9.0);
    assert_eq!(simplify(&shift(&sq, &[0.0]).unwrap()), simplify(&sq));
    let e = shift(&exp(&state(0)), &[1.0]).unwrap();
    assert!((at(&e, &[0.0], 0.0) - std::f64::consts::E).abs() < 1e-15);
    assert!(shift(&powf(&state(1), 2.0), &[1.0]).is_err());
}

#[test]
fn gaussian_builtins() {
    assert_eq!(at(&normal_cdf_expr(&zero()), &[], 0.0), 0.5);
    let want = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    assert!((at(&normal_pdf_expr(&one()), &[], 0.0) - want).abs() < 1e-16);
    assert!((at(&normal_pdf_expr(&one()), &[], 0.0) - 0.241_970_724_519_143_37).abs() < 1e-16);
    let z = state(0);
    assert_eq!(differentiate(&normal_cdf_expr(&z), Var::State(0)).unwrap(), normal_pdf_expr(&z));
    assert!(differentiate(&abs(&z), Var::State(0)).is_err());
}

/// Sum of `c x0^a x1^b exp(d x0 + g x1)` terms.
fn poly_exp() -> impl Strategy<Value = Expr> {
    prop::collection::vec((-2.0..2.0f64, 0u32..4, 0u32..3, -1.0..1.0f64, -0.5..0.5f64), 1..5).prop_map(|terms| {
        add_all(terms.into_iter().map(|(c, a, b, d, g)| {
            mul_all([
                constant(c),
                powf(&state(0), a as f64),
                powf(&state(1), b as f64),
                exp(&add(&scale(d, &state(0)), &scale(g, &state(1)))),
            ])
        }))
    })
}

/// Smooth expression in `x0, x1, t` built from every differentiable builtin.
fn smooth() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-2.0..2.0f64).prop_map(constant),
        Just(state(0)),
        Just(state(1)),
        Just(time()),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| add(&a, &b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| mul(&a, &b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| sub(&a, &b)),
            inner.clone().prop_map(|a| exp(&scale(0.3, &a))),
            inner.clone().prop_map(|a| normal_cdf_expr(&a)),
            inner.clone().prop_map(|a| normal_pdf_expr(&a)),
            inner.clone().prop_map(|a| erf(&a)),
            inner.clone().prop_map(|a| sqrt(&add(&constant(1.0), &powf(&a, 2.0)))),
            inner.clone().prop_map(|a| log(&add(&constant(2.0), &powf(&a, 2.0)))),
            inner.prop_map(|a| div(&a, &add(&constant(1.5), &normal_pdf_expr(&a)))),
        ]
    })
}

fn point() -> impl Strategy<Value = (f64, f64, f64)> {
    (-1.0..1.0f64, -1.0..1.0f64, 0.05..1.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn derivative_matches_central_difference(e in poly_exp(), (x0, x1, _t) in point()) {
        let d = differentiate(&e, Var::State(0)).unwrap();
        let h = 1e-5;
        let fd = (at(&e, &[x0 + h, x1], 0.0) - at(&e, &[x0 - h, x1], 0.0)) / (2.0 * h);
        let exact = at(&d, &[x0, x1], 0.0);
        let scale = at(&e, &[x0, x1], 0.0).abs().max(1.0);
        prop_assert!(close(exact, fd, 1e-6, scale), "{exact} vs {fd}");
    }

    #[test]
    fn differentiation_is_linear(
        e1 in smooth(),
        e2 in smooth(),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        (x0, x1, t) in point(),
        v in prop_oneof![Just(Var::State(0)), Just(Var::State(1)), Just(Var::Time)],
    ) {
        let lhs = differentiate(&add(&scale(a, &e1), &scale(b, &e2)), v).unwrap();
        let d1 = at(&differentiate(&e1, v).unwrap(), &[x0, x1], t);
        let d2 = at(&differentiate(&e2, v).unwrap(), &[x0, x1], t);
        let rhs = a * d1 + b * d2;
        let scale = (a * d1).abs() + (b * d2).abs();
        prop_assert!(close(at(&lhs, &[x0, x1], t), rhs, 1e-12, scale));
    }

    #[test]
    fn mixed_partials_commute(e in smooth(), (x0, x1, t) in point()) {
        let vars = [Var::State(0), Var::State(1), Var::Time];
        for &u in &vars {
            for &w in &vars {
                let uw = differentiate(&differentiate(&e, u).unwrap(), w).unwrap();
                let wu = differentiate(&differentiate(&e, w).unwrap(), u).unwrap();
                let (p, q) = (at(&uw, &[x0, x1], t), at(&wu, &[x0, x1], t));
                prop_assert!(close(p, q, 1e-12, 1e-3), "{u} {w}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn shifts_compose(e in smooth(), a in prop::array::uniform2(-1.0..1.0f64), b in prop::array::uniform2(-1.0..1.0f64), (x0, x1, t) in point()) {
        let twice = shift(&shift(&e, &a).unwrap(), &b).unwrap();
        let once = shift(&e, &[a[0] + b[0], a[1] + b[1]]).unwrap();
        let (p, q) = (at(&twice, &[x0, x1], t), at(&once, &[x0, x1], t));
        prop_assert!(close(p, q, 1e-12, 1.0), "{p} vs {q}");
        let direct = at(&e, &[x0 + a[0] + b[0], x1 + a[1] + b[1]], t);
        prop_assert!(close(p, direct, 1e-12, 1.0));
    }

    #[test]
    fn text_forms_round_trip(e in smooth()) {
        prop_assert_eq!(&parse(&to_sexpr(&e)).unwrap(), &e);
        prop_assert_eq!(&parse(&to_dag_string(&e)).unwrap(), &e);
    }
}
