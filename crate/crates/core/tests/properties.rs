mod common;

use hitreduce::asymptotics::{cf_limit, ComparableFn, ExtendedLimit, Monomial};
use hitreduce::hitting::{analyze, hitting_probabilities};
use hitreduce::laplace::{lt_eval, lt_mean, LaplaceAtom, LaplaceExpr, Weighted};
use hitreduce::model::{parse_model, serialize_model, validate_model, SemiMarkovModel};
use hitreduce::oracle::{exact_laplace, FixedEpsModel};
use hitreduce::rational::{rat, to_f64, Rational};
use hitreduce::reduction::reduce;
use num::{One, Signed, Zero};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed),
        ..ProptestConfig::with_cases(200)
    }
}

fn small_rational(choices: &'static [(i64, i64)]) -> impl Strategy<Value = Rational> {
    proptest::sample::select(choices).prop_map(|(a, b)| rat(a, b))
}

fn monomial() -> impl Strategy<Value = Monomial> {
    (
        small_rational(&[(1, 3), (1, 2), (1, 1), (2, 1), (3, 1)]),
        small_rational(&[(-1, 1), (-1, 2), (0, 1), (1, 2), (1, 1), (3, 2), (2, 1)]),
    )
        .prop_map(|(c, b)| Monomial::power(c, b))
}

fn posy() -> impl Strategy<Value = Vec<Monomial>> {
    proptest::collection::vec(monomial(), 1..4)
}

fn positive_fn() -> impl Strategy<Value = ComparableFn> {
    (posy(), posy()).prop_map(|(n, d)| ComparableFn::ratio(n, d).expect("positive ratio"))
}

fn atom() -> impl Strategy<Value = LaplaceExpr> {
    let r = || small_rational(&[(1, 2), (1, 1), (3, 2), (2, 1)]);
    prop_oneof![
        r().prop_map(|at| LaplaceExpr::Atom { atom: LaplaceAtom::Dirac { at } }),
        r().prop_map(|mean| LaplaceExpr::Atom { atom: LaplaceAtom::Exponential { mean } }),
        r().prop_map(|width| LaplaceExpr::Atom { atom: LaplaceAtom::Uniform { width } }),
        r().prop_map(|mean| LaplaceExpr::ExponentialLimit { mean }),
    ]
}

/// Raw trees built from the variants directly, bypassing the smart constructors.
fn tree() -> impl Strategy<Value = LaplaceExpr> {
    atom().prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            (small_rational(&[(1, 3), (1, 2), (1, 1), (2, 1)]), inner.clone())
                .prop_map(|(w, c)| LaplaceExpr::Scale { w, child: Box::new(c) }),
            proptest::collection::vec((1i64..4, inner.clone()), 1..4).prop_map(|parts| {
                let total: i64 = parts.iter().map(|(w, _)| w).sum::<i64>() + 1;
                LaplaceExpr::Mixture {
                    parts: parts
                        .into_iter()
                        .map(|(w, law)| Weighted { weight: rat(w, total), law })
                        .collect(),
                }
            }),
            proptest::collection::vec(inner.clone(), 2..4)
                .prop_map(|factors| LaplaceExpr::Convolution { factors }),
            (small_rational(&[(1, 4), (1, 2), (3, 4)]), inner.clone(), inner).prop_map(
                |(p, l, e)| LaplaceExpr::GeometricCompound {
                    p,
                    loop_law: Box::new(l),
                    exit: Box::new(e),
                }
            ),
        ]
    })
}

fn model() -> impl Strategy<Value = SemiMarkovModel> {
    (any::<u64>(), any::<bool>())
        .prop_map(|(seed, interior)| common::random_model_with(seed, 4 + (seed % 3) as usize, interior))
}

const EPS: [f64; 3] = [0.5, 0.1, 0.01];

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn canonical_form_is_idempotent(f in positive_fn()) {
        let once = f.canonicalize();
        prop_assert_eq!(once.canonicalize(), once);
    }

    #[test]
    fn arithmetic_matches_evaluation(f in positive_fn(), g in positive_fn(), h in positive_fn()) {
        let fg_h = f.add(&g).unwrap().add(&h).unwrap();
        let f_gh = f.add(&g.add(&h).unwrap()).unwrap();
        let dist = f.mul(&g.add(&h).unwrap()).unwrap();
        let split = f.mul(&g).unwrap().add(&f.mul(&h).unwrap()).unwrap();
        let quotient = f.div(&g).unwrap();
        for eps in EPS {
            let (x, y, z) = (f.eval(eps).unwrap(), g.eval(eps).unwrap(), h.eval(eps).unwrap());
            prop_assert!(rel_close(fg_h.eval(eps).unwrap(), f_gh.eval(eps).unwrap(), 1e-12));
            prop_assert!(rel_close(fg_h.eval(eps).unwrap(), x + y + z, 1e-12));
            prop_assert!(rel_close(dist.eval(eps).unwrap(), split.eval(eps).unwrap(), 1e-12));
            prop_assert!(rel_close(dist.eval(eps).unwrap(), x * (y + z), 1e-12));
            prop_assert!(rel_close(g.add(&f).unwrap().eval(eps).unwrap(), x + y, 1e-12));
            prop_assert!(rel_close(quotient.eval(eps).unwrap(), x / y, 1e-12));
        }
    }

    #[test]
    fn limits_follow_the_product_rule(f in positive_fn(), g in positive_fn()) {
        let product = cf_limit(&f.mul(&g).unwrap());
        if let Some(expected) = cf_limit(&f).mul(&cf_limit(&g)) {
            prop_assert_eq!(product, expected);
        }
    }

    #[test]
    fn comparable_fn_json_round_trip(f in positive_fn()) {
        let text = serde_json::to_string(&f).unwrap();
        let back: ComparableFn = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn transforms_are_completely_monotone(x in tree()) {
        let grid: Vec<f64> = (0..=16).map(|k| k as f64 * 0.25).collect();
        let vals: Vec<f64> = grid.iter().map(|&s| lt_eval(&x, s)).collect();
        prop_assert!(vals.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        for w in vals.windows(2) {
            prop_assert!(w[1] - w[0] <= 1e-12);
        }
        for w in vals.windows(3) {
            prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12);
        }
    }

    #[test]
    fn mass_mean_and_canonical_form_agree(x in tree()) {
        let mass = to_f64(&x.mass());
        prop_assert!((lt_eval(&x, 0.0) - mass).abs() <= 1e-12);
        let h = 1e-6;
        let mean = lt_mean(&x);
        let fd = (mass - lt_eval(&x, h)) / h;
        prop_assert!((mean - fd).abs() <= 10.0 * h * (1.0 + 4.0 * mean * mean) + 1e-8, "{} vs {}", mean, fd);
        let c = x.canonical();
        prop_assert_eq!(c.canonical(), c.clone());
        prop_assert_eq!(c.mass(), x.mass());
        prop_assert_eq!(c.mean_exact(), x.mean_exact());
        for s in [0.3, 1.0, 2.5] {
            prop_assert!((lt_eval(&c, s) - lt_eval(&x, s)).abs() <= 1e-12);
        }
        let unit = LaplaceExpr::Scale { w: Rational::one(), child: Box::new(x.clone()) };
        prop_assert_eq!(lt_eval(&unit, 1.0), lt_eval(&x, 1.0));
        let text = serde_json::to_string(&x).unwrap();
        let back: LaplaceExpr = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn evaluated_rows_are_stochastic(m in model()) {
        prop_assert!(validate_model(&m).structural_pass());
        for eps in EPS {
            let fm = FixedEpsModel::from_model(&m, eps).unwrap();
            for i in fm.exterior.iter().chain(&fm.interior) {
                let row = &fm.prob[*i];
                prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
        for i in 0..m.n() {
            for j in 0..m.n() {
                let p = m.prob(i, j);
                let (at_one, at_small) = if p.is_zero() { (0.0, 0.0) } else { (p.eval_signed(1.0), p.eval_signed(0.01)) };
                prop_assert_eq!(at_one > 0.0, at_small > 0.0);
            }
        }
    }

    #[test]
    fn model_text_round_trip(m in model()) {
        let text = serialize_model(&m);
        let back = parse_model(&text).unwrap();
        prop_assert_eq!(serialize_model(&back), text);
        prop_assert_eq!(back, m);
    }

    #[test]
    fn reduction_keeps_its_invariants(m in model()) {
        let trace = reduce(&m).unwrap();
        let states: Vec<_> = trace.states().collect();
        prop_assert_eq!(trace.steps.len(), m.exterior().len());
        for st in &states {
            prop_assert!(st.row_sum_violations().is_empty());
            prop_assert!(st.limit_row_violations().is_empty());
            for q in st.qhat_limits.values() {
                prop_assert!(!q.is_negative() && *q <= Rational::one());
            }
        }
        for pair in states.windows(2) {
            for (i, next) in &pair[1].norm {
                let Some(prev) = pair[0].norm.get(i) else { continue };
                for eps in EPS {
                    prop_assert!(next.eval(eps).unwrap() >= prev.eval(eps).unwrap() * (1.0 - 1e-12));
                }
            }
        }
        for step in &trace.steps {
            if let Some((k, _)) = &step.excluded {
                for &i in &step.removed.exterior {
                    prop_assert!(!step.removed.w_limits[&(*k, i)].is_infinite());
                }
            }
        }
    }

    #[test]
    fn hitting_limits_are_consistent(m in model()) {
        let (trace, r) = analyze(&m).map_err(|e| TestCaseError::fail(format!("{e}: {}", serialize_model(&m))))?;
        let probs = hitting_probabilities(&trace);
        let mut totals = std::collections::BTreeMap::new();
        for (&(i, j), e) in &r.entries {
            prop_assert_eq!(e.psi.mass(), e.hit_prob.clone());
            if let Some(p) = probs.get(&(i, j)) {
                prop_assert_eq!(p, &e.hit_prob);
            }
            *totals.entry(i).or_insert_with(Rational::zero) += &e.hit_prob;
            if e.moment_match {
                prop_assert_eq!(
                    e.e_under_check.as_ref().and_then(ExtendedLimit::finite_value),
                    Some(e.psi.mean_exact())
                );
            }
        }
        prop_assert!(totals.values().all(Rational::is_one));
        for &i in totals.keys() {
            for s in [0.1, 1.0] {
                let total: f64 = m.domain().iter().map(|&j| lt_eval(&r.entries[&(i, j)].psi, s)).sum();
                prop_assert!(total < 1.0, "state {} at s={}: {}", i, s, total);
            }
        }
        if let Some(w) = &r.interior {
            for u in w.u_ddot.values() {
                prop_assert!(u.iter().map(|(_, x)| x).sum::<Rational>().is_one());
            }
            for u in w.u_dot.values().filter(|u| !u.is_empty()) {
                prop_assert!(u.iter().map(|(_, x)| x).sum::<Rational>().is_one());
            }
        }
    }

    #[test]
    fn exact_transforms_are_proper_and_decreasing(m in model(), eps in proptest::sample::select(vec![0.1, 0.01, 1e-3])) {
        let fm = FixedEpsModel::from_model(&m, eps).unwrap();
        let starts: Vec<usize> = fm.exterior.iter().chain(&fm.interior).copied().collect();
        let mut last: Option<hitreduce::oracle::HitMatrix> = None;
        for s in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let psi = exact_laplace(&fm, s).unwrap();
            if s == 0.0 {
                for &i in &starts {
                    let total: f64 = fm.domain.iter().map(|&j| psi[&(i, j)]).sum();
                    prop_assert!((total - 1.0).abs() <= 1e-12, "start {} total {}", i, total);
                }
            }
            if let Some(prev) = &last {
                for (k, v) in &psi {
                    prop_assert!(*v <= prev[k] + 1e-15);
                }
            }
            last = Some(psi);
        }
    }
}

#[test]
fn probability_limits_are_approached_eventually_monotonically() {
    for seed in 0..60 {
        let m = common::random_model_sized(seed);
        let trace = reduce(&m).unwrap();
        for st in trace.states() {
            for p in st.prob.iter().flatten().filter(|p| !p.is_zero()) {
                let ExtendedLimit::Finite(a) = cf_limit(p) else { continue };
                let gap = p.sub(&ComparableFn::constant(a.clone())).unwrap();
                if gap.is_zero() {
                    continue;
                }
                let lead = gap.leading().unwrap();
                assert!(lead.c.is_zero() && lead.b.is_positive(), "seed {seed}: {p} leaves {lead}");
                let a = to_f64(&a);
                let gaps: Vec<f64> = [1e-6, 1e-7, 1e-8, 1e-9]
                    .iter()
                    .map(|&e| (p.eval(e).unwrap() - a).abs())
                    .collect();
                assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-14), "seed {seed}: {p} gaps {gaps:?}");
            }
        }
    }
}
