//! Seeded generator of random valid models shared by the integration suites.
#![allow(dead_code)]

use hitreduce::asymptotics::{ComparableFn, Family, Monomial};
use hitreduce::model::{ModelBuilder, SamplerKind, SemiMarkovModel, TransitionTimeSpec};
use hitreduce::rational::{rat, Rational};
use num::Zero;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORDERS: [(i64, i64); 4] = [(0, 1), (1, 2), (1, 1), (2, 1)];
const TIME_ORDERS: [(i64, i64); 3] = [(0, 1), (1, 2), (1, 1)];
const WEIGHTS: [(i64, i64); 4] = [(1, 8), (1, 6), (1, 4), (1, 3)];
const FACTORS: [(i64, i64); 3] = [(1, 2), (1, 1), (2, 1)];
const KINDS: [SamplerKind; 3] = [SamplerKind::Dirac, SamplerKind::Exponential, SamplerKind::Uniform];

fn pick(rng: &mut ChaCha8Rng, xs: &[(i64, i64)]) -> Rational {
    let &(a, b) = xs.choose(rng).expect("nonempty");
    rat(a, b)
}

/// A model with `n` states, the last one or two forming the domain.
///
/// Every exterior state has an edge to a later state, so the domain is
/// reachable. That edge is weighted first and never runs out of budget. One entry per row absorbs the remaining mass, which keeps the
/// row sum identically 1 and that entry at least 1/4.
pub fn random_model(seed: u64, n: usize) -> SemiMarkovModel {
    random_model_with(seed, n, false)
}

/// As [`random_model`], optionally with explicit rows for the domain states.
pub fn random_model_with(seed: u64, n: usize, interior: bool) -> SemiMarkovModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain_size = if n > 3 && rng.random_bool(0.3) { 2 } else { 1 };
    let exterior = n - domain_size;
    let labels: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut b = ModelBuilder::new(labels.clone(), Family::H1)
        .domain(labels[exterior..].iter().cloned());
    for i in 0..exterior {
        let time_order = pick(&mut rng, &TIME_ORDERS);
        let forward = rng.random_range(i + 1..n);
        b = row(&mut rng, b, &labels, i, forward, time_order);
    }
    if interior {
        for r in exterior..n {
            let anchor = rng.random_range(0..n);
            b = row(&mut rng, b, &labels, r, anchor, Rational::zero());
        }
    }
    b.build().expect("random model is well formed")
}

fn row(
    rng: &mut ChaCha8Rng,
    mut b: ModelBuilder,
    labels: &[String],
    i: usize,
    forced: usize,
    time_order: Rational,
) -> ModelBuilder {
    let n = labels.len();
    b = b.normalization(labels[i].clone(), ComparableFn::power(-time_order.clone()));
    let mut targets: Vec<usize> = (0..n).filter(|&j| j != forced && rng.random_bool(0.4)).collect();
    targets.push(forced);
    targets.sort_unstable();
    targets.dedup();
    let balance = if rng.random_bool(0.5) && !targets.contains(&i) {
        i
    } else {
        *targets.choose(rng).expect("nonempty")
    };
    let mut rest = ComparableFn::one();
    let mut entries = Vec::new();
    let mut order: Vec<usize> = targets.iter().copied().filter(|&j| j != balance).collect();
    order.shuffle(rng);
    if let Some(pos) = order.iter().position(|&j| j == forced) {
        order.swap(0, pos);
    }
    let budget = rat(3, 4);
    let mut used = Rational::zero();
    for j in order {
        let mut w = pick(rng, &WEIGHTS);
        if &used + &w > budget {
            w = &budget - &used;
        }
        if w.is_zero() {
            continue;
        }
        used += &w;
        let p = ComparableFn::monomial(Monomial::power(w, pick(rng, &ORDERS)));
        rest = rest.sub(&p).expect("subtraction");
        entries.push((j, p));
    }
    entries.push((balance, rest));
    for (j, p) in entries {
        let kind = *KINDS.choose(rng).expect("nonempty");
        let factor = pick(rng, &FACTORS);
        let scale = ComparableFn::monomial(Monomial::power(factor.clone(), -time_order.clone()));
        let limit_atom = kind.limit_atom(factor);
        let time = TransitionTimeSpec {
            sampler: kind,
            scale,
            limit_mean: limit_atom.mean(),
            limit_atom,
        };
        b = b.transition(labels[i].clone(), labels[j].clone(), p, time);
    }
    b
}

/// Sizes 4 to 6 cycling with the seed.
pub fn random_model_sized(seed: u64) -> SemiMarkovModel {
    random_model(seed, 4 + (seed % 3) as usize)
}
