//! Limits of hitting-time laws, hitting probabilities and expectations.
//!
//! Exterior states are processed backward along the reduction order, so every
//! state only refers to states excluded after it. Domain states with explicit
//! rows are handled afterwards by one first-step decomposition.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{AsymError, ComparableFn, ExtendedLimit};
use crate::laplace::LaplaceExpr;
use crate::model::SemiMarkovModel;
use crate::rational::{format_rational, serde_str, Rational};
use crate::reduction::{reduce, ReductionError, ReductionTrace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HittingError {
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Asymptotics(#[from] AsymError),
    #[error("ratio {what} has an infinite limit")]
    InfiniteWeight { what: String },
    #[error("domain rows are all synthesized; the model has no interior data")]
    MissingInteriorData,
}

/// Limits for one initial state and one entry state of the domain.
#[derive(Debug, Clone, Serialize)]
pub struct HittingEntry {
    pub from: String,
    pub to: String,
    /// Limiting (defective) transform of the hitting time, with mass `hit_prob`.
    pub psi: LaplaceExpr,
    /// `psi` conditioned on the entry state.
    pub conditional: LaplaceExpr,
    /// Normalization under which the hitting-time law converges.
    pub check_v: ComparableFn,
    #[serde(with = "serde_str")]
    pub hit_prob: Rational,
    /// Normalization under which the expectation converges.
    pub bar_v: ComparableFn,
    #[serde(with = "serde_str")]
    pub bar_e: Rational,
    /// Limit of the expectation under `check_v`; `None` when it is `0 * inf`.
    pub e_under_check: Option<ExtendedLimit>,
    pub moment_match: bool,
    /// 1-based position in the reduction order whose normalization is used.
    pub switch_index: Option<usize>,
}

impl HittingEntry {
    pub fn to_json(&self) -> Value {
        json!({
            "from": self.from,
            "to": self.to,
            "psi": self.psi,
            "psi_closed_form": self.psi.closed_form(),
            "conditional_closed_form": self.conditional.closed_form(),
            "check_v": self.check_v.leading().ok(),
            "bar_v": self.bar_v.leading().ok(),
            "hit_prob": format_rational(&self.hit_prob),
            "bar_E": format_rational(&self.bar_e),
            "E_under_check_v": self.e_under_check.as_ref().map(ToString::to_string),
            "moment_match": self.moment_match,
            "switch_index": self.switch_index,
        })
    }
}

/// Law-side limits for exterior states.
#[derive(Debug, Clone)]
pub struct DistributionSummary {
    pub psi: BTreeMap<(usize, usize), LaplaceExpr>,
    pub check_v: BTreeMap<usize, ComparableFn>,
    pub switch_index: BTreeMap<usize, usize>,
}

/// Expectation-side limits for exterior states.
#[derive(Debug, Clone)]
pub struct ExpectationSummary {
    pub bar_v: BTreeMap<usize, ComparableFn>,
    pub bar_e: BTreeMap<(usize, usize), Rational>,
    /// `(i, l)`: limiting share of `bar_v[i]` contributed through `l`; `(i, i)` is the own share.
    pub u_bar: BTreeMap<(usize, usize), Rational>,
}

/// Mixing weights for an initial state in the domain.
#[derive(Debug, Clone, Default)]
pub struct InteriorWeights {
    /// `(r, j) -> [(l, weight)]`, with `l == r` for the direct branch.
    pub u_dot: BTreeMap<(usize, usize), Vec<(usize, Rational)>>,
    /// `r -> [(l, weight)]`, with `l == r` for the own share.
    pub u_ddot: BTreeMap<usize, Vec<(usize, Rational)>>,
    pub dot_v: BTreeMap<(usize, usize), ComparableFn>,
    pub ddot_v: BTreeMap<usize, ComparableFn>,
}

#[derive(Debug, Clone)]
pub struct HittingResult {
    pub labels: Vec<String>,
    pub domain: Vec<usize>,
    pub entries: BTreeMap<(usize, usize), HittingEntry>,
    pub u_bar: BTreeMap<(usize, usize), Rational>,
    pub interior: Option<InteriorWeights>,
}

impl HittingResult {
    pub fn entry(&self, from: &str, to: &str) -> Option<&HittingEntry> {
        let i = self.labels.iter().position(|s| s == from)?;
        let j = self.labels.iter().position(|s| s == to)?;
        self.entries.get(&(i, j))
    }

    pub fn to_json(&self) -> Value {
        let u_bar: Vec<Value> = self
            .u_bar
            .iter()
            .map(|(&(i, l), w)| {
                json!({"from": self.labels[i], "via": self.labels[l], "weight": format_rational(w)})
            })
            .collect();
        json!({
            "entries": self.entries.values().map(HittingEntry::to_json).collect::<Vec<_>>(),
            "u_bar": u_bar,
        })
    }
}

fn finite(l: ExtendedLimit, what: impl FnOnce() -> String) -> Result<Rational, HittingError> {
    l.finite_value()
        .ok_or_else(|| HittingError::InfiniteWeight { what: what() })
}

/// `lim num / den` from the two leading monomials.
fn ratio_limit(num: &ComparableFn, den: &ComparableFn) -> Result<ExtendedLimit, HittingError> {
    if num.is_zero() {
        return Ok(ExtendedLimit::Zero);
    }
    Ok(ComparableFn::monomial(num.leading()?).div(&ComparableFn::monomial(den.leading()?))?.limit())
}

/// Backward recurrence for the limiting transforms and their normalizations.
pub fn hitting_summary(trace: &ReductionTrace) -> Result<DistributionSummary, HittingError> {
    let order = trace.order();
    let mut out = DistributionSummary {
        psi: BTreeMap::new(),
        check_v: BTreeMap::new(),
        switch_index: BTreeMap::new(),
    };
    for idx in (0..order.len()).rev() {
        let st = &trace.steps[idx].removed;
        let k = order[idx];
        let label = |x: usize| trace.labels[x].clone();
        let later: Vec<(usize, usize)> = (idx + 1..order.len())
            .map(|pos| (pos, order[pos]))
            .filter(|&(_, l)| st.p_limit[k][l].is_positive())
            .collect();
        let own = &st.norm[&k];
        let mut best = (own.clone(), idx + 1);
        for &(pos, l) in &later {
            let cand = &out.check_v[&l];
            if ratio_limit(cand, &best.0)? != ExtendedLimit::Zero {
                best = (cand.clone(), pos + 1);
            }
        }
        let (check, switch) = best;
        let own_ratio = finite(ratio_limit(own, &check)?, || {
            format!("normalization of {} over its hitting normalization", label(k))
        })?;
        let mut ratios = BTreeMap::new();
        for &(_, l) in &later {
            let r = finite(ratio_limit(&out.check_v[&l], &check)?, || {
                format!("hitting normalization of {} over {}", label(l), label(k))
            })?;
            ratios.insert(l, r);
        }
        for &j in &trace.domain {
            let mut parts = Vec::new();
            if let Some(phi) = st.phi_limit.get(&(k, j)) {
                parts.push((st.p_limit[k][j].clone(), LaplaceExpr::scale(&own_ratio, phi)));
            }
            for &(_, l) in &later {
                let first = LaplaceExpr::scale(&own_ratio, &st.phi_limit[&(k, l)]);
                let rest = LaplaceExpr::scale(&ratios[&l], &out.psi[&(l, j)]);
                parts.push((
                    st.p_limit[k][l].clone(),
                    LaplaceExpr::convolution(vec![first, rest]),
                ));
            }
            out.psi.insert((k, j), LaplaceExpr::mixture(parts));
        }
        out.check_v.insert(k, check);
        out.switch_index.insert(k, switch);
    }
    Ok(out)
}

/// Limiting hitting probabilities by the backward recurrence, exactly.
pub fn hitting_probabilities(trace: &ReductionTrace) -> BTreeMap<(usize, usize), Rational> {
    let order = trace.order();
    let mut probs: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for idx in (0..order.len()).rev() {
        let st = &trace.steps[idx].removed;
        let k = order[idx];
        for &j in &trace.domain {
            let mut total = st.p_limit[k][j].clone();
            for &l in &order[idx + 1..] {
                let p = &st.p_limit[k][l];
                if p.is_positive() {
                    total += p * &probs[&(l, j)];
                }
            }
            probs.insert((k, j), total);
        }
    }
    probs
}

/// Backward recurrence for the expectation normalizations and limits.
pub fn expectation_summary(
    trace: &ReductionTrace,
    probs: &BTreeMap<(usize, usize), Rational>,
) -> Result<ExpectationSummary, HittingError> {
    let order = trace.order();
    let mut out = ExpectationSummary {
        bar_v: BTreeMap::new(),
        bar_e: BTreeMap::new(),
        u_bar: BTreeMap::new(),
    };
    for idx in (0..order.len()).rev() {
        let st = &trace.steps[idx].removed;
        let k = order[idx];
        let later: Vec<usize> = order[idx + 1..]
            .iter()
            .copied()
            .filter(|&l| !st.prob[k][l].is_zero())
            .collect();
        let own = &st.norm[&k];
        let mut bar = own.clone();
        let mut through = BTreeMap::new();
        for &l in &later {
            let part = out.bar_v[&l].mul(&st.prob[k][l])?;
            bar = bar.add(&part)?;
            through.insert(l, part);
        }
        let self_share = ratio_limit(own, &bar)?.finite_value().expect("share at most 1");
        out.u_bar.insert((k, k), self_share.clone());
        let mut shares = BTreeMap::new();
        for (&l, part) in &through {
            let w = ratio_limit(part, &bar)?.finite_value().expect("share at most 1");
            out.u_bar.insert((k, l), w.clone());
            shares.insert(l, w);
        }
        for &j in &trace.domain {
            let mut first = Rational::zero();
            if let Some(e) = st.e_limit.get(&(k, j)) {
                first += e * &st.p_limit[k][j];
            }
            for &l in &later {
                if let Some(e) = st.e_limit.get(&(k, l)) {
                    first += e * &st.p_limit[k][l] * &probs[&(l, j)];
                }
            }
            let mut value = &self_share * first;
            for (&l, w) in &shares {
                value += w * &out.bar_e[&(l, j)];
            }
            out.bar_e.insert((k, j), value);
        }
        out.bar_v.insert(k, bar);
    }
    Ok(out)
}

fn conditional(psi: &BTreeMap<(usize, usize), LaplaceExpr>, i: usize, j: usize, domain: &[usize]) -> LaplaceExpr {
    let own = &psi[&(i, j)];
    if own.mass().is_positive() {
        return own.normalized();
    }
    let all = domain
        .iter()
        .map(|&d| (Rational::one(), psi[&(i, d)].clone()))
        .collect();
    LaplaceExpr::mixture(all).normalized()
}

fn expectation_under(
    bar_e: &Rational,
    bar_v: &ComparableFn,
    check_v: &ComparableFn,
    psi: &LaplaceExpr,
) -> Result<(Option<ExtendedLimit>, bool), HittingError> {
    let ratio = ratio_limit(bar_v, check_v)?;
    let under = match &ratio {
        ExtendedLimit::Infinite if bar_e.is_zero() => None,
        ExtendedLimit::Infinite => Some(ExtendedLimit::Infinite),
        l => {
            let value = bar_e * l.finite_value().expect("finite");
            Some(if value.is_zero() {
                ExtendedLimit::Zero
            } else {
                ExtendedLimit::Finite(value)
            })
        }
    };
    let matched = match &ratio {
        ExtendedLimit::Finite(q) => bar_e * q == psi.mean_exact(),
        _ => false,
    };
    Ok((under, matched))
}

type EntryMap = BTreeMap<(usize, usize), HittingEntry>;

/// Limits for initial states in the domain whose rows are given explicitly.
pub fn extend_to_interior(
    trace: &ReductionTrace,
    model: &SemiMarkovModel,
    dist: &DistributionSummary,
    probs: &BTreeMap<(usize, usize), Rational>,
    exp: &ExpectationSummary,
) -> Result<(EntryMap, InteriorWeights), HittingError> {
    let rows: Vec<usize> = model
        .domain()
        .iter()
        .copied()
        .filter(|&r| !model.is_synthesized(r))
        .collect();
    if rows.is_empty() {
        return Err(HittingError::MissingInteriorData);
    }
    let exterior = trace.order();
    let label = |x: usize| model.label(x).to_string();
    let mut entries = BTreeMap::new();
    let mut weights = InteriorWeights::default();
    for &r in &rows {
        let v_r = model.normalization(r).expect("given rows carry a normalization");
        let limit_p = |x: usize| -> Rational {
            model.prob(r, x).limit().finite_value().unwrap_or_else(Rational::zero)
        };
        let atom = |x: usize| {
            let spec = model.time(r, x).expect("time on support");
            (LaplaceExpr::atom(spec.limit_atom.clone()), spec.limit_mean.clone())
        };

        let mut ddot = v_r.clone();
        let mut through = BTreeMap::new();
        for &l in &exterior {
            if model.prob(r, l).is_zero() {
                continue;
            }
            let part = exp.bar_v[&l].mul(model.prob(r, l))?;
            ddot = ddot.add(&part)?;
            through.insert(l, part);
        }
        let own_share = ratio_limit(v_r, &ddot)?.finite_value().expect("share at most 1");
        let mut u_ddot = vec![(r, own_share.clone())];
        for (&l, part) in &through {
            u_ddot.push((l, ratio_limit(part, &ddot)?.finite_value().expect("share at most 1")));
        }

        for &j in model.domain() {
            let p_direct = limit_p(j);
            let mut hit = p_direct.clone();
            let mut reach = Vec::new();
            for &l in &exterior {
                let p = limit_p(l);
                if p.is_positive() {
                    hit += &p * &probs[&(l, j)];
                    if probs[&(l, j)].is_positive() {
                        reach.push((l, p));
                    }
                }
            }
            let mut dot = if p_direct.is_positive() {
                v_r.clone()
            } else {
                ComparableFn::zero()
            };
            for &(l, _) in &reach {
                dot = dot.add(&dist.check_v[&l])?;
            }
            if dot.is_zero() {
                dot = v_r.clone();
            }
            let needs_own = p_direct.is_positive() || !reach.is_empty();
            let own_w = if needs_own {
                finite(ratio_limit(v_r, &dot)?, || {
                    format!("normalization of {} over its entry normalization", label(r))
                })?
            } else {
                Rational::zero()
            };
            let mut u_dot = Vec::new();
            if p_direct.is_positive() {
                u_dot.push((r, own_w.clone()));
            }
            let mut parts = Vec::new();
            if p_direct.is_positive() {
                parts.push((p_direct.clone(), LaplaceExpr::scale(&own_w, &atom(j).0)));
            }
            for (l, p) in &reach {
                let w = ratio_limit(&dist.check_v[l], &dot)?
                    .finite_value()
                    .expect("share at most 1");
                u_dot.push((*l, w.clone()));
                parts.push((
                    p.clone(),
                    LaplaceExpr::convolution(vec![
                        LaplaceExpr::scale(&own_w, &atom(*l).0),
                        LaplaceExpr::scale(&w, &dist.psi[&(*l, j)]),
                    ]),
                ));
            }
            let psi = LaplaceExpr::mixture(parts);

            let mut first = Rational::zero();
            if p_direct.is_positive() {
                first += atom(j).1 * &p_direct;
            }
            for &l in &exterior {
                let p = limit_p(l);
                if p.is_positive() {
                    first += atom(l).1 * p * &probs[&(l, j)];
                }
            }
            let mut bar_e = &own_share * first;
            for (l, w) in &u_ddot[1..] {
                bar_e += w * &exp.bar_e[&(*l, j)];
            }
            let (e_under_check, moment_match) = expectation_under(&bar_e, &ddot, &dot, &psi)?;
            entries.insert(
                (r, j),
                HittingEntry {
                    from: label(r),
                    to: label(j),
                    conditional: LaplaceExpr::zero(),
                    psi,
                    check_v: dot.clone(),
                    hit_prob: hit,
                    bar_v: ddot.clone(),
                    bar_e,
                    e_under_check,
                    moment_match,
                    switch_index: None,
                },
            );
            weights.u_dot.insert((r, j), u_dot);
            weights.dot_v.insert((r, j), dot);
        }
        weights.u_ddot.insert(r, u_ddot);
        weights.ddot_v.insert(r, ddot);
    }
    let psi: BTreeMap<(usize, usize), LaplaceExpr> =
        entries.iter().map(|(k, e)| (*k, e.psi.clone())).collect();
    for (&(r, j), entry) in entries.iter_mut() {
        entry.conditional = conditional(&psi, r, j, model.domain());
    }
    Ok((entries, weights))
}

/// Assembles the exterior entries from the three backward passes.
pub fn exterior_entries(
    trace: &ReductionTrace,
    dist: &DistributionSummary,
    probs: &BTreeMap<(usize, usize), Rational>,
    exp: &ExpectationSummary,
) -> Result<BTreeMap<(usize, usize), HittingEntry>, HittingError> {
    let mut entries = BTreeMap::new();
    for k in trace.order() {
        for &j in &trace.domain {
            let psi = dist.psi[&(k, j)].clone();
            let bar_e = exp.bar_e[&(k, j)].clone();
            let (e_under_check, moment_match) =
                expectation_under(&bar_e, &exp.bar_v[&k], &dist.check_v[&k], &psi)?;
            entries.insert(
                (k, j),
                HittingEntry {
                    from: trace.labels[k].clone(),
                    to: trace.labels[j].clone(),
                    conditional: conditional(&dist.psi, k, j, &trace.domain),
                    psi,
                    check_v: dist.check_v[&k].clone(),
                    hit_prob: probs[&(k, j)].clone(),
                    bar_v: exp.bar_v[&k].clone(),
                    bar_e,
                    e_under_check,
                    moment_match,
                    switch_index: Some(dist.switch_index[&k]),
                },
            );
        }
    }
    Ok(entries)
}

/// Reduces the model and computes every limit, including domain rows when given.
pub fn analyze(model: &SemiMarkovModel) -> Result<(ReductionTrace, HittingResult), HittingError> {
    let trace = reduce(model)?;
    let result = analyze_trace(&trace, model)?;
    Ok((trace, result))
}

pub fn analyze_trace(
    trace: &ReductionTrace,
    model: &SemiMarkovModel,
) -> Result<HittingResult, HittingError> {
    let dist = hitting_summary(trace)?;
    let probs = hitting_probabilities(trace);
    let exp = expectation_summary(trace, &probs)?;
    let mut entries = exterior_entries(trace, &dist, &probs, &exp)?;
    let has_rows = model.domain().iter().any(|&r| !model.is_synthesized(r));
    let interior = if has_rows {
        let (more, weights) = extend_to_interior(trace, model, &dist, &probs, &exp)?;
        entries.extend(more);
        Some(weights)
    } else {
        None
    };
    Ok(HittingResult {
        labels: trace.labels.clone(),
        domain: trace.domain.clone(),
        entries,
        u_bar: exp.u_bar,
        interior,
    })
}
