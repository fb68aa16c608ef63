//! Phase-space reduction: removal of self-loops and exclusion of exterior states.
//!
//! Every step carries both the exact eps-dependent transition probabilities and
//! normalizations and their limits, so a step can be checked at a fixed eps and
//! read off as eps tends to zero.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{One, Zero};
use serde_json::{json, Value};

use crate::asymptotics::{AsymError, ComparableFn, ExtendedLimit};
use crate::laplace::{lt_remove_virtual, removed_mean, LaplaceError, LaplaceExpr};
use crate::model::SemiMarkovModel;
use crate::prelimit::TimeLaw;
use crate::rational::{format_rational, Rational};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReductionError {
    #[error("step {step}: state `{state}` leaves itself with probability 0")]
    DegenerateRow { step: usize, state: String },
    #[error("step {step}: state `{state}` is not least absorbing (ratio to `{other}` is infinite)")]
    NotLeastAbsorbing {
        step: usize,
        state: String,
        other: String,
    },
    #[error("step {step}: probability limit of {from} -> {to} is infinite")]
    UnboundedProbability { step: usize, from: String, to: String },
    #[error("step {step}: {source}")]
    Asymptotics { step: usize, source: AsymError },
    #[error("step {step}: {source}")]
    Laplace { step: usize, source: LaplaceError },
}

/// The process after some number of reduction steps.
///
/// Indices refer to the states of the original model. Rows and columns of
/// excluded states are zero; rows of domain states are never changed.
#[derive(Debug, Clone)]
pub struct StepState {
    pub labels: Vec<String>,
    /// Remaining exterior states, in model order.
    pub exterior: Vec<usize>,
    pub domain: Vec<usize>,
    pub prob: Vec<Vec<ComparableFn>>,
    /// Unnormalized transition-time laws over the support of `prob`.
    pub laws: BTreeMap<(usize, usize), Arc<TimeLaw>>,
    /// Normalization of each exterior state.
    pub norm: BTreeMap<usize, ComparableFn>,
    pub p_limit: Vec<Vec<Rational>>,
    /// Limiting laws of the normalized times, exterior rows only.
    pub phi_limit: BTreeMap<(usize, usize), LaplaceExpr>,
    pub e_limit: BTreeMap<(usize, usize), Rational>,
    /// `(j, i) -> lim norm_j / norm_i` over exterior pairs, filled after self-loop removal.
    pub w_limits: BTreeMap<(usize, usize), ExtendedLimit>,
    /// `(i, j) -> lim` share of the direct path in the merged transition, after exclusion.
    pub qhat_limits: BTreeMap<(usize, usize), Rational>,
}

impl StepState {
    pub fn from_model(m: &SemiMarkovModel) -> Result<StepState, ReductionError> {
        let n = m.n();
        let mut laws = BTreeMap::new();
        let mut phi_limit = BTreeMap::new();
        let mut e_limit = BTreeMap::new();
        let mut p_limit = vec![vec![Rational::zero(); n]; n];
        for i in 0..n {
            for j in m.support(i) {
                let spec = m.time(i, j).expect("time for every support edge");
                laws.insert(
                    (i, j),
                    Arc::new(TimeLaw::Sampler {
                        kind: spec.sampler,
                        scale: spec.scale.clone(),
                    }),
                );
                p_limit[i][j] = finite_limit(m.prob(i, j), 0, &m.states()[i], &m.states()[j])?;
                if !m.in_domain(i) {
                    phi_limit.insert((i, j), LaplaceExpr::atom(spec.limit_atom.clone()));
                    e_limit.insert((i, j), spec.limit_mean.clone());
                }
            }
        }
        let exterior = m.exterior();
        let norm = exterior
            .iter()
            .map(|&i| (i, m.normalization(i).expect("exterior normalization").clone()))
            .collect();
        Ok(StepState {
            labels: m.states().to_vec(),
            exterior,
            domain: m.domain().to_vec(),
            prob: m.prob_matrix().to_vec(),
            laws,
            norm,
            p_limit,
            phi_limit,
            e_limit,
            w_limits: BTreeMap::new(),
            qhat_limits: BTreeMap::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Exterior states followed by domain states.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.exterior.iter().chain(self.domain.iter()).copied()
    }

    pub fn support(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.active().filter(move |&j| !self.prob[i][j].is_zero())
    }

    pub fn is_exterior(&self, i: usize) -> bool {
        self.exterior.contains(&i)
    }

    /// Exterior rows whose exact probabilities do not sum to the constant 1.
    pub fn row_sum_violations(&self) -> Vec<usize> {
        self.exterior
            .iter()
            .copied()
            .filter(|&i| {
                let mut total = ComparableFn::zero();
                for j in self.support(i) {
                    match total.add(&self.prob[i][j]) {
                        Ok(t) => total = t,
                        Err(_) => return true,
                    }
                }
                !total.is_one()
            })
            .collect()
    }

    /// Exterior rows whose limiting probabilities do not sum to 1.
    pub fn limit_row_violations(&self) -> Vec<usize> {
        self.exterior
            .iter()
            .copied()
            .filter(|&i| {
                let total = self
                    .active()
                    .fold(Rational::zero(), |acc, j| acc + &self.p_limit[i][j]);
                !total.is_one()
            })
            .collect()
    }

    fn w(&self, j: usize, i: usize) -> &ExtendedLimit {
        &self.w_limits[&(j, i)]
    }

    fn pair_label(&self, i: usize, j: usize) -> (String, String) {
        (self.labels[i].clone(), self.labels[j].clone())
    }

    pub fn to_json(&self) -> Value {
        let name = |i: usize| self.labels[i].clone();
        let mut transitions = Vec::new();
        for i in self.active() {
            for j in self.support(i) {
                let mut entry = json!({
                    "from": name(i),
                    "to": name(j),
                    "prob": self.prob[i][j],
                    "p_limit": format_rational(&self.p_limit[i][j]),
                });
                if let Some(phi) = self.phi_limit.get(&(i, j)) {
                    entry["phi_limit"] = json!(phi);
                    entry["phi_closed_form"] = json!(phi.closed_form());
                }
                if let Some(e) = self.e_limit.get(&(i, j)) {
                    entry["e_limit"] = json!(format_rational(e));
                }
                if let Some(q) = self.qhat_limits.get(&(i, j)) {
                    entry["qhat_limit"] = json!(format_rational(q));
                }
                transitions.push(entry);
            }
        }
        let norm: BTreeMap<String, &ComparableFn> =
            self.norm.iter().map(|(&i, f)| (name(i), f)).collect();
        let w: Vec<Value> = self
            .w_limits
            .iter()
            .map(|(&(j, i), l)| json!({"num": name(j), "den": name(i), "limit": l}))
            .collect();
        json!({
            "exterior": self.exterior.iter().map(|&i| name(i)).collect::<Vec<_>>(),
            "domain": self.domain.iter().map(|&i| name(i)).collect::<Vec<_>>(),
            "normalization": norm,
            "transitions": transitions,
            "w_limits": w,
        })
    }
}

fn finite_limit(
    f: &ComparableFn,
    step: usize,
    from: &str,
    to: &str,
) -> Result<Rational, ReductionError> {
    match f.limit() {
        ExtendedLimit::Zero => Ok(Rational::zero()),
        ExtendedLimit::Finite(q) => Ok(q),
        ExtendedLimit::Infinite => Err(ReductionError::UnboundedProbability {
            step,
            from: from.to_string(),
            to: to.to_string(),
        }),
    }
}

fn limit_value(l: &ExtendedLimit) -> Option<Rational> {
    match l {
        ExtendedLimit::Zero => Some(Rational::zero()),
        ExtendedLimit::Finite(q) => Some(q.clone()),
        ExtendedLimit::Infinite => None,
    }
}

/// Aggregates the self-loops of every exterior state.
pub fn remove_virtual(state: &StepState, step: usize) -> Result<StepState, ReductionError> {
    let asym = |source| ReductionError::Asymptotics { step, source };
    let mut out = state.clone();
    out.qhat_limits.clear();
    for &i in &state.exterior {
        let stay = &state.prob[i][i];
        if stay.is_zero() {
            continue;
        }
        let leave = stay.one_minus().map_err(asym)?;
        if leave.is_zero() {
            return Err(ReductionError::DegenerateRow {
                step,
                state: state.labels[i].clone(),
            });
        }
        let loop_law = state.laws[&(i, i)].clone();
        let p0 = state.p_limit[i][i].clone();
        let phi_loop = &state.phi_limit[&(i, i)];
        let e_loop = &state.e_limit[&(i, i)];
        for j in state.support(i).filter(|&j| j != i) {
            let (from, to) = state.pair_label(i, j);
            let p = state.prob[i][j].div(&leave).map_err(asym)?;
            out.p_limit[i][j] = finite_limit(&p, step, &from, &to)?;
            out.prob[i][j] = p;
            out.laws.insert(
                (i, j),
                Arc::new(TimeLaw::Geometric {
                    stay: stay.clone(),
                    leave: leave.clone(),
                    loop_law: loop_law.clone(),
                    exit: state.laws[&(i, j)].clone(),
                }),
            );
            let phi = lt_remove_virtual(&p0, phi_loop, &state.phi_limit[&(i, j)], Some(e_loop))
                .map_err(|source| ReductionError::Laplace { step, source })?;
            out.phi_limit.insert((i, j), phi);
            out.e_limit
                .insert((i, j), removed_mean(&p0, e_loop, &state.e_limit[&(i, j)]));
        }
        out.prob[i][i] = ComparableFn::zero();
        out.p_limit[i][i] = Rational::zero();
        out.laws.remove(&(i, i));
        out.phi_limit.remove(&(i, i));
        out.e_limit.remove(&(i, i));
        let norm = state.norm[&i].div(&leave).map_err(asym)?;
        out.norm.insert(i, norm);
    }
    out.w_limits.clear();
    for &j in &out.exterior {
        for &i in &out.exterior {
            let ratio = out.norm[&j].div(&out.norm[&i]).map_err(asym)?;
            out.w_limits.insert((j, i), ratio.limit());
        }
    }
    Ok(out)
}

/// Picks the exterior state whose normalization is asymptotically smallest.
///
/// Scans in model order; a later state replaces the incumbent only when the
/// incumbent's normalization is of strictly larger order, so ties keep the
/// earlier state.
pub fn select_least_absorbing(state: &StepState) -> usize {
    let mut best = state.exterior[0];
    for &c in &state.exterior[1..] {
        if matches!(state.w(best, c), ExtendedLimit::Infinite) {
            best = c;
        }
    }
    best
}

/// Removes exterior state `k`, routing every path through it into a direct transition.
pub fn exclude_state(state: &StepState, k: usize, step: usize) -> Result<StepState, ReductionError> {
    let asym = |source| ReductionError::Asymptotics { step, source };
    for &i in &state.exterior {
        if matches!(state.w(k, i), ExtendedLimit::Infinite) {
            return Err(ReductionError::NotLeastAbsorbing {
                step,
                state: state.labels[k].clone(),
                other: state.labels[i].clone(),
            });
        }
    }
    let mut out = state.clone();
    out.exterior.retain(|&i| i != k);
    out.norm.remove(&k);
    out.w_limits.clear();
    out.qhat_limits.clear();
    let targets: Vec<usize> = out.active().collect();
    for &i in &out.exterior {
        let into_k = state.prob[i][k].clone();
        if into_k.is_zero() {
            continue;
        }
        let w = limit_value(state.w(k, i)).expect("checked finite");
        for &j in &targets {
            let direct = state.prob[i][j].clone();
            let via = into_k.mul(&state.prob[k][j]).map_err(asym)?;
            if via.is_zero() {
                continue;
            }
            let total = direct.add(&via).map_err(asym)?;
            let (from, to) = state.pair_label(i, j);
            let route_law = Arc::new(TimeLaw::Convolution {
                factors: vec![state.laws[&(i, k)].clone(), state.laws[&(k, j)].clone()],
            });
            let route_phi = LaplaceExpr::convolution(vec![
                state.phi_limit[&(i, k)].clone(),
                LaplaceExpr::scale(&w, &state.phi_limit[&(k, j)]),
            ]);
            let route_e = &state.e_limit[&(i, k)] + &state.e_limit[&(k, j)] * &w;
            let (law, phi, e, qhat) = if direct.is_zero() {
                (route_law, route_phi, route_e, Rational::zero())
            } else {
                let share = direct.div(&total).map_err(asym)?;
                let qhat = finite_limit(&share, step, &from, &to)?;
                let rest = Rational::one() - &qhat;
                let law = Arc::new(TimeLaw::Mixture {
                    parts: vec![
                        (share, state.laws[&(i, j)].clone()),
                        (via.div(&total).map_err(asym)?, route_law),
                    ],
                });
                let phi = LaplaceExpr::mixture(vec![
                    (qhat.clone(), state.phi_limit[&(i, j)].clone()),
                    (rest.clone(), route_phi),
                ]);
                let e = &qhat * &state.e_limit[&(i, j)] + &rest * route_e;
                (law, phi, e, qhat)
            };
            out.p_limit[i][j] = finite_limit(&total, step, &from, &to)?;
            out.prob[i][j] = total;
            out.laws.insert((i, j), law);
            out.phi_limit.insert((i, j), phi);
            out.e_limit.insert((i, j), e);
            out.qhat_limits.insert((i, j), qhat);
        }
    }
    for x in 0..state.n() {
        out.prob[x][k] = ComparableFn::zero();
        out.prob[k][x] = ComparableFn::zero();
        out.p_limit[x][k] = Rational::zero();
        out.p_limit[k][x] = Rational::zero();
    }
    out.laws.retain(|&(a, b), _| a != k && b != k);
    out.phi_limit.retain(|&(a, b), _| a != k && b != k);
    out.e_limit.retain(|&(a, b), _| a != k && b != k);
    Ok(out)
}

/// One step: self-loop removal, then the exclusion when more than one exterior state remains.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub removed: StepState,
    pub excluded: Option<(usize, StepState)>,
}

#[derive(Debug, Clone)]
pub struct ReductionTrace {
    pub labels: Vec<String>,
    pub domain: Vec<usize>,
    pub initial: StepState,
    pub steps: Vec<TraceStep>,
    pub exclusion_order: Vec<usize>,
    pub final_state: usize,
}

impl ReductionTrace {
    /// Exterior states in the order they leave: excluded states, then the final one.
    pub fn order(&self) -> Vec<usize> {
        let mut order = self.exclusion_order.clone();
        order.push(self.final_state);
        order
    }

    /// The state after the last self-loop removal.
    pub fn last(&self) -> &StepState {
        &self.steps.last().expect("at least one step").removed
    }

    /// Every intermediate state, in order.
    pub fn states(&self) -> impl Iterator<Item = &StepState> {
        std::iter::once(&self.initial).chain(self.steps.iter().flat_map(|s| {
            std::iter::once(&s.removed).chain(s.excluded.iter().map(|(_, st)| st))
        }))
    }

    pub fn summary_json(&self) -> Value {
        let name = |i: usize| self.labels[i].clone();
        let last = self.last();
        let k = self.final_state;
        json!({
            "exclusion_order": self.exclusion_order.iter().map(|&i| name(i)).collect::<Vec<_>>(),
            "final_state": name(k),
            "final_normalization": last.norm[&k],
            "final_normalization_leading": last.norm[&k].leading().ok(),
            "steps": self.steps.len(),
        })
    }

    pub fn to_json(&self) -> Value {
        let mut out = self.summary_json();
        out["initial"] = self.initial.to_json();
        out["trace"] = Value::Array(
            self.steps
                .iter()
                .enumerate()
                .map(|(n, s)| {
                    let mut v = json!({"step": n, "after_removal": s.removed.to_json()});
                    if let Some((k, st)) = &s.excluded {
                        v["excluded_state"] = json!(self.labels[*k]);
                        v["after_exclusion"] = st.to_json();
                    }
                    v
                })
                .collect(),
        );
        out
    }
}

/// Runs the full alternating reduction until one exterior state remains.
pub fn reduce(m: &SemiMarkovModel) -> Result<ReductionTrace, ReductionError> {
    let initial = StepState::from_model(m)?;
    let mut current = initial.clone();
    let mut steps = Vec::new();
    let mut exclusion_order = Vec::new();
    let mut step = 0;
    loop {
        let removed = remove_virtual(&current, step)?;
        if removed.exterior.len() == 1 {
            let final_state = removed.exterior[0];
            steps.push(TraceStep {
                removed,
                excluded: None,
            });
            return Ok(ReductionTrace {
                labels: m.states().to_vec(),
                domain: m.domain().to_vec(),
                initial,
                steps,
                exclusion_order,
                final_state,
            });
        }
        let k = select_least_absorbing(&removed);
        let next = exclude_state(&removed, k, step)?;
        exclusion_order.push(k);
        steps.push(TraceStep {
            removed,
            excluded: Some((k, next.clone())),
        });
        current = next;
        step += 1;
    }
}
