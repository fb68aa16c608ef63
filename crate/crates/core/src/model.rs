//! Perturbed semi-Markov processes and the checks of their standing conditions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num::One;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{AsymError, ComparableFn, ExtendedLimit, Family, Monomial};
use crate::laplace::LaplaceAtom;
use crate::rational::{format_rational, rat, serde_str, Rational};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{key}: unknown state `{label}`")]
    UnknownState { key: String, label: String },
    #[error("{key}: {source}")]
    Function { key: String, source: AsymError },
    #[error("{key}: function uses terms outside family {family}")]
    FamilyMismatch { key: String, family: Family },
    #[error("normalization: missing entry for state `{0}`")]
    MissingNormalization(String),
    #[error("transitions[{index}]: duplicate transition {from} -> {to}")]
    DuplicateTransition { index: usize, from: String, to: String },
}

/// Pre-limit transition-time family with an eps-dependent scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Point mass at `scale`.
    Dirac,
    /// Exponential with mean `scale`.
    Exponential,
    /// Uniform on `[0, scale]`.
    Uniform,
}

impl SamplerKind {
    /// Limiting atom of `sampler(scale) / v` when `scale / v -> factor`.
    pub fn limit_atom(&self, factor: Rational) -> LaplaceAtom {
        match self {
            SamplerKind::Dirac => LaplaceAtom::Dirac { at: factor },
            SamplerKind::Exponential => LaplaceAtom::Exponential { mean: factor },
            SamplerKind::Uniform => LaplaceAtom::Uniform { width: factor },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionTimeSpec {
    pub sampler: SamplerKind,
    pub scale: ComparableFn,
    pub limit_atom: LaplaceAtom,
    #[serde(with = "serde_str")]
    pub limit_mean: Rational,
}

impl TransitionTimeSpec {
    /// Dirac time at `scale` whose limit after normalization is `Dirac(at)`.
    pub fn dirac(scale: ComparableFn, at: Rational) -> Self {
        TransitionTimeSpec {
            sampler: SamplerKind::Dirac,
            scale,
            limit_mean: at.clone(),
            limit_atom: LaplaceAtom::Dirac { at },
        }
    }
}

/// A finite semi-Markov process depending on a perturbation parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiMarkovModel {
    states: Vec<String>,
    domain: Vec<usize>,
    family: Family,
    allow_zero_mass: bool,
    prob: Vec<Vec<ComparableFn>>,
    times: BTreeMap<(usize, usize), TransitionTimeSpec>,
    norm: BTreeMap<usize, ComparableFn>,
    synthesized: BTreeSet<usize>,
}

impl SemiMarkovModel {
    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn label(&self, i: usize) -> &str {
        &self.states[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    /// Target domain, as sorted state indices.
    pub fn domain(&self) -> &[usize] {
        &self.domain
    }

    /// Complement of the domain, in model order.
    pub fn exterior(&self) -> Vec<usize> {
        (0..self.n()).filter(|i| !self.in_domain(*i)).collect()
    }

    pub fn in_domain(&self, i: usize) -> bool {
        self.domain.binary_search(&i).is_ok()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn allow_zero_mass(&self) -> bool {
        self.allow_zero_mass
    }

    pub fn prob(&self, i: usize, j: usize) -> &ComparableFn {
        &self.prob[i][j]
    }

    pub fn prob_matrix(&self) -> &[Vec<ComparableFn>] {
        &self.prob
    }

    pub fn time(&self, i: usize, j: usize) -> Option<&TransitionTimeSpec> {
        self.times.get(&(i, j))
    }

    pub fn normalization(&self, i: usize) -> Option<&ComparableFn> {
        self.norm.get(&i)
    }

    /// Whether the row of domain state `i` was synthesized in the frozen form.
    pub fn is_synthesized(&self, i: usize) -> bool {
        self.synthesized.contains(&i)
    }

    /// Support of row `i`.
    pub fn support(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&j| !self.prob[i][j].is_zero())
    }
}

/// Incremental construction of a [`SemiMarkovModel`].
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    states: Vec<String>,
    domain: Vec<String>,
    family: Family,
    allow_zero_mass: bool,
    transitions: Vec<(String, String, ComparableFn, TransitionTimeSpec)>,
    normalization: BTreeMap<String, ComparableFn>,
}

impl ModelBuilder {
    pub fn new<S: Into<String>>(states: impl IntoIterator<Item = S>, family: Family) -> Self {
        ModelBuilder {
            states: states.into_iter().map(Into::into).collect(),
            domain: Vec::new(),
            family,
            allow_zero_mass: false,
            transitions: Vec::new(),
            normalization: BTreeMap::new(),
        }
    }

    pub fn domain<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Self {
        self.domain = labels.into_iter().map(Into::into).collect();
        self
    }

    pub fn allow_zero_mass(mut self, flag: bool) -> Self {
        self.allow_zero_mass = flag;
        self
    }

    pub fn transition(
        mut self,
        from: impl Into<String>,
        to: impl Into<String>,
        prob: ComparableFn,
        time: TransitionTimeSpec,
    ) -> Self {
        self.transitions.push((from.into(), to.into(), prob, time));
        self
    }

    pub fn normalization(mut self, state: impl Into<String>, f: ComparableFn) -> Self {
        self.normalization.insert(state.into(), f);
        self
    }

    pub fn build(self) -> Result<SemiMarkovModel, ModelError> {
        let n = self.states.len();
        if n == 0 {
            return Err(ModelError::Schema("states: must be nonempty".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.states {
            if !seen.insert(s.as_str()) {
                return Err(ModelError::Schema(format!("states: duplicate label `{s}`")));
            }
        }
        let index = |key: String, label: &str| -> Result<usize, ModelError> {
            self.states
                .iter()
                .position(|s| s == label)
                .ok_or(ModelError::UnknownState {
                    key,
                    label: label.to_string(),
                })
        };
        let mut domain = Vec::new();
        for (k, label) in self.domain.iter().enumerate() {
            domain.push(index(format!("domain_D[{k}]"), label)?);
        }
        domain.sort_unstable();
        domain.dedup();
        if domain.is_empty() {
            return Err(ModelError::Schema("domain_D: must be nonempty".into()));
        }
        if domain.len() == n {
            return Err(ModelError::Schema(
                "domain_D: must leave at least one state outside the domain".into(),
            ));
        }
        let check_family = |key: &str, f: &ComparableFn| -> Result<(), ModelError> {
            match (f.family_hint(), self.family) {
                (None, _) => Ok(()),
                (Some(found), declared) if found == declared => Ok(()),
                _ => Err(ModelError::FamilyMismatch {
                    key: key.to_string(),
                    family: self.family,
                }),
            }
        };
        let mut prob = vec![vec![ComparableFn::zero(); n]; n];
        let mut times = BTreeMap::new();
        let mut given_rows = BTreeSet::new();
        for (k, (from, to, p_ij, time)) in self.transitions.iter().enumerate() {
            let i = index(format!("transitions[{k}].from"), from)?;
            let j = index(format!("transitions[{k}].to"), to)?;
            if times.contains_key(&(i, j)) {
                return Err(ModelError::DuplicateTransition {
                    index: k,
                    from: from.clone(),
                    to: to.clone(),
                });
            }
            check_family(&format!("transitions[{k}].prob"), p_ij)?;
            check_family(&format!("transitions[{k}].time.scale"), &time.scale)?;
            if p_ij.is_zero() {
                return Err(ModelError::Schema(format!(
                    "transitions[{k}].prob: structural zeros are expressed by omitting the transition"
                )));
            }
            prob[i][j] = p_ij.clone();
            times.insert((i, j), time.clone());
            given_rows.insert(i);
        }
        let mut norm = BTreeMap::new();
        for (label, f) in &self.normalization {
            let i = index(format!("normalization.{label}"), label)?;
            check_family(&format!("normalization.{label}"), f)?;
            norm.insert(i, f.clone());
        }
        for i in 0..n {
            let needs_norm = !domain.contains(&i) || given_rows.contains(&i);
            if needs_norm && !norm.contains_key(&i) {
                return Err(ModelError::MissingNormalization(self.states[i].clone()));
            }
        }
        let mut synthesized = BTreeSet::new();
        let share = ComparableFn::constant(rat(1, domain.len() as i64));
        for &r in &domain {
            if given_rows.contains(&r) {
                continue;
            }
            synthesized.insert(r);
            norm.insert(r, ComparableFn::one());
            for &j in &domain {
                prob[r][j] = share.clone();
                times.insert(
                    (r, j),
                    TransitionTimeSpec::dirac(ComparableFn::one(), Rational::one()),
                );
            }
        }
        Ok(SemiMarkovModel {
            states: self.states,
            domain,
            family: self.family,
            allow_zero_mass: self.allow_zero_mass,
            prob,
            times,
            norm,
            synthesized,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    #[serde(rename = "domain_D")]
    domain: Vec<String>,
    family: Family,
    #[serde(default)]
    allow_zero_mass: bool,
    transitions: Vec<TransitionFile>,
    normalization: BTreeMap<String, ComparableFn>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionFile {
    from: String,
    to: String,
    prob: ComparableFn,
    time: TransitionTimeSpec,
}

/// Parses a model file (JSON).
pub fn parse_model(text: &str) -> Result<SemiMarkovModel, ModelError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))?;
    let mut b = ModelBuilder::new(file.states, file.family)
        .domain(file.domain)
        .allow_zero_mass(file.allow_zero_mass);
    for t in file.transitions {
        b = b.transition(t.from, t.to, t.prob, t.time);
    }
    for (label, f) in file.normalization {
        b = b.normalization(label, f);
    }
    b.build()
}

/// Serializes a model to the JSON file format; synthesized rows are omitted.
pub fn serialize_model(m: &SemiMarkovModel) -> String {
    let mut transitions = Vec::new();
    for (&(i, j), time) in &m.times {
        if m.synthesized.contains(&i) {
            continue;
        }
        transitions.push(TransitionFile {
            from: m.states[i].clone(),
            to: m.states[j].clone(),
            prob: m.prob[i][j].clone(),
            time: time.clone(),
        });
    }
    let file = ModelFile {
        states: m.states.clone(),
        domain: m.domain.iter().map(|&i| m.states[i].clone()).collect(),
        family: m.family,
        allow_zero_mass: m.allow_zero_mass,
        transitions,
        normalization: m
            .norm
            .iter()
            .filter(|(i, _)| !m.synthesized.contains(i))
            .map(|(&i, f)| (m.states[i].clone(), f.clone()))
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

/// Outcome of one condition check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub pass: bool,
    pub witnesses: Vec<String>,
}

impl Check {
    fn from_witnesses(witnesses: Vec<String>) -> Check {
        Check {
            pass: witnesses.is_empty(),
            witnesses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConditionReport {
    /// No instantaneous transitions: every time scale is positive.
    pub condition_a: Check,
    /// Stable supports and reachability of the domain.
    pub condition_b: Check,
    /// Limiting atoms are proper, match their samplers and have no mass at zero.
    pub condition_db: Check,
    pub stochastic_rows: Check,
    /// Always passes for parsed models; the witness names the family.
    pub family_membership: Check,
    /// Normalization functions are at least 1 at the sampled points.
    pub normalization: Check,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.condition_a.pass
            && self.condition_b.pass
            && self.condition_db.pass
            && self.stochastic_rows.pass
            && self.family_membership.pass
            && self.normalization.pass
    }

    /// The checks the reduction itself depends on.
    pub fn structural_pass(&self) -> bool {
        self.condition_b.pass && self.stochastic_rows.pass
    }
}

/// Runs every condition check; findings go into the report.
pub fn validate_model(m: &SemiMarkovModel) -> ConditionReport {
    let edge = |i: usize, j: usize| format!("{} -> {}", m.states[i], m.states[j]);
    let mut cond_a = Vec::new();
    let mut cond_b = Vec::new();
    let mut cond_db = Vec::new();
    let mut rows = Vec::new();
    let mut norm = Vec::new();

    for (&(i, j), spec) in &m.times {
        if let Err(e) = spec.scale.check_positive() {
            cond_a.push(format!("{}: time scale {e}", edge(i, j)));
        }
    }

    for i in 0..m.n() {
        for j in m.support(i) {
            if let Err(e) = m.prob[i][j].check_positive() {
                cond_b.push(format!("{}: probability {e}", edge(i, j)));
            }
        }
    }
    let reach = reaches_domain(m);
    for i in m.exterior() {
        if !reach[i] {
            cond_b.push(format!("state {} cannot reach the domain", m.states[i]));
        }
    }

    for (&(i, j), spec) in &m.times {
        let Some(norm) = m.norm.get(&i) else { continue };
        let limit = spec.scale.div(norm).map(|r| r.limit());
        let expected = match limit {
            Ok(ExtendedLimit::Infinite) => {
                cond_db.push(format!(
                    "{}: time scale grows faster than the normalization",
                    edge(i, j)
                ));
                continue;
            }
            Ok(l) => spec.sampler.limit_atom(l.finite_value().expect("finite")),
            Err(e) => {
                cond_db.push(format!("{}: {e}", edge(i, j)));
                continue;
            }
        };
        if expected != spec.limit_atom {
            cond_db.push(format!(
                "{}: declared limit atom {:?} but the sampler converges to {:?}",
                edge(i, j),
                spec.limit_atom,
                expected
            ));
        }
        if spec.limit_mean != spec.limit_atom.mean() {
            cond_db.push(format!(
                "{}: declared limit mean {} differs from the atom mean {}",
                edge(i, j),
                format_rational(&spec.limit_mean),
                format_rational(&spec.limit_atom.mean())
            ));
        }
        if spec.limit_atom.has_mass_at_zero() && !m.allow_zero_mass {
            cond_db.push(format!("{}: limit law has mass at zero", edge(i, j)));
        }
    }

    for i in 0..m.n() {
        let mut total = ComparableFn::zero();
        let mut ok = true;
        for j in m.support(i) {
            match total.add(&m.prob[i][j]) {
                Ok(t) => total = t,
                Err(_) => ok = false,
            }
        }
        if !ok || !total.is_one() {
            rows.push(format!("row {} sums to {}", m.states[i], total));
        }
    }

    for (&i, f) in &m.norm {
        for eps in [1.0, 0.1, 0.01, 0.001] {
            let value = f.eval_signed(eps);
            if !(value >= 1.0 - 1e-12) {
                norm.push(format!(
                    "state {}: normalization {value} < 1 at eps = {eps}",
                    m.states[i]
                ));
                break;
            }
        }
    }

    ConditionReport {
        condition_a: Check::from_witnesses(cond_a),
        condition_b: Check::from_witnesses(cond_b),
        condition_db: Check::from_witnesses(cond_db),
        stochastic_rows: Check::from_witnesses(rows),
        family_membership: Check {
            pass: true,
            witnesses: vec![m.family.to_string()],
        },
        normalization: Check::from_witnesses(norm),
    }
}

/// `reach[i]` is true when `i` reaches the domain through positive entries.
fn reaches_domain(m: &SemiMarkovModel) -> Vec<bool> {
    let n = m.n();
    let mut reach = vec![false; n];
    let mut queue = VecDeque::new();
    for &d in &m.domain {
        reach[d] = true;
        queue.push_back(d);
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !reach[i] && !m.in_domain(i) && !m.prob[i][j].is_zero() {
                reach[i] = true;
                queue.push_back(i);
            }
        }
    }
    reach
}

/// The three-state example with exits of orders `alpha`, `beta` from state 1,
/// slow exits of order 1 from state 2, and time scale `eps^-gamma` in state 1.
///
/// States are labelled `"1"`, `"2"`, `"3"`; the domain is `{"3"}`.
pub fn three_state_example(
    alpha: Rational,
    beta: Rational,
    gamma: Rational,
    allow_zero_mass: bool,
) -> SemiMarkovModel {
    let half = rat(1, 2);
    let term = |c: &Rational, b: &Rational| Monomial::power(c.clone(), b.clone());
    let stay1 = ComparableFn::posynomial(vec![
        Monomial::constant(Rational::one()),
        term(&-&half, &alpha),
        term(&-&half, &beta),
    ]);
    let to2 = ComparableFn::monomial(term(&half, &alpha));
    let to3 = ComparableFn::monomial(term(&half, &beta));
    let eps = Rational::one();
    let leave2 = ComparableFn::monomial(term(&half, &eps));
    let stay2 = ComparableFn::posynomial(vec![
        Monomial::constant(Rational::one()),
        term(&-Rational::one(), &eps),
    ]);
    let slow = ComparableFn::power(-gamma.clone());
    let one = ComparableFn::one();
    let t1 = TransitionTimeSpec::dirac(slow.clone(), Rational::one());
    let t2 = TransitionTimeSpec::dirac(one.clone(), Rational::one());

    let mut b = ModelBuilder::new(["1", "2", "3"], Family::H1)
        .domain(["3"])
        .allow_zero_mass(allow_zero_mass);
    if !stay1.is_zero() {
        b = b.transition("1", "1", stay1, t1.clone());
    }
    b.transition("1", "2", to2, t1.clone())
        .transition("1", "3", to3, t1)
        .transition("2", "1", leave2.clone(), t2.clone())
        .transition("2", "2", stay2, t2.clone())
        .transition("2", "3", leave2, t2.clone())
        .transition("3", "3", one.clone(), t2)
        .normalization("1", slow)
        .normalization("2", one.clone())
        .normalization("3", one)
        .build()
        .expect("example model is well formed")
}
