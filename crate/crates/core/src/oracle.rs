//! Fixed-eps ground truth: exact linear solves, Monte Carlo and convergence reports.
//!
//! Linear systems are solved by subtraction-free elimination. Every pivot is a
//! sum of nonnegative outflow terms, so near-singular rows at small eps keep
//! full relative accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Geometric};
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::AsymError;
use crate::hitting::HittingResult;
use crate::model::{SamplerKind, SemiMarkovModel};
use crate::prelimit::NumLaw;
use crate::rational::to_f64;
use crate::reduction::{ReductionError, StepState};

/// Total number of simulated transitions allowed across all samples.
pub const STEP_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("linear system is singular at eps = {eps} (state {state} cannot reach the domain)")]
    Singular { eps: f64, state: String },
    #[error("step budget of {STEP_BUDGET} transitions exceeded")]
    StepBudgetExceeded,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Asymptotics(#[from] AsymError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

/// A model or reduced model with every function evaluated at one eps.
#[derive(Debug, Clone)]
pub struct FixedEpsModel {
    pub eps: f64,
    pub labels: Vec<String>,
    pub exterior: Vec<usize>,
    pub domain: Vec<usize>,
    /// Domain states whose rows are part of the process.
    pub interior: Vec<usize>,
    pub prob: Vec<Vec<f64>>,
    pub laws: BTreeMap<(usize, usize), Arc<NumLaw>>,
}

impl FixedEpsModel {
    pub fn from_model(m: &SemiMarkovModel, eps: f64) -> Result<FixedEpsModel, OracleError> {
        let mut out = Self::from_state(&StepState::from_model(m)?, eps)?;
        out.interior = m
            .domain()
            .iter()
            .copied()
            .filter(|&r| !m.is_synthesized(r))
            .collect();
        Ok(out)
    }

    /// Exterior rows of a (possibly reduced) state; domain rows are dropped.
    pub fn from_state(st: &StepState, eps: f64) -> Result<FixedEpsModel, OracleError> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(OracleError::InvalidArgument(format!("eps {eps} outside (0, 1]")));
        }
        let prob = st
            .prob
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| if p.is_zero() { Ok(0.0) } else { p.eval(eps) })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let laws = st
            .laws
            .iter()
            .map(|(&k, law)| Ok((k, law.at(eps)?)))
            .collect::<Result<_, AsymError>>()?;
        Ok(FixedEpsModel {
            eps,
            labels: st.labels.clone(),
            exterior: st.exterior.clone(),
            domain: st.domain.clone(),
            interior: Vec::new(),
            prob,
            laws,
        })
    }

    fn targets(&self, i: usize) -> impl Iterator<Item = (usize, f64, &Arc<NumLaw>)> + '_ {
        self.laws
            .range((i, 0)..(i + 1, 0))
            .map(move |(&(_, j), law)| (j, self.prob[i][j], law))
            .filter(|&(_, p, _)| p > 0.0)
    }
}

/// Hitting quantities keyed by `(initial, entry)`.
pub type HitMatrix = BTreeMap<(usize, usize), f64>;

/// Solves `x_i = rhs_i + sum_k a_ik x_k` over the exterior, with
/// `leak_i = 1 - sum_k a_ik` supplied separately.
fn eliminate(
    fm: &FixedEpsModel,
    mut a: Vec<Vec<f64>>,
    mut leak: Vec<f64>,
    mut rhs: Vec<Vec<f64>>,
) -> Result<Vec<Vec<f64>>, OracleError> {
    let n = a.len();
    let mut pivots = vec![0.0; n];
    for l in (0..n).rev() {
        let pivot: f64 = (0..l).map(|k| a[l][k]).sum::<f64>() + leak[l];
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(OracleError::Singular {
                eps: fm.eps,
                state: fm.labels[fm.exterior[l]].clone(),
            });
        }
        pivots[l] = pivot;
        for i in 0..l {
            let f = a[i][l] / pivot;
            if f == 0.0 {
                continue;
            }
            for k in 0..l {
                a[i][k] += f * a[l][k];
            }
            leak[i] += f * leak[l];
            let (head, tail) = rhs.split_at_mut(l);
            for (x, y) in head[i].iter_mut().zip(&tail[0]) {
                *x += f * y;
            }
        }
    }
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(n);
    for l in 0..n {
        let row: Vec<f64> = (0..rhs[l].len())
            .map(|c| {
                let s: f64 = (0..l).map(|k| a[l][k] * x[k][c]).sum();
                (rhs[l][c] + s) / pivots[l]
            })
            .collect();
        x.push(row);
    }
    Ok(x)
}

/// Coefficients, outflow to the domain or time, and right-hand sides at `s`.
fn system(fm: &FixedEpsModel, s: f64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let pos: BTreeMap<usize, usize> = fm.exterior.iter().enumerate().map(|(a, &b)| (b, a)).collect();
    let col: BTreeMap<usize, usize> = fm.domain.iter().enumerate().map(|(a, &b)| (b, a)).collect();
    let n = fm.exterior.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut leak = vec![0.0; n];
    let mut rhs = vec![vec![0.0; fm.domain.len()]; n];
    for (r, &i) in fm.exterior.iter().enumerate() {
        for (j, p, law) in fm.targets(i) {
            let (phi, comp) = law.eval(s);
            leak[r] += p * comp;
            if let Some(&k) = pos.get(&j) {
                a[r][k] += p * phi;
            } else if let Some(&c) = col.get(&j) {
                rhs[r][c] += p * phi;
                leak[r] += p * phi;
            }
        }
    }
    (a, leak, rhs)
}

fn to_matrix(fm: &FixedEpsModel, rows: &[usize], values: &[Vec<f64>]) -> HitMatrix {
    let mut out = HitMatrix::new();
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in fm.domain.iter().enumerate() {
            out.insert((i, j), values[r][c]);
        }
    }
    out
}

fn interior_rows(
    fm: &FixedEpsModel,
    exterior: &HitMatrix,
    mut direct: impl FnMut(f64, &NumLaw) -> f64,
    mut through: impl FnMut(f64, &NumLaw, usize, usize) -> f64,
) -> HitMatrix {
    let mut out = HitMatrix::new();
    for &r in &fm.interior {
        for &j in &fm.domain {
            let mut v = 0.0;
            for (k, p, law) in fm.targets(r) {
                if k == j {
                    v += direct(p, law);
                }
                if exterior.contains_key(&(k, j)) {
                    v += through(p, law, k, j);
                }
            }
            out.insert((r, j), v);
        }
    }
    out
}

/// Hitting-time transforms `Psi_ij(s)` including the entry state.
pub fn exact_laplace(fm: &FixedEpsModel, s: f64) -> Result<HitMatrix, OracleError> {
    if !(s >= 0.0) {
        return Err(OracleError::InvalidArgument(format!("s = {s} must be nonnegative")));
    }
    let (a, leak, rhs) = system(fm, s);
    let x = eliminate(fm, a, leak, rhs)?;
    let mut out = to_matrix(fm, &fm.exterior, &x);
    let inner = interior_rows(
        fm,
        &out,
        |p, law| p * law.eval(s).0,
        |p, law, k, j| p * law.eval(s).0 * out[&(k, j)],
    );
    out.extend(inner);
    Ok(out)
}

/// Expectations `E[tau; entry at j]`.
pub fn exact_expectation(fm: &FixedEpsModel) -> Result<HitMatrix, OracleError> {
    let probs = exact_laplace(fm, 0.0)?;
    let (a, leak, _) = system(fm, 0.0);
    let pos: BTreeMap<usize, usize> = fm.exterior.iter().enumerate().map(|(a, &b)| (b, a)).collect();
    let rhs: Vec<Vec<f64>> = fm
        .exterior
        .iter()
        .map(|&i| {
            fm.domain
                .iter()
                .map(|&j| {
                    fm.targets(i)
                        .map(|(k, p, law)| {
                            let m = p * law.mean();
                            if k == j {
                                m
                            } else if pos.contains_key(&k) {
                                m * probs[&(k, j)]
                            } else {
                                0.0
                            }
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let x = eliminate(fm, a, leak, rhs)?;
    let mut out = to_matrix(fm, &fm.exterior, &x);
    let inner = interior_rows(
        fm,
        &out,
        |p, law| p * law.mean(),
        |p, law, k, j| p * (law.mean() * probs[&(k, j)] + out[&(k, j)]),
    );
    out.extend(inner);
    Ok(out)
}

/// One simulated hitting time and the domain state entered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub tau: f64,
    pub entry: usize,
}

struct Budget(AtomicU64);

impl Budget {
    fn spend(&self, steps: u64) -> Result<(), OracleError> {
        if self.0.fetch_add(steps, Ordering::Relaxed) + steps > STEP_BUDGET {
            Err(OracleError::StepBudgetExceeded)
        } else {
            Ok(())
        }
    }
}

fn draw_sampler(kind: SamplerKind, scale: f64, rng: &mut ChaCha8Rng) -> f64 {
    match kind {
        SamplerKind::Dirac => scale,
        SamplerKind::Exponential => scale * rng.sample::<f64, _>(Exp1),
        SamplerKind::Uniform => scale * rng.random::<f64>(),
    }
}

/// Total time of `count` independent draws of `law`; closed-form batches cost one step.
fn draw_repeated(law: &NumLaw, count: u64, rng: &mut ChaCha8Rng, budget: &Budget) -> Result<f64, OracleError> {
    if count == 0 {
        return Ok(0.0);
    }
    match law {
        NumLaw::Sampler { kind: SamplerKind::Dirac, scale } => {
            budget.spend(1)?;
            Ok(count as f64 * scale)
        }
        NumLaw::Sampler { kind: SamplerKind::Exponential, scale } if *scale > 0.0 => {
            budget.spend(1)?;
            Ok(Gamma::new(count as f64, *scale).expect("positive shape").sample(rng))
        }
        _ => {
            budget.spend(count)?;
            (0..count).map(|_| draw_law(law, rng, budget)).sum()
        }
    }
}

fn draw_geometric(leave: f64, rng: &mut ChaCha8Rng) -> u64 {
    if leave >= 1.0 {
        0
    } else {
        Geometric::new(leave).expect("leave in (0, 1)").sample(rng)
    }
}

fn draw_law(law: &NumLaw, rng: &mut ChaCha8Rng, budget: &Budget) -> Result<f64, OracleError> {
    match law {
        NumLaw::Sampler { kind, scale } => Ok(draw_sampler(*kind, *scale, rng)),
        NumLaw::Geometric { leave, loop_law, exit, .. } => {
            let loops = draw_geometric(*leave, rng);
            Ok(draw_repeated(loop_law, loops, rng, budget)? + draw_law(exit, rng, budget)?)
        }
        NumLaw::Mixture { parts } => {
            let pick = WeightedIndex::new(parts.iter().map(|(w, _)| w.max(0.0)))
                .expect("mixture weights are positive")
                .sample(rng);
            draw_law(&parts[pick].1, rng, budget)
        }
        NumLaw::Convolution { factors } => factors.iter().map(|f| draw_law(f, rng, budget)).sum(),
    }
}

struct ExitTable {
    leave: f64,
    targets: Vec<usize>,
    index: Option<WeightedIndex<f64>>,
}

/// Samples hitting times from `start`; one independent stream per sample index.
pub fn simulate_hitting(
    fm: &FixedEpsModel,
    start: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Sample>, OracleError> {
    if n_samples == 0 {
        return Err(OracleError::InvalidArgument("n_samples must be at least 1".into()));
    }
    if start >= fm.labels.len() {
        return Err(OracleError::InvalidArgument(format!("unknown start state {start}")));
    }
    let tables: BTreeMap<usize, ExitTable> = fm
        .exterior
        .iter()
        .map(|&i| {
            let exits: Vec<(usize, f64)> =
                fm.targets(i).filter(|&(j, _, _)| j != i).map(|(j, p, _)| (j, p)).collect();
            let leave = exits.iter().map(|e| e.1).sum();
            let index = WeightedIndex::new(exits.iter().map(|e| e.1)).ok();
            let targets = exits.into_iter().map(|e| e.0).collect();
            (i, ExitTable { leave, targets, index })
        })
        .collect();
    let budget = Budget(AtomicU64::new(0));
    let is_domain = |j: usize| fm.domain.contains(&j);
    let run = |idx: usize| -> Result<Sample, OracleError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let mut state = start;
        let mut tau = 0.0;
        let mut first = true;
        loop {
            if is_domain(state) && !first {
                return Ok(Sample { tau, entry: state });
            }
            first = false;
            let next = if is_domain(state) {
                let row: Vec<(usize, f64)> = fm
                    .laws
                    .range((state, 0)..(state + 1, 0))
                    .map(|(&(_, j), _)| (j, fm.prob[state][j]))
                    .filter(|e| e.1 > 0.0)
                    .collect();
                let pick = WeightedIndex::new(row.iter().map(|e| e.1))
                    .map_err(|_| OracleError::InvalidArgument(format!("state {} has no row", fm.labels[state])))?
                    .sample(&mut rng);
                row[pick].0
            } else {
                let table = &tables[&state];
                if let Some(law) = fm.laws.get(&(state, state)).filter(|_| fm.prob[state][state] > 0.0) {
                    let loops = draw_geometric(table.leave, &mut rng);
                    tau += draw_repeated(law, loops, &mut rng, &budget)?;
                }
                let index = table.index.as_ref().ok_or_else(|| OracleError::Singular {
                    eps: fm.eps,
                    state: fm.labels[state].clone(),
                })?;
                table.targets[index.sample(&mut rng)]
            };
            budget.spend(1)?;
            tau += draw_law(&fm.laws[&(state, next)], &mut rng, &budget)?;
            state = next;
        }
    };
    (0..n_samples).into_par_iter().map(run).collect()
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn of(values: impl Iterator<Item = f64>) -> Estimate {
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for x in values {
            n += 1.0;
            let d = x - mean;
            mean += d / n;
            m2 += d * (x - mean);
        }
        let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
        Estimate {
            value: mean,
            std_error: (var / n).sqrt(),
        }
    }

    /// True when `target` lies within `k` standard errors.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationStats {
    pub start: String,
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
    pub normalization: f64,
    pub entry_counts: BTreeMap<String, usize>,
    /// `tau / normalization`.
    pub mean: Estimate,
    /// `exp(-s tau / normalization)` per `s`.
    pub transform: Vec<(f64, Estimate)>,
}

impl SimulationStats {
    pub fn new(
        fm: &FixedEpsModel,
        start: usize,
        seed: u64,
        samples: &[Sample],
        normalization: f64,
        s_grid: &[f64],
    ) -> SimulationStats {
        let mut entry_counts = BTreeMap::new();
        for x in samples {
            *entry_counts.entry(fm.labels[x.entry].clone()).or_insert(0) += 1;
        }
        let scaled = || samples.iter().map(|x| x.tau / normalization);
        SimulationStats {
            start: fm.labels[start].clone(),
            eps: fm.eps,
            samples: samples.len(),
            seed,
            normalization,
            entry_counts,
            mean: Estimate::of(scaled()),
            transform: s_grid
                .iter()
                .map(|&s| (s, Estimate::of(scaled().map(|t| (-s * t).exp()))))
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "start {}  eps {:e}  samples {}  seed {}", self.start, self.eps, self.samples, self.seed);
        let _ = writeln!(out, "normalization {:.6e}", self.normalization);
        for (label, count) in &self.entry_counts {
            let _ = writeln!(out, "entered {label}: {count}");
        }
        let _ = writeln!(out, "mean tau/v    {:.6} ± {:.6}", self.mean.value, self.mean.std_error);
        for (s, e) in &self.transform {
            let _ = writeln!(out, "E exp(-{s} tau/v)  {:.6} ± {:.6}", e.value, e.std_error);
        }
        out
    }
}

pub fn write_samples_csv(
    out: &mut impl io::Write,
    labels: &[String],
    samples: &[Sample],
) -> io::Result<()> {
    writeln!(out, "index,tau,entry")?;
    for (i, x) in samples.iter().enumerate() {
        writeln!(out, "{i},{:.17e},{}", x.tau, labels[x.entry])?;
    }
    Ok(())
}

/// Gap tolerances for the transform and the expectation rows.
pub const PSI_TOLERANCE: f64 = 1e-2;
pub const EXPECTATION_TOLERANCE: f64 = 2e-2;
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub state: String,
    /// `psi(s=...)` or `E`.
    pub quantity: String,
    pub gaps: Vec<f64>,
    pub tolerance: f64,
    pub monotone: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub eps_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn to_text(&self) -> String {
        let mut head = vec!["state".to_string(), "quantity".to_string()];
        head.extend(self.eps_grid.iter().map(|e| format!("eps={e:e}")));
        head.extend(["tol".to_string(), "verdict".to_string()]);
        let mut table = vec![head];
        for r in &self.rows {
            let mut line = vec![r.state.clone(), r.quantity.clone()];
            line.extend(r.gaps.iter().map(|g| format!("{g:.3e}")));
            line.push(format!("{:e}", r.tolerance));
            line.push(match (r.pass, r.monotone) {
                (true, _) => "pass".into(),
                (false, false) => "FAIL (not monotone)".into(),
                (false, true) => "FAIL (tolerance)".into(),
            });
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &table {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        let _ = writeln!(out, "overall: {}", if self.pass { "pass" } else { "FAIL" });
        out
    }
}

fn verdict(state: &str, quantity: String, gaps: Vec<f64>, tolerance: f64) -> ConvergenceRow {
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
    let pass = monotone && gaps.last().is_some_and(|&g| g <= tolerance);
    ConvergenceRow {
        state: state.to_string(),
        quantity,
        gaps,
        tolerance,
        monotone,
        pass,
    }
}

/// Gaps between fixed-eps oracles and the computed limits for every exterior state.
///
/// Expectation gaps are absolute up to 1 and relative beyond.
pub fn convergence_check(
    m: &SemiMarkovModel,
    results: &HittingResult,
    eps_grid: &[f64],
    s_grid: &[f64],
) -> Result<ConvergenceReport, OracleError> {
    if eps_grid.is_empty() || s_grid.is_empty() {
        return Err(OracleError::InvalidArgument("grids must be nonempty".into()));
    }
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(OracleError::InvalidArgument("eps grid must be strictly decreasing".into()));
    }
    let exterior = m.exterior();
    let domain = m.domain();
    let mut psi_gaps = vec![vec![Vec::new(); s_grid.len()]; exterior.len()];
    let mut e_gaps = vec![Vec::new(); exterior.len()];
    for &eps in eps_grid {
        let fm = FixedEpsModel::from_model(m, eps)?;
        let expect = exact_expectation(&fm)?;
        for (a, &i) in exterior.iter().enumerate() {
            let any = &results.entries[&(i, domain[0])];
            let check = any.check_v.eval(eps)?;
            let bar = any.bar_v.eval(eps)?;
            for (b, &s) in s_grid.iter().enumerate() {
                let num = exact_laplace(&fm, s / check)?;
                let gap = domain
                    .iter()
                    .map(|&j| (num[&(i, j)] - results.entries[&(i, j)].psi.eval(s)).abs())
                    .fold(0.0, f64::max);
                psi_gaps[a][b].push(gap);
            }
            let gap = domain
                .iter()
                .map(|&j| {
                    let limit = to_f64(&results.entries[&(i, j)].bar_e);
                    (expect[&(i, j)] / bar - limit).abs() / limit.max(1.0)
                })
                .fold(0.0, f64::max);
            e_gaps[a].push(gap);
        }
    }
    let mut rows = Vec::new();
    for (a, &i) in exterior.iter().enumerate() {
        let label = m.label(i);
        for (b, &s) in s_grid.iter().enumerate() {
            rows.push(verdict(label, format!("psi(s={s})"), psi_gaps[a][b].clone(), PSI_TOLERANCE));
        }
        rows.push(verdict(label, "E".into(), e_gaps[a].clone(), EXPECTATION_TOLERANCE));
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(ConvergenceReport {
        eps_grid: eps_grid.to_vec(),
        s_grid: s_grid.to_vec(),
        rows,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{ComparableFn, Family};
    use crate::model::{three_state_example, ModelBuilder, TransitionTimeSpec};
    use crate::rational::{rat, Rational};
    use num::Zero;

    fn one_step() -> SemiMarkovModel {
        let t = TransitionTimeSpec::dirac(ComparableFn::one(), rat(1, 1));
        ModelBuilder::new(["a", "b"], Family::H1)
            .domain(["b"])
            .transition("a", "b", ComparableFn::one(), t)
            .normalization("a", ComparableFn::one())
            .build()
            .unwrap()
    }

    #[test]
    fn single_dirac_exit() {
        let fm = FixedEpsModel::from_model(&one_step(), 0.5).unwrap();
        let psi = exact_laplace(&fm, 0.7).unwrap();
        assert!((psi[&(0, 1)] - (-0.7f64).exp()).abs() < 1e-15);
        assert!((exact_expectation(&fm).unwrap()[&(0, 1)] - 1.0).abs() < 1e-15);
        let xs = simulate_hitting(&fm, 0, 5, 1).unwrap();
        assert!(xs.iter().all(|x| *x == Sample { tau: 1.0, entry: 1 }));
    }

    #[test]
    fn small_eps_expectation_is_accurate() {
        let m = three_state_example(rat(1, 1), Rational::zero(), Rational::zero(), true);
        let fm = FixedEpsModel::from_model(&m, 1e-6).unwrap();
        let e = exact_expectation(&fm).unwrap();
        let eps = 1e-6;
        let exact = (1.0 + 2.0 * eps) / (eps * (1.0 + eps / 2.0));
        assert!(((e[&(1, 2)] - exact) / exact).abs() < 1e-9, "{} {}", e[&(1, 2)], exact);
        let p = exact_laplace(&fm, 0.0).unwrap();
        assert!((p[&(0, 2)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_samples() {
        let m = three_state_example(rat(1, 1), Rational::zero(), Rational::zero(), true);
        let fm = FixedEpsModel::from_model(&m, 1e-2).unwrap();
        let a = simulate_hitting(&fm, 1, 50, 9).unwrap();
        let b = simulate_hitting(&fm, 1, 50, 9).unwrap();
        assert_eq!(a, b);
    }
}
