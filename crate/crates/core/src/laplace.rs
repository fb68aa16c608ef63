//! Limiting laws as Laplace-transform expression trees.
//!
//! Trees are built through smart constructors that keep them in canonical
//! form, so two trees describing the same law through the same sequence of
//! reductions compare equal structurally. Weights and parameters are exact
//! rationals; evaluation at a transform argument `s` is in `f64`.

use std::collections::BTreeMap;
use std::fmt;

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{format_rational, serde_str, to_f64, Rational};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LaplaceError {
    #[error("loop probability tends to 1 but the loop has zero limiting mean")]
    MissingMean,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(String),
}

/// Limiting law of a single transition time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LaplaceAtom {
    /// Point mass at `at`; transform `exp(-at s)`.
    Dirac {
        #[serde(with = "serde_str")]
        at: Rational,
    },
    /// Exponential law with the given mean; transform `1/(1 + mean s)`.
    Exponential {
        #[serde(with = "serde_str")]
        mean: Rational,
    },
    /// Uniform law on `[0, width]`.
    Uniform {
        #[serde(with = "serde_str")]
        width: Rational,
    },
}

impl LaplaceAtom {
    pub fn mean(&self) -> Rational {
        match self {
            LaplaceAtom::Dirac { at } => at.clone(),
            LaplaceAtom::Exponential { mean } => mean.clone(),
            LaplaceAtom::Uniform { width } => width / Rational::from_integer(2.into()),
        }
    }

    /// True when the law puts positive mass at zero.
    pub fn has_mass_at_zero(&self) -> bool {
        match self {
            LaplaceAtom::Dirac { at } => at.is_zero(),
            LaplaceAtom::Exponential { mean } => mean.is_zero(),
            LaplaceAtom::Uniform { width } => width.is_zero(),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            LaplaceAtom::Dirac { at } => (-to_f64(at) * s).exp(),
            LaplaceAtom::Exponential { mean } => 1.0 / (1.0 + to_f64(mean) * s),
            LaplaceAtom::Uniform { width } => uniform_transform(to_f64(width) * s),
        }
    }
}

fn uniform_transform(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// A weighted branch of a mixture.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Weighted {
    #[serde(with = "serde_str")]
    pub weight: Rational,
    pub law: LaplaceExpr,
}

/// Closed algebra of (possibly defective) limiting laws.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum LaplaceExpr {
    Atom { atom: LaplaceAtom },
    /// `child(w s)`: the law of `w` times the child's variable.
    Scale {
        #[serde(with = "serde_str")]
        w: Rational,
        child: Box<LaplaceExpr>,
    },
    /// Weighted sum of laws; weights sum to at most 1.
    Mixture { parts: Vec<Weighted> },
    /// Law of a sum of independent variables.
    Convolution { factors: Vec<LaplaceExpr> },
    /// `exit(s) (1 - p) / (1 - p loop(s))`.
    GeometricCompound {
        #[serde(with = "serde_str")]
        p: Rational,
        #[serde(rename = "loop")]
        loop_law: Box<LaplaceExpr>,
        exit: Box<LaplaceExpr>,
    },
    /// Exponential law arising as a limit of geometric sums.
    ExponentialLimit {
        #[serde(with = "serde_str")]
        mean: Rational,
    },
}

impl LaplaceExpr {
    /// The zero (mass 0) law.
    pub fn zero() -> LaplaceExpr {
        LaplaceExpr::Mixture { parts: Vec::new() }
    }

    pub fn dirac(at: Rational) -> LaplaceExpr {
        LaplaceExpr::Atom {
            atom: LaplaceAtom::Dirac { at },
        }
    }

    pub fn exp_limit(mean: Rational) -> LaplaceExpr {
        if mean.is_zero() {
            return LaplaceExpr::dirac(mean);
        }
        LaplaceExpr::ExponentialLimit { mean }
    }

    pub fn atom(atom: LaplaceAtom) -> LaplaceExpr {
        match atom {
            LaplaceAtom::Exponential { mean } => LaplaceExpr::exp_limit(mean),
            LaplaceAtom::Uniform { width } if width.is_zero() => LaplaceExpr::dirac(width),
            other => LaplaceExpr::Atom { atom: other },
        }
    }

    pub fn is_zero_law(&self) -> bool {
        matches!(self, LaplaceExpr::Mixture { parts } if parts.is_empty())
    }

    fn is_dirac_zero(&self) -> bool {
        matches!(self, LaplaceExpr::Atom { atom: LaplaceAtom::Dirac { at } } if at.is_zero())
    }

    /// `x(w s)`, pushed down to the atoms.
    pub fn scale(w: &Rational, x: &LaplaceExpr) -> LaplaceExpr {
        if w.is_one() {
            return x.clone();
        }
        if w.is_zero() {
            return LaplaceExpr::mixture(vec![(x.mass(), LaplaceExpr::dirac(Rational::zero()))]);
        }
        match x {
            LaplaceExpr::Atom { atom } => LaplaceExpr::atom(match atom {
                LaplaceAtom::Dirac { at } => LaplaceAtom::Dirac { at: at * w },
                LaplaceAtom::Exponential { mean } => LaplaceAtom::Exponential { mean: mean * w },
                LaplaceAtom::Uniform { width } => LaplaceAtom::Uniform { width: width * w },
            }),
            LaplaceExpr::ExponentialLimit { mean } => LaplaceExpr::exp_limit(mean * w),
            LaplaceExpr::Scale { w: inner, child } => LaplaceExpr::scale(&(w * inner), child),
            LaplaceExpr::Mixture { parts } => LaplaceExpr::mixture(
                parts
                    .iter()
                    .map(|p| (p.weight.clone(), LaplaceExpr::scale(w, &p.law)))
                    .collect(),
            ),
            LaplaceExpr::Convolution { factors } => LaplaceExpr::convolution(
                factors.iter().map(|f| LaplaceExpr::scale(w, f)).collect(),
            ),
            LaplaceExpr::GeometricCompound { p, loop_law, exit } => LaplaceExpr::geometric(
                p.clone(),
                LaplaceExpr::scale(w, loop_law),
                LaplaceExpr::scale(w, exit),
            ),
        }
    }

    /// Weighted mixture; flattens, merges identical branches and drops zero weights.
    pub fn mixture(parts: Vec<(Rational, LaplaceExpr)>) -> LaplaceExpr {
        let mut acc: BTreeMap<LaplaceExpr, Rational> = BTreeMap::new();
        let mut stack: Vec<(Rational, LaplaceExpr)> = parts;
        while let Some((w, law)) = stack.pop() {
            if w.is_zero() {
                continue;
            }
            match law {
                LaplaceExpr::Mixture { parts } => {
                    stack.extend(parts.into_iter().map(|p| (&w * p.weight, p.law)));
                }
                other => {
                    *acc.entry(other).or_insert_with(Rational::zero) += w;
                }
            }
        }
        acc.retain(|_, w| !w.is_zero());
        if acc.len() == 1 {
            let (law, w) = acc.iter().next().expect("one entry");
            if w.is_one() {
                return law.clone();
            }
        }
        LaplaceExpr::Mixture {
            parts: acc
                .into_iter()
                .map(|(law, weight)| Weighted { weight, law })
                .collect(),
        }
    }

    /// Law of an independent sum.
    pub fn convolution(factors: Vec<LaplaceExpr>) -> LaplaceExpr {
        let mut weight = Rational::one();
        let mut shift = Rational::zero();
        let mut kept: Vec<LaplaceExpr> = Vec::new();
        let mut stack = factors;
        while let Some(f) = stack.pop() {
            match f {
                LaplaceExpr::Convolution { factors } => stack.extend(factors),
                LaplaceExpr::Mixture { parts } if parts.is_empty() => return LaplaceExpr::zero(),
                LaplaceExpr::Mixture { mut parts } if parts.len() == 1 => {
                    let part = parts.pop().expect("one part");
                    weight *= part.weight;
                    stack.push(part.law);
                }
                LaplaceExpr::Atom {
                    atom: LaplaceAtom::Dirac { at },
                } => shift += at,
                other => kept.push(other),
            }
        }
        if !shift.is_zero() {
            kept.push(LaplaceExpr::dirac(shift));
        }
        kept.sort();
        let core = match kept.len() {
            0 => LaplaceExpr::dirac(Rational::zero()),
            1 => kept.pop().expect("one factor"),
            _ => LaplaceExpr::Convolution { factors: kept },
        };
        if weight.is_one() {
            core
        } else {
            LaplaceExpr::mixture(vec![(weight, core)])
        }
    }

    /// `exit(s) (1 - p) / (1 - p loop(s))` for `0 <= p < 1`.
    pub fn geometric(p: Rational, loop_law: LaplaceExpr, exit: LaplaceExpr) -> LaplaceExpr {
        if p.is_zero() {
            return exit;
        }
        if exit.is_zero_law() {
            return exit;
        }
        if loop_law.is_dirac_zero() {
            return exit;
        }
        let keep = Rational::one() - &p;
        if loop_law.is_zero_law() {
            return LaplaceExpr::mixture(vec![(keep, exit)]);
        }
        if let LaplaceExpr::Mixture { parts } = &exit {
            if parts.len() == 1 {
                let part = &parts[0];
                return LaplaceExpr::mixture(vec![(
                    part.weight.clone(),
                    LaplaceExpr::geometric(p, loop_law, part.law.clone()),
                )]);
            }
        }
        let loop_exp = match &loop_law {
            LaplaceExpr::ExponentialLimit { mean } => Some((Rational::one(), mean.clone())),
            LaplaceExpr::Mixture { parts } if parts.len() == 1 => match &parts[0].law {
                LaplaceExpr::ExponentialLimit { mean } => {
                    Some((parts[0].weight.clone(), mean.clone()))
                }
                _ => None,
            },
            _ => None,
        };
        if let (Some((w, m)), LaplaceExpr::ExponentialLimit { mean }) = (loop_exp, &exit) {
            if &m == mean {
                let stay = Rational::one() - &p * &w;
                return LaplaceExpr::mixture(vec![(
                    keep / &stay,
                    LaplaceExpr::exp_limit(m / stay),
                )]);
            }
        }
        LaplaceExpr::GeometricCompound {
            p,
            loop_law: Box::new(loop_law),
            exit: Box::new(exit),
        }
    }

    /// Rebuilds the tree through the smart constructors.
    pub fn canonical(&self) -> LaplaceExpr {
        match self {
            LaplaceExpr::Atom { atom } => LaplaceExpr::atom(atom.clone()),
            LaplaceExpr::ExponentialLimit { mean } => LaplaceExpr::exp_limit(mean.clone()),
            LaplaceExpr::Scale { w, child } => LaplaceExpr::scale(w, &child.canonical()),
            LaplaceExpr::Mixture { parts } => LaplaceExpr::mixture(
                parts
                    .iter()
                    .map(|p| (p.weight.clone(), p.law.canonical()))
                    .collect(),
            ),
            LaplaceExpr::Convolution { factors } => {
                LaplaceExpr::convolution(factors.iter().map(LaplaceExpr::canonical).collect())
            }
            LaplaceExpr::GeometricCompound { p, loop_law, exit } => {
                LaplaceExpr::geometric(p.clone(), loop_law.canonical(), exit.canonical())
            }
        }
    }

    /// Total mass, i.e. the transform at `s = 0`, exactly.
    pub fn mass(&self) -> Rational {
        match self {
            LaplaceExpr::Atom { .. } | LaplaceExpr::ExponentialLimit { .. } => Rational::one(),
            LaplaceExpr::Scale { child, .. } => child.mass(),
            LaplaceExpr::Mixture { parts } => parts
                .iter()
                .fold(Rational::zero(), |acc, p| acc + &p.weight * p.law.mass()),
            LaplaceExpr::Convolution { factors } => factors
                .iter()
                .fold(Rational::one(), |acc, f| acc * f.mass()),
            LaplaceExpr::GeometricCompound { p, loop_law, exit } => {
                exit.mass() * (Rational::one() - p) / (Rational::one() - p * loop_law.mass())
            }
        }
    }

    /// Unnormalized first moment `int t dG(t)`, exactly.
    pub fn mean_exact(&self) -> Rational {
        match self {
            LaplaceExpr::Atom { atom } => atom.mean(),
            LaplaceExpr::ExponentialLimit { mean } => mean.clone(),
            LaplaceExpr::Scale { w, child } => w * child.mean_exact(),
            LaplaceExpr::Mixture { parts } => parts
                .iter()
                .fold(Rational::zero(), |acc, p| acc + &p.weight * p.law.mean_exact()),
            LaplaceExpr::Convolution { factors } => {
                let masses: Vec<Rational> = factors.iter().map(LaplaceExpr::mass).collect();
                let mut total = Rational::zero();
                for (i, f) in factors.iter().enumerate() {
                    let mut term = f.mean_exact();
                    for (j, m) in masses.iter().enumerate() {
                        if i != j {
                            term *= m;
                        }
                    }
                    total += term;
                }
                total
            }
            LaplaceExpr::GeometricCompound { p, loop_law, exit } => {
                let keep = Rational::one() - p;
                let stay = Rational::one() - p * loop_law.mass();
                let numer =
                    exit.mean_exact() * &stay + exit.mass() * p * loop_law.mean_exact();
                keep * numer / (&stay * &stay)
            }
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            LaplaceExpr::Atom { atom } => atom.eval(s),
            LaplaceExpr::ExponentialLimit { mean } => 1.0 / (1.0 + to_f64(mean) * s),
            LaplaceExpr::Scale { w, child } => child.eval(to_f64(w) * s),
            LaplaceExpr::Mixture { parts } => parts
                .iter()
                .map(|p| to_f64(&p.weight) * p.law.eval(s))
                .sum(),
            LaplaceExpr::Convolution { factors } => factors.iter().map(|f| f.eval(s)).product(),
            LaplaceExpr::GeometricCompound { p, loop_law, exit } => {
                let p = to_f64(p);
                exit.eval(s) * (1.0 - p) / (1.0 - p * loop_law.eval(s))
            }
        }
    }

    /// The law conditioned on being proper: `self / mass`.
    pub fn normalized(&self) -> LaplaceExpr {
        let m = self.mass();
        if m.is_zero() {
            return self.clone();
        }
        LaplaceExpr::mixture(vec![(m.recip(), self.clone())])
    }

    /// Human-readable transform in the variable `s`.
    pub fn closed_form(&self) -> String {
        fn arg(w: &Rational) -> String {
            if w.is_one() {
                "s".into()
            } else {
                format!("{} s", format_rational(w))
            }
        }
        fn wrap(x: &LaplaceExpr) -> String {
            let inner = x.closed_form();
            if matches!(x, LaplaceExpr::Mixture { .. } | LaplaceExpr::GeometricCompound { .. }) {
                format!("({inner})")
            } else {
                inner
            }
        }
        match self {
            LaplaceExpr::Atom { atom } => match atom {
                LaplaceAtom::Dirac { at } if at.is_zero() => "1".into(),
                LaplaceAtom::Dirac { at } => format!("exp(-{})", arg(at)),
                LaplaceAtom::Exponential { mean } => format!("1/(1+{})", arg(mean)),
                LaplaceAtom::Uniform { width } => {
                    format!("(1-exp(-{0}))/({0})", arg(width))
                }
            },
            LaplaceExpr::ExponentialLimit { mean } => format!("1/(1+{})", arg(mean)),
            LaplaceExpr::Scale { w, child } => format!("[{}]({})", child.closed_form(), arg(w)),
            LaplaceExpr::Mixture { parts } if parts.is_empty() => "0".into(),
            LaplaceExpr::Mixture { parts } => parts
                .iter()
                .map(|p| {
                    if p.law.is_dirac_zero() {
                        format_rational(&p.weight)
                    } else if p.weight.is_one() {
                        p.law.closed_form()
                    } else {
                        format!("{}*{}", format_rational(&p.weight), wrap(&p.law))
                    }
                })
                .collect::<Vec<_>>()
                .join(" + "),
            LaplaceExpr::Convolution { factors } => factors
                .iter()
                .map(wrap)
                .collect::<Vec<_>>()
                .join("*"),
            LaplaceExpr::GeometricCompound { p, loop_law, exit } => {
                let keep = Rational::one() - p;
                format!(
                    "{}*{}/(1 - {}*{})",
                    format_rational(&keep),
                    wrap(exit),
                    format_rational(p),
                    wrap(loop_law)
                )
            }
        }
    }
}

impl fmt::Display for LaplaceExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.closed_form())
    }
}

pub fn lt_eval(x: &LaplaceExpr, s: f64) -> f64 {
    x.eval(s)
}

pub fn lt_mean(x: &LaplaceExpr) -> f64 {
    to_f64(&x.mean_exact())
}

/// Limiting law after aggregating the self-loops of a state.
///
/// With loop probability `p0 < 1` the result is a geometric compound of the
/// rescaled loop and exit laws; with `p0 = 1` it is exponential with mean `e_loop`.
pub fn lt_remove_virtual(
    p0: &Rational,
    phi_loop: &LaplaceExpr,
    phi_exit: &LaplaceExpr,
    e_loop: Option<&Rational>,
) -> Result<LaplaceExpr, LaplaceError> {
    if p0.is_negative() || p0 > &Rational::one() {
        return Err(LaplaceError::InvalidProbability(format_rational(p0)));
    }
    if p0.is_one() {
        return match e_loop {
            Some(m) if m.is_positive() => Ok(LaplaceExpr::exp_limit(m.clone())),
            _ => Err(LaplaceError::MissingMean),
        };
    }
    let keep = Rational::one() - p0;
    Ok(LaplaceExpr::geometric(
        p0.clone(),
        LaplaceExpr::scale(&keep, phi_loop),
        LaplaceExpr::scale(&keep, phi_exit),
    ))
}

/// `(1 - p) e_exit + p e_loop`, the limiting mean matching [`lt_remove_virtual`].
pub fn removed_mean(p0: &Rational, e_loop: &Rational, e_exit: &Rational) -> Rational {
    if p0.is_one() {
        return e_loop.clone();
    }
    (Rational::one() - p0) * e_exit + p0 * e_loop
}
