//! Pre-limit transition-time laws of original and reduced processes.
//!
//! A [`TimeLaw`] keeps the eps-dependent weights symbolic. [`NumLaw`] is its
//! instantiation at one eps, evaluated as the pair `(phi(s), 1 - phi(s))` so
//! that complements of transforms close to 1 keep full relative accuracy.

use std::collections::HashMap;
use std::sync::Arc;

use crate::asymptotics::{AsymError, ComparableFn};
use crate::model::SamplerKind;

/// Unnormalized law of a transition time at a generic eps.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeLaw {
    Sampler {
        kind: SamplerKind,
        scale: ComparableFn,
    },
    /// Geometric number of loops before the exit; `leave = 1 - stay`.
    Geometric {
        stay: ComparableFn,
        leave: ComparableFn,
        loop_law: Arc<TimeLaw>,
        exit: Arc<TimeLaw>,
    },
    /// Branches with weights summing to 1.
    Mixture {
        parts: Vec<(ComparableFn, Arc<TimeLaw>)>,
    },
    Convolution {
        factors: Vec<Arc<TimeLaw>>,
    },
}

/// A [`TimeLaw`] with all weights evaluated at one eps.
#[derive(Debug, Clone, PartialEq)]
pub enum NumLaw {
    Sampler {
        kind: SamplerKind,
        scale: f64,
    },
    Geometric {
        stay: f64,
        leave: f64,
        loop_law: Arc<NumLaw>,
        exit: Arc<NumLaw>,
    },
    Mixture {
        parts: Vec<(f64, Arc<NumLaw>)>,
    },
    Convolution {
        factors: Vec<Arc<NumLaw>>,
    },
}

impl TimeLaw {
    /// Evaluates every weight at `eps`, sharing repeated subtrees.
    pub fn at(self: &Arc<Self>, eps: f64) -> Result<Arc<NumLaw>, AsymError> {
        let mut memo = HashMap::new();
        instantiate(self, eps, &mut memo)
    }
}

fn instantiate(
    law: &Arc<TimeLaw>,
    eps: f64,
    memo: &mut HashMap<*const TimeLaw, Arc<NumLaw>>,
) -> Result<Arc<NumLaw>, AsymError> {
    let key = Arc::as_ptr(law);
    if let Some(done) = memo.get(&key) {
        return Ok(done.clone());
    }
    let out = Arc::new(match law.as_ref() {
        TimeLaw::Sampler { kind, scale } => NumLaw::Sampler {
            kind: *kind,
            scale: scale.eval(eps)?,
        },
        TimeLaw::Geometric {
            stay,
            leave,
            loop_law,
            exit,
        } => NumLaw::Geometric {
            stay: stay.eval(eps)?,
            leave: leave.eval(eps)?,
            loop_law: instantiate(loop_law, eps, memo)?,
            exit: instantiate(exit, eps, memo)?,
        },
        TimeLaw::Mixture { parts } => NumLaw::Mixture {
            parts: parts
                .iter()
                .map(|(w, l)| Ok((w.eval(eps)?, instantiate(l, eps, memo)?)))
                .collect::<Result<_, AsymError>>()?,
        },
        TimeLaw::Convolution { factors } => NumLaw::Convolution {
            factors: factors
                .iter()
                .map(|l| instantiate(l, eps, memo))
                .collect::<Result<_, AsymError>>()?,
        },
    });
    memo.insert(key, out.clone());
    Ok(out)
}

/// `1 - (1 - exp(-x))/x`, accurate for small `x`.
fn uniform_complement(x: f64) -> f64 {
    if x < 0.1 {
        let mut term = x / 2.0;
        let mut sum = 0.0;
        let mut k = 2.0;
        for _ in 0..12 {
            sum += term;
            term *= -x / (k + 1.0);
            k += 1.0;
        }
        sum
    } else {
        (x + (-x).exp_m1()) / x
    }
}

impl NumLaw {
    /// `(phi(s), 1 - phi(s))`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        match self {
            NumLaw::Sampler { kind, scale } => {
                let x = scale * s;
                match kind {
                    SamplerKind::Dirac => ((-x).exp(), -(-x).exp_m1()),
                    SamplerKind::Exponential => (1.0 / (1.0 + x), x / (1.0 + x)),
                    SamplerKind::Uniform => {
                        let c = uniform_complement(x);
                        (1.0 - c, c)
                    }
                }
            }
            NumLaw::Geometric {
                stay,
                leave,
                loop_law,
                exit,
            } => {
                let (_, cl) = loop_law.eval(s);
                let (pe, ce) = exit.eval(s);
                let denom = leave + stay * cl;
                (pe * leave / denom, (leave * ce + stay * cl) / denom)
            }
            NumLaw::Mixture { parts } => parts.iter().fold((0.0, 0.0), |(p, c), (w, l)| {
                let (pl, cl) = l.eval(s);
                (p + w * pl, c + w * cl)
            }),
            NumLaw::Convolution { factors } => factors.iter().fold((1.0, 0.0), |(p, c), l| {
                let (pl, cl) = l.eval(s);
                (p * pl, c + p * cl)
            }),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            NumLaw::Sampler { kind, scale } => match kind {
                SamplerKind::Dirac | SamplerKind::Exponential => *scale,
                SamplerKind::Uniform => scale / 2.0,
            },
            NumLaw::Geometric {
                stay,
                leave,
                loop_law,
                exit,
            } => exit.mean() + stay / leave * loop_law.mean(),
            NumLaw::Mixture { parts } => parts.iter().map(|(w, l)| w * l.mean()).sum(),
            NumLaw::Convolution { factors } => factors.iter().map(|l| l.mean()).sum(),
        }
    }
}
