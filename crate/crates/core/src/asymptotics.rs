//! Exact algebra of asymptotically comparable functions.
//!
//! A [`ComparableFn`] is a ratio of two signed generalized posynomials in the
//! perturbation parameter `eps`. Every term is a [`Monomial`]
//! `coeff * eps^b * exp(-c/eps) * (1 + ln(1/eps))^(-d)` with exact rational
//! coefficient and exponents. Sums, products and quotients stay inside the
//! representation, and the limit as `eps -> 0` is decided exactly by comparing
//! leading terms.
//!
//! ```
//! use hitreduce::asymptotics::{cf_limit, ComparableFn, ExtendedLimit, Monomial};
//! use hitreduce::rational::rat;
//!
//! // (eps + eps^2) / (2 eps) -> 1/2
//! let num = ComparableFn::posynomial(vec![
//!     Monomial::power(rat(1, 1), rat(1, 1)),
//!     Monomial::power(rat(1, 1), rat(2, 1)),
//! ]);
//! let den = ComparableFn::monomial(Monomial::power(rat(2, 1), rat(1, 1)));
//! let ratio = num.div(&den).unwrap();
//! assert_eq!(cf_limit(&ratio), ExtendedLimit::Finite(rat(1, 2)));
//! ```

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rational::{format_rational, parse_rational, rat, Rational};

/// Errors raised by the comparable-function algebra.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AsymError {
    #[error("exponential-rate terms and logarithmic terms cannot be mixed in one model")]
    FamilyMix,
    #[error("function evaluates to {value} at eps = {eps}, expected a positive value")]
    NonPositive { eps: f64, value: f64 },
    #[error("eps must lie in (0, 1], got {0}")]
    EpsOutOfRange(f64),
    #[error("division by the zero function")]
    DivisionByZero,
    #[error("the zero function has no leading term")]
    ZeroFunction,
    #[error("invalid monomial `{text}`: {reason}")]
    Syntax { text: String, reason: String },
}

/// Complete families of comparable functions supported by the representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Power-law leading terms.
    H1,
    /// Power laws with exponential factors `exp(-c/eps)`.
    H2,
    /// Power laws with logarithmic factors `(1 + ln(1/eps))^(-d)`.
    H3,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Family::H1 => "H1",
            Family::H2 => "H2",
            Family::H3 => "H3",
        };
        f.write_str(name)
    }
}

/// Limit of a nonnegative function as `eps -> 0`, in `[0, inf]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExtendedLimit {
    Zero,
    Finite(Rational),
    Infinite,
}

impl ExtendedLimit {
    /// Returns the limit as a rational, mapping `Zero` to `0`; `None` for `Infinite`.
    pub fn finite_value(&self) -> Option<Rational> {
        match self {
            ExtendedLimit::Zero => Some(Rational::zero()),
            ExtendedLimit::Finite(v) => Some(v.clone()),
            ExtendedLimit::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtendedLimit::Infinite)
    }

    /// Product rule: `Zero * Infinite` is indeterminate and returns `None`.
    pub fn mul(&self, other: &ExtendedLimit) -> Option<ExtendedLimit> {
        use ExtendedLimit::*;
        match (self, other) {
            (Zero, Infinite) | (Infinite, Zero) => None,
            (Zero, _) | (_, Zero) => Some(Zero),
            (Infinite, _) | (_, Infinite) => Some(Infinite),
            (Finite(a), Finite(b)) => Some(ExtendedLimit::from_rational(a * b)),
        }
    }

    fn from_rational(v: Rational) -> ExtendedLimit {
        if v.is_zero() {
            ExtendedLimit::Zero
        } else {
            ExtendedLimit::Finite(v)
        }
    }
}

impl fmt::Display for ExtendedLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedLimit::Zero => f.write_str("0"),
            ExtendedLimit::Finite(v) => f.write_str(&format_rational(v)),
            ExtendedLimit::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ExtendedLimit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// One term `coeff * eps^b * exp(-c/eps) * (1 + ln(1/eps))^(-d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub coeff: Rational,
    pub b: Rational,
    pub c: Rational,
    pub d: Rational,
}

type OrderKey = (Rational, Rational, Rational);

impl Monomial {
    pub fn new(coeff: Rational, b: Rational, c: Rational, d: Rational) -> Self {
        Monomial { coeff, b, c, d }
    }

    /// `coeff * eps^b`.
    pub fn power(coeff: Rational, b: Rational) -> Self {
        Monomial::new(coeff, b, Rational::zero(), Rational::zero())
    }

    pub fn constant(coeff: Rational) -> Self {
        Monomial::power(coeff, Rational::zero())
    }

    fn key(&self) -> OrderKey {
        (self.c.clone(), self.b.clone(), self.d.clone())
    }

    /// Compares asymptotic orders; `Greater` means `self` vanishes faster.
    pub fn cmp_order(&self, other: &Monomial) -> Ordering {
        self.c
            .cmp(&other.c)
            .then_with(|| self.b.cmp(&other.b))
            .then_with(|| self.d.cmp(&other.d))
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial {
            coeff: &self.coeff * &other.coeff,
            b: &self.b + &other.b,
            c: &self.c + &other.c,
            d: &self.d + &other.d,
        }
    }

    fn div(&self, other: &Monomial) -> Monomial {
        Monomial {
            coeff: &self.coeff / &other.coeff,
            b: &self.b - &other.b,
            c: &self.c - &other.c,
            d: &self.d - &other.d,
        }
    }

    /// Natural log of the eps-dependent factor, coefficient excluded.
    fn log_shape(&self, eps: f64) -> f64 {
        let mut acc = 0.0;
        if !self.b.is_zero() {
            acc += to_f64(&self.b) * eps.ln();
        }
        if !self.c.is_zero() {
            acc -= to_f64(&self.c) / eps;
        }
        if !self.d.is_zero() {
            acc -= to_f64(&self.d) * (1.0 - eps.ln()).ln();
        }
        acc
    }

    /// Parses `"a"`, `"a * e^b"`, `"a * e^b * exp(-c/e)"` or `"a * e^b * log^-d"`.
    pub fn parse(text: &str) -> Result<Monomial, AsymError> {
        let fail = |reason: &str| AsymError::Syntax {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let mut m = Monomial::constant(Rational::one());
        let mut saw_factor = false;
        for raw in text.split('*') {
            let factor = raw.trim();
            if factor.is_empty() {
                return Err(fail("empty factor"));
            }
            saw_factor = true;
            if factor == "e" {
                m.b += Rational::one();
            } else if let Some(exp) = factor.strip_prefix("e^") {
                let v = parse_rational(strip_parens(exp)).map_err(|e| fail(&e))?;
                m.b += v;
            } else if let Some(inner) = factor.strip_prefix("exp(") {
                let inner = inner
                    .strip_suffix(')')
                    .ok_or_else(|| fail("unclosed exp("))?;
                let rate = inner
                    .trim()
                    .strip_suffix("/e")
                    .ok_or_else(|| fail("exp argument must have the form -c/e"))?;
                let v = parse_rational(rate.trim()).map_err(|e| fail(&e))?;
                m.c -= v;
            } else if let Some(exp) = factor.strip_prefix("log^") {
                let v = parse_rational(strip_parens(exp)).map_err(|e| fail(&e))?;
                m.d -= v;
            } else {
                let v = parse_rational(factor).map_err(|e| fail(&e))?;
                m.coeff *= v;
            }
        }
        if !saw_factor {
            return Err(fail("empty monomial"));
        }
        Ok(m)
    }
}

fn strip_parens(s: &str) -> &str {
    let t = s.trim();
    t.strip_prefix('(')
        .and_then(|u| u.strip_suffix(')'))
        .unwrap_or(t)
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_rational(&self.coeff))?;
        if !self.b.is_zero() {
            write!(f, " * e^{}", format_rational(&self.b))?;
        }
        if !self.c.is_zero() {
            write!(f, " * exp({}/e)", format_rational(&-&self.c))?;
        }
        if !self.d.is_zero() {
            write!(f, " * log^{}", format_rational(&-&self.d))?;
        }
        Ok(())
    }
}

fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Canonical sum of monomials: sorted ascending by order, like terms merged, no zeros.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
struct Posy(Vec<Monomial>);

impl Posy {
    fn from_terms<I: IntoIterator<Item = Monomial>>(terms: I) -> Posy {
        let mut acc: BTreeMap<OrderKey, Rational> = BTreeMap::new();
        for t in terms {
            let e = acc.entry(t.key()).or_insert_with(Rational::zero);
            *e += t.coeff;
        }
        Posy(
            acc.into_iter()
                .filter(|(_, a)| !a.is_zero())
                .map(|((c, b, d), coeff)| Monomial { coeff, b, c, d })
                .collect(),
        )
    }

    fn one() -> Posy {
        Posy(vec![Monomial::constant(Rational::one())])
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn is_one(&self) -> bool {
        self.0.len() == 1 && self.0[0] == Monomial::constant(Rational::one())
    }

    fn lead(&self) -> Option<&Monomial> {
        self.0.first()
    }

    fn add(&self, other: &Posy) -> Posy {
        Posy::from_terms(self.0.iter().chain(other.0.iter()).cloned())
    }

    fn neg(&self) -> Posy {
        Posy(
            self.0
                .iter()
                .map(|m| Monomial {
                    coeff: -&m.coeff,
                    ..m.clone()
                })
                .collect(),
        )
    }

    fn mul(&self, other: &Posy) -> Posy {
        if self.is_one() {
            return other.clone();
        }
        if other.is_one() {
            return self.clone();
        }
        Posy::from_terms(
            self.0
                .iter()
                .flat_map(|a| other.0.iter().map(move |b| a.mul(b))),
        )
    }

    fn scale_by(&self, m: &Monomial) -> Posy {
        Posy(self.0.iter().map(|t| t.mul(m)).collect())
    }

    fn divide_by(&self, m: &Monomial) -> Posy {
        Posy(self.0.iter().map(|t| t.div(m)).collect())
    }

    /// If `self = k * other` for a rational `k`, returns `k`.
    fn ratio_to(&self, other: &Posy) -> Option<Rational> {
        if self.0.len() != other.0.len() || self.0.is_empty() {
            return None;
        }
        let k = &self.0[0].coeff / &other.0[0].coeff;
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            if a.key() != b.key() || a.coeff != &k * &b.coeff {
                return None;
            }
        }
        Some(k)
    }

    fn uses_exp(&self) -> bool {
        self.0.iter().any(|m| !m.c.is_zero())
    }

    fn uses_log(&self) -> bool {
        self.0.iter().any(|m| !m.d.is_zero())
    }

    /// Returns `(log of leading shape, leading coefficient, relative sum)` so that
    /// the value is `coeff * exp(log) * rel`.
    fn eval_parts(&self, eps: f64) -> Option<(f64, f64, f64)> {
        let lead = self.lead()?;
        let lead_log = lead.log_shape(eps);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for (i, m) in self.0.iter().enumerate() {
            let term = if i == 0 {
                1.0
            } else {
                to_f64(&(&m.coeff / &lead.coeff)) * (m.log_shape(eps) - lead_log).exp()
            };
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        Some((lead_log, to_f64(&lead.coeff), sum + comp))
    }
}

/// Dense polynomial in `t = eps^(1/step)`, coefficients ascending.
type Dense = Vec<Rational>;

fn trim(p: &mut Dense) {
    while p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
}

/// Remainder of `a` modulo the monic `m`, and the quotient.
fn div_rem(a: &Dense, m: &Dense) -> (Dense, Dense) {
    let mut r = a.clone();
    let dm = m.len() - 1;
    if r.len() <= dm {
        return (Vec::new(), r);
    }
    let mut q = vec![Rational::zero(); r.len() - dm];
    for k in (0..q.len()).rev() {
        let c = r[k + dm].clone();
        if c.is_zero() {
            continue;
        }
        for (i, mi) in m.iter().enumerate() {
            r[k + i] -= &c * mi;
        }
        q[k] = c;
    }
    trim(&mut r);
    (q, r)
}

fn monic(mut p: Dense) -> Dense {
    let lead = p.last().expect("nonzero polynomial").clone();
    for c in &mut p {
        *c /= &lead;
    }
    p
}

fn gcd(a: &Dense, b: &Dense) -> Dense {
    let (mut x, mut y) = (monic(a.clone()), monic(b.clone()));
    if x.len() < y.len() {
        std::mem::swap(&mut x, &mut y);
    }
    while y.len() > 1 {
        let (_, r) = div_rem(&x, &y);
        if r.is_empty() {
            return y;
        }
        x = std::mem::replace(&mut y, monic(r));
    }
    vec![Rational::one()]
}

/// Primes just below powers of two, used for modular gcds.
const PRIMES: [u64; 8] = [
    (1 << 61) - 1,
    (1 << 62) - 57,
    (1 << 63) - 25,
    (1 << 60) - 93,
    (1 << 59) - 55,
    (1 << 58) - 27,
    (1 << 57) - 13,
    (1 << 56) - 5,
];

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn inv_mod(a: u64, p: u64) -> u64 {
    let (mut base, mut e, mut acc) = (a, p - 2, 1u64);
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        e >>= 1;
    }
    acc
}

/// Image mod `p` after clearing denominators; `None` if the leading coefficient vanishes.
fn reduce_mod(poly: &Dense, p: u64) -> Option<Vec<u64>> {
    let scale = poly
        .iter()
        .fold(num::BigInt::one(), |acc, c| num::Integer::lcm(&acc, c.denom()));
    let modulus = num::BigInt::from(p);
    let image: Vec<u64> = poly
        .iter()
        .map(|c| {
            let v = (c.numer() * (&scale / c.denom())) % &modulus;
            let v = if v.is_negative() { v + &modulus } else { v };
            v.to_u64().expect("reduced residue")
        })
        .collect();
    (*image.last()? != 0).then_some(image)
}

/// Monic gcd mod `p`, coefficients ascending.
fn gcd_mod(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let norm = |mut v: Vec<u64>| {
        while v.last() == Some(&0) {
            v.pop();
        }
        v
    };
    let (mut x, mut y) = (norm(a.to_vec()), norm(b.to_vec()));
    if x.len() < y.len() {
        std::mem::swap(&mut x, &mut y);
    }
    while !y.is_empty() {
        let inv = inv_mod(*y.last().expect("nonzero"), p);
        while x.len() >= y.len() {
            let c = mul_mod(*x.last().expect("nonzero"), inv, p);
            let off = x.len() - y.len();
            for (i, yi) in y.iter().enumerate() {
                let t = mul_mod(c, *yi, p);
                x[off + i] = (x[off + i] + p - t) % p;
            }
            x = norm(x);
        }
        std::mem::swap(&mut x, &mut y);
    }
    let inv = inv_mod(*x.last().expect("nonzero gcd"), p);
    x.into_iter().map(|c| mul_mod(c, inv, p)).collect()
}

/// Smallest fraction congruent to `u` mod `m`, if it is small enough to be unique.
fn reconstruct(u: &num::BigInt, m: &num::BigInt) -> Option<Rational> {
    let bound = (m / 2u32).sqrt();
    let (mut r0, mut r1) = (m.clone(), u.clone());
    let (mut t0, mut t1) = (num::BigInt::zero(), num::BigInt::one());
    while r1 > bound {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        let t2 = &t0 - &q * &t1;
        (r0, r1) = (r1, r2);
        (t0, t1) = (t1, t2);
    }
    if t1.is_zero() || t1.abs() > bound {
        return None;
    }
    Some(Rational::new(r1, t1))
}

/// Candidate rational gcd from images mod several primes; `Some(vec![1])` when coprime.
fn lift_gcd(a: &Dense, b: &Dense) -> Option<Dense> {
    let mut modulus = num::BigInt::one();
    let mut residues: Vec<num::BigInt> = Vec::new();
    for &p in &PRIMES {
        let (Some(x), Some(y)) = (reduce_mod(a, p), reduce_mod(b, p)) else {
            continue;
        };
        let g = gcd_mod(&x, &y, p);
        if g.len() < 2 {
            return Some(vec![Rational::one()]);
        }
        if !residues.is_empty() && g.len() != residues.len() {
            if g.len() < residues.len() {
                modulus = num::BigInt::one();
                residues.clear();
            } else {
                continue;
            }
        }
        let pb = num::BigInt::from(p);
        if residues.is_empty() {
            residues = g.iter().map(|&c| num::BigInt::from(c)).collect();
        } else {
            let inv = num::BigInt::from(inv_mod((&modulus % &pb).to_u64().expect("residue"), p));
            for (r, &c) in residues.iter_mut().zip(&g) {
                let diff = (num::BigInt::from(c) - (&*r % &pb)) % &pb;
                let diff = if diff.is_negative() { diff + &pb } else { diff };
                *r += &modulus * ((diff * &inv) % &pb);
            }
        }
        modulus *= &pb;
        if let Some(cand) = residues.iter().map(|r| reconstruct(r, &modulus)).collect::<Option<Dense>>() {
            let (_, ra) = div_rem(a, &cand);
            let (_, rb) = div_rem(b, &cand);
            if ra.is_empty() && rb.is_empty() {
                return Some(cand);
            }
        }
    }
    None
}

impl Posy {
    fn is_power_law(&self) -> bool {
        self.0.iter().all(|m| m.c.is_zero() && m.d.is_zero())
    }

    fn to_dense(&self, shift: &Rational, step: &num::BigInt) -> Dense {
        let mut out = Vec::new();
        for m in &self.0 {
            let k = ((&m.b - shift) * Rational::from_integer(step.clone())).to_integer();
            let k = k.to_usize().expect("small degree");
            if out.len() <= k {
                out.resize(k + 1, Rational::zero());
            }
            out[k] = m.coeff.clone();
        }
        out
    }

    fn from_dense(p: &Dense, shift: &Rational, step: &num::BigInt) -> Posy {
        let step = Rational::from_integer(step.clone());
        Posy::from_terms(p.iter().enumerate().filter(|(_, c)| !c.is_zero()).map(|(k, c)| {
            Monomial::power(c.clone(), shift + Rational::from_integer(k.into()) / &step)
        }))
    }

    fn min_exponent(&self) -> Rational {
        self.0.iter().map(|m| m.b.clone()).min().expect("nonzero")
    }
}

/// Cancels the polynomial gcd of two power-law posynomials.
fn cancel_common(num: Posy, den: Posy) -> (Posy, Posy) {
    if num.0.len() < 2 || den.0.len() < 2 || !num.is_power_law() || !den.is_power_law() {
        return (num, den);
    }
    let step = num
        .0
        .iter()
        .chain(den.0.iter())
        .fold(num::BigInt::one(), |acc, m| num::Integer::lcm(&acc, m.b.denom()));
    let (sn, sd) = (num.min_exponent(), den.min_exponent());
    let (pn, pd) = (num.to_dense(&sn, &step), den.to_dense(&sd, &step));
    let g = lift_gcd(&pn, &pd).unwrap_or_else(|| gcd(&pn, &pd));
    if g.len() < 2 {
        return (num, den);
    }
    let (qn, _) = div_rem(&pn, &g);
    let (qd, _) = div_rem(&pd, &g);
    (Posy::from_dense(&qn, &sn, &step), Posy::from_dense(&qd, &sd, &step))
}

/// An eps-dependent function represented as `numerator / denominator`.
///
/// The zero function is allowed and marks structural zeros.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComparableFn {
    num: Posy,
    den: Posy,
}

impl ComparableFn {
    fn from_parts(num: Posy, den: Posy) -> Result<ComparableFn, AsymError> {
        if den.is_zero() {
            return Err(AsymError::DivisionByZero);
        }
        if (num.uses_exp() || den.uses_exp()) && (num.uses_log() || den.uses_log()) {
            return Err(AsymError::FamilyMix);
        }
        Ok(ComparableFn::normalized(num, den))
    }

    fn normalized(num: Posy, den: Posy) -> ComparableFn {
        if num.is_zero() {
            return ComparableFn::zero();
        }
        if den.is_one() {
            return ComparableFn { num, den };
        }
        if num == den {
            return ComparableFn::one();
        }
        if let Some(k) = num.ratio_to(&den) {
            return ComparableFn {
                num: Posy::from_terms([Monomial::constant(k)]),
                den: Posy::one(),
            };
        }
        let (num, den) = cancel_common(num, den);
        let lead = den.lead().expect("nonzero denominator").clone();
        if lead == Monomial::constant(Rational::one()) {
            return ComparableFn { num, den };
        }
        ComparableFn {
            num: num.divide_by(&lead),
            den: den.divide_by(&lead),
        }
    }

    pub fn zero() -> ComparableFn {
        ComparableFn {
            num: Posy::default(),
            den: Posy::one(),
        }
    }

    pub fn one() -> ComparableFn {
        ComparableFn::constant(Rational::one())
    }

    pub fn constant(value: Rational) -> ComparableFn {
        ComparableFn::monomial(Monomial::constant(value))
    }

    pub fn monomial(m: Monomial) -> ComparableFn {
        ComparableFn::normalized(Posy::from_terms([m]), Posy::one())
    }

    /// A posynomial with denominator 1.
    pub fn posynomial(terms: Vec<Monomial>) -> ComparableFn {
        ComparableFn::normalized(Posy::from_terms(terms), Posy::one())
    }

    /// Builds `num / den` from monomial lists, canonicalizing both.
    pub fn ratio(num: Vec<Monomial>, den: Vec<Monomial>) -> Result<ComparableFn, AsymError> {
        ComparableFn::from_parts(Posy::from_terms(num), Posy::from_terms(den))
    }

    /// `eps^b`.
    pub fn power(b: Rational) -> ComparableFn {
        ComparableFn::monomial(Monomial::power(Rational::one(), b))
    }

    pub fn numerator(&self) -> &[Monomial] {
        &self.num.0
    }

    pub fn denominator(&self) -> &[Monomial] {
        &self.den.0
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num.is_one() && self.den.is_one()
    }

    /// The family used by this function, `None` when it is purely power-law.
    pub fn family_hint(&self) -> Option<Family> {
        if self.num.uses_exp() || self.den.uses_exp() {
            Some(Family::H2)
        } else if self.num.uses_log() || self.den.uses_log() {
            Some(Family::H3)
        } else {
            None
        }
    }

    fn check_pair(&self, other: &ComparableFn) -> Result<(), AsymError> {
        match (self.family_hint(), other.family_hint()) {
            (Some(a), Some(b)) if a != b => Err(AsymError::FamilyMix),
            _ => Ok(()),
        }
    }

    pub fn add(&self, other: &ComparableFn) -> Result<ComparableFn, AsymError> {
        self.check_pair(other)?;
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        if self.den == other.den {
            return ComparableFn::from_parts(self.num.add(&other.num), self.den.clone());
        }
        if other.den.is_one() {
            return ComparableFn::from_parts(
                self.num.add(&other.num.mul(&self.den)),
                self.den.clone(),
            );
        }
        if self.den.is_one() {
            return ComparableFn::from_parts(
                self.num.mul(&other.den).add(&other.num),
                other.den.clone(),
            );
        }
        ComparableFn::from_parts(
            self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            self.den.mul(&other.den),
        )
    }

    pub fn neg(&self) -> ComparableFn {
        ComparableFn {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn sub(&self, other: &ComparableFn) -> Result<ComparableFn, AsymError> {
        self.add(&other.neg())
    }

    /// `1 - self`.
    pub fn one_minus(&self) -> Result<ComparableFn, AsymError> {
        ComparableFn::from_parts(self.den.add(&self.num.neg()), self.den.clone())
    }

    pub fn mul(&self, other: &ComparableFn) -> Result<ComparableFn, AsymError> {
        self.check_pair(other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(ComparableFn::zero());
        }
        if self.num == other.den {
            return ComparableFn::from_parts(other.num.clone(), self.den.clone());
        }
        if other.num == self.den {
            return ComparableFn::from_parts(self.num.clone(), other.den.clone());
        }
        ComparableFn::from_parts(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    pub fn recip(&self) -> Result<ComparableFn, AsymError> {
        if self.is_zero() {
            return Err(AsymError::DivisionByZero);
        }
        ComparableFn::from_parts(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, other: &ComparableFn) -> Result<ComparableFn, AsymError> {
        self.check_pair(other)?;
        self.mul(&other.recip()?)
    }

    pub fn scale(&self, k: &Rational) -> ComparableFn {
        if k.is_zero() {
            return ComparableFn::zero();
        }
        ComparableFn {
            num: self.num.scale_by(&Monomial::constant(k.clone())),
            den: self.den.clone(),
        }
    }

    /// Canonical form; construction already canonicalizes, so this is a rebuild.
    pub fn canonicalize(&self) -> ComparableFn {
        ComparableFn::normalized(
            Posy::from_terms(self.num.0.iter().cloned()),
            Posy::from_terms(self.den.0.iter().cloned()),
        )
    }

    pub fn limit(&self) -> ExtendedLimit {
        cf_limit(self)
    }

    pub fn leading(&self) -> Result<Monomial, AsymError> {
        cf_leading(self)
    }

    pub fn eval(&self, eps: f64) -> Result<f64, AsymError> {
        cf_eval(self, eps)
    }

    /// Value at `eps` without the positivity check; zero function gives `0`.
    pub fn eval_signed(&self, eps: f64) -> f64 {
        let Some((ln, an, rn)) = self.num.eval_parts(eps) else {
            return 0.0;
        };
        let (ld, ad, rd) = self.den.eval_parts(eps).expect("nonzero denominator");
        (an / ad) * (ln - ld).exp() * (rn / rd)
    }

    /// Leading-term positivity plus sampled positivity on `(0, 1)`; at `eps = 1`
    /// the value may vanish.
    pub fn check_positive(&self) -> Result<(), AsymError> {
        if self.is_zero() {
            return Err(AsymError::ZeroFunction);
        }
        for lead in [self.num.lead(), self.den.lead()].into_iter().flatten() {
            if !lead.coeff.is_positive() {
                return Err(AsymError::NonPositive {
                    eps: 0.0,
                    value: to_f64(&lead.coeff),
                });
            }
        }
        for eps in [0.1, 0.01, 0.001] {
            let value = self.eval_signed(eps);
            if !(value > 0.0) {
                return Err(AsymError::NonPositive { eps, value });
            }
        }
        let at_one = self.eval_signed(1.0);
        if at_one < -1e-12 || at_one.is_nan() {
            return Err(AsymError::NonPositive {
                eps: 1.0,
                value: at_one,
            });
        }
        Ok(())
    }
}

impl fmt::Display for ComparableFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn posy(p: &Posy, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if p.is_zero() {
                return f.write_str("0");
            }
            for (i, m) in p.0.iter().enumerate() {
                if i > 0 {
                    f.write_str(" + ")?;
                }
                write!(f, "{m}")?;
            }
            Ok(())
        }
        if self.den.is_one() {
            return posy(&self.num, f);
        }
        f.write_str("(")?;
        posy(&self.num, f)?;
        f.write_str(") / (")?;
        posy(&self.den, f)?;
        f.write_str(")")
    }
}

pub fn cf_add(f: &ComparableFn, g: &ComparableFn) -> Result<ComparableFn, AsymError> {
    f.add(g)
}

pub fn cf_mul(f: &ComparableFn, g: &ComparableFn) -> Result<ComparableFn, AsymError> {
    f.mul(g)
}

pub fn cf_div(f: &ComparableFn, g: &ComparableFn) -> Result<ComparableFn, AsymError> {
    f.div(g)
}

/// Limit as `eps -> 0` decided by the leading terms of numerator and denominator.
pub fn cf_limit(f: &ComparableFn) -> ExtendedLimit {
    let Some(n) = f.num.lead() else {
        return ExtendedLimit::Zero;
    };
    let d = f.den.lead().expect("nonzero denominator");
    match n.cmp_order(d) {
        Ordering::Greater => ExtendedLimit::Zero,
        Ordering::Less => ExtendedLimit::Infinite,
        Ordering::Equal => ExtendedLimit::from_rational(&n.coeff / &d.coeff),
    }
}

/// Leading monomial `a eps^b exp(-c/eps) (1 + ln(1/eps))^(-d)` of `f`.
pub fn cf_leading(f: &ComparableFn) -> Result<Monomial, AsymError> {
    let n = f.num.lead().ok_or(AsymError::ZeroFunction)?;
    let d = f.den.lead().expect("nonzero denominator");
    Ok(n.div(d))
}

/// Numeric value at `0 < eps <= 1`.
///
/// Terms are evaluated relative to the leading term in log space, so
/// exponentially small factors do not underflow before they cancel.
pub fn cf_eval(f: &ComparableFn, eps: f64) -> Result<f64, AsymError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(AsymError::EpsOutOfRange(eps));
    }
    let value = f.eval_signed(eps);
    if !(value > 0.0) || !value.is_finite() {
        return Err(AsymError::NonPositive { eps, value });
    }
    Ok(value)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MonomialLit {
    Text(String),
    Parts {
        a: String,
        #[serde(default)]
        b: Option<String>,
        #[serde(default)]
        c: Option<String>,
        #[serde(default)]
        d: Option<String>,
    },
}

impl MonomialLit {
    fn to_monomial(&self) -> Result<Monomial, AsymError> {
        match self {
            MonomialLit::Text(t) => Monomial::parse(t),
            MonomialLit::Parts { a, b, c, d } => {
                let field = |s: &Option<String>| -> Result<Rational, AsymError> {
                    match s {
                        None => Ok(Rational::zero()),
                        Some(t) => parse_rational(t).map_err(|reason| AsymError::Syntax {
                            text: t.clone(),
                            reason,
                        }),
                    }
                };
                Ok(Monomial::new(
                    parse_rational(a).map_err(|reason| AsymError::Syntax {
                        text: a.clone(),
                        reason,
                    })?,
                    field(b)?,
                    field(c)?,
                    field(d)?,
                ))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FnLit {
    num: Vec<MonomialLit>,
    #[serde(default = "default_den")]
    den: Vec<MonomialLit>,
}

fn default_den() -> Vec<MonomialLit> {
    vec![MonomialLit::Parts {
        a: "1".into(),
        b: Some("0".into()),
        c: None,
        d: None,
    }]
}

impl Serialize for ComparableFn {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let lit = |p: &Posy| p.0.iter().map(|m| MonomialLit::Text(m.to_string())).collect();
        FnLit {
            num: lit(&self.num),
            den: lit(&self.den),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComparableFn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let lit = FnLit::deserialize(d)?;
        let conv = |v: &[MonomialLit]| -> Result<Vec<Monomial>, AsymError> {
            v.iter().map(MonomialLit::to_monomial).collect()
        };
        let num = conv(&lit.num).map_err(serde::de::Error::custom)?;
        let den = conv(&lit.den).map_err(serde::de::Error::custom)?;
        ComparableFn::ratio(num, den).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Monomial {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Monomial", 4)?;
        st.serialize_field("a", &format_rational(&self.coeff))?;
        st.serialize_field("b", &format_rational(&self.b))?;
        st.serialize_field("c", &format_rational(&self.c))?;
        st.serialize_field("d", &format_rational(&self.d))?;
        st.end()
    }
}

/// `eps^b` with a rational exponent given as numerator and denominator.
pub fn eps_pow(num: i64, den: i64) -> ComparableFn {
    ComparableFn::power(rat(num, den))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Rational {
        rat(1, 2)
    }

    #[test]
    fn like_terms_merge() {
        let m = Monomial::power(rat(3, 1), rat(1, 1));
        let f = ComparableFn::monomial(m.clone());
        let sum = f.add(&f).unwrap();
        assert_eq!(sum.numerator(), &[Monomial::power(rat(6, 1), rat(1, 1))]);
    }

    #[test]
    fn escape_probability_sum_is_sorted() {
        let a = ComparableFn::monomial(Monomial::power(half(), rat(1, 1)));
        let b = ComparableFn::monomial(Monomial::power(half(), rat(0, 1)));
        let s = cf_add(&a, &b).unwrap();
        assert_eq!(
            s.numerator(),
            &[
                Monomial::power(half(), rat(0, 1)),
                Monomial::power(half(), rat(1, 1))
            ]
        );
    }

    #[test]
    fn equal_powers_give_half() {
        let a = ComparableFn::monomial(Monomial::power(half(), rat(1, 1)));
        let total = a.add(&a).unwrap();
        assert_eq!(cf_limit(&a.div(&total).unwrap()), ExtendedLimit::Finite(half()));
    }

    #[test]
    fn exponential_factor_dominates() {
        let f = ComparableFn::monomial(Monomial::new(
            rat(1, 1),
            rat(-3, 1),
            rat(2, 1),
            rat(0, 1),
        ));
        assert_eq!(cf_limit(&f), ExtendedLimit::Zero);
    }

    #[test]
    fn continuous_limit() {
        let den = ComparableFn::posynomial(vec![
            Monomial::power(rat(1, 1), rat(1, 1)),
            Monomial::constant(rat(1, 1)),
        ]);
        let f = ComparableFn::constant(rat(2, 1)).div(&den).unwrap();
        assert_eq!(cf_limit(&f), ExtendedLimit::Finite(rat(2, 1)));
        assert_eq!(cf_leading(&f).unwrap(), Monomial::constant(rat(2, 1)));
    }

    #[test]
    fn one_minus_cancels_exactly() {
        let p = ComparableFn::posynomial(vec![
            Monomial::constant(rat(1, 1)),
            Monomial::power(rat(-1, 1), rat(1, 1)),
        ]);
        let q = p.one_minus().unwrap();
        assert_eq!(q, ComparableFn::power(rat(1, 1)));
    }

    #[test]
    fn eval_small_values() {
        let f = ComparableFn::monomial(Monomial::power(half(), rat(1, 1)));
        assert!((cf_eval(&f, 0.01).unwrap() - 0.005).abs() < 1e-15);
        let stay = ComparableFn::posynomial(vec![
            Monomial::constant(rat(1, 1)),
            Monomial::power(rat(-1, 2), rat(1, 1)),
            Monomial::power(rat(-1, 2), rat(1, 1)),
        ]);
        assert!((cf_eval(&stay, 0.1).unwrap() - 0.9).abs() < 1e-15);
        assert!(cf_eval(&f, 0.0).is_err());
        assert!(cf_eval(&f.neg(), 0.5).is_err());
    }

    #[test]
    fn underflowing_factors_cancel_in_ratios() {
        let tiny = ComparableFn::monomial(Monomial::new(
            rat(1, 1),
            rat(0, 1),
            rat(1, 1),
            rat(0, 1),
        ));
        let twice = tiny.scale(&rat(2, 1));
        let r = tiny.div(&twice.add(&tiny).unwrap()).unwrap();
        assert!((cf_eval(&r, 1e-4).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn family_mix_rejected() {
        let e = ComparableFn::monomial(Monomial::new(rat(1, 1), rat(0, 1), rat(1, 1), rat(0, 1)));
        let l = ComparableFn::monomial(Monomial::new(rat(1, 1), rat(0, 1), rat(0, 1), rat(1, 1)));
        assert_eq!(e.add(&l), Err(AsymError::FamilyMix));
        assert_eq!(e.mul(&l), Err(AsymError::FamilyMix));
    }

    #[test]
    fn monomial_syntax_round_trip() {
        for text in [
            "1/2 * e^1",
            "3",
            "-1/2 * e^-3/2",
            "2 * e^1 * exp(-3/e)",
            "5 * log^-2",
        ] {
            let m = Monomial::parse(text).unwrap();
            assert_eq!(Monomial::parse(&m.to_string()).unwrap(), m, "{text}");
        }
        assert!(Monomial::parse("2 * q^3").is_err());
        assert!(Monomial::parse("exp(-1)").is_err());
    }

    #[test]
    fn json_den_defaults_to_one() {
        let f: ComparableFn = serde_json::from_str(r#"{"num": ["1/2 * e^1"]}"#).unwrap();
        assert_eq!(f, ComparableFn::monomial(Monomial::power(half(), rat(1, 1))));
        let g: ComparableFn =
            serde_json::from_str(r#"{"num": [{"a": "2", "b": "1"}], "den": ["4 * e^1"]}"#)
                .unwrap();
        assert_eq!(g, ComparableFn::constant(half()));
    }

    #[test]
    fn positivity_check_allows_vanishing_at_one() {
        let stay = ComparableFn::posynomial(vec![
            Monomial::constant(rat(1, 1)),
            Monomial::power(rat(-1, 2), rat(1, 1)),
            Monomial::power(rat(-1, 2), rat(0, 1)),
        ]);
        assert!(stay.check_positive().is_ok());
        let bad = ComparableFn::posynomial(vec![
            Monomial::constant(rat(1, 1)),
            Monomial::power(rat(-2, 1), rat(1, 2)),
        ]);
        assert!(bad.check_positive().is_err());
    }

    fn poly(terms: &[(i64, i64, i64)]) -> ComparableFn {
        ComparableFn::posynomial(
            terms
                .iter()
                .map(|&(c, b, d)| Monomial::power(rat(c, 1), rat(b, d)))
                .collect(),
        )
    }

    #[test]
    fn common_factors_cancel() {
        let num = poly(&[(1, 0, 1), (-1, 1, 1)]);
        let den = poly(&[(1, 0, 1), (-1, 1, 2)]);
        let q = num.div(&den).unwrap();
        assert_eq!(q, poly(&[(1, 0, 1), (1, 1, 2)]));
    }

    #[test]
    fn cancellation_survives_large_coefficients() {
        let big = |k: i64| poly(&[(1, 0, 1), (k, 1, 1), (k * k + 1, 3, 2)]);
        let a = big(1_000_003).mul(&big(999_983)).unwrap();
        let b = big(1_000_003).mul(&poly(&[(7, 0, 1), (1, 2, 1)])).unwrap();
        assert_eq!(a.div(&b).unwrap(), big(999_983).div(&poly(&[(7, 0, 1), (1, 2, 1)])).unwrap());
        assert_eq!(a.div(&b).unwrap().denominator().len(), 2);
    }

    #[test]
    fn coprime_ratio_is_left_alone() {
        let num = poly(&[(1, 0, 1), (1, 1, 1)]);
        let den = poly(&[(1, 0, 1), (2, 1, 1)]);
        let q = num.div(&den).unwrap();
        assert_eq!(q.numerator().len(), 2);
        assert_eq!(q.denominator().len(), 2);
    }
}
