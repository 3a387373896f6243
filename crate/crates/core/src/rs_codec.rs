//! Generalized Reed–Solomon codes in evaluation form, with joint
//! errors-and-erasures decoding.
//!
//! A message `m_0..m_{K-1}` is the coefficient vector of a polynomial of
//! degree `< K`; the codeword is its evaluation at the `N` code points. The
//! product-matrix codes reduce both repair and reconstruction to decoding
//! such codes, so this is the single decoding engine of the crate.
//!
//! Decoding uses Gao's algorithm on the non-erased coordinates: interpolate
//! the received word, run the extended Euclidean algorithm against the
//! vanishing polynomial until the remainder degree drops below `(N' + K)/2`,
//! and divide. Every success is re-encoded and checked against the
//! unique-decoding radius before it is returned.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::galois::{Elem, Field};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("expected {expected} symbols, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("evaluation points must be pairwise distinct (duplicate at index {0})")]
    DuplicatePoint(usize),
    #[error("evaluation point at index {0} is zero")]
    ZeroPoint(usize),
    #[error("dimension {dim} is invalid for length {len}")]
    BadDimension { dim: usize, len: usize },
    #[error("{erasures} erasures exceed the redundancy {redundancy}")]
    TooManyErasures { erasures: usize, redundancy: usize },
    #[error("erasure index {0} out of range")]
    ErasureOutOfRange(usize),
    #[error("no codeword within the decoding radius")]
    DecodeFailure,
}

/// Evaluation code of length `N = points.len()` and dimension `K`.
#[derive(Clone, Debug)]
pub struct EvalCode {
    field: Field,
    points: Vec<Elem>,
    dim: usize,
}

/// A successful decode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub codeword: Vec<Elem>,
    /// Polynomial coefficients, length `K`.
    pub message: Vec<Elem>,
    /// Non-erased positions where the received word differs from `codeword`.
    pub error_positions: BTreeSet<usize>,
    pub erasure_positions: BTreeSet<usize>,
}

impl EvalCode {
    pub fn new(field: &Field, points: Vec<Elem>, dim: usize) -> Result<EvalCode, CodecError> {
        if dim == 0 || dim > points.len() {
            return Err(CodecError::BadDimension {
                dim,
                len: points.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for (i, &p) in points.iter().enumerate() {
            if p.is_zero() {
                return Err(CodecError::ZeroPoint(i));
            }
            if !seen.insert(p) {
                return Err(CodecError::DuplicatePoint(i));
            }
        }
        Ok(EvalCode {
            field: field.clone(),
            points,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Elem] {
        &self.points
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    /// Largest `t` with `2t + erasures <= N - K`.
    pub fn radius(&self, erasures: usize) -> Option<usize> {
        (self.len() - self.dim).checked_sub(erasures).map(|r| r / 2)
    }

    pub fn encode(&self, message: &[Elem]) -> Result<Vec<Elem>, CodecError> {
        if message.len() != self.dim {
            return Err(CodecError::LengthMismatch {
                expected: self.dim,
                got: message.len(),
            });
        }
        Ok(self
            .points
            .iter()
            .map(|&x| poly_eval(&self.field, message, x))
            .collect())
    }

    /// Decodes with an explicit erasure set; erased entries of `received`
    /// are ignored.
    pub fn decode_with_erasures(
        &self,
        received: &[Elem],
        erasures: &BTreeSet<usize>,
    ) -> Result<DecodeOutcome, CodecError> {
        if received.len() != self.len() {
            return Err(CodecError::LengthMismatch {
                expected: self.len(),
                got: received.len(),
            });
        }
        if let Some(&bad) = erasures.iter().find(|&&i| i >= self.len()) {
            return Err(CodecError::ErasureOutOfRange(bad));
        }
        let word: Vec<Option<Elem>> = received
            .iter()
            .enumerate()
            .map(|(i, &r)| (!erasures.contains(&i)).then_some(r))
            .collect();
        self.decode(&word)
    }

    /// Decodes a received word where `None` marks an erasure.
    ///
    /// Succeeds with the unique codeword whenever
    /// `2 * errors + erasures <= N - K`.
    pub fn decode(&self, received: &[Option<Elem>]) -> Result<DecodeOutcome, CodecError> {
        if received.len() != self.len() {
            return Err(CodecError::LengthMismatch {
                expected: self.len(),
                got: received.len(),
            });
        }
        let f = &self.field;
        let mut xs = Vec::with_capacity(self.len());
        let mut ys = Vec::with_capacity(self.len());
        let mut erasure_positions = BTreeSet::new();
        for (i, r) in received.iter().enumerate() {
            match r {
                Some(y) => {
                    xs.push(self.points[i]);
                    ys.push(*y);
                }
                None => {
                    erasure_positions.insert(i);
                }
            }
        }
        let redundancy = self.len() - self.dim;
        if erasure_positions.len() > redundancy {
            return Err(CodecError::TooManyErasures {
                erasures: erasure_positions.len(),
                redundancy,
            });
        }

        let message = gao_decode(f, &xs, &ys, self.dim).ok_or(CodecError::DecodeFailure)?;
        let codeword = self.encode(&message)?;
        let error_positions: BTreeSet<usize> = received
            .iter()
            .enumerate()
            .filter(|(i, r)| matches!(r, Some(y) if *y != codeword[*i]))
            .map(|(i, _)| i)
            .collect();
        if 2 * error_positions.len() + erasure_positions.len() > redundancy {
            return Err(CodecError::DecodeFailure);
        }
        Ok(DecodeOutcome {
            codeword,
            message,
            error_positions,
            erasure_positions,
        })
    }
}

/// Gao decoding over the given (unerased) coordinates. Returns the message
/// polynomial padded to `k` coefficients.
fn gao_decode(f: &Field, xs: &[Elem], ys: &[Elem], k: usize) -> Option<Vec<Elem>> {
    let n = xs.len();
    if n < k {
        return None;
    }
    let g0 = vanishing_poly(f, xs);
    let g1 = interpolate_with(f, xs, ys, &g0);

    let done = |r: &[Elem]| r.is_empty() || 2 * (r.len() - 1) < n + k;
    let (mut r_prev, mut r_cur) = (g0, g1);
    let (mut v_prev, mut v_cur): (Vec<Elem>, Vec<Elem>) = (Vec::new(), vec![Elem::ONE]);
    while !done(&r_cur) {
        let (q, rem) = poly_divrem(f, &r_prev, &r_cur);
        let v_next = poly_sub(f, &v_prev, &poly_mul(f, &q, &v_cur));
        r_prev = std::mem::replace(&mut r_cur, rem);
        v_prev = std::mem::replace(&mut v_cur, v_next);
    }
    let (mut msg, rem) = poly_divrem(f, &r_cur, &v_cur);
    if !rem.is_empty() || msg.len() > k {
        return None;
    }
    msg.resize(k, Elem::ZERO);
    Some(msg)
}

// Polynomials are coefficient vectors, lowest degree first, with no trailing
// zeros (the zero polynomial is empty).

fn trim(mut p: Vec<Elem>) -> Vec<Elem> {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    p
}

pub(crate) fn poly_eval(f: &Field, p: &[Elem], x: Elem) -> Elem {
    p.iter()
        .rev()
        .fold(Elem::ZERO, |acc, &c| f.add(f.mul(acc, x), c))
}

fn poly_sub(f: &Field, a: &[Elem], b: &[Elem]) -> Vec<Elem> {
    let mut out = vec![Elem::ZERO; a.len().max(b.len())];
    for (i, o) in out.iter_mut().enumerate() {
        let x = a.get(i).copied().unwrap_or(Elem::ZERO);
        let y = b.get(i).copied().unwrap_or(Elem::ZERO);
        *o = f.sub(x, y);
    }
    trim(out)
}

fn poly_mul(f: &Field, a: &[Elem], b: &[Elem]) -> Vec<Elem> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Elem::ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = f.add(out[i + j], f.mul(x, y));
        }
    }
    trim(out)
}

fn poly_divrem(f: &Field, a: &[Elem], b: &[Elem]) -> (Vec<Elem>, Vec<Elem>) {
    assert!(!b.is_empty(), "polynomial division by zero");
    let mut rem = a.to_vec();
    if rem.len() < b.len() {
        return (Vec::new(), trim(rem));
    }
    let lead_inv = f
        .inv(*b.last().unwrap())
        .expect("trimmed leading coefficient");
    let mut q = vec![Elem::ZERO; rem.len() - b.len() + 1];
    for shift in (0..q.len()).rev() {
        let top = rem[shift + b.len() - 1];
        if top.is_zero() {
            continue;
        }
        let c = f.mul(top, lead_inv);
        q[shift] = c;
        for (j, &bj) in b.iter().enumerate() {
            rem[shift + j] = f.sub(rem[shift + j], f.mul(c, bj));
        }
    }
    rem.truncate(b.len() - 1);
    (trim(q), trim(rem))
}

fn vanishing_poly(f: &Field, xs: &[Elem]) -> Vec<Elem> {
    let mut p = vec![Elem::ONE];
    for &x in xs {
        // p * (X - x)
        let mut next = vec![Elem::ZERO; p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            next[i + 1] = f.add(next[i + 1], c);
            next[i] = f.sub(next[i], f.mul(c, x));
        }
        p = next;
    }
    p
}

/// Lagrange interpolation in barycentric form, given the vanishing
/// polynomial of `xs`.
fn interpolate_with(f: &Field, xs: &[Elem], ys: &[Elem], vanishing: &[Elem]) -> Vec<Elem> {
    let n = xs.len();
    let mut out = vec![Elem::ZERO; n];
    let mut quotient = vec![Elem::ZERO; n];
    for i in 0..n {
        if ys[i].is_zero() {
            continue;
        }
        // vanishing / (X - x_i) by synthetic division.
        let mut carry = Elem::ZERO;
        for d in (0..n).rev() {
            carry = f.add(vanishing[d + 1], f.mul(carry, xs[i]));
            quotient[d] = carry;
        }
        let denom = poly_eval(f, &quotient, xs[i]);
        let scale = f.mul(ys[i], f.inv(denom).expect("distinct points"));
        for (o, &c) in out.iter_mut().zip(&quotient) {
            *o = f.add(*o, f.mul(scale, c));
        }
    }
    trim(out)
}

/// Interpolating polynomial through `(xs[i], ys[i])`, degree `< xs.len()`.
pub fn interpolate(f: &Field, xs: &[Elem], ys: &[Elem]) -> Vec<Elem> {
    interpolate_with(f, xs, ys, &vanishing_poly(f, xs))
}
