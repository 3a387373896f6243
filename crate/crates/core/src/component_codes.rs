//! Product-matrix MSR codes: the full-rate code and its fractional-rate
//! variants, with error-correcting regeneration and reconstruction.
//!
//! Parameters are tied together as `d = 2k - 2`, `alpha = d / 2`, `beta = 1`.
//! A block is a pair of symmetric `alpha x alpha` matrices `M = [S1; S2]`
//! and node `i` stores `ch_i = psi_i M`, where `psi_i` is row `i` of
//! `Psi = [Phi, Lambda Phi]`. With `lambda_i = g^(i alpha)` every row of
//! `Psi` is the Vandermonde row `(1, g^i, ..., g^(i(d-1)))`, so both repair
//! and data collection reduce to Reed–Solomon decoding over the points
//! `g^i`.
//!
//! A fractional block keeps only part of `M` nonzero: with integer
//! parameter `xd <= alpha` only the leading `xd x xd` block of `S1`, and
//! with `xd > alpha` all of `S1` plus the leading `(xd - alpha)` block of
//! `S2`. Help vectors then live in a dimension-`xd` code, which corrects
//! more corrupted helpers at the price of a smaller block.

use std::collections::BTreeSet;

use num_rational::Ratio;
use thiserror::Error;

use crate::galois::{Elem, Field};
use crate::linalg::{LinalgError, Matrix};
use crate::rs_codec::{CodecError, EvalCode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error("invalid code parameters: {0}")]
    InvalidParams(String),
    #[error(
        "field of order {order} supports at most {max_nodes} nodes for alpha = {alpha}, need {n}"
    )]
    FieldTooSmall {
        order: u32,
        alpha: usize,
        n: usize,
        max_nodes: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("corruption exceeds the decoding radius")]
    DecodeFailure,
    #[error("column decodes disagree on which nodes are faulty")]
    InconsistentFlags,
    #[error(transparent)]
    Codec(CodecError),
}

impl From<CodecError> for CodeError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::DecodeFailure | CodecError::TooManyErasures { .. } => {
                CodeError::DecodeFailure
            }
            other => CodeError::Codec(other),
        }
    }
}

impl From<LinalgError> for CodeError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Shape(s) => CodeError::Shape(s),
            LinalgError::Singular => CodeError::DecodeFailure,
        }
    }
}

/// `{n, k, d, alpha, beta, B}` for a full-rate MSR code.
#[derive(Clone, Debug)]
pub struct CodeParams {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub alpha: usize,
    pub beta: usize,
    pub b: usize,
    pub field: Field,
}

impl CodeParams {
    /// Full-rate parameters for repair degree `d` (even, `2 <= d < n`).
    pub fn new(field: &Field, n: usize, d: usize) -> Result<CodeParams, CodeError> {
        if d < 2 || !d.is_multiple_of(2) {
            return Err(CodeError::InvalidParams(format!(
                "d = {d} must be even and >= 2"
            )));
        }
        if n <= d {
            return Err(CodeError::InvalidParams(format!(
                "need n > d, got n = {n}, d = {d}"
            )));
        }
        let alpha = d / 2;
        Ok(CodeParams {
            n,
            k: alpha + 1,
            d,
            alpha,
            beta: 1,
            b: alpha * (alpha + 1),
            field: field.clone(),
        })
    }

    pub fn mincut_bound(&self) -> usize {
        mincut_bound(self.k, self.d, self.alpha, self.beta)
    }
}

/// Right-hand side of the cut-set bound: `sum_{i<k} min(alpha, (d - i) beta)`.
pub fn mincut_bound(k: usize, d: usize, alpha: usize, beta: usize) -> usize {
    (0..k).map(|i| alpha.min(d.saturating_sub(i) * beta)).sum()
}

/// Minimum-storage point `(alpha, gamma) = (B/k, Bd / (k (d - k + 1)))`.
pub fn msr_point(b: u64, k: u64, d: u64) -> Result<(Ratio<i128>, Ratio<i128>), CodeError> {
    if k == 0 || k > d {
        return Err(CodeError::InvalidParams(format!(
            "need 0 < k <= d, got k = {k}, d = {d}"
        )));
    }
    let (b, k, d) = (b as i128, k as i128, d as i128);
    Ok((Ratio::new(b, k), Ratio::new(b * d, k * (d - k + 1))))
}

/// Minimum-bandwidth point, where `alpha = gamma = 2Bd / (2kd - k^2 + k)`.
pub fn mbr_point(b: u64, k: u64, d: u64) -> Result<(Ratio<i128>, Ratio<i128>), CodeError> {
    if k == 0 || k > d {
        return Err(CodeError::InvalidParams(format!(
            "need 0 < k <= d, got k = {k}, d = {d}"
        )));
    }
    let (b, k, d) = (b as i128, k as i128, d as i128);
    let v = Ratio::new(2 * b * d, 2 * k * d - k * k + k);
    Ok((v, v))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `Phi`, `Lambda` and `Psi = [Phi, Lambda Phi]` for `n` nodes.
#[derive(Clone, Debug)]
pub struct EncoderMatrices {
    field: Field,
    n: usize,
    alpha: usize,
    points: Vec<Elem>,
    phi: Matrix,
    lambda: Vec<Elem>,
    psi: Matrix,
}

/// Builds the encoder for `params`. Requires `n <= (q - 1) / gcd(alpha, q - 1)`
/// so that the `lambda_i` are distinct.
pub fn build_encoder(params: &CodeParams) -> Result<EncoderMatrices, CodeError> {
    EncoderMatrices::new(&params.field, params.n, params.alpha)
}

impl EncoderMatrices {
    pub fn new(field: &Field, n: usize, alpha: usize) -> Result<EncoderMatrices, CodeError> {
        if alpha == 0 {
            return Err(CodeError::InvalidParams("alpha must be positive".into()));
        }
        let group = field.order() as usize - 1;
        let max_nodes = group / gcd(alpha, group);
        if n > max_nodes {
            return Err(CodeError::FieldTooSmall {
                order: field.order(),
                alpha,
                n,
                max_nodes,
            });
        }
        let g = field.generator();
        let points: Vec<Elem> = (0..n).map(|i| field.pow(g, i as u64)).collect();
        let lambda: Vec<Elem> = points.iter().map(|&p| field.pow(p, alpha as u64)).collect();
        let phi = Matrix::vandermonde(field, &points, alpha);
        let psi = Matrix::vandermonde(field, &points, 2 * alpha);
        Ok(EncoderMatrices {
            field: field.clone(),
            n,
            alpha,
            points,
            phi,
            lambda,
            psi,
        })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn d(&self) -> usize {
        2 * self.alpha
    }

    /// Evaluation points `g^i`.
    pub fn points(&self) -> &[Elem] {
        &self.points
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn lambda(&self) -> &[Elem] {
        &self.lambda
    }

    pub fn psi(&self) -> &Matrix {
        &self.psi
    }

    fn check_kind(&self, kind: CodeKind) -> Result<(), CodeError> {
        kind.validate(self.alpha)
    }
}

/// Which component code a block uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodeKind {
    Full,
    /// Fractional rate with integer `xd = x * d`, `1 <= xd < d`.
    Fractional {
        xd: usize,
    },
}

impl CodeKind {
    pub fn validate(self, alpha: usize) -> Result<(), CodeError> {
        match self {
            CodeKind::Full => Ok(()),
            CodeKind::Fractional { xd } if xd >= 1 && xd < 2 * alpha => Ok(()),
            CodeKind::Fractional { xd } => Err(CodeError::InvalidParams(format!(
                "xd = {xd} must lie in [1, {})",
                2 * alpha
            ))),
        }
    }

    /// Message symbols per block.
    pub fn block_size(self, alpha: usize) -> usize {
        let tri = |m: usize| m * (m + 1) / 2;
        match self {
            CodeKind::Full => 2 * tri(alpha),
            CodeKind::Fractional { xd } if xd <= alpha => tri(xd),
            CodeKind::Fractional { xd } => tri(alpha) + tri(xd - alpha),
        }
    }

    /// Dimension of the help-symbol code used in regeneration.
    pub fn repair_dim(self, alpha: usize) -> usize {
        match self {
            CodeKind::Full => 2 * alpha,
            CodeKind::Fractional { xd } => xd,
        }
    }

    /// Side lengths of the nonzero leading blocks of `S1` and `S2`.
    fn support(self, alpha: usize) -> (usize, usize) {
        match self {
            CodeKind::Full => (alpha, alpha),
            CodeKind::Fractional { xd } if xd <= alpha => (xd, 0),
            CodeKind::Fractional { xd } => (alpha, xd - alpha),
        }
    }

    fn uses_column_decoding(self, alpha: usize) -> bool {
        matches!(self, CodeKind::Fractional { xd } if xd <= alpha)
    }
}

/// The message matrices of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageBlock {
    pub kind: CodeKind,
    pub s1: Matrix,
    pub s2: Matrix,
}

fn fill_upper(m: &mut Matrix, side: usize, symbols: &mut impl Iterator<Item = Elem>) {
    for r in 0..side {
        for c in r..side {
            let v = symbols.next().expect("length checked by caller");
            m.set(r, c, v);
            m.set(c, r, v);
        }
    }
}

fn read_upper(m: &Matrix, side: usize, out: &mut Vec<Elem>) {
    for r in 0..side {
        for c in r..side {
            out.push(m.get(r, c));
        }
    }
}

impl MessageBlock {
    /// Lays `symbols` out over the upper triangles, row by row, first in
    /// `S1` then in `S2`.
    pub fn from_symbols(
        kind: CodeKind,
        alpha: usize,
        symbols: &[Elem],
    ) -> Result<MessageBlock, CodeError> {
        kind.validate(alpha)?;
        let need = kind.block_size(alpha);
        if symbols.len() != need {
            return Err(CodeError::Shape(format!(
                "block needs {need} symbols, got {}",
                symbols.len()
            )));
        }
        let (a, b) = kind.support(alpha);
        let mut it = symbols.iter().copied();
        let mut s1 = Matrix::zeros(alpha, alpha);
        let mut s2 = Matrix::zeros(alpha, alpha);
        fill_upper(&mut s1, a, &mut it);
        fill_upper(&mut s2, b, &mut it);
        Ok(MessageBlock { kind, s1, s2 })
    }

    pub fn to_symbols(&self) -> Vec<Elem> {
        let alpha = self.s1.rows();
        let (a, b) = self.kind.support(alpha);
        let mut out = Vec::with_capacity(self.kind.block_size(alpha));
        read_upper(&self.s1, a, &mut out);
        read_upper(&self.s2, b, &mut out);
        out
    }

    /// True when both matrices are symmetric and vanish outside the support
    /// of `kind`.
    pub fn is_well_formed(&self) -> bool {
        let alpha = self.s1.rows();
        let (a, b) = self.kind.support(alpha);
        let confined = |m: &Matrix, side: usize| {
            (0..alpha).all(|r| (0..alpha).all(|c| (r < side && c < side) || m.get(r, c).is_zero()))
        };
        self.s1.is_symmetric()
            && self.s2.is_symmetric()
            && confined(&self.s1, a)
            && confined(&self.s2, b)
    }
}

/// Coded rows of one block, one `alpha`-vector per node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareMatrix {
    pub kind: CodeKind,
    pub rows: Vec<Vec<Elem>>,
}

pub fn encode_block(enc: &EncoderMatrices, block: &MessageBlock) -> Result<ShareMatrix, CodeError> {
    enc.check_kind(block.kind)?;
    if block.s1.rows() != enc.alpha || block.s1.cols() != enc.alpha || block.s2.rows() != enc.alpha
    {
        return Err(CodeError::Shape(format!(
            "message matrices must be {0}x{0}",
            enc.alpha
        )));
    }
    let f = &enc.field;
    let a = enc.phi.mul(f, &block.s1)?;
    let b = if block.s2.is_zero() {
        None
    } else {
        Some(enc.phi.mul(f, &block.s2)?)
    };
    let rows = (0..enc.n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            if let Some(b) = &b {
                for (r, &v) in row.iter_mut().zip(b.row(i)) {
                    *r = f.add(*r, f.mul(enc.lambda[i], v));
                }
            }
            row
        })
        .collect();
    Ok(ShareMatrix {
        kind: block.kind,
        rows,
    })
}

/// Help symbol `p_i = ch_i . phi_z` sent by a helper to the node replacing `z`.
pub fn help_symbol(enc: &EncoderMatrices, share_row: &[Elem], z: usize) -> Elem {
    enc.field.dot(share_row, enc.phi.row(z))
}

/// Help symbols for the repair of `z` from a node's whole share, one per
/// stored block (the share is a concatenation of `alpha`-symbol rows).
pub fn help_stream(enc: &EncoderMatrices, share: &[Elem], z: usize) -> Vec<Elem> {
    share
        .chunks(enc.alpha)
        .map(|row| help_symbol(enc, row, z))
        .collect()
}

/// Outcome of a successful repair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Regenerated {
    pub row: Vec<Elem>,
    /// Helpers whose symbol disagreed with the decoded codeword.
    pub flagged: BTreeSet<usize>,
}

/// Regenerates row `z` from help symbols indexed by node.
///
/// `received[z]` is ignored; `None` entries and members of `erasures` are
/// both treated as erased.
pub fn regenerate(
    enc: &EncoderMatrices,
    kind: CodeKind,
    z: usize,
    received: &[Option<Elem>],
    erasures: &BTreeSet<usize>,
) -> Result<Regenerated, CodeError> {
    enc.check_kind(kind)?;
    if received.len() != enc.n || z >= enc.n {
        return Err(CodeError::Shape(format!(
            "expected {} help slots and z < n, got {} and z = {z}",
            enc.n,
            received.len()
        )));
    }
    let f = &enc.field;
    let helpers: Vec<usize> = (0..enc.n).filter(|&i| i != z).collect();
    let points = helpers.iter().map(|&i| enc.points[i]).collect();
    let code = EvalCode::new(f, points, kind.repair_dim(enc.alpha))?;
    let word: Vec<Option<Elem>> = helpers
        .iter()
        .map(|&i| {
            if erasures.contains(&i) {
                None
            } else {
                received[i]
            }
        })
        .collect();
    let out = code.decode(&word)?;

    // message = M phi_z, zero-padded to length d.
    let mut x = out.message;
    x.resize(enc.d(), Elem::ZERO);
    let (top, bottom) = x.split_at(enc.alpha);
    let row = top
        .iter()
        .zip(bottom)
        .map(|(&s, &t)| f.add(s, f.mul(enc.lambda[z], t)))
        .collect();
    let flagged = out.error_positions.iter().map(|&p| helpers[p]).collect();
    Ok(Regenerated { row, flagged })
}

/// Outcome of a successful data collection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reconstructed {
    pub block: MessageBlock,
    /// Nodes whose row disagrees with the re-encoded block.
    pub flagged: BTreeSet<usize>,
}

/// Recovers a block from node rows; `None` rows and members of `erasures`
/// are treated as erased.
pub fn reconstruct(
    enc: &EncoderMatrices,
    kind: CodeKind,
    received: &[Option<Vec<Elem>>],
    erasures: &BTreeSet<usize>,
) -> Result<Reconstructed, CodeError> {
    enc.check_kind(kind)?;
    if received.len() != enc.n {
        return Err(CodeError::Shape(format!(
            "expected {} rows, got {}",
            enc.n,
            received.len()
        )));
    }
    if let Some(r) = received.iter().flatten().find(|r| r.len() != enc.alpha) {
        return Err(CodeError::Shape(format!(
            "rows must have {} symbols, got {}",
            enc.alpha,
            r.len()
        )));
    }
    let rows: Vec<Option<&[Elem]>> = received
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if erasures.contains(&i) {
                None
            } else {
                r.as_deref()
            }
        })
        .collect();
    let erased = rows.iter().filter(|r| r.is_none()).count();

    let (block, redundancy) = if kind.uses_column_decoding(enc.alpha) {
        let CodeKind::Fractional { xd } = kind else {
            unreachable!()
        };
        (reconstruct_columns(enc, xd, &rows)?, enc.n - xd)
    } else {
        (
            reconstruct_product(enc, kind, &rows)?,
            enc.n - enc.alpha - 1,
        )
    };
    if !block.is_well_formed() {
        return Err(CodeError::DecodeFailure);
    }
    let shares = encode_block(enc, &block)?;
    let flagged: BTreeSet<usize> = rows
        .iter()
        .enumerate()
        .filter(|(i, r)| matches!(r, Some(r) if *r != shares.rows[*i].as_slice()))
        .map(|(i, _)| i)
        .collect();
    if 2 * flagged.len() + erased > redundancy {
        return Err(CodeError::DecodeFailure);
    }
    Ok(Reconstructed { block, flagged })
}

/// Fractional blocks with `xd <= alpha`: each column of the received rows
/// is a codeword of the length-`n`, dimension-`xd` evaluation code.
fn reconstruct_columns(
    enc: &EncoderMatrices,
    xd: usize,
    rows: &[Option<&[Elem]>],
) -> Result<MessageBlock, CodeError> {
    let code = EvalCode::new(&enc.field, enc.points.clone(), xd)?;
    let mut s1 = Matrix::zeros(enc.alpha, enc.alpha);
    for j in 0..enc.alpha {
        let column: Vec<Option<Elem>> = rows.iter().map(|r| r.map(|r| r[j])).collect();
        let out = code.decode(&column)?;
        for (r, &v) in out.message.iter().enumerate() {
            s1.set(r, j, v);
        }
    }
    Ok(MessageBlock {
        kind: CodeKind::Fractional { xd },
        s1,
        s2: Matrix::zeros(enc.alpha, enc.alpha),
    })
}

/// Full-rate style data collection through the symmetric split
/// `R Phi^T = C + Lambda D`.
fn reconstruct_product(
    enc: &EncoderMatrices,
    kind: CodeKind,
    rows: &[Option<&[Elem]>],
) -> Result<MessageBlock, CodeError> {
    let f = &enc.field;
    let (n, alpha) = (enc.n, enc.alpha);
    let live: Vec<usize> = (0..n).filter(|&i| rows[i].is_some()).collect();
    let erased = n - live.len();
    let t_max = (n - alpha - 1)
        .checked_sub(erased)
        .ok_or(CodeError::DecodeFailure)?
        / 2;

    // rhat[i][j] = r_i . phi_j for live i.
    let rhat: Vec<Option<Vec<Elem>>> = rows
        .iter()
        .map(|r| r.map(|r| (0..n).map(|j| f.dot(r, enc.phi.row(j))).collect()))
        .collect();
    let code = EvalCode::new(f, enc.points.clone(), alpha)?;

    let mut votes = vec![0usize; n];
    let mut decoded: Vec<(usize, Vec<Elem>, Vec<Elem>)> = Vec::new();
    for &j in &live {
        let mut c_col = vec![None; n];
        let mut d_col = vec![None; n];
        let rj = rhat[j].as_ref().expect("live");
        for &i in &live {
            if i == j {
                continue;
            }
            let ri = rhat[i].as_ref().expect("live");
            let diff = f.sub(ri[j], rj[i]);
            let dij = f
                .div(diff, f.sub(enc.lambda[i], enc.lambda[j]))
                .expect("distinct lambdas");
            c_col[i] = Some(f.sub(ri[j], f.mul(enc.lambda[i], dij)));
            d_col[i] = Some(dij);
        }
        let (Ok(c), Ok(d)) = (code.decode(&c_col), code.decode(&d_col)) else {
            continue;
        };
        for &i in c.error_positions.union(&d.error_positions) {
            votes[i] += 1;
        }
        decoded.push((j, c.message, d.message));
    }

    // A tampered row disagrees in all but at most alpha - 1 honest columns,
    // an honest row only in columns owned by tampered nodes.
    let trusted: Vec<&(usize, Vec<Elem>, Vec<Elem>)> = decoded
        .iter()
        .filter(|(j, _, _)| votes[*j] <= t_max)
        .take(alpha)
        .collect();
    if trusted.len() < alpha {
        return Err(CodeError::InconsistentFlags);
    }

    // Row r of the stacked messages is phi_j S, so S = Phi_J^{-1} [msgs].
    let idx: Vec<usize> = trusted.iter().map(|(j, _, _)| *j).collect();
    let phi_j = enc.phi.select_rows(&idx);
    let top = Matrix::from_rows(trusted.iter().map(|t| t.1.clone()).collect())?;
    let bottom = Matrix::from_rows(trusted.iter().map(|t| t.2.clone()).collect())?;
    let s1 = phi_j.solve(f, &top)?;
    let s2 = phi_j.solve(f, &bottom)?;
    Ok(MessageBlock { kind, s1, s2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(q: u64) -> Field {
        Field::new(q, None).unwrap()
    }

    fn random_block(f: &Field, kind: CodeKind, alpha: usize, rng: &mut ChaCha8Rng) -> MessageBlock {
        let syms: Vec<Elem> = (0..kind.block_size(alpha)).map(|_| f.random(rng)).collect();
        MessageBlock::from_symbols(kind, alpha, &syms).unwrap()
    }

    /// `Psi M` computed from explicitly built `Phi`, `Lambda` and `M`.
    fn dense_oracle(f: &Field, n: usize, alpha: usize, block: &MessageBlock) -> Matrix {
        let g = f.generator();
        let phi = Matrix::from_rows(
            (0..n)
                .map(|i| (0..alpha).map(|j| f.pow(g, (i * j) as u64)).collect())
                .collect(),
        )
        .unwrap();
        let mut psi = Matrix::zeros(n, 2 * alpha);
        for i in 0..n {
            let lam = f.pow(g, (i * alpha) as u64);
            for j in 0..alpha {
                psi.set(i, j, phi.get(i, j));
                psi.set(i, alpha + j, f.mul(lam, phi.get(i, j)));
            }
        }
        let mut m = Matrix::zeros(2 * alpha, alpha);
        for r in 0..alpha {
            for c in 0..alpha {
                m.set(r, c, block.s1.get(r, c));
                m.set(alpha + r, c, block.s2.get(r, c));
            }
        }
        psi.mul(f, &m).unwrap()
    }

    fn tamper_row(f: &Field, row: &mut [Elem], rng: &mut ChaCha8Rng) {
        loop {
            let delta: Vec<Elem> = row.iter().map(|_| f.random(rng)).collect();
            if delta.iter().any(|e| !e.is_zero()) {
                for (r, d) in row.iter_mut().zip(delta) {
                    *r = f.add(*r, d);
                }
                return;
            }
        }
    }

    #[test]
    fn mincut_examples() {
        assert_eq!(mincut_bound(1, 4, 3, 1), 3);
        assert_eq!(mincut_bound(3, 4, 2, 1), 6);
        assert_eq!(mincut_bound(4, 6, 0, 1), 0);
        let p = CodeParams::new(&field(13), 6, 4).unwrap();
        assert_eq!((p.k, p.alpha, p.b), (3, 2, 6));
        assert_eq!(p.mincut_bound(), p.k * p.alpha);
        assert!(CodeParams::new(&field(13), 6, 3).is_err());
        assert!(CodeParams::new(&field(13), 4, 4).is_err());
    }

    #[test]
    fn operating_points() {
        let (a, g) = msr_point(3, 3, 5).unwrap();
        assert_eq!(a, Ratio::from_integer(1));
        assert_eq!(g, Ratio::new(5, 3));
        assert_eq!(
            msr_point(6, 3, 4).unwrap(),
            (Ratio::from_integer(2), Ratio::from_integer(4))
        );
        assert_eq!(
            mbr_point(6, 3, 4).unwrap(),
            (Ratio::new(8, 3), Ratio::new(8, 3))
        );
        assert!(msr_point(6, 0, 4).is_err());
        assert!(mbr_point(6, 5, 4).is_err());
    }

    #[test]
    fn encoder_lambdas_and_capacity() {
        let f = field(13);
        let enc = EncoderMatrices::new(&f, 6, 2).unwrap();
        let l: Vec<u32> = enc.lambda().iter().map(|e| e.value()).collect();
        assert_eq!(l, vec![1, 4, 3, 12, 9, 10]);
        assert!(matches!(
            EncoderMatrices::new(&f, 10, 2),
            Err(CodeError::FieldTooSmall { max_nodes: 6, .. })
        ));
        let one = EncoderMatrices::new(&f, 1, 2).unwrap();
        assert!(one.psi().row(0).iter().all(|&e| e == Elem::ONE));
        // Psi equals [Phi, Lambda Phi].
        for i in 0..6 {
            for j in 0..2 {
                assert_eq!(enc.psi().get(i, j), enc.phi().get(i, j));
                assert_eq!(
                    enc.psi().get(i, 2 + j),
                    f.mul(enc.lambda()[i], enc.phi().get(i, j))
                );
            }
        }
    }

    #[test]
    fn product_matrix_independence() {
        let f = field(23);
        let enc = EncoderMatrices::new(&f, 10, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let rows = sample(&mut rng, 10, 4).into_vec();
            assert_eq!(enc.psi().select_rows(&rows).rank(&f), 4);
            assert_eq!(enc.phi().select_rows(&rows[..2]).rank(&f), 2);
        }
        let distinct: BTreeSet<Elem> = enc.lambda().iter().copied().collect();
        assert_eq!(distinct.len(), 10);
    }

    #[test]
    fn block_sizes_and_layout() {
        assert_eq!(CodeKind::Full.block_size(9), 90);
        assert_eq!(CodeKind::Fractional { xd: 7 }.block_size(9), 28);
        assert_eq!(CodeKind::Fractional { xd: 5 }.block_size(3), 6 + 3);
        assert!(CodeKind::Fractional { xd: 6 }.validate(3).is_err());
        assert!(CodeKind::Fractional { xd: 0 }.validate(3).is_err());

        let f = field(13);
        let syms: Vec<Elem> = (1..=3).map(|v| f.elem(v).unwrap()).collect();
        let b = MessageBlock::from_symbols(CodeKind::Fractional { xd: 2 }, 3, &syms).unwrap();
        assert_eq!(b.s1.get(0, 1), f.elem(2).unwrap());
        assert_eq!(b.s1.get(1, 0), f.elem(2).unwrap());
        assert_eq!(b.s1.get(1, 1), f.elem(3).unwrap());
        assert!(b.s1.column(2).iter().all(|e| e.is_zero()) && b.s2.is_zero());
        assert_eq!(b.to_symbols(), syms);
        assert!(MessageBlock::from_symbols(CodeKind::Full, 3, &syms).is_err());
    }

    #[test]
    fn encode_matches_dense_oracle() {
        let f = field(13);
        let enc = EncoderMatrices::new(&f, 6, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in [
            CodeKind::Full,
            CodeKind::Fractional { xd: 1 },
            CodeKind::Fractional { xd: 3 },
        ] {
            let block = random_block(&f, kind, 2, &mut rng);
            let shares = encode_block(&enc, &block).unwrap();
            let oracle = dense_oracle(&f, 6, 2, &block);
            for i in 0..6 {
                assert_eq!(shares.rows[i].as_slice(), oracle.row(i));
                for z in 0..6 {
                    let want = f.dot(oracle.row(i), enc.phi().row(z));
                    assert_eq!(help_symbol(&enc, &shares.rows[i], z), want);
                }
            }
        }
        let zero = MessageBlock::from_symbols(CodeKind::Full, 2, &[Elem::ZERO; 6]).unwrap();
        assert!(encode_block(&enc, &zero)
            .unwrap()
            .rows
            .iter()
            .flatten()
            .all(|e| e.is_zero()));
    }

    #[test]
    fn s2_zero_means_lambda_free() {
        let f = field(13);
        let enc = EncoderMatrices::new(&f, 6, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let block = random_block(&f, CodeKind::Fractional { xd: 2 }, 2, &mut rng);
        let shares = encode_block(&enc, &block).unwrap();
        for i in 0..6 {
            assert_eq!(shares.rows[i], block.s1.left_mul_vec(&f, enc.phi().row(i)));
        }
    }

    fn check_regeneration(kind: CodeKind, corrupt: usize, trials: usize) {
        let f = field(23);
        let enc = EncoderMatrices::new(&f, 10, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED + corrupt as u64);
        for _ in 0..trials {
            let block = random_block(&f, kind, 2, &mut rng);
            let oracle = dense_oracle(&f, 10, 2, &block);
            let shares = encode_block(&enc, &block).unwrap();
            let z = rng.gen_range(0..10);
            let mut help: Vec<Option<Elem>> = (0..10)
                .map(|i| (i != z).then(|| help_symbol(&enc, &shares.rows[i], z)))
                .collect();
            let helpers: Vec<usize> = (0..10).filter(|&i| i != z).collect();
            let bad: BTreeSet<usize> = sample(&mut rng, 9, corrupt)
                .into_iter()
                .map(|p| helpers[p])
                .collect();
            for &b in &bad {
                help[b] = Some(f.add(help[b].unwrap(), f.random_nonzero(&mut rng)));
            }
            let out = regenerate(&enc, kind, z, &help, &BTreeSet::new()).unwrap();
            assert_eq!(out.row.as_slice(), oracle.row(z));
            assert_eq!(out.flagged, bad);
        }
    }

    #[test]
    fn full_regeneration_corrects_two() {
        check_regeneration(CodeKind::Full, 2, 200);
    }

    #[test]
    fn fractional_regeneration_corrects_three() {
        check_regeneration(CodeKind::Fractional { xd: 2 }, 3, 200);
    }

    fn check_reconstruction(kind: CodeKind, corrupt: usize, trials: usize) {
        let f = field(23);
        let enc = EncoderMatrices::new(&f, 10, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xFACE + corrupt as u64);
        for _ in 0..trials {
            let block = random_block(&f, kind, 2, &mut rng);
            let mut rows: Vec<Option<Vec<Elem>>> = encode_block(&enc, &block)
                .unwrap()
                .rows
                .into_iter()
                .map(Some)
                .collect();
            let bad: BTreeSet<usize> = sample(&mut rng, 10, corrupt).into_iter().collect();
            for &b in &bad {
                tamper_row(&f, rows[b].as_mut().unwrap(), &mut rng);
            }
            let out = reconstruct(&enc, kind, &rows, &BTreeSet::new()).unwrap();
            assert_eq!(out.block, block);
            assert_eq!(out.flagged, bad);
        }
    }

    #[test]
    fn full_reconstruction_corrects_three() {
        check_reconstruction(CodeKind::Full, 3, 200);
    }

    #[test]
    fn fractional_reconstruction_corrects_four() {
        check_reconstruction(CodeKind::Fractional { xd: 2 }, 4, 200);
    }

    #[test]
    fn upper_fractional_reconstruction() {
        // xd = 3 > alpha = 2 uses the product-matrix path.
        check_reconstruction(CodeKind::Fractional { xd: 3 }, 3, 100);
    }

    #[test]
    fn erasures_consume_redundancy() {
        let f = field(23);
        let enc = EncoderMatrices::new(&f, 10, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let block = random_block(&f, CodeKind::Full, 2, &mut rng);
        let mut rows: Vec<Option<Vec<Elem>>> = encode_block(&enc, &block)
            .unwrap()
            .rows
            .into_iter()
            .map(Some)
            .collect();
        // 2 erasures + 2 errors: 2*2 + 2 <= 7.
        rows[0] = None;
        let erasures = BTreeSet::from([1]);
        tamper_row(&f, rows[5].as_mut().unwrap(), &mut rng);
        tamper_row(&f, rows[8].as_mut().unwrap(), &mut rng);
        let out = reconstruct(&enc, CodeKind::Full, &rows, &erasures).unwrap();
        assert_eq!(out.block, block);
        assert_eq!(out.flagged, BTreeSet::from([5, 8]));
        // Minimal repair: exactly d helpers, nothing to spare.
        let z = 3;
        let shares = encode_block(&enc, &block).unwrap();
        let help: Vec<Option<Elem>> = (0..10)
            .map(|i| (i != z && i < 5).then(|| help_symbol(&enc, &shares.rows[i], z)))
            .collect();
        let out = regenerate(&enc, CodeKind::Full, z, &help, &BTreeSet::new()).unwrap();
        assert_eq!(out.row, shares.rows[z]);
    }

    #[test]
    fn beyond_radius_is_never_silently_wrong() {
        let f = field(23);
        let enc = EncoderMatrices::new(&f, 10, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (kind, corrupt) in [(CodeKind::Full, 4), (CodeKind::Fractional { xd: 2 }, 5)] {
            for _ in 0..200 {
                let block = random_block(&f, kind, 2, &mut rng);
                let mut rows: Vec<Option<Vec<Elem>>> = encode_block(&enc, &block)
                    .unwrap()
                    .rows
                    .into_iter()
                    .map(Some)
                    .collect();
                for b in sample(&mut rng, 10, corrupt) {
                    tamper_row(&f, rows[b].as_mut().unwrap(), &mut rng);
                }
                if let Ok(out) = reconstruct(&enc, kind, &rows, &BTreeSet::new()) {
                    assert_eq!(out.block, block);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_without_adversary(seed in any::<u64>(), kind_sel in 0usize..4, z in 0usize..12) {
            let f = Field::gf65536();
            let alpha = 3;
            let enc = EncoderMatrices::new(&f, 12, alpha).unwrap();
            let kind = match kind_sel {
                0 => CodeKind::Full,
                1 => CodeKind::Fractional { xd: 2 },
                2 => CodeKind::Fractional { xd: 3 },
                _ => CodeKind::Fractional { xd: 5 },
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let block = random_block(&f, kind, alpha, &mut rng);
            let shares = encode_block(&enc, &block).unwrap();
            prop_assert_eq!(MessageBlock::from_symbols(kind, alpha, &block.to_symbols()).unwrap(), block.clone());
            let rows: Vec<Option<Vec<Elem>>> = shares.rows.iter().cloned().map(Some).collect();
            let out = reconstruct(&enc, kind, &rows, &BTreeSet::new()).unwrap();
            prop_assert_eq!(&out.block, &block);
            prop_assert!(out.flagged.is_empty());
            let help: Vec<Option<Elem>> =
                (0..12).map(|i| (i != z).then(|| help_symbol(&enc, &shares.rows[i], z))).collect();
            let reg = regenerate(&enc, kind, z, &help, &BTreeSet::new()).unwrap();
            prop_assert_eq!(&reg.row, &shares.rows[z]);
            prop_assert!(reg.flagged.is_empty());
        }
    }
}
