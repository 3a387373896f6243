//! The m-layer rate-matched code.
//!
//! Blocks are decoded in `m` layers. Nodes caught lying in a layer are
//! erased in every later layer, so each layer spends its redundancy only on
//! nodes that have not yet been exposed. With per-layer repair degrees
//! `d_1 <= ... <= d_m` the number of corrupted helpers that can be tolerated
//! after layer `i` follows
//!
//! ```text
//! t_1 = floor((n - d_1 - 1) / 2)
//! t_i = floor((n - d_i - 1 - t_{i-1}) / 2) + t_{i-1}
//! ```
//!
//! and is maximised, for a fixed budget `d_1 + ... + d_m = d_0`, by the
//! balanced split. With all `d_i` equal every block uses the same full-rate
//! code and the layers only fix the decoding order.

use std::collections::BTreeSet;

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::component_codes::{
    encode_block, reconstruct, regenerate, CodeError, CodeKind, EncoderMatrices, MessageBlock,
};
use crate::galois::Elem;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MLayerError {
    #[error("layer {layer} is infeasible: n - d_i - 1 = {slack} < t_(i-1) = {prior}")]
    InfeasibleLayering {
        layer: usize,
        slack: isize,
        prior: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("repair degree {0} is odd")]
    OddDegree(usize),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("decoding failed at block {block}")]
    DecodeFailure { block: usize },
    #[error(transparent)]
    Code(CodeError),
}

impl MLayerError {
    pub fn is_decode_failure(&self) -> bool {
        matches!(self, MLayerError::DecodeFailure { .. })
    }

    fn at(block: usize) -> impl Fn(CodeError) -> MLayerError {
        move |e| match e {
            CodeError::DecodeFailure | CodeError::InconsistentFlags => {
                MLayerError::DecodeFailure { block }
            }
            other => MLayerError::Code(other),
        }
    }
}

/// Cumulative correctable node counts `t_1..t_m` for repair degrees
/// `d_list` (nondecreasing, each below `n`).
pub fn correction_capability(n: usize, d_list: &[usize]) -> Result<Vec<usize>, MLayerError> {
    if d_list.is_empty() {
        return Err(MLayerError::InvalidInput("no layers".into()));
    }
    if d_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(MLayerError::InvalidInput(format!(
            "{d_list:?} is not nondecreasing"
        )));
    }
    let mut t = Vec::with_capacity(d_list.len());
    let mut prior = 0usize;
    for (i, &d) in d_list.iter().enumerate() {
        let slack = n as isize - d as isize - 1;
        if slack < prior as isize {
            return Err(MLayerError::InfeasibleLayering {
                layer: i + 1,
                slack,
                prior,
            });
        }
        prior += (slack as usize - prior) / 2;
        t.push(prior);
    }
    Ok(t)
}

/// The same `t_i` written through parity bits `eps_i`:
/// `t_i = (sum_j 2^(j-1)(n - d_j) - sum_j 2^(j-1) eps_j - 2^i + 1) / 2^i`.
/// Returns `(t_i, eps_i)` per layer.
pub fn epsilon_form(n: usize, d_list: &[usize]) -> Result<Vec<(usize, usize)>, MLayerError> {
    let t = correction_capability(n, d_list)?;
    let mut out = Vec::with_capacity(t.len());
    let (mut weighted, mut slack_bits) = (0i128, 0i128);
    for (i, &d) in d_list.iter().enumerate() {
        let prior = if i == 0 { 0 } else { t[i - 1] };
        let eps = (n - d - 1 - prior) % 2;
        let w = 1i128 << i;
        weighted += w * (n - d) as i128;
        slack_bits += w * eps as i128;
        let p = 1i128 << (i + 1);
        let num = weighted - slack_bits - p + 1;
        debug_assert_eq!(num % p, 0);
        out.push(((num / p) as usize, eps));
    }
    Ok(out)
}

/// `Round(d_0 / m)`, halves rounded up.
pub fn rounded_share(d0: usize, m: usize) -> usize {
    (2 * d0 + m) / (2 * m)
}

/// Splits `d0` into `m` parts differing by at most one, smaller parts first.
pub fn balanced_split(d0: usize, m: usize) -> Vec<usize> {
    let (q, r) = (d0 / m, d0 % m);
    (0..m).map(|i| if i < m - r { q } else { q + 1 }).collect()
}

/// `((2^m - 1)(n - d) - 2^(m+1) + 2) / 2^m`, the guaranteed `t_m` for an
/// equal split at degree `d`.
pub fn worst_case_bound(n: usize, m: usize, d: usize) -> Ratio<i128> {
    let p = 1i128 << m;
    Ratio::new((p - 1) * (n as i128 - d as i128) - 2 * p + 2, p)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MLayerPlan {
    pub n: usize,
    pub m: usize,
    pub d0: usize,
    /// Per-layer repair degrees, nondecreasing, summing to `d0`.
    pub d: Vec<usize>,
    pub t: Vec<usize>,
    pub eps: Vec<usize>,
    /// `Round(d0 / m)`.
    pub d_tilde: usize,
    /// `worst_case_bound(n, m, d_tilde)` as `(numerator, denominator)`.
    pub worst_case_bound: (i128, i128),
    /// Whether `t_m` reaches the worst-case bound; can fail only when the
    /// split is uneven.
    pub meets_worst_case_bound: bool,
}

impl MLayerPlan {
    pub fn t_m(&self) -> usize {
        *self.t.last().expect("at least one layer")
    }

    /// The single repair degree used when every layer shares one code.
    pub fn code_degree(&self) -> Result<usize, MLayerError> {
        let d = self.d[0];
        if self.d.iter().any(|&x| x != d) {
            return Err(MLayerError::InvalidInput(format!(
                "split {:?} is uneven; a single code needs equal degrees",
                self.d
            )));
        }
        if !d.is_multiple_of(2) {
            return Err(MLayerError::OddDegree(d));
        }
        Ok(d)
    }
}

/// Balanced allocation of the degree budget `d0` over `m` layers. Odd
/// degrees are allowed here; building a code additionally needs
/// [`MLayerPlan::code_degree`].
pub fn optimize_layers(n: usize, m: usize, d0: usize) -> Result<MLayerPlan, MLayerError> {
    if m == 0 || d0 < m {
        return Err(MLayerError::InvalidInput(format!(
            "need m >= 1 and d0 >= m, got m = {m}, d0 = {d0}"
        )));
    }
    let d = balanced_split(d0, m);
    if d[m - 1] >= n {
        return Err(MLayerError::InvalidInput(format!(
            "split {d:?} needs degrees below n = {n}"
        )));
    }
    let form = epsilon_form(n, &d)?;
    let t: Vec<usize> = form.iter().map(|f| f.0).collect();
    let eps = form.iter().map(|f| f.1).collect();
    let d_tilde = rounded_share(d0, m);
    let bound = worst_case_bound(n, m, d_tilde);
    let meets = Ratio::from_integer(*t.last().unwrap() as i128) >= bound;
    Ok(MLayerPlan {
        n,
        m,
        d0,
        d,
        t,
        eps,
        d_tilde,
        worst_case_bound: (*bound.numer(), *bound.denom()),
        meets_worst_case_bound: meets,
    })
}

/// Answer to the dual question: the highest-rate equal degree that still
/// tolerates `t_0` malicious nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DualRate {
    pub d_tilde: usize,
    pub t: Vec<usize>,
    /// `n - (2^m t_0 + 2^(m+1) - 2) / (2^m - 1)` as `(numerator, denominator)`.
    pub bound: (i128, i128),
    pub meets_bound: bool,
}

/// Largest equal degree `d` with `t_m >= t_0` under `m` layers.
pub fn dual_min_d(n: usize, m: usize, t0: usize) -> Result<DualRate, MLayerError> {
    if m == 0 || n < 2 {
        return Err(MLayerError::InvalidInput(format!(
            "need m >= 1 and n >= 2, got m = {m}, n = {n}"
        )));
    }
    let p = 1i128 << m;
    let bound = Ratio::from_integer(n as i128) - Ratio::new(p * t0 as i128 + 2 * p - 2, p - 1);
    for d in (1..n).rev() {
        let Ok(t) = correction_capability(n, &vec![d; m]) else {
            continue;
        };
        if *t.last().unwrap() >= t0 {
            return Ok(DualRate {
                d_tilde: d,
                t,
                bound: (*bound.numer(), *bound.denom()),
                meets_bound: Ratio::from_integer(d as i128) >= bound,
            });
        }
    }
    Err(MLayerError::InvalidInput(format!(
        "no degree reaches t_0 = {t0} with n = {n}, m = {m}"
    )))
}

/// `delta_C = ((2^m - 1)(n - d) - 2^(m+1) + 2) / (2^m n)`.
pub fn error_correction_efficiency(n: usize, m: usize, d: usize) -> Ratio<i128> {
    worst_case_bound(n, m, d) / Ratio::from_integer(n as i128)
}

/// Single-layer baseline `delta'_C = (n - d - 1) / (2n)`.
pub fn baseline_correction_efficiency(n: usize, d: usize) -> Ratio<i128> {
    Ratio::new(n as i128 - d as i128 - 1, 2 * n as i128)
}

/// Limit of `delta_C` as `m` grows, `(n - d - 2) / n`.
pub fn correction_efficiency_limit(n: usize, d: usize) -> Ratio<i128> {
    Ratio::new(n as i128 - d as i128 - 2, n as i128)
}

/// Data symbols held by one block per layer, `sum (d_i/2)(d_i/2 + 1)`.
pub fn storage_capacity(d_list: &[usize]) -> Result<u64, MLayerError> {
    d_list.iter().try_fold(0u64, |acc, &d| {
        if d % 2 != 0 {
            return Err(MLayerError::OddDegree(d));
        }
        let a = (d / 2) as u64;
        Ok(acc + a * (a + 1))
    })
}

/// All nondecreasing `parts`-tuples of positive multiples of `step`
/// summing to `total`.
pub fn nondecreasing_compositions(total: usize, parts: usize, step: usize) -> Vec<Vec<usize>> {
    fn go(
        rest: usize,
        parts: usize,
        min: usize,
        step: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if parts == 0 {
            if rest == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let mut v = min;
        while v * parts <= rest {
            cur.push(v);
            go(rest - v, parts - 1, v, step, cur, out);
            cur.pop();
            v += step;
        }
    }
    let mut out = Vec::new();
    if step > 0 && parts > 0 {
        go(total, parts, step, step, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CapacityAudit {
    pub d0: usize,
    pub m: usize,
    /// Every even composition with its capacity.
    pub compositions: Vec<(Vec<usize>, u64)>,
    pub max_capacity: u64,
    pub maximizers: Vec<Vec<usize>>,
    pub min_capacity: u64,
    pub minimizers: Vec<Vec<usize>>,
    /// Whether the equal split is among the maximizers.
    pub equal_split_is_max: bool,
}

/// Enumerates even nondecreasing splits of `d0` into `m` layers and reports
/// which ones maximise and minimise [`storage_capacity`].
pub fn capacity_audit(d0: usize, m: usize) -> CapacityAudit {
    let compositions: Vec<(Vec<usize>, u64)> = nondecreasing_compositions(d0, m, 2)
        .into_iter()
        .map(|c| {
            let b = storage_capacity(&c).expect("even parts");
            (c, b)
        })
        .collect();
    let max_capacity = compositions.iter().map(|c| c.1).max().unwrap_or(0);
    let min_capacity = compositions.iter().map(|c| c.1).min().unwrap_or(0);
    let pick = |target: u64| -> Vec<Vec<usize>> {
        compositions
            .iter()
            .filter(|c| c.1 == target)
            .map(|c| c.0.clone())
            .collect()
    };
    let maximizers = pick(max_capacity);
    let equal_split_is_max = maximizers.iter().any(|c| c.iter().all(|&x| x == c[0]));
    CapacityAudit {
        d0,
        m,
        max_capacity,
        maximizers,
        min_capacity,
        minimizers: pick(min_capacity),
        equal_split_is_max,
        compositions,
    }
}

/// Decode schedule: block `j` sits at layer `j / rho`, column `j % rho`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Lattice {
    pub theta: usize,
    pub m: usize,
    pub rho: usize,
}

/// Lays `theta` blocks out on an `m x rho` grid; `rho` defaults to
/// `ceil(theta / m)` and the grid is padded with empty slots.
pub fn plan_lattice(theta: usize, m: usize, rho: Option<usize>) -> Result<Lattice, MLayerError> {
    if theta == 0 || m == 0 {
        return Err(MLayerError::InvalidInput(
            "need theta >= 1 and m >= 1".into(),
        ));
    }
    let rho = rho.unwrap_or(theta.div_ceil(m));
    if rho == 0 || m * rho < theta {
        return Err(MLayerError::InvalidInput(format!(
            "{m} x {rho} grid cannot hold {theta} blocks"
        )));
    }
    Ok(Lattice { theta, m, rho })
}

impl Lattice {
    pub fn padding(&self) -> usize {
        self.m * self.rho - self.theta
    }

    /// `(layer, column)` of block `j`.
    pub fn slot(&self, j: usize) -> (usize, usize) {
        (j / self.rho, j % self.rho)
    }

    /// Block indices of one layer, in column order.
    pub fn layer(&self, layer: usize) -> std::ops::Range<usize> {
        let start = (layer * self.rho).min(self.theta);
        start..((layer + 1) * self.rho).min(self.theta)
    }
}

/// How flags move between blocks during decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlagPolicy {
    /// Nodes flagged in earlier layers are erased in later ones.
    Layered,
    /// Every block is decoded on its own, as a single-layer code would.
    Independent,
}

/// A file stored as `theta` full-rate blocks of repair degree `d_tilde`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MLayerCode {
    pub n: usize,
    pub d_tilde: usize,
    pub alpha: usize,
    /// File size in symbols.
    pub b_f: u64,
    pub lattice: Lattice,
}

/// Sizes a file of `b_f` symbols into `ceil(b_f / B)` blocks over `m` layers.
pub fn plan_code(
    n: usize,
    d_tilde: usize,
    m: usize,
    b_f: u64,
    rho: Option<usize>,
) -> Result<MLayerCode, MLayerError> {
    if !d_tilde.is_multiple_of(2) {
        return Err(MLayerError::OddDegree(d_tilde));
    }
    if d_tilde < 2 || d_tilde >= n {
        return Err(MLayerError::InvalidInput(format!(
            "need 2 <= d < n, got d = {d_tilde}, n = {n}"
        )));
    }
    if b_f == 0 {
        return Err(MLayerError::InvalidInput("empty file".into()));
    }
    let alpha = d_tilde / 2;
    let block = CodeKind::Full.block_size(alpha) as u64;
    let theta = b_f.div_ceil(block) as usize;
    Ok(MLayerCode {
        n,
        d_tilde,
        alpha,
        b_f,
        lattice: plan_lattice(theta, m, rho)?,
    })
}

impl MLayerCode {
    pub fn block_size(&self) -> usize {
        CodeKind::Full.block_size(self.alpha)
    }

    pub fn share_len(&self) -> usize {
        self.alpha * self.lattice.theta
    }

    fn check(&self, enc: &EncoderMatrices) -> Result<(), MLayerError> {
        if enc.n() != self.n || enc.alpha() != self.alpha {
            return Err(MLayerError::SizeMismatch(format!(
                "encoder has n = {}, alpha = {}; code needs n = {}, alpha = {}",
                enc.n(),
                enc.alpha(),
                self.n,
                self.alpha
            )));
        }
        Ok(())
    }

    fn check_streams<T>(
        &self,
        streams: &[Option<Vec<T>>],
        len: usize,
        skip: Option<usize>,
    ) -> Result<(), MLayerError> {
        if streams.len() != self.n {
            return Err(MLayerError::SizeMismatch(format!(
                "expected {} responses, got {}",
                self.n,
                streams.len()
            )));
        }
        for (i, s) in streams.iter().enumerate() {
            if Some(i) != skip && s.as_ref().is_some_and(|s| s.len() != len) {
                return Err(MLayerError::SizeMismatch(format!(
                    "node {i} sent a stream of the wrong length"
                )));
            }
        }
        Ok(())
    }
}

/// Encodes `b_f` symbols; node `i` stores row `i` of every block in order.
pub fn encode_file(
    enc: &EncoderMatrices,
    code: &MLayerCode,
    data: &[Elem],
) -> Result<Vec<Vec<Elem>>, MLayerError> {
    code.check(enc)?;
    if data.len() as u64 != code.b_f {
        return Err(MLayerError::SizeMismatch(format!(
            "code expects {} symbols, got {}",
            code.b_f,
            data.len()
        )));
    }
    let bs = code.block_size();
    let mut padded = data.to_vec();
    padded.resize(bs * code.lattice.theta, Elem::ZERO);
    let mut shares = vec![Vec::with_capacity(code.share_len()); code.n];
    for chunk in padded.chunks(bs) {
        let msg = MessageBlock::from_symbols(CodeKind::Full, code.alpha, chunk)
            .map_err(MLayerError::Code)?;
        let coded = encode_block(enc, &msg).map_err(MLayerError::Code)?;
        for (share, row) in shares.iter_mut().zip(coded.rows) {
            share.extend(row);
        }
    }
    Ok(shares)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayeredRepair {
    pub share: Vec<Elem>,
    pub flagged: BTreeSet<usize>,
    /// Nodes first flagged in each layer.
    pub flagged_per_layer: Vec<BTreeSet<usize>>,
}

/// Per-column flag state plus the union over all columns; a block in layer
/// `l` erases its column's flags and everything flagged before layer `l`.
struct FlagBook {
    columns: Vec<BTreeSet<usize>>,
    global: BTreeSet<usize>,
    per_layer: Vec<BTreeSet<usize>>,
}

impl FlagBook {
    fn new(lattice: &Lattice) -> FlagBook {
        FlagBook {
            columns: vec![BTreeSet::new(); lattice.rho],
            global: BTreeSet::new(),
            per_layer: Vec::new(),
        }
    }

    fn erasures(
        &self,
        policy: FlagPolicy,
        column: usize,
        snapshot: &BTreeSet<usize>,
    ) -> BTreeSet<usize> {
        match policy {
            FlagPolicy::Layered => self.columns[column].union(snapshot).copied().collect(),
            FlagPolicy::Independent => BTreeSet::new(),
        }
    }

    fn record(&mut self, column: usize, found: &BTreeSet<usize>, layer_new: &mut BTreeSet<usize>) {
        for &i in found {
            self.columns[column].insert(i);
            if !self.global.contains(&i) {
                layer_new.insert(i);
            }
        }
    }
}

/// Repairs node `z` layer by layer from per-helper help streams (`None`
/// for helpers that did not answer).
pub fn regenerate_node(
    enc: &EncoderMatrices,
    code: &MLayerCode,
    help: &[Option<Vec<Elem>>],
    z: usize,
    policy: FlagPolicy,
) -> Result<LayeredRepair, MLayerError> {
    code.check(enc)?;
    code.check_streams(help, code.lattice.theta, Some(z))?;
    if z >= code.n {
        return Err(MLayerError::SizeMismatch(format!("node {z} out of range")));
    }
    let alpha = code.alpha;
    let mut share = vec![Elem::ZERO; code.share_len()];
    let mut book = FlagBook::new(&code.lattice);
    for layer in 0..code.lattice.m {
        let snapshot = book.global.clone();
        let mut layer_new = BTreeSet::new();
        for j in code.lattice.layer(layer) {
            let column = code.lattice.slot(j).1;
            let received: Vec<Option<Elem>> = help
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    if i == z {
                        None
                    } else {
                        s.as_ref().map(|s| s[j])
                    }
                })
                .collect();
            let erasures = book.erasures(policy, column, &snapshot);
            let out = regenerate(enc, CodeKind::Full, z, &received, &erasures)
                .map_err(MLayerError::at(j))?;
            share[j * alpha..(j + 1) * alpha].copy_from_slice(&out.row);
            book.record(column, &out.flagged, &mut layer_new);
        }
        book.global.extend(layer_new.iter().copied());
        book.per_layer.push(layer_new);
    }
    Ok(LayeredRepair {
        share,
        flagged: book.global,
        flagged_per_layer: book.per_layer,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayeredRead {
    pub data: Vec<Elem>,
    pub flagged: BTreeSet<usize>,
    pub flagged_per_layer: Vec<BTreeSet<usize>>,
}

/// Recovers the file layer by layer from node shares.
pub fn reconstruct_file(
    enc: &EncoderMatrices,
    code: &MLayerCode,
    shares: &[Option<Vec<Elem>>],
    policy: FlagPolicy,
) -> Result<LayeredRead, MLayerError> {
    code.check(enc)?;
    code.check_streams(shares, code.share_len(), None)?;
    let (alpha, bs) = (code.alpha, code.block_size());
    let mut data = vec![Elem::ZERO; bs * code.lattice.theta];
    let mut book = FlagBook::new(&code.lattice);
    for layer in 0..code.lattice.m {
        let snapshot = book.global.clone();
        let mut layer_new = BTreeSet::new();
        for j in code.lattice.layer(layer) {
            let column = code.lattice.slot(j).1;
            let rows: Vec<Option<Vec<Elem>>> = shares
                .iter()
                .map(|s| s.as_ref().map(|s| s[j * alpha..(j + 1) * alpha].to_vec()))
                .collect();
            let erasures = book.erasures(policy, column, &snapshot);
            let out =
                reconstruct(enc, CodeKind::Full, &rows, &erasures).map_err(MLayerError::at(j))?;
            data[j * bs..(j + 1) * bs].copy_from_slice(&out.block.to_symbols());
            book.record(column, &out.flagged, &mut layer_new);
        }
        book.global.extend(layer_new.iter().copied());
        book.per_layer.push(layer_new);
    }
    data.truncate(code.b_f as usize);
    Ok(LayeredRead {
        data,
        flagged: book.global,
        flagged_per_layer: book.per_layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::component_codes::help_stream;
    use crate::galois::Field;
    use proptest::prelude::*;
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recurrence_examples() {
        assert_eq!(correction_capability(30, &[17]).unwrap(), vec![6]);
        assert_eq!(
            correction_capability(30, &[17, 17, 17]).unwrap(),
            vec![6, 9, 10]
        );
        assert_eq!(
            correction_capability(30, &[16, 17, 17]).unwrap(),
            vec![6, 9, 10]
        );
        assert_eq!(
            correction_capability(30, &[16, 16, 16]).unwrap(),
            vec![6, 9, 11]
        );
        assert_eq!(
            correction_capability(30, &[5, 17, 28]),
            Err(MLayerError::InfeasibleLayering {
                layer: 3,
                slack: 1,
                prior: 12
            })
        );
        assert!(correction_capability(30, &[17, 16]).is_err());
    }

    #[test]
    fn thirty_node_three_layer_plan() {
        let plan = optimize_layers(30, 3, 50).unwrap();
        assert_eq!(plan.d, vec![16, 17, 17]);
        assert_eq!(plan.d_tilde, 17);
        assert_eq!(plan.t, vec![6, 9, 10]);
        assert_eq!(plan.worst_case_bound, (77, 8));
        assert!(plan.meets_worst_case_bound);
        assert!(plan.code_degree().is_err());
        let one = optimize_layers(30, 1, 12).unwrap();
        assert_eq!((one.d.clone(), one.t.clone()), (vec![12], vec![8]));
        assert_eq!(one.code_degree(), Ok(12));
        assert!(optimize_layers(10, 5, 49).is_err());
    }

    #[test]
    fn equal_split_beats_every_composition_small() {
        let n = 15;
        let best = correction_capability(n, &balanced_split(12, 3)).unwrap()[2];
        for c in nondecreasing_compositions(12, 3, 1) {
            if let Ok(t) = correction_capability(n, &c) {
                assert!(t[2] <= best, "{c:?} gives {t:?}");
            }
        }
    }

    #[test]
    fn dual_rate() {
        let r = dual_min_d(30, 3, 10).unwrap();
        assert_eq!(r.d_tilde, 17);
        assert_eq!(r.t, vec![6, 9, 10]);
        assert_eq!(r.bound, (116, 7));
        assert!(r.meets_bound);
        assert_eq!(dual_min_d(30, 3, 0).unwrap().d_tilde, 29);
        assert!(dual_min_d(30, 3, 40).is_err());
    }

    #[test]
    fn efficiencies() {
        assert_eq!(error_correction_efficiency(30, 3, 17), Ratio::new(77, 240));
        assert_eq!(baseline_correction_efficiency(30, 17), Ratio::new(1, 5));
        let r = error_correction_efficiency(30, 7, 10) / correction_efficiency_limit(30, 10);
        assert!(r >= Ratio::new(99, 100));
        // m = 1 collapses to (n - d - 2)/(2n).
        assert_eq!(error_correction_efficiency(30, 1, 17), Ratio::new(11, 60));
        for m in 2..16 {
            assert!(
                error_correction_efficiency(30, m + 1, 17) > error_correction_efficiency(30, m, 17)
            );
        }
    }

    #[test]
    fn capacity() {
        assert_eq!(storage_capacity(&[2]), Ok(2));
        assert_eq!(storage_capacity(&[4, 4, 4]), Ok(18));
        assert_eq!(storage_capacity(&[4, 5]), Err(MLayerError::OddDegree(5)));
        let audit = capacity_audit(12, 3);
        assert_eq!(audit.maximizers, vec![vec![2, 2, 8]]);
        assert_eq!(audit.max_capacity, 24);
        assert_eq!(audit.minimizers, vec![vec![4, 4, 4]]);
        assert_eq!(audit.min_capacity, 18);
        assert!(!audit.equal_split_is_max);
    }

    #[test]
    fn lattice_shapes() {
        assert_eq!(plan_lattice(1, 1, None).unwrap().rho, 1);
        assert_eq!(plan_lattice(12, 3, None).unwrap().rho, 4);
        let l = plan_lattice(13, 3, None).unwrap();
        assert_eq!((l.rho, l.padding()), (5, 2));
        assert_eq!(l.slot(7), (1, 2));
        assert_eq!(l.layer(2), 10..13);
        assert!(plan_lattice(13, 3, Some(4)).is_err());
    }

    fn corrupt_stream(
        f: &Field,
        s: &mut [Elem],
        blocks: std::ops::Range<usize>,
        rng: &mut ChaCha8Rng,
    ) {
        for e in &mut s[blocks] {
            *e = f.add(*e, f.random_nonzero(rng));
        }
    }

    #[test]
    fn staged_adversary_beats_single_layer() {
        // n = 30, d = 16, m = 3, rho = 1: t = (6, 9, 11).
        let f = Field::gf65536();
        let code = plan_code(30, 16, 3, 72 * 3, Some(1)).unwrap();
        let enc = EncoderMatrices::new(&f, 30, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data: Vec<Elem> = (0..code.b_f).map(|_| f.random(&mut rng)).collect();
        let shares = encode_file(&enc, &code, &data).unwrap();
        let z = 0;
        let mut help: Vec<Option<Vec<Elem>>> = (0..30)
            .map(|i| (i != z).then(|| help_stream(&enc, &shares[i], z)))
            .collect();
        let bad: Vec<usize> = sample(&mut rng, 29, 10)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        for (k, &b) in bad.iter().enumerate() {
            let onset = if k < 6 {
                0
            } else if k < 9 {
                1
            } else {
                2
            };
            corrupt_stream(&f, help[b].as_mut().unwrap(), onset..3, &mut rng);
        }
        let out = regenerate_node(&enc, &code, &help, z, FlagPolicy::Layered).unwrap();
        assert_eq!(out.share, shares[z]);
        assert_eq!(out.flagged, bad.iter().copied().collect());
        assert_eq!(
            out.flagged_per_layer
                .iter()
                .map(|s| s.len())
                .collect::<Vec<_>>(),
            vec![6, 3, 1]
        );
        assert!(regenerate_node(&enc, &code, &help, z, FlagPolicy::Independent).is_err());
    }

    #[test]
    fn clean_round_trip_and_layered_read() {
        let f = Field::new(31, None).unwrap();
        let code = plan_code(12, 4, 3, 50, None).unwrap();
        assert_eq!(code.lattice.theta, 9);
        let enc = EncoderMatrices::new(&f, 12, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Elem> = (0..50).map(|_| f.random(&mut rng)).collect();
        let shares = encode_file(&enc, &code, &data).unwrap();
        let mut got: Vec<Option<Vec<Elem>>> = shares.iter().cloned().map(Some).collect();
        let read = reconstruct_file(&enc, &code, &got, FlagPolicy::Layered).unwrap();
        assert_eq!(read.data, data);
        for b in [2, 7, 9, 11] {
            for e in got[b].as_mut().unwrap().iter_mut() {
                if rng.gen_bool(0.7) {
                    *e = f.add(*e, f.random_nonzero(&mut rng));
                }
            }
        }
        let read = reconstruct_file(&enc, &code, &got, FlagPolicy::Layered).unwrap();
        assert_eq!(read.data, data);
        assert!(read.flagged.is_subset(&BTreeSet::from([2, 7, 9, 11])));
        for z in 0..12 {
            let help: Vec<Option<Vec<Elem>>> = (0..12)
                .map(|i| (i != z).then(|| help_stream(&enc, &shares[i], z)))
                .collect();
            let out = regenerate_node(&enc, &code, &help, z, FlagPolicy::Layered).unwrap();
            assert_eq!(out.share, shares[z]);
        }
    }

    proptest! {
        #[test]
        fn epsilon_form_matches_recurrence(n in 3usize..60, parts in proptest::collection::vec(1usize..58, 1..7)) {
            let mut d: Vec<usize> = parts.into_iter().filter(|&x| x < n).collect();
            d.sort_unstable();
            prop_assume!(!d.is_empty());
            if let Ok(t) = correction_capability(n, &d) {
                let form = epsilon_form(n, &d).unwrap();
                prop_assert_eq!(form.iter().map(|x| x.0).collect::<Vec<_>>(), t);
                prop_assert!(form.iter().all(|x| x.1 <= 1));
            }
        }

        #[test]
        fn equal_split_meets_worst_case_bound(n in 4usize..80, m in 1usize..8, d in 1usize..79) {
            prop_assume!(d < n);
            if let Ok(t) = correction_capability(n, &vec![d; m]) {
                prop_assert!(Ratio::from_integer(*t.last().unwrap() as i128) >= worst_case_bound(n, m, d));
            }
        }

        #[test]
        fn correction_efficiency_increases_in_m(n in 5usize..100, d in 1usize..95, m in 1usize..20) {
            prop_assume!(d + 2 < n);
            prop_assert!(error_correction_efficiency(n, m + 1, d) > error_correction_efficiency(n, m, d));
        }
    }
}
