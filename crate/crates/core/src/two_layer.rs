//! The 2-layer rate-matched code.
//!
//! A file is split into `theta_L` fractional-rate blocks and `theta_H`
//! full-rate blocks that share one encoder. The fractional parameter is
//! chosen so that the fractional code corrects exactly as many corrupted
//! helpers (`M`) as the full-rate code can absorb as erasures:
//! `d = n - M - 1` and `xd = n - 2M - 1`. Repair first decodes every
//! fractional block, which locates the misbehaving helpers, then decodes
//! the full-rate blocks with those helpers erased.
//!
//! Blocks are stored in a secret order so that an adversary cannot aim its
//! tampering at the full-rate blocks alone; enough fractional blocks are
//! used that every active adversary is caught with probability `P_det`.

use std::collections::BTreeSet;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::component_codes::{
    encode_block, reconstruct, regenerate, CodeError, CodeKind, EncoderMatrices, MessageBlock,
};
use crate::galois::Elem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwoLayerError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("file of {b_f} symbols is too small; need more than {min}")]
    FileTooSmall { b_f: u64, min: u64 },
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("decoding failed at block position {position}")]
    DecodeFailure { position: usize },
    #[error("{flagged} nodes flagged, more than the {max} that can be erased")]
    TooManyFlags { flagged: usize, max: usize },
    #[error("malformed permutation record: {0}")]
    RecordFormat(String),
    #[error("the permutation record has already been erased")]
    RecordErased,
    #[error(transparent)]
    Code(CodeError),
}

impl TwoLayerError {
    pub fn is_decode_failure(&self) -> bool {
        matches!(
            self,
            TwoLayerError::DecodeFailure { .. } | TwoLayerError::TooManyFlags { .. }
        )
    }

    fn at(position: usize) -> impl Fn(CodeError) -> TwoLayerError {
        move |e| match e {
            CodeError::DecodeFailure | CodeError::InconsistentFlags => {
                TwoLayerError::DecodeFailure { position }
            }
            other => TwoLayerError::Code(other),
        }
    }
}

/// `d` and `xd` for `n` nodes and at most `M` malicious ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateMatch {
    pub d: usize,
    pub xd: usize,
}

impl RateMatch {
    /// Errors the fractional code corrects during repair, `floor((n - xd - 1)/2)`.
    pub fn fractional_radius(&self, n: usize) -> usize {
        (n - self.xd - 1) / 2
    }

    /// Erasures the full-rate repair code absorbs, `n - d - 1`.
    pub fn erasure_budget(&self, n: usize) -> usize {
        n - self.d - 1
    }
}

/// Rate matching for any `n > 2M + 1`, `M >= 1`; `d` may be odd here.
pub fn rate_match(n: usize, malicious: usize) -> Result<RateMatch, TwoLayerError> {
    if malicious == 0 || n <= 2 * malicious + 1 {
        return Err(TwoLayerError::Infeasible(format!(
            "need M >= 1 and n > 2M + 1, got n = {n}, M = {malicious}"
        )));
    }
    Ok(RateMatch {
        d: n - malicious - 1,
        xd: n - 2 * malicious - 1,
    })
}

/// `(1 - (1 - P)^theta_L)^M`: probability that each of `M` tampering nodes
/// alters at least one of its `theta_L` fractional-block help symbols.
pub fn detection_probability(p: f64, theta_l: u64, malicious: u32) -> f64 {
    let miss = (1.0 - p).powi(theta_l.min(i32::MAX as u64) as i32);
    (1.0 - miss).powi(malicious as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoLayerPlan {
    pub n: usize,
    /// `M`, the number of malicious nodes tolerated.
    pub malicious: usize,
    /// `P`, per-symbol tamper probability.
    pub p: f64,
    /// `P_det`, required detection probability.
    pub p_det: f64,
    /// `B_F`, file size in symbols.
    pub b_f: u64,
    pub d: usize,
    pub xd: usize,
    pub alpha: usize,
    pub b_h: usize,
    pub b_l: usize,
    pub theta_l: u64,
    pub theta_h: u64,
}

/// Smallest `theta >= 1` with `detection_probability(p, theta, M) >= p_det`.
pub fn min_fractional_blocks(p: f64, p_det: f64, malicious: usize) -> u64 {
    let per_node = (p_det.ln() / malicious as f64).exp_m1().abs(); // 1 - P_det^(1/M)
    let raw = (per_node.ln() / (1.0 - p).ln()).ceil();
    let mut theta = if raw.is_finite() && raw > 1.0 {
        raw as u64
    } else {
        1
    };
    let m = malicious as u32;
    while detection_probability(p, theta, m) < p_det {
        theta += 1;
    }
    while theta > 1 && detection_probability(p, theta - 1, m) >= p_det {
        theta -= 1;
    }
    theta
}

/// Closed-form parameter choice for the 2-layer code.
pub fn plan_parameters(
    n: usize,
    malicious: usize,
    p: f64,
    p_det: f64,
    b_f: u64,
) -> Result<TwoLayerPlan, TwoLayerError> {
    let rm = rate_match(n, malicious)?;
    if !(p > 0.0 && p <= 1.0) || !(p_det > 0.0 && p_det < 1.0) {
        return Err(TwoLayerError::Infeasible(format!(
            "need 0 < P <= 1 and 0 < P_det < 1, got P = {p}, P_det = {p_det}"
        )));
    }
    if rm.d % 2 != 0 {
        return Err(TwoLayerError::Infeasible(format!(
            "d = n - M - 1 = {} is odd; the product-matrix code needs even d",
            rm.d
        )));
    }
    let alpha = rm.d / 2;
    let b_h = CodeKind::Full.block_size(alpha);
    let b_l = CodeKind::Fractional { xd: rm.xd }.block_size(alpha);
    let theta_l = min_fractional_blocks(p, p_det, malicious);
    let min = theta_l * b_l as u64;
    if b_f <= min {
        return Err(TwoLayerError::FileTooSmall { b_f, min });
    }
    let theta_h = (b_f - min).div_ceil(b_h as u64);
    Ok(TwoLayerPlan {
        n,
        malicious,
        p,
        p_det,
        b_f,
        d: rm.d,
        xd: rm.xd,
        alpha,
        b_h,
        b_l,
        theta_l,
        theta_h,
    })
}

impl TwoLayerPlan {
    /// Match factor `x = xd / d`.
    pub fn x(&self) -> Ratio<i64> {
        Ratio::new(self.xd as i64, self.d as i64)
    }

    pub fn fractional_kind(&self) -> CodeKind {
        CodeKind::Fractional { xd: self.xd }
    }

    pub fn total_blocks(&self) -> usize {
        (self.theta_l + self.theta_h) as usize
    }

    /// Symbols per node.
    pub fn share_len(&self) -> usize {
        self.alpha * self.total_blocks()
    }

    /// Data symbols the blocks can hold, `theta_L B_L + theta_H B_H`.
    pub fn capacity(&self) -> u64 {
        self.theta_l * self.b_l as u64 + self.theta_h * self.b_h as u64
    }

    /// `delta_S = B_F / ((theta_H + theta_L) n alpha)`.
    pub fn storage_efficiency(&self) -> f64 {
        self.b_f as f64 / ((self.theta_h + self.theta_l) as f64 * (self.n * self.alpha) as f64)
    }

    /// Universally resilient baseline, `(xd/2 + 1)/n`.
    pub fn baseline_efficiency(&self) -> f64 {
        (self.xd as f64 / 2.0 + 1.0) / self.n as f64
    }

    /// `eta = delta_S / delta'_S`.
    pub fn efficiency_ratio(&self) -> f64 {
        self.storage_efficiency() / self.baseline_efficiency()
    }

    pub fn detection_probability(&self) -> f64 {
        detection_probability(self.p, self.theta_l, self.malicious as u32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BlockKind {
    Fractional,
    Full,
}

/// A block's identity: its kind and index among blocks of that kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BlockRef {
    pub kind: BlockKind,
    pub index: usize,
}

/// The secret block order, held by the secure server and handed to a
/// replacement node for one repair.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutationRecord {
    plan: TwoLayerPlan,
    seed: u64,
    order: Vec<BlockRef>,
}

const RECORD_MAGIC: &[u8; 4] = b"RMPR";
const RECORD_VERSION: u16 = 1;
const RECORD_LEN: usize = 4 + 2 + 4 + 4 + 8 * 6;

fn block_order(plan: &TwoLayerPlan, seed: u64) -> Vec<BlockRef> {
    let mut order: Vec<BlockRef> = (0..plan.theta_l as usize)
        .map(|index| BlockRef {
            kind: BlockKind::Fractional,
            index,
        })
        .chain((0..plan.theta_h as usize).map(|index| BlockRef {
            kind: BlockKind::Full,
            index,
        }))
        .collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

impl PermutationRecord {
    pub fn new(plan: &TwoLayerPlan, seed: u64) -> PermutationRecord {
        PermutationRecord {
            plan: plan.clone(),
            seed,
            order: block_order(plan, seed),
        }
    }

    pub fn plan(&self) -> &TwoLayerPlan {
        &self.plan
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Block stored at each position.
    pub fn order(&self) -> &[BlockRef] {
        &self.order
    }

    pub fn kind_at(&self, position: usize) -> CodeKind {
        match self.order[position].kind {
            BlockKind::Fractional => self.plan.fractional_kind(),
            BlockKind::Full => CodeKind::Full,
        }
    }

    fn positions(&self, kind: BlockKind) -> impl Iterator<Item = usize> + '_ {
        (0..self.order.len()).filter(move |&p| self.order[p].kind == kind)
    }

    /// Offset and length of a block's data symbols within the padded file.
    fn data_range(&self, block: BlockRef) -> std::ops::Range<usize> {
        let p = &self.plan;
        let start = match block.kind {
            BlockKind::Fractional => block.index * p.b_l,
            BlockKind::Full => p.theta_l as usize * p.b_l + block.index * p.b_h,
        };
        let len = match block.kind {
            BlockKind::Fractional => p.b_l,
            BlockKind::Full => p.b_h,
        };
        start..start + len
    }

    /// `RMPR`, version, then `n, M` as u32 and `P, P_det` (f64 bits),
    /// `B_F, seed, theta_L, theta_H` as u64, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.plan;
        let mut out = Vec::with_capacity(RECORD_LEN);
        out.extend_from_slice(RECORD_MAGIC);
        out.extend_from_slice(&RECORD_VERSION.to_le_bytes());
        out.extend_from_slice(&(p.n as u32).to_le_bytes());
        out.extend_from_slice(&(p.malicious as u32).to_le_bytes());
        out.extend_from_slice(&p.p.to_bits().to_le_bytes());
        out.extend_from_slice(&p.p_det.to_bits().to_le_bytes());
        for v in [p.b_f, self.seed, p.theta_l, p.theta_h] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PermutationRecord, TwoLayerError> {
        let bad = |m: &str| TwoLayerError::RecordFormat(m.to_string());
        if bytes.len() != RECORD_LEN {
            return Err(bad("wrong length"));
        }
        if &bytes[..4] != RECORD_MAGIC {
            return Err(bad("bad magic"));
        }
        if u16::from_le_bytes([bytes[4], bytes[5]]) != RECORD_VERSION {
            return Err(bad("unsupported version"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (n, malicious) = (u32_at(6), u32_at(10));
        let p = f64::from_bits(u64_at(14));
        let p_det = f64::from_bits(u64_at(22));
        let (b_f, seed, theta_l, theta_h) = (u64_at(30), u64_at(38), u64_at(46), u64_at(54));
        let plan = plan_parameters(n, malicious, p, p_det, b_f)?;
        if plan.theta_l != theta_l || plan.theta_h != theta_h {
            return Err(bad("block counts disagree with the stored parameters"));
        }
        Ok(PermutationRecord::new(&plan, seed))
    }
}

fn check_encoder(plan: &TwoLayerPlan, enc: &EncoderMatrices) -> Result<(), TwoLayerError> {
    if enc.n() != plan.n || enc.alpha() != plan.alpha {
        return Err(TwoLayerError::SizeMismatch(format!(
            "encoder has n = {}, alpha = {}; plan needs n = {}, alpha = {}",
            enc.n(),
            enc.alpha(),
            plan.n,
            plan.alpha
        )));
    }
    Ok(())
}

/// Encodes `B_F` data symbols; returns one share per node (`alpha` symbols
/// per block position) and the secret record.
pub fn encode_file(
    enc: &EncoderMatrices,
    plan: &TwoLayerPlan,
    data: &[Elem],
    seed: u64,
) -> Result<(Vec<Vec<Elem>>, PermutationRecord), TwoLayerError> {
    check_encoder(plan, enc)?;
    if data.len() as u64 != plan.b_f {
        return Err(TwoLayerError::SizeMismatch(format!(
            "plan expects {} symbols, got {}",
            plan.b_f,
            data.len()
        )));
    }
    let record = PermutationRecord::new(plan, seed);
    let mut padded = data.to_vec();
    padded.resize(plan.capacity() as usize, Elem::ZERO);
    let alpha = plan.alpha;
    let mut shares = vec![Vec::with_capacity(plan.share_len()); plan.n];
    for (pos, &block) in record.order.iter().enumerate() {
        let kind = record.kind_at(pos);
        let msg = MessageBlock::from_symbols(kind, alpha, &padded[record.data_range(block)])
            .map_err(TwoLayerError::Code)?;
        let coded = encode_block(enc, &msg).map_err(TwoLayerError::Code)?;
        for (share, row) in shares.iter_mut().zip(coded.rows) {
            share.extend(row);
        }
    }
    Ok((shares, record))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepairOutcome {
    /// The regenerated share of the failed node.
    pub share: Vec<Elem>,
    pub flagged: BTreeSet<usize>,
}

fn check_streams<T>(
    streams: &[Option<Vec<T>>],
    n: usize,
    len: usize,
    skip: Option<usize>,
) -> Result<(), TwoLayerError> {
    if streams.len() != n {
        return Err(TwoLayerError::SizeMismatch(format!(
            "expected {n} responses, got {}",
            streams.len()
        )));
    }
    for (i, s) in streams.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        if let Some(s) = s {
            if s.len() != len {
                return Err(TwoLayerError::SizeMismatch(format!(
                    "node {i} sent {} symbols, expected {len}",
                    s.len()
                )));
            }
        }
    }
    Ok(())
}

/// Repairs node `z` from per-helper help streams (`None` for helpers that
/// were not asked or did not answer).
///
/// Fractional blocks are decoded first without erasures and every helper
/// caught lying is flagged; the full-rate blocks are then decoded with the
/// flagged helpers erased.
pub fn regenerate_node(
    enc: &EncoderMatrices,
    record: &PermutationRecord,
    help: &[Option<Vec<Elem>>],
    z: usize,
) -> Result<RepairOutcome, TwoLayerError> {
    let plan = &record.plan;
    check_encoder(plan, enc)?;
    check_streams(help, plan.n, plan.total_blocks(), Some(z))?;
    if z >= plan.n {
        return Err(TwoLayerError::SizeMismatch(format!(
            "node {z} out of range"
        )));
    }
    let alpha = plan.alpha;
    let mut share = vec![Elem::ZERO; plan.share_len()];
    let none = BTreeSet::new();
    let column = |pos: usize| -> Vec<Option<Elem>> {
        help.iter()
            .enumerate()
            .map(|(i, s)| {
                if i == z {
                    None
                } else {
                    s.as_ref().map(|s| s[pos])
                }
            })
            .collect()
    };

    let mut flagged = BTreeSet::new();
    for pos in record.positions(BlockKind::Fractional) {
        let out = regenerate(enc, record.kind_at(pos), z, &column(pos), &none)
            .map_err(TwoLayerError::at(pos))?;
        share[pos * alpha..(pos + 1) * alpha].copy_from_slice(&out.row);
        flagged.extend(out.flagged);
    }
    if flagged.len() > plan.malicious {
        return Err(TwoLayerError::TooManyFlags {
            flagged: flagged.len(),
            max: plan.malicious,
        });
    }
    for pos in record.positions(BlockKind::Full) {
        let out = regenerate(enc, CodeKind::Full, z, &column(pos), &flagged)
            .map_err(TwoLayerError::at(pos))?;
        share[pos * alpha..(pos + 1) * alpha].copy_from_slice(&out.row);
        flagged.extend(out.flagged);
    }
    Ok(RepairOutcome { share, flagged })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadOutcome {
    pub data: Vec<Elem>,
    pub flagged: BTreeSet<usize>,
}

/// Recovers the `B_F` data symbols from node shares (`None` for nodes that
/// did not respond).
pub fn reconstruct_file(
    enc: &EncoderMatrices,
    record: &PermutationRecord,
    shares: &[Option<Vec<Elem>>],
) -> Result<ReadOutcome, TwoLayerError> {
    let plan = &record.plan;
    check_encoder(plan, enc)?;
    check_streams(shares, plan.n, plan.share_len(), None)?;
    let alpha = plan.alpha;
    let rows = |pos: usize| -> Vec<Option<Vec<Elem>>> {
        shares
            .iter()
            .map(|s| {
                s.as_ref()
                    .map(|s| s[pos * alpha..(pos + 1) * alpha].to_vec())
            })
            .collect()
    };
    let mut data = vec![Elem::ZERO; plan.capacity() as usize];
    let mut flagged = BTreeSet::new();
    let none = BTreeSet::new();
    for pos in record.positions(BlockKind::Fractional) {
        let out = reconstruct(enc, record.kind_at(pos), &rows(pos), &none)
            .map_err(TwoLayerError::at(pos))?;
        data[record.data_range(record.order[pos])].copy_from_slice(&out.block.to_symbols());
        flagged.extend(out.flagged);
    }
    for pos in record.positions(BlockKind::Full) {
        let out = reconstruct(enc, CodeKind::Full, &rows(pos), &flagged)
            .map_err(TwoLayerError::at(pos))?;
        data[record.data_range(record.order[pos])].copy_from_slice(&out.block.to_symbols());
        flagged.extend(out.flagged);
    }
    data.truncate(plan.b_f as usize);
    Ok(ReadOutcome { data, flagged })
}

/// A replacement node's single-use access to the permutation record. The
/// record is dropped as soon as one repair has been attempted.
#[derive(Debug)]
pub struct ReplacementSession {
    record: Option<PermutationRecord>,
}

impl ReplacementSession {
    pub fn new(record: PermutationRecord) -> ReplacementSession {
        ReplacementSession {
            record: Some(record),
        }
    }

    pub fn holds_record(&self) -> bool {
        self.record.is_some()
    }

    pub fn repair(
        &mut self,
        enc: &EncoderMatrices,
        help: &[Option<Vec<Elem>>],
        z: usize,
    ) -> Result<RepairOutcome, TwoLayerError> {
        let record = self.record.take().ok_or(TwoLayerError::RecordErased)?;
        regenerate_node(enc, &record, help, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::component_codes::help_stream;
    use crate::galois::Field;
    use rand::seq::index::sample;
    use rand::Rng;

    fn small_plan() -> TwoLayerPlan {
        // n = 10, M = 3: d = 6, alpha = 3, xd = 3.
        plan_parameters(10, 3, 0.2, 0.99, 26 * 6 + 12 * 5 - 7).unwrap()
    }

    fn setup(seed: u64) -> (Field, EncoderMatrices, TwoLayerPlan, Vec<Elem>) {
        let f = Field::new(23, None).unwrap();
        let plan = small_plan();
        let enc = EncoderMatrices::new(&f, plan.n, plan.alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..plan.b_f).map(|_| f.random(&mut rng)).collect();
        (f, enc, plan, data)
    }

    #[test]
    fn rate_match_identity() {
        for n in 4..80 {
            for m in 1..n {
                if n <= 2 * m + 1 {
                    assert!(rate_match(n, m).is_err());
                    continue;
                }
                let rm = rate_match(n, m).unwrap();
                assert_eq!(rm.fractional_radius(n), m);
                assert_eq!(rm.erasure_budget(n), m);
            }
        }
    }

    #[test]
    fn thirty_node_plan() {
        let plan = plan_parameters(30, 11, 0.2, 0.999_999, 14_000_000_000).unwrap();
        assert_eq!(
            (plan.d, plan.xd, plan.alpha, plan.b_h, plan.b_l),
            (18, 7, 9, 90, 28)
        );
        assert_eq!(plan.x(), Ratio::new(7, 18));
        assert_eq!(plan.theta_l, 73);
        assert!(plan.detection_probability() >= 0.999_999);
        assert!((plan.baseline_efficiency() - 0.15).abs() < 1e-12);
        assert!(plan.capacity() >= plan.b_f && plan.capacity() - plan.b_f < plan.b_h as u64);
    }

    #[test]
    fn theta_l_minimal_and_clamped() {
        for &(p, p_det, m) in &[
            (0.2, 0.999_999, 11),
            (0.2, 0.99, 3),
            (0.5, 0.9, 5),
            (0.05, 0.5, 2),
        ] {
            let t = min_fractional_blocks(p, p_det, m);
            assert!(detection_probability(p, t, m as u32) >= p_det);
            if t > 1 {
                assert!(detection_probability(p, t - 1, m as u32) < p_det);
            }
        }
        assert_eq!(min_fractional_blocks(0.2, 1e-12, 11), 1);
        assert_eq!(min_fractional_blocks(1.0, 0.999, 11), 1);
    }

    #[test]
    fn detection_probability_edges() {
        assert_eq!(detection_probability(1.0, 5, 11), 1.0);
        assert_eq!(detection_probability(0.3, 5, 0), 1.0);
        assert_eq!(detection_probability(0.3, 0, 2), 0.0);
    }

    #[test]
    fn efficiency_limits() {
        let mut plan = plan_parameters(30, 11, 0.2, 0.999_999, 14_000_000_000).unwrap();
        let eta_hi = plan.efficiency_ratio();
        let lower = plan_parameters(30, 11, 0.2, 0.9, 14_000_000_000).unwrap();
        assert!(lower.storage_efficiency() >= plan.storage_efficiency());
        assert!(eta_hi > 1.7);
        // Full-rate-only limit: delta_S = (alpha + 1)/n.
        plan.theta_l = 0;
        plan.theta_h = 1000;
        plan.b_f = 1000 * plan.b_h as u64;
        assert!((plan.storage_efficiency() - 10.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_inputs() {
        assert!(matches!(
            plan_parameters(10, 6, 0.2, 0.9, 1000),
            Err(TwoLayerError::Infeasible(_))
        ));
        assert!(matches!(
            plan_parameters(11, 3, 0.2, 0.9, 1000),
            Err(TwoLayerError::Infeasible(_))
        ));
        assert!(matches!(
            plan_parameters(10, 3, 0.2, 0.99, 10),
            Err(TwoLayerError::FileTooSmall { .. })
        ));
        assert!(plan_parameters(10, 3, 0.0, 0.99, 1000).is_err());
    }

    #[test]
    fn record_round_trip_and_bijection() {
        let plan = small_plan();
        let rec = PermutationRecord::new(&plan, 42);
        let bytes = rec.to_bytes();
        assert_eq!(&bytes[..4], b"RMPR");
        let back = PermutationRecord::from_bytes(&bytes).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_bytes(), bytes);
        let seen: BTreeSet<(bool, usize)> = rec
            .order()
            .iter()
            .map(|b| (b.kind == BlockKind::Full, b.index))
            .collect();
        assert_eq!(seen.len(), plan.total_blocks());
        assert_ne!(PermutationRecord::new(&plan, 43).order(), rec.order());
        let mut broken = bytes.clone();
        broken[0] = b'X';
        assert!(PermutationRecord::from_bytes(&broken).is_err());
    }

    #[test]
    fn clean_round_trip_and_determinism() {
        let (_, enc, plan, data) = setup(1);
        let (shares, rec) = encode_file(&enc, &plan, &data, 7).unwrap();
        assert!(shares.iter().all(|s| s.len() == plan.share_len()));
        let (again, _) = encode_file(&enc, &plan, &data, 7).unwrap();
        assert_eq!(shares, again);
        let read = reconstruct_file(
            &enc,
            &rec,
            &shares.iter().cloned().map(Some).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(read.data, data);
        assert!(read.flagged.is_empty());
        for z in 0..plan.n {
            let help: Vec<Option<Vec<Elem>>> = (0..plan.n)
                .map(|i| (i != z).then(|| help_stream(&enc, &shares[i], z)))
                .collect();
            let out = regenerate_node(&enc, &rec, &help, z).unwrap();
            assert_eq!(out.share, shares[z]);
            assert!(out.flagged.is_empty());
        }
        let zero = vec![Elem::ZERO; plan.b_f as usize];
        let (zs, _) = encode_file(&enc, &plan, &zero, 7).unwrap();
        assert!(zs.iter().flatten().all(|e| e.is_zero()));
    }

    #[test]
    fn fractional_only_attack_is_caught_and_erased() {
        let (f, enc, plan, data) = setup(2);
        let (shares, rec) = encode_file(&enc, &plan, &data, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = 0;
        let bad: BTreeSet<usize> = sample(&mut rng, plan.n - 1, plan.malicious)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        let mut help: Vec<Option<Vec<Elem>>> = (0..plan.n)
            .map(|i| (i != z).then(|| help_stream(&enc, &shares[i], z)))
            .collect();
        for &b in &bad {
            let s = help[b].as_mut().unwrap();
            for e in s.iter_mut() {
                *e = f.add(*e, f.random_nonzero(&mut rng));
            }
        }
        let out = regenerate_node(&enc, &rec, &help, z).unwrap();
        assert_eq!(out.share, shares[z]);
        assert_eq!(out.flagged, bad);
    }

    #[test]
    fn full_only_attack_beyond_half_budget_fails() {
        let (f, enc, plan, data) = setup(3);
        let (shares, rec) = encode_file(&enc, &plan, &data, 11).unwrap();
        let z = 0;
        let mut help: Vec<Option<Vec<Elem>>> = (0..plan.n)
            .map(|i| (i != z).then(|| help_stream(&enc, &shares[i], z)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // floor((n - d - 1)/2) = 1 corrupted helper is still corrected.
        let full_positions: Vec<usize> = rec.positions(BlockKind::Full).collect();
        for &pos in &full_positions {
            let s = help[4].as_mut().unwrap();
            s[pos] = f.add(s[pos], f.random_nonzero(&mut rng));
        }
        assert_eq!(
            regenerate_node(&enc, &rec, &help, z).unwrap().share,
            shares[z]
        );
        for b in [5, 6] {
            for &pos in &full_positions {
                let s = help[b].as_mut().unwrap();
                s[pos] = f.add(s[pos], f.random_nonzero(&mut rng));
            }
        }
        let err = regenerate_node(&enc, &rec, &help, z).unwrap_err();
        assert!(err.is_decode_failure());
    }

    #[test]
    fn read_with_m_malicious_nodes() {
        let (f, enc, plan, data) = setup(4);
        let (shares, rec) = encode_file(&enc, &plan, &data, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bad: BTreeSet<usize> = sample(&mut rng, plan.n, plan.malicious)
            .into_iter()
            .collect();
        let mut got: Vec<Option<Vec<Elem>>> = shares.iter().cloned().map(Some).collect();
        for &b in &bad {
            for e in got[b].as_mut().unwrap().iter_mut() {
                if rng.gen_bool(0.5) {
                    *e = f.add(*e, f.random_nonzero(&mut rng));
                }
            }
        }
        let out = reconstruct_file(&enc, &rec, &got).unwrap();
        assert_eq!(out.data, data);
        assert_eq!(out.flagged, bad);
    }

    #[test]
    fn session_drops_record_after_repair() {
        let (_, enc, plan, data) = setup(5);
        let (shares, rec) = encode_file(&enc, &plan, &data, 1).unwrap();
        let help: Vec<Option<Vec<Elem>>> = (0..plan.n)
            .map(|i| (i != 2).then(|| help_stream(&enc, &shares[i], 2)))
            .collect();
        let mut session = ReplacementSession::new(rec);
        assert!(session.holds_record());
        assert_eq!(session.repair(&enc, &help, 2).unwrap().share, shares[2]);
        assert!(!session.holds_record());
        assert_eq!(
            session.repair(&enc, &help, 2),
            Err(TwoLayerError::RecordErased)
        );
    }

    #[test]
    fn upper_fractional_plan_round_trip() {
        // n = 12, M = 3: d = 8, alpha = 4, xd = 5 > alpha.
        let f = Field::new(31, None).unwrap();
        let plan = plan_parameters(12, 3, 0.3, 0.95, 500).unwrap();
        assert!(plan.xd > plan.alpha);
        let enc = EncoderMatrices::new(&f, plan.n, plan.alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data: Vec<Elem> = (0..plan.b_f).map(|_| f.random(&mut rng)).collect();
        let (shares, rec) = encode_file(&enc, &plan, &data, 3).unwrap();
        let mut got: Vec<Option<Vec<Elem>>> = shares.iter().cloned().map(Some).collect();
        for b in [1, 5, 9] {
            for e in got[b].as_mut().unwrap().iter_mut() {
                *e = f.add(*e, f.random_nonzero(&mut rng));
            }
        }
        let out = reconstruct_file(&enc, &rec, &got).unwrap();
        assert_eq!(out.data, data);
        assert_eq!(out.flagged, BTreeSet::from([1, 5, 9]));
    }
}
