//! Deterministic in-process simulation of a storage network with
//! Byzantine nodes.
//!
//! A [`Network`] holds every node's share and answers repair and read
//! requests. Compromised nodes alter each symbol they send with probability
//! `P` by adding a uniformly random nonzero field element; which blocks they
//! may touch depends on the [`Strategy`]. All randomness flows from one
//! ChaCha8 stream seeded by the adversary configuration and is consumed in
//! a fixed order (block by block, then node by node), so identical seeds
//! give identical reports and traces.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::component_codes::{help_stream, EncoderMatrices};
use crate::galois::Elem;
use crate::m_layer::{self, FlagPolicy, MLayerCode};
use crate::two_layer::{self, BlockKind, PermutationRecord, ReplacementSession, TwoLayerPlan};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid adversary configuration: {0}")]
    Config(String),
    #[error("scheme does not fit the stored layout: {0}")]
    Layout(String),
    #[error("trace export failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Which blocks compromised nodes tamper with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Strategy {
    Uniform,
    FractionalOnly,
    FullOnly,
    /// Only blocks in the listed layers (for the 2-layer code, layer 0 holds
    /// the fractional blocks and layer 1 the full-rate ones).
    LayerTargeted {
        layers: BTreeSet<usize>,
    },
    /// Each listed node starts tampering at the given layer; unlisted
    /// compromised nodes tamper everywhere.
    Staged {
        onset: BTreeMap<usize, usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdversaryConfig {
    pub compromised: BTreeSet<usize>,
    pub tamper_probability: f64,
    pub seed: u64,
    pub strategy: Strategy,
    /// Targeted strategies need to know where each kind of block is stored.
    pub layout_knowledge: bool,
}

impl AdversaryConfig {
    pub fn honest(seed: u64) -> AdversaryConfig {
        AdversaryConfig::uniform(BTreeSet::new(), 0.0, seed)
    }

    pub fn uniform(compromised: BTreeSet<usize>, p: f64, seed: u64) -> AdversaryConfig {
        AdversaryConfig {
            compromised,
            tamper_probability: p,
            seed,
            strategy: Strategy::Uniform,
            layout_knowledge: false,
        }
    }

    pub fn targeted(
        compromised: BTreeSet<usize>,
        p: f64,
        seed: u64,
        strategy: Strategy,
    ) -> AdversaryConfig {
        AdversaryConfig {
            compromised,
            tamper_probability: p,
            seed,
            strategy,
            layout_knowledge: true,
        }
    }

    fn validate(&self, n: usize) -> Result<(), NetError> {
        if !(0.0..=1.0).contains(&self.tamper_probability) {
            return Err(NetError::Config(format!(
                "P = {} is not a probability",
                self.tamper_probability
            )));
        }
        if self.compromised.len() > n {
            return Err(NetError::Config(format!(
                "{} compromised nodes exceed n = {n}",
                self.compromised.len()
            )));
        }
        if let Some(&i) = self.compromised.iter().find(|&&i| i >= n) {
            return Err(NetError::Config(format!("node {i} out of range")));
        }
        if self.strategy != Strategy::Uniform && !self.layout_knowledge {
            return Err(NetError::Config(
                "targeted strategies require layout_knowledge".into(),
            ));
        }
        Ok(())
    }
}

/// How a stored file is laid out across the nodes.
#[derive(Clone, Debug)]
pub enum Layout {
    TwoLayer(PermutationRecord),
    MLayer(MLayerCode),
}

impl Layout {
    fn blocks(&self) -> usize {
        match self {
            Layout::TwoLayer(r) => r.plan().total_blocks(),
            Layout::MLayer(c) => c.lattice.theta,
        }
    }

    fn share_len(&self) -> usize {
        match self {
            Layout::TwoLayer(r) => r.plan().share_len(),
            Layout::MLayer(c) => c.share_len(),
        }
    }

    fn block_kind(&self, pos: usize) -> BlockKind {
        match self {
            Layout::TwoLayer(r) => r.order()[pos].kind,
            Layout::MLayer(_) => BlockKind::Full,
        }
    }

    fn block_layer(&self, pos: usize) -> usize {
        match self {
            Layout::TwoLayer(r) => match r.order()[pos].kind {
                BlockKind::Fractional => 0,
                BlockKind::Full => 1,
            },
            Layout::MLayer(c) => c.lattice.slot(pos).0,
        }
    }

    fn repair_degree(&self) -> usize {
        match self {
            Layout::TwoLayer(r) => r.plan().d,
            Layout::MLayer(c) => c.d_tilde,
        }
    }
}

/// Decoding pipeline to run against the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheme {
    /// Fractional blocks first, then full-rate blocks with flags erased.
    TwoLayer,
    /// Layer-by-layer with flags carried forward.
    MLayer,
    /// Every block decoded on its own.
    Plain,
}

/// Which survivors are asked for help.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HelperSelection {
    AllSurvivors,
    /// The first `d` survivors: the minimum needed, with nothing to spare.
    Minimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Action {
    Help,
    Read,
}

/// One response from a compromised node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub trial: u64,
    pub node: usize,
    pub block: usize,
    pub action: Action,
    pub tampered: bool,
}

/// Outcome of one repair or read.
#[derive(Clone, Debug, Serialize)]
pub struct RepairReport {
    /// Decoding succeeded and the result equals the ground truth.
    pub success: bool,
    pub error: Option<String>,
    pub flagged: BTreeSet<usize>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub downloaded_symbols: u64,
    /// `d` symbols per block, the minimum-storage repair bandwidth.
    pub msr_bandwidth: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PartialEq for RepairReport {
    fn eq(&self, o: &Self) -> bool {
        self.success == o.success
            && self.error == o.error
            && self.flagged == o.flagged
            && self.true_positives == o.true_positives
            && self.false_positives == o.false_positives
            && self.downloaded_symbols == o.downloaded_symbols
            && self.msr_bandwidth == o.msr_bandwidth
    }
}

/// The simulated storage network.
pub struct Network {
    enc: EncoderMatrices,
    layout: Layout,
    shares: Vec<Vec<Elem>>,
    data: Option<Vec<Elem>>,
    adversary: AdversaryConfig,
    rng: ChaCha8Rng,
    trial: u64,
    last_events: Vec<TraceEvent>,
    trace: Option<Vec<TraceEvent>>,
}

pub fn spawn_network(
    enc: &EncoderMatrices,
    layout: Layout,
    shares: Vec<Vec<Elem>>,
    adversary: AdversaryConfig,
) -> Result<Network, NetError> {
    adversary.validate(enc.n())?;
    if shares.len() != enc.n() || shares.iter().any(|s| s.len() != layout.share_len()) {
        return Err(NetError::Layout(format!(
            "need {} shares of {} symbols",
            enc.n(),
            layout.share_len()
        )));
    }
    Ok(Network {
        enc: enc.clone(),
        rng: ChaCha8Rng::seed_from_u64(adversary.seed),
        layout,
        shares,
        data: None,
        adversary,
        trial: 0,
        last_events: Vec::new(),
        trace: None,
    })
}

impl Network {
    /// Keeps the original file so reads can be checked against it.
    pub fn with_ground_truth(mut self, data: Vec<Elem>) -> Network {
        self.data = Some(data);
        self
    }

    /// Starts collecting every compromised-node response.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn set_trial(&mut self, trial: u64) {
        self.trial = trial;
    }

    pub fn shares(&self) -> &[Vec<Elem>] {
        &self.shares
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn adversary(&self) -> &AdversaryConfig {
        &self.adversary
    }

    /// Events from the most recent repair or read.
    pub fn last_events(&self) -> &[TraceEvent] {
        &self.last_events
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Writes the trace as JSON lines with a fixed field order.
    pub fn export_trace<W: Write>(&self, mut out: W) -> Result<(), NetError> {
        for ev in self.trace() {
            serde_json::to_writer(&mut out, ev).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    fn targets(&self, node: usize, pos: usize) -> bool {
        if !self.adversary.compromised.contains(&node) {
            return false;
        }
        let layer = self.layout.block_layer(pos);
        match &self.adversary.strategy {
            Strategy::Uniform => true,
            Strategy::FractionalOnly => self.layout.block_kind(pos) == BlockKind::Fractional,
            Strategy::FullOnly => self.layout.block_kind(pos) == BlockKind::Full,
            Strategy::LayerTargeted { layers } => layers.contains(&layer),
            Strategy::Staged { onset } => onset.get(&node).is_none_or(|&o| layer >= o),
        }
    }

    /// Applies the adversary to per-node responses of `width` symbols per
    /// block, visiting blocks in order and nodes in order within a block.
    fn corrupt(&mut self, responses: &mut [Option<Vec<Elem>>], width: usize, action: Action) {
        self.last_events.clear();
        let f = self.enc.field().clone();
        let p = self.adversary.tamper_probability;
        for pos in 0..self.layout.blocks() {
            for (node, slot) in responses.iter_mut().enumerate() {
                let Some(stream) = slot.as_mut() else {
                    continue;
                };
                if !self.adversary.compromised.contains(&node) {
                    continue;
                }
                let active = self.targets(node, pos);
                let mut tampered = false;
                for e in &mut stream[pos * width..(pos + 1) * width] {
                    if active && p > 0.0 && self.rng.gen_bool(p) {
                        *e = f.add(*e, f.random_nonzero(&mut self.rng));
                        tampered = true;
                    }
                }
                self.last_events.push(TraceEvent {
                    trial: self.trial,
                    node,
                    block: pos,
                    action,
                    tampered,
                });
            }
        }
        if let Some(t) = self.trace.as_mut() {
            t.extend(self.last_events.iter().cloned());
        }
    }

    fn score(&self, flagged: &BTreeSet<usize>) -> (usize, usize) {
        let tp = flagged.intersection(&self.adversary.compromised).count();
        (tp, flagged.len() - tp)
    }
}

fn check_scheme(layout: &Layout, scheme: Scheme) -> Result<(), NetError> {
    match (layout, scheme) {
        (Layout::TwoLayer(_), Scheme::TwoLayer)
        | (Layout::MLayer(_), Scheme::MLayer | Scheme::Plain) => Ok(()),
        _ => Err(NetError::Layout(format!(
            "{scheme:?} cannot decode this layout"
        ))),
    }
}

/// Fails node `z` and repairs it from the other nodes' help symbols. On
/// success the regenerated share replaces the old one.
pub fn fail_and_repair(
    net: &mut Network,
    z: usize,
    scheme: Scheme,
    helpers: HelperSelection,
) -> Result<RepairReport, NetError> {
    check_scheme(&net.layout, scheme)?;
    let n = net.enc.n();
    if z >= n {
        return Err(NetError::Config(format!("node {z} out of range")));
    }
    let start = Instant::now();
    let d = net.layout.repair_degree();
    let asked: Vec<usize> = match helpers {
        HelperSelection::AllSurvivors => (0..n).filter(|&i| i != z).collect(),
        HelperSelection::Minimal => (0..n).filter(|&i| i != z).take(d).collect(),
    };
    let mut help: Vec<Option<Vec<Elem>>> = vec![None; n];
    for &i in &asked {
        help[i] = Some(help_stream(&net.enc, &net.shares[i], z));
    }
    net.corrupt(&mut help, 1, Action::Help);
    let blocks = net.layout.blocks() as u64;
    let downloaded = asked.len() as u64 * blocks;

    let result = match (&net.layout, scheme) {
        (Layout::TwoLayer(record), _) => {
            let mut session = ReplacementSession::new(record.clone());
            session
                .repair(&net.enc, &help, z)
                .map(|o| (o.share, o.flagged))
                .map_err(|e| e.to_string())
        }
        (Layout::MLayer(code), s) => {
            let policy = if s == Scheme::Plain {
                FlagPolicy::Independent
            } else {
                FlagPolicy::Layered
            };
            m_layer::regenerate_node(&net.enc, code, &help, z, policy)
                .map(|o| (o.share, o.flagged))
                .map_err(|e| e.to_string())
        }
    };
    let (success, error, flagged) = match result {
        Ok((share, flagged)) => {
            let ok = share == net.shares[z];
            if ok {
                net.shares[z] = share;
            }
            (
                ok,
                (!ok).then(|| "regenerated share differs from the original".to_string()),
                flagged,
            )
        }
        Err(e) => (false, Some(e), BTreeSet::new()),
    };
    let (true_positives, false_positives) = net.score(&flagged);
    Ok(RepairReport {
        success,
        error,
        flagged,
        true_positives,
        false_positives,
        downloaded_symbols: downloaded,
        msr_bandwidth: d as u64 * blocks,
        wall_time: start.elapsed(),
    })
}

/// A data collector reads every node and decodes the file.
pub fn read_file(
    net: &mut Network,
    scheme: Scheme,
) -> Result<(RepairReport, Option<Vec<Elem>>), NetError> {
    check_scheme(&net.layout, scheme)?;
    let start = Instant::now();
    let alpha = net.enc.alpha();
    let mut rows: Vec<Option<Vec<Elem>>> = net.shares.iter().cloned().map(Some).collect();
    net.corrupt(&mut rows, alpha, Action::Read);
    let result = match (&net.layout, scheme) {
        (Layout::TwoLayer(record), _) => two_layer::reconstruct_file(&net.enc, record, &rows)
            .map(|o| (o.data, o.flagged))
            .map_err(|e| e.to_string()),
        (Layout::MLayer(code), s) => {
            let policy = if s == Scheme::Plain {
                FlagPolicy::Independent
            } else {
                FlagPolicy::Layered
            };
            m_layer::reconstruct_file(&net.enc, code, &rows, policy)
                .map(|o| (o.data, o.flagged))
                .map_err(|e| e.to_string())
        }
    };
    let downloaded = (net.enc.n() * net.layout.share_len()) as u64;
    let (success, error, flagged, data) = match result {
        Ok((data, flagged)) => {
            let ok = net.data.as_ref().is_none_or(|truth| *truth == data);
            let err = (!ok).then(|| "recovered data differs from the original".to_string());
            (ok, err, flagged, Some(data))
        }
        Err(e) => (false, Some(e), BTreeSet::new(), None),
    };
    let (true_positives, false_positives) = net.score(&flagged);
    let report = RepairReport {
        success,
        error,
        flagged,
        true_positives,
        false_positives,
        downloaded_symbols: downloaded,
        msr_bandwidth: (net.layout.repair_degree() * net.layout.blocks()) as u64,
        wall_time: start.elapsed(),
    };
    Ok((report, data))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub trials: u64,
    /// Fraction of trials in which every compromised node altered at least
    /// one fractional-block help symbol.
    pub detection_rate: f64,
    /// Fraction of trials whose repair returned the original share.
    pub success_rate: f64,
    /// `detection_probability(P, theta_L, M)`.
    pub predicted: f64,
    /// Binomial standard deviation of the detection rate at `predicted`.
    pub sigma: f64,
}

/// Repeats the repair of node 0 with `M` random compromised nodes among the
/// others, each tampering per symbol with the plan's `P`.
pub fn monte_carlo_detection(
    enc: &EncoderMatrices,
    plan: &TwoLayerPlan,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloReport, NetError> {
    if trials == 0 {
        return Err(NetError::Config("trials must be at least 1".into()));
    }
    if plan.malicious >= plan.n {
        return Err(NetError::Config("M must be below n".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let f = enc.field().clone();
    let data: Vec<Elem> = (0..plan.b_f).map(|_| f.random(&mut master)).collect();
    let (shares, record) = two_layer::encode_file(enc, plan, &data, master.gen())
        .map_err(|e| NetError::Layout(e.to_string()))?;
    let (mut detected, mut succeeded) = (0u64, 0u64);
    for trial in 0..trials {
        let compromised: BTreeSet<usize> = sample(&mut master, plan.n - 1, plan.malicious)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        let adv = AdversaryConfig::uniform(compromised.clone(), plan.p, master.gen());
        let mut net = spawn_network(enc, Layout::TwoLayer(record.clone()), shares.clone(), adv)?;
        net.set_trial(trial);
        let report = fail_and_repair(&mut net, 0, Scheme::TwoLayer, HelperSelection::AllSurvivors)?;
        let caught: BTreeSet<usize> = net
            .last_events()
            .iter()
            .filter(|e| e.tampered && record.order()[e.block].kind == BlockKind::Fractional)
            .map(|e| e.node)
            .collect();
        detected += u64::from(caught == compromised);
        succeeded += u64::from(report.success);
    }
    let predicted = plan.detection_probability();
    Ok(MonteCarloReport {
        trials,
        detection_rate: detected as f64 / trials as f64,
        success_rate: succeeded as f64 / trials as f64,
        predicted,
        sigma: (predicted * (1.0 - predicted) / trials as f64).sqrt(),
    })
}
