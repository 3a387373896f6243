//! Command definitions and their drivers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratematch::component_codes::{build_encoder, CodeError, CodeParams, EncoderMatrices};
use ratematch::galois::{Elem, Field};
use ratematch::hostile_net::{
    self, fail_and_repair, monte_carlo_detection, read_file, spawn_network, AdversaryConfig,
    HelperSelection, Layout, NetError, RepairReport, Scheme, Strategy,
};
use ratematch::m_layer::{
    self, baseline_correction_efficiency, error_correction_efficiency, optimize_layers, plan_code,
    MLayerError,
};
use ratematch::two_layer::{self, plan_parameters, TwoLayerError, TwoLayerPlan};
use serde_json::json;
use thiserror::Error;

use crate::figures::{self, TwoLayerSweep};
use crate::sharefile::{
    bytes_to_symbols, load_store, symbols_to_bytes, write_share, write_store, FormatError,
    SchemeTag, ShareFile, ShareHeader, Store,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("decode failure: {0}")]
    Decode(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 infeasible, 3 decode failure, 4 I/O, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Decode(_) => 3,
            CliError::Io(_) => 4,
            CliError::Usage(_) => 1,
        }
    }
}

impl From<TwoLayerError> for CliError {
    fn from(e: TwoLayerError) -> Self {
        match e {
            TwoLayerError::Infeasible(_) | TwoLayerError::FileTooSmall { .. } => {
                CliError::Infeasible(e.to_string())
            }
            TwoLayerError::Code(c) => c.into(),
            e if e.is_decode_failure() => CliError::Decode(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<MLayerError> for CliError {
    fn from(e: MLayerError) -> Self {
        match e {
            MLayerError::InfeasibleLayering { .. }
            | MLayerError::InvalidInput(_)
            | MLayerError::OddDegree(_) => CliError::Infeasible(e.to_string()),
            MLayerError::Code(c) => c.into(),
            e if e.is_decode_failure() => CliError::Decode(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<CodeError> for CliError {
    fn from(e: CodeError) -> Self {
        match e {
            CodeError::InvalidParams(_) | CodeError::FieldTooSmall { .. } => {
                CliError::Infeasible(e.to_string())
            }
            CodeError::DecodeFailure | CodeError::InconsistentFlags | CodeError::Codec(_) => {
                CliError::Decode(e.to_string())
            }
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Field(_) => CliError::Infeasible(e.to_string()),
            e => CliError::Io(e.to_string()),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Io(_) => CliError::Io(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn emit_json(out: &mut dyn Write, v: &serde_json::Value) -> Result<(), CliError> {
    emit(
        out,
        &format!(
            "{}\n",
            serde_json::to_string_pretty(v).expect("values serialize")
        ),
    )
}

#[derive(Debug, Parser)]
#[command(
    name = "ratematch",
    version,
    about = "Rate-matched regenerating codes against malicious nodes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plans a 2-layer rate-matched code.
    Plan2(Plan2Args),
    /// Optimizes the per-layer repair degrees of an m-layer code.
    Planm(PlanmArgs),
    /// Encodes a file into one share file per node.
    Store(StoreArgs),
    /// Fails one node and regenerates it from the others.
    Repair(RepairArgs),
    /// Reconstructs the stored file.
    Read(ReadArgs),
    /// Writes the CSV series behind a figure.
    Figures(FiguresArgs),
    /// Compares empirical and predicted detection rates.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Args)]
pub struct Plan2Args {
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long, default_value_t = 11)]
    pub malicious: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long, default_value_t = 0.999999)]
    pub p_det: f64,
    /// File size in symbols.
    #[arg(long, default_value_t = 14_000_000_000)]
    pub b_f: u64,
}

#[derive(Debug, Args)]
pub struct PlanmArgs {
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 50)]
    pub d0: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    TwoLayer,
    MLayer,
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeArg::TwoLayer)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    /// 2-layer: number of malicious nodes to tolerate.
    #[arg(long, default_value_t = 11)]
    pub malicious: usize,
    /// 2-layer: per-symbol tampering probability to plan against.
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long, default_value_t = 0.999999)]
    pub p_det: f64,
    /// m-layer: repair degree of every layer.
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    /// m-layer: number of layers.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    /// m-layer: lattice columns; defaults to one block per layer per column.
    #[arg(long)]
    pub rho: Option<usize>,
    #[arg(long, default_value_t = 65536)]
    pub field: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Uniform,
    FractionalOnly,
    FullOnly,
    Layers,
    Staged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HelpersArg {
    All,
    Minimal,
}

#[derive(Debug, Clone, Args)]
pub struct AdversaryArgs {
    /// Explicit compromised nodes.
    #[arg(long, value_delimiter = ',', conflicts_with = "tau")]
    pub compromised: Vec<usize>,
    /// Number of compromised nodes, drawn at random from `--seed`.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Per-symbol tampering probability.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Uniform)]
    pub strategy: StrategyArg,
    /// Layers hit by `--strategy layers`.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<usize>,
    /// `node=layer` onsets for `--strategy staged`.
    #[arg(long, value_delimiter = ',', value_parser = parse_onset)]
    pub onset: Vec<(usize, usize)>,
    /// Lets targeted strategies see where each block is stored.
    #[arg(long)]
    pub layout_knowledge: bool,
    /// Decode every m-layer block on its own, without carrying flags.
    #[arg(long)]
    pub plain: bool,
    /// Writes every compromised-node response as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn parse_onset(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once('=')
        .ok_or_else(|| format!("expected node=layer, got {s:?}"))?;
    let node = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let layer = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    Ok((node, layer))
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub node: usize,
    #[arg(long, value_enum, default_value_t = HelpersArg::All)]
    pub helpers: HelpersArg,
    #[command(flatten)]
    pub adversary: AdversaryArgs,
}

#[derive(Debug, Args)]
pub struct ReadArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub adversary: AdversaryArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig6,
    Fig7,
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    #[arg(value_enum)]
    pub which: Figure,
    /// Destination CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long, default_value_t = 11)]
    pub malicious: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    /// File size in symbols for fig1 and fig2.
    #[arg(long, default_value_t = 14_000_000_000)]
    pub b_f: u64,
    /// Layer count for fig3.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    /// Total repair degree for fig6.
    #[arg(long, default_value_t = 50)]
    pub d0: usize,
    /// Fixed per-layer degrees for fig7.
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10])]
    pub degrees: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long, default_value_t = 11)]
    pub malicious: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long, default_value_t = 0.99)]
    pub p_det: f64,
    /// File size in symbols; defaults to the smallest feasible file.
    #[arg(long)]
    pub b_f: Option<u64>,
    #[arg(long, default_value_t = 65536)]
    pub field: u64,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Plan2(a) => cmd_plan2(&a, out),
        Command::Planm(a) => cmd_planm(&a, out),
        Command::Store(a) => cmd_store(&a, out),
        Command::Repair(a) => cmd_repair(&a, out),
        Command::Read(a) => cmd_read(&a, out),
        Command::Figures(a) => cmd_figures(&a, out),
        Command::Montecarlo(a) => cmd_montecarlo(&a, out),
    }
}

fn plan_json(plan: &TwoLayerPlan) -> serde_json::Value {
    let x = plan.x();
    json!({
        "plan": plan,
        "x": format!("{}/{}", x.numer(), x.denom()),
        "storage_efficiency": plan.storage_efficiency(),
        "baseline_efficiency": plan.baseline_efficiency(),
        "efficiency_ratio": plan.efficiency_ratio(),
        "detection_probability": plan.detection_probability(),
    })
}

pub fn cmd_plan2(a: &Plan2Args, out: &mut dyn Write) -> Result<(), CliError> {
    let plan = plan_parameters(a.n, a.malicious, a.p, a.p_det, a.b_f)?;
    emit_json(out, &plan_json(&plan))
}

pub fn cmd_planm(a: &PlanmArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let plan = optimize_layers(a.n, a.m, a.d0)?;
    let ratio = |r: num_rational::Ratio<i128>| *r.numer() as f64 / *r.denom() as f64;
    emit_json(
        out,
        &json!({
            "plan": plan,
            "code_degree": plan.code_degree().ok(),
            "delta_c": ratio(error_correction_efficiency(a.n, a.m, plan.d_tilde)),
            "delta_c_baseline": ratio(baseline_correction_efficiency(a.n, plan.d_tilde)),
        }),
    )
}

/// Plans a 2-layer code for `symbols` data symbols, growing a file too small
/// to hold the fractional blocks to the smallest size that fits.
fn plan_for_file(a: &StoreArgs, symbols: u64) -> Result<TwoLayerPlan, CliError> {
    match plan_parameters(a.n, a.malicious, a.p, a.p_det, symbols.max(1)) {
        Err(TwoLayerError::FileTooSmall { min, .. }) => {
            Ok(plan_parameters(a.n, a.malicious, a.p, a.p_det, min + 1)?)
        }
        r => Ok(r?),
    }
}

pub fn cmd_store(a: &StoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bytes = fs::read(&a.input).map_err(io(&a.input))?;
    let field = Field::new(a.field, None).map_err(|e| CliError::Infeasible(e.to_string()))?;
    let mut data = bytes_to_symbols(&field, &bytes);
    let mut header = ShareHeader {
        scheme: SchemeTag::TwoLayer,
        q: field.order(),
        node: 0,
        n: a.n as u32,
        d: 0,
        alpha: 0,
        xd: 0,
        theta_l: 0,
        theta_h: 0,
        m: 0,
        rho: 0,
        theta: 0,
        b_f: 0,
        original_len: bytes.len() as u64,
        symbol_count: 0,
    };
    let (shares, record) = match a.scheme {
        SchemeArg::TwoLayer => {
            let plan = plan_for_file(a, data.len() as u64)?;
            let enc = build_encoder(&CodeParams::new(&field, plan.n, plan.d)?)?;
            data.resize(plan.b_f as usize, Elem::ZERO);
            let (shares, record) = two_layer::encode_file(&enc, &plan, &data, a.seed)?;
            header.d = plan.d as u32;
            header.alpha = plan.alpha as u32;
            header.xd = plan.xd as u32;
            header.theta_l = plan.theta_l;
            header.theta_h = plan.theta_h;
            header.theta = plan.total_blocks() as u64;
            header.b_f = plan.b_f;
            (shares, Some(record))
        }
        SchemeArg::MLayer => {
            if data.is_empty() {
                data.push(Elem::ZERO);
            }
            let code = plan_code(a.n, a.d, a.m, data.len() as u64, a.rho)?;
            let enc = build_encoder(&CodeParams::new(&field, a.n, a.d)?)?;
            let shares = m_layer::encode_file(&enc, &code, &data)?;
            header.scheme = SchemeTag::MLayer;
            header.d = code.d_tilde as u32;
            header.alpha = code.alpha as u32;
            header.m = code.lattice.m as u32;
            header.rho = code.lattice.rho as u32;
            header.theta = code.lattice.theta as u64;
            header.b_f = code.b_f;
            (shares, None)
        }
    };
    let files: Vec<ShareFile> = shares
        .into_iter()
        .enumerate()
        .map(|(i, symbols)| ShareFile {
            header: ShareHeader {
                node: i as u32,
                symbol_count: symbols.len() as u64,
                ..header.clone()
            },
            symbols,
        })
        .collect();
    write_store(&a.out, &field, &files, record.as_ref())?;
    emit_json(
        out,
        &json!({
            "dir": a.out.display().to_string(),
            "nodes": a.n,
            "original_len": bytes.len(),
            "symbols_per_node": files.first().map_or(0, |f| f.symbols.len()),
        }),
    )
}

/// Rebuilds the encoder and the layout a store was written with.
fn open(store: &Store) -> Result<(EncoderMatrices, Layout), CliError> {
    let h = &store.header;
    let enc = build_encoder(&CodeParams::new(&store.field, h.n as usize, h.d as usize)?)?;
    let layout = match h.scheme {
        SchemeTag::TwoLayer => {
            Layout::TwoLayer(store.record.clone().expect("2-layer stores load a record"))
        }
        SchemeTag::MLayer => {
            let code = plan_code(
                h.n as usize,
                h.d as usize,
                h.m as usize,
                h.b_f,
                Some(h.rho as usize),
            )?;
            if code.lattice.theta as u64 != h.theta || code.lattice.m as u32 != h.m {
                return Err(CliError::Io("share header lattice is inconsistent".into()));
            }
            Layout::MLayer(code)
        }
    };
    Ok((enc, layout))
}

fn adversary(
    a: &AdversaryArgs,
    n: usize,
    exclude: Option<usize>,
) -> Result<AdversaryConfig, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let compromised: BTreeSet<usize> = match a.tau {
        Some(tau) => {
            let pool: Vec<usize> = (0..n).filter(|&i| Some(i) != exclude).collect();
            if tau > pool.len() {
                return Err(CliError::Usage(format!(
                    "tau = {tau} exceeds the {} eligible nodes",
                    pool.len()
                )));
            }
            sample(&mut rng, pool.len(), tau)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        }
        None => a.compromised.iter().copied().collect(),
    };
    let strategy = match a.strategy {
        StrategyArg::Uniform => Strategy::Uniform,
        StrategyArg::FractionalOnly => Strategy::FractionalOnly,
        StrategyArg::FullOnly => Strategy::FullOnly,
        StrategyArg::Layers => Strategy::LayerTargeted {
            layers: a.layers.iter().copied().collect(),
        },
        StrategyArg::Staged => Strategy::Staged {
            onset: a.onset.iter().copied().collect::<BTreeMap<_, _>>(),
        },
    };
    Ok(AdversaryConfig {
        compromised,
        tamper_probability: a.p,
        seed: rng.gen(),
        strategy,
        layout_knowledge: a.layout_knowledge,
    })
}

fn scheme_for(store: &Store, plain: bool) -> Scheme {
    match (store.header.scheme, plain) {
        (SchemeTag::TwoLayer, false) => Scheme::TwoLayer,
        (SchemeTag::MLayer, false) => Scheme::MLayer,
        (_, true) => Scheme::Plain,
    }
}

fn finish(
    net: &hostile_net::Network,
    a: &AdversaryArgs,
    report: &RepairReport,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if let Some(path) = &a.trace {
        let file = fs::File::create(path).map_err(io(path))?;
        net.export_trace(std::io::BufWriter::new(file))?;
    }
    emit_json(
        out,
        &json!({ "report": report, "compromised": net.adversary().compromised }),
    )?;
    match (report.success, &report.error) {
        (true, _) => Ok(()),
        (false, e) => Err(CliError::Decode(e.clone().unwrap_or_default())),
    }
}

pub fn cmd_repair(a: &RepairArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = load_store(&a.dir)?;
    let n = store.header.n as usize;
    if a.node >= n {
        return Err(CliError::Usage(format!(
            "node {} out of range for n = {n}",
            a.node
        )));
    }
    let (enc, layout) = open(&store)?;
    let adv = adversary(&a.adversary, n, Some(a.node))?;
    let mut net = spawn_network(&enc, layout, store.shares.clone(), adv)?;
    if a.adversary.trace.is_some() {
        net.enable_trace();
    }
    let helpers = match a.helpers {
        HelpersArg::All => HelperSelection::AllSurvivors,
        HelpersArg::Minimal => HelperSelection::Minimal,
    };
    let report = fail_and_repair(
        &mut net,
        a.node,
        scheme_for(&store, a.adversary.plain),
        helpers,
    )?;
    if report.success {
        let share = ShareFile {
            header: ShareHeader {
                node: a.node as u32,
                ..store.header.clone()
            },
            symbols: net.shares()[a.node].clone(),
        };
        write_share(&a.dir, &store.field, &share)?;
    }
    finish(&net, &a.adversary, &report, out)
}

pub fn cmd_read(a: &ReadArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = load_store(&a.dir)?;
    let n = store.header.n as usize;
    let (enc, layout) = open(&store)?;
    let adv = adversary(&a.adversary, n, None)?;
    let mut net = spawn_network(&enc, layout, store.shares.clone(), adv)?;
    if a.adversary.trace.is_some() {
        net.enable_trace();
    }
    let (report, data) = read_file(&mut net, scheme_for(&store, a.adversary.plain))?;
    if let Some(data) = data.filter(|_| report.success) {
        let bytes = symbols_to_bytes(&store.field, &data, store.header.original_len as usize);
        fs::write(&a.out, bytes).map_err(io(&a.out))?;
    }
    finish(&net, &a.adversary, &report, out)
}

pub fn figure_csv(a: &FiguresArgs) -> Result<String, CliError> {
    let sweep = TwoLayerSweep {
        n: a.n,
        malicious: a.malicious,
        p: a.p,
        b_f: a.b_f,
        ..TwoLayerSweep::default()
    };
    Ok(match a.which {
        Figure::Fig1 => figures::fig1(&sweep)?,
        Figure::Fig2 => figures::fig2(&sweep)?,
        Figure::Fig3 => figures::fig3(a.n, a.m),
        Figure::Fig6 => figures::fig6(a.n, a.d0),
        Figure::Fig7 => figures::fig7(a.n, &a.degrees),
    })
}

pub fn cmd_figures(a: &FiguresArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let csv = figure_csv(a)?;
    match &a.out {
        Some(path) => fs::write(path, csv).map_err(io(path)),
        None => emit(out, &csv),
    }
}

pub fn cmd_montecarlo(a: &MonteCarloArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let plan = match a.b_f {
        Some(b_f) => plan_parameters(a.n, a.malicious, a.p, a.p_det, b_f)?,
        None => match plan_parameters(a.n, a.malicious, a.p, a.p_det, 1) {
            Err(TwoLayerError::FileTooSmall { min, .. }) => {
                plan_parameters(a.n, a.malicious, a.p, a.p_det, min + 1)?
            }
            r => r?,
        },
    };
    let field = Field::new(a.field, None).map_err(|e| CliError::Infeasible(e.to_string()))?;
    let enc = build_encoder(&CodeParams::new(&field, plan.n, plan.d)?)?;
    let report = monte_carlo_detection(&enc, &plan, a.trials, a.seed)?;
    emit_json(
        out,
        &json!({ "plan": plan_json(&plan), "monte_carlo": report }),
    )
}
