use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcg_core::format::{load_tcgt, save_tcem, save_tcgt};
use tcg_core::graph::{load_edge_list, load_matrix_market, write_edge_list};
use tcg_core::kernels::{self, with_workers};
use tcg_core::oracle::{compare, ref_sddmm, ref_spmm, CompareReport, Comparable, Tolerance};
use tcg_core::sgt::{count_blocks_after, count_blocks_before, count_square_blocks_after, reduction_ratio};
use tcg_core::{
    graph_stats, quantize_tf32, synth, translate, BlockConfig, Counters, CsrGraph, EdgeValList,
    EmbeddingMatrix, Error, PrecisionMode, TiledGraph,
};

/// Oracle checks run by default up to this many nodes.
const ORACLE_AUTO_LIMIT: usize = 100_000;

#[derive(Parser)]
#[command(name = "tcg", version, about = "Sparse graph translation and tiled SpMM/SDDMM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Translate a graph into a TCGT file and print a summary line.
    Translate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        blk: BlockArgs,
        /// Output path [default: <input>.tcgt]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print graph statistics and block counts as CSV.
    Stats {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        blk: BlockArgs,
    },
    /// Benchmark a kernel on seeded random embeddings and print a CSV row.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        blk: BlockArgs,
        #[arg(long, value_enum, default_value_t = Kernel::Spmm)]
        kernel: Kernel,
        #[arg(long, value_enum, default_value_t = Precision::F32)]
        precision: Precision,
        /// Embedding width D.
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads [default: all cores]
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 200)]
        repeat: usize,
        #[arg(long, value_enum, default_value_t = OracleMode::Auto)]
        oracle: OracleMode,
        /// Write the kernel output as a TCEM file (SDDMM: an M x 1 matrix).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic edge list.
    Gen {
        #[arg(long, value_enum, default_value_t = Model::Uniform)]
        model: Model,
        #[arg(long, default_value_t = 4096)]
        nodes: usize,
        #[arg(long, default_value_t = 8.0)]
        avg_degree: f64,
        /// Zipf exponent for the powerlaw model.
        #[arg(long, default_value_t = 1.0)]
        exponent: f64,
        /// Row windows for the blockdense model.
        #[arg(long, default_value_t = 256)]
        windows: usize,
        /// Dense blocks per window for the blockdense model.
        #[arg(long, default_value_t = 1)]
        blocks_per_window: usize,
        /// Block size for the blockdense model.
        #[arg(long, default_value_t = 16)]
        blk_h: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    format: Format,
}

#[derive(Args)]
struct BlockArgs {
    /// Row window height [default: 16, or the TCGT file's]
    #[arg(long)]
    blk_h: Option<usize>,
    /// Tile width [default: 8, or the TCGT file's]
    #[arg(long)]
    blk_w: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Auto,
    Edgelist,
    Mtx,
    Tcgt,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kernel {
    Spmm,
    Sddmm,
    Gcn,
    Agnn,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    Tf32,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleMode {
    On,
    Off,
    Auto,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Uniform,
    Powerlaw,
    Blockdense,
}

/// A failed command and its exit code: 1 for validation or verification
/// failures, 2 for I/O and format failures.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn validation(err: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, err: err.into() }
    }

    fn io(err: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, err: err.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::NodeIdOverflow { .. }
            | Error::Unsupported(_)
            | Error::MalformedHeader(_)
            | Error::Format(_) => Failure::io(e),
            _ => Failure::validation(e),
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TCG_LOG", "error")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Translate { input, blk, out } => cmd_translate(&input, &blk, out),
        Command::Stats { input, blk } => cmd_stats(&input, &blk),
        Command::Run {
            input,
            blk,
            kernel,
            precision,
            dim,
            seed,
            workers,
            repeat,
            oracle,
            out,
        } => cmd_run(&RunConfig {
            input,
            blk,
            kernel,
            precision,
            dim,
            seed,
            workers,
            repeat,
            oracle,
            out,
        }),
        Command::Gen {
            model,
            nodes,
            avg_degree,
            exponent,
            windows,
            blocks_per_window,
            blk_h,
            seed,
            out,
        } => cmd_gen(model, nodes, avg_degree, exponent, windows, blocks_per_window, blk_h, seed, out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.err));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain joined with `: `, skipping causes already quoted by
/// their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !msg.ends_with(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn detect_format(path: &Path, format: Format) -> Format {
    if format != Format::Auto {
        return format;
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtx") => Format::Mtx,
        Some("tcgt") => Format::Tcgt,
        _ => Format::Edgelist,
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().replace(',', "_"))
        .unwrap_or_else(|| "graph".into())
}

/// Loads the input graph. TCGT inputs also return their stored tiling.
fn load_input(input: &InputArgs) -> CmdResult<(CsrGraph, Option<TiledGraph>)> {
    let path = &input.input;
    let loaded = match detect_format(path, input.format) {
        Format::Mtx => (load_matrix_market(path)?, None),
        Format::Tcgt => {
            let t = load_tcgt(path)?;
            (t.graph().clone(), Some(t))
        }
        _ => (load_edge_list(path, None)?, None),
    };
    let report = loaded.0.validate();
    if !report.is_valid() {
        return Err(Failure::validation(Error::InvalidGraph(report)));
    }
    info!(
        "loaded {}: {} nodes, {} edges",
        path.display(),
        loaded.0.num_nodes(),
        loaded.0.num_edges()
    );
    Ok(loaded)
}

fn block_config(blk: &BlockArgs, stored: Option<&TiledGraph>) -> CmdResult<BlockConfig> {
    let base = stored.map(|t| t.config()).unwrap_or_default();
    Ok(BlockConfig::new(
        blk.blk_h.unwrap_or(base.blk_h),
        blk.blk_w.unwrap_or(base.blk_w),
    )?)
}

/// Reuses the stored tiling when its block shape matches `cfg`, otherwise
/// translates. Returns the tiling and the translation time in ms.
fn tiled(g: CsrGraph, stored: Option<TiledGraph>, cfg: BlockConfig) -> (TiledGraph, f64) {
    if let Some(t) = stored {
        if t.config().blk_h == cfg.blk_h && t.config().blk_w == cfg.blk_w {
            return (t, 0.0);
        }
        debug!("stored tiling is {:?}, retranslating", t.config());
    }
    let start = Instant::now();
    let t = translate(g, cfg);
    (t, start.elapsed().as_secs_f64() * 1e3)
}

fn cmd_translate(input: &InputArgs, blk: &BlockArgs, out: Option<PathBuf>) -> CmdResult {
    let (g, stored) = load_input(input)?;
    let cfg = block_config(blk, stored.as_ref())?;
    let before = count_blocks_before(&g, cfg).total;
    let (t, sgt_ms) = tiled(g, stored, cfg);
    let after = count_blocks_after(&t).total;
    let out = out.unwrap_or_else(|| {
        let mut p = input.input.clone().into_os_string();
        p.push(".tcgt");
        p.into()
    });
    save_tcgt(&t, &out)?;
    info!("wrote {}", out.display());
    println!(
        "N={} M={} windows={} blocks_before={} blocks_after={} reduction={:.1}% sgt_ms={:.3}",
        t.graph().num_nodes(),
        t.graph().num_edges(),
        t.num_row_windows(),
        before,
        after,
        100.0 * reduction_ratio(before, after),
        sgt_ms
    );
    Ok(())
}

fn cmd_stats(input: &InputArgs, blk: &BlockArgs) -> CmdResult {
    let (g, stored) = load_input(input)?;
    let cfg = block_config(blk, stored.as_ref())?;
    let square = cfg.square();
    let stats = graph_stats(&g, cfg.blk_h);
    let before_spmm = count_blocks_before(&g, cfg).total;
    let before_sddmm = count_blocks_before(&g, square).total;
    let (t, _) = tiled(g, stored, cfg);
    let after_spmm = count_blocks_after(&t).total;
    let after_sddmm = count_square_blocks_after(&t).total;
    println!("dataset,N,M,avg_deg,dense_mem_bytes,eff_comp,blocks_before_spmm,blocks_after_spmm,blocks_before_sddmm,blocks_after_sddmm");
    println!(
        "{},{},{},{:?},{},{:?},{},{},{},{}",
        dataset_name(&input.input),
        stats.num_nodes,
        stats.num_edges,
        stats.avg_degree,
        stats.dense_memory_bytes,
        stats.effective_computation,
        before_spmm,
        after_spmm,
        before_sddmm,
        after_sddmm
    );
    Ok(())
}

struct RunConfig {
    input: InputArgs,
    blk: BlockArgs,
    kernel: Kernel,
    precision: Precision,
    dim: usize,
    seed: u64,
    workers: Option<usize>,
    repeat: usize,
    oracle: OracleMode,
    out: Option<PathBuf>,
}

enum Output {
    Dense(EmbeddingMatrix),
    Edges(EdgeValList),
}

impl Output {
    fn compare(&self, other: &Output, tol: Tolerance) -> CmdResult<CompareReport> {
        let r = match (self, other) {
            (Output::Dense(a), Output::Dense(b)) => compare(a, b, tol),
            (Output::Edges(a), Output::Edges(b)) => compare(a, b, tol),
            _ => unreachable!("kernel and oracle produce the same kind"),
        };
        Ok(r?)
    }

    fn into_matrix(self) -> CmdResult<EmbeddingMatrix> {
        match self {
            Output::Dense(m) => Ok(m),
            Output::Edges(e) => {
                let (rows, _) = e.shape();
                Ok(EmbeddingMatrix::new(rows, 1, e.values)?)
            }
        }
    }
}

struct Inputs {
    x: EmbeddingMatrix,
    weight: EmbeddingMatrix,
    bias: Vec<f32>,
}

fn run_kernel(t: &TiledGraph, inp: &Inputs, kernel: Kernel, mode: PrecisionMode) -> tcg_core::Result<(Output, Counters)> {
    Ok(match kernel {
        Kernel::Spmm => {
            let r = kernels::spmm(t, &inp.x, None, mode, None)?;
            (Output::Dense(r.value), r.counters)
        }
        Kernel::Sddmm => {
            let r = kernels::sddmm(t, &inp.x, mode)?;
            (Output::Edges(r.value), r.counters)
        }
        Kernel::Gcn => {
            let r = kernels::gcn_layer(t, &inp.x, &inp.weight, &inp.bias, mode)?;
            (Output::Dense(r.value), r.counters)
        }
        Kernel::Agnn => {
            let r = kernels::agnn_layer(t, &inp.x, mode)?;
            (Output::Dense(r.value), r.counters)
        }
    })
}

/// Scalar CSR reference for `kernel`. In tf32 mode every tile operand is
/// quantized first, matching what the kernels feed the MMA primitive.
fn run_oracle(t: &TiledGraph, inp: &Inputs, kernel: Kernel, mode: PrecisionMode) -> tcg_core::Result<Output> {
    let g = t.graph();
    let q = |v: f32| match mode {
        PrecisionMode::ExactF32 => v,
        PrecisionMode::Tf32Emulated => quantize_tf32(v),
    };
    let x = inp.x.map(q);
    let adj = EdgeValList::new((0..g.num_edges()).map(|e| q(g.edge_value(e))).collect());
    Ok(match kernel {
        Kernel::Spmm => Output::Dense(ref_spmm(g, &x, Some(&adj))?),
        Kernel::Sddmm => Output::Edges(ref_sddmm(g, &x)?),
        Kernel::Gcn => {
            let mut h = ref_spmm(g, &x, Some(&adj))?.matmul(&inp.weight)?;
            let cols = h.num_cols();
            for row in h.data_mut().chunks_exact_mut(cols) {
                for (v, b) in row.iter_mut().zip(&inp.bias) {
                    *v += b;
                }
            }
            Output::Dense(h)
        }
        Kernel::Agnn => {
            let att = kernels::edge_softmax(t, &ref_sddmm(g, &x)?)?;
            let att = EdgeValList::new(att.values.into_iter().map(q).collect());
            Output::Dense(ref_spmm(g, &x, Some(&att))?)
        }
    })
}

fn cmd_run(cfg: &RunConfig) -> CmdResult {
    if cfg.repeat == 0 {
        return Err(Failure::validation(anyhow!("--repeat must be at least 1")));
    }
    if cfg.dim == 0 {
        return Err(Failure::validation(anyhow!("--dim must be at least 1")));
    }
    if cfg.workers == Some(0) {
        return Err(Failure::validation(anyhow!("--workers must be at least 1")));
    }
    let mode = match cfg.precision {
        Precision::F32 => PrecisionMode::ExactF32,
        Precision::Tf32 => PrecisionMode::Tf32Emulated,
    };
    let (g, stored) = load_input(&cfg.input)?;
    let blk = block_config(&cfg.blk, stored.as_ref())?;
    let (t, sgt_ms) = tiled(g, stored, blk);
    info!("sgt {:.3} ms", sgt_ms);

    let n = t.graph().num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inputs = Inputs {
        x: EmbeddingMatrix::random(n, cfg.dim, &mut rng),
        weight: EmbeddingMatrix::random(cfg.dim, cfg.dim, &mut rng),
        bias: EmbeddingMatrix::random(1, cfg.dim, &mut rng).into_data(),
    };

    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let (out, counters, avg_ms) = with_workers(workers, || {
        let mut last = None;
        let start = Instant::now();
        for _ in 0..cfg.repeat {
            last = Some(run_kernel(&t, &inputs, cfg.kernel, mode)?);
        }
        let avg_ms = start.elapsed().as_secs_f64() * 1e3 / cfg.repeat as f64;
        let (out, counters) = last.expect("repeat >= 1");
        Ok::<_, Error>((out, counters, avg_ms))
    })??;

    let check = match cfg.oracle {
        OracleMode::On => true,
        OracleMode::Off => false,
        OracleMode::Auto => n <= ORACLE_AUTO_LIMIT,
    };
    let report = if check {
        let want = run_oracle(&t, &inputs, cfg.kernel, mode)?;
        Some(out.compare(&want, Tolerance::new(1e-5, 1e-6))?)
    } else {
        None
    };

    println!("dataset,kernel,D,blk,precision,workers,avg_ms,tiles_visited,mma_calls,max_rel_err_vs_oracle");
    println!(
        "{},{},{},{}x{},{},{},{:.4},{},{},{}",
        dataset_name(&cfg.input.input),
        cfg.kernel.to_possible_value().unwrap().get_name(),
        cfg.dim,
        blk.blk_h,
        blk.blk_w,
        mode.as_str(),
        workers,
        avg_ms,
        counters.tiles_visited,
        counters.mma_calls,
        report.as_ref().map_or("skipped".to_string(), |r| format!("{:?}", r.max_rel_err))
    );

    if let Some(path) = &cfg.out {
        save_tcem(&out.into_matrix()?, path)?;
        info!("wrote {}", path.display());
    }
    match report {
        Some(r) if !r.passed => Err(Failure::validation(anyhow!("oracle mismatch: {r}"))),
        _ => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    model: Model,
    nodes: usize,
    avg_degree: f64,
    exponent: f64,
    windows: usize,
    blocks_per_window: usize,
    blk: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> CmdResult {
    let g = match model {
        Model::Uniform => synth::uniform(nodes, avg_degree, seed)?,
        Model::Powerlaw => synth::powerlaw(nodes, avg_degree, exponent, seed)?,
        Model::Blockdense => synth::blockdense(windows, blocks_per_window, blk, seed)?,
    };
    info!(
        "generated {} nodes, {} edges, sparsity {:.4}",
        g.num_nodes(),
        g.num_edges(),
        synth::sparsity(&g)
    );
    let res = match &out {
        Some(path) => File::create(path)
            .map(BufWriter::new)
            .and_then(|mut w| write_edge_list(&g, &mut w).and_then(|_| w.flush()))
            .with_context(|| path.display().to_string()),
        None => {
            let mut w = BufWriter::new(std::io::stdout().lock());
            write_edge_list(&g, &mut w)
                .and_then(|_| w.flush())
                .context("stdout")
        }
    };
    res.map_err(Failure::io)
}
