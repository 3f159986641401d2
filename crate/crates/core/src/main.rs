use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;

use evfilt::design::{
    design_cev_ls, design_classical_matrix_ls, design_ev_arma1, design_ev_bcd, design_nv_ls,
    design_sicev_ls, design_siev_bcd, design_sieva1, BcdOptions, CevOptions, DesignReport,
};
use evfilt::experiments::{self, target_exponential_kernel, target_ideal_lowpass, ExperimentConfig, GraphConfig};
use evfilt::filters::ArmaOptions;
use evfilt::io::{self, fmt_f64};
use evfilt::nullspace::DEFAULT_RANK_TOL;
use evfilt::{
    build_shift, distsim, eigendecompose, Error, FieldKind, FilterFamily, FilterSpec, Graph, Scalar,
    ShiftInvariantBasis, ShiftKind, ShiftOperator,
};

#[derive(Parser)]
#[command(name = "evfilt", version, about = "Edge-variant graph filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graph and write it as an edge list.
    Graph {
        /// community, knn, ring, path, complete, star or grid.
        generator: String,
        #[command(flatten)]
        params: GenParams,
        #[arg(long, default_value = "graph.tsv")]
        out: PathBuf,
    },
    /// Fit a filter to a target operator.
    Design(DesignArgs),
    /// Apply a filter through its local recursion.
    Apply(ApplyArgs),
    /// Run a filter on the message-passing simulator.
    Simulate {
        #[command(flatten)]
        apply: ApplyArgs,
        /// Per-round trace (JSON).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run one of the experiments.
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone)]
struct GenParams {
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighbors per node (knn).
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    /// Side of the square holding knn positions.
    #[arg(long, default_value_t = 4.0)]
    side: f64,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
}

impl GenParams {
    fn config(&self, generator: &str) -> GraphConfig {
        let d = GraphConfig::default();
        GraphConfig {
            generator: generator.to_string(),
            n: self.n,
            clusters: self.clusters.unwrap_or(d.clusters),
            p_in: self.p_in.unwrap_or(d.p_in),
            p_out: self.p_out.unwrap_or(d.p_out),
            k: self.k as usize,
            side: self.side,
            rows: self.rows,
            cols: self.cols,
            path: None,
        }
    }
}

#[derive(Args, Clone)]
struct GraphSource {
    /// Edge-list file; overrides the generator.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value = "community")]
    generator: String,
    #[command(flatten)]
    params: GenParams,
    #[arg(long, default_value = "laplacian")]
    shift: ShiftKind,
    /// real or complex.
    #[arg(long, default_value = "real")]
    field: FieldKind,
}

impl GraphSource {
    fn load(&self) -> Result<Graph, Failure> {
        match &self.graph {
            Some(p) => Ok(io::read_edge_list(&read(p)?)?),
            None => Ok(self.params.config(&self.generator).build(self.params.seed)?),
        }
    }
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    source: GraphSource,
    /// Filter family (classical, nv, ev, cev, siev, sicev, ev-arma1, sieva1).
    #[arg(long)]
    family: String,
    #[arg(long = "order", short = 'K', default_value_t = 1)]
    order: usize,
    /// identity, exp-kernel, lowpass, consensus, or a Matrix Market file.
    #[arg(long, default_value = "exp-kernel")]
    target: String,
    #[arg(long, default_value_t = 3.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.75)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_c: f64,
    /// Feedback bound of the ARMA designs.
    #[arg(long, default_value_t = 0.7)]
    delta: f64,
    /// Output directory for filter.json and report.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ApplyArgs {
    #[command(flatten)]
    source: GraphSource,
    #[arg(long)]
    filter: PathBuf,
    #[arg(long)]
    signal: PathBuf,
    /// Relative increment that stops ARMA recursions.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value = "output.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    name: String,
    /// JSON configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// `a..b` (inclusive) or a comma-separated list.
    #[arg(long)]
    orders: Option<String>,
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long)]
    shift: Option<ShiftKind>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::LocalityViolation { .. } | Error::SupportViolation { .. } | Error::DimensionMismatch { .. } => 4,
            Error::Parse(_) | Error::Io(_) | Error::Json(_) | Error::InvalidParameter(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn read(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn write(p: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    }
    fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn parse_family(name: &str) -> Result<FilterFamily, Failure> {
    let squash = |s: &str| s.replace(['-', '_'], "").to_ascii_lowercase();
    FilterFamily::ALL
        .into_iter()
        .find(|f| squash(f.name()) == squash(name))
        .ok_or_else(|| usage(format!("unknown filter family '{name}'")))
}

fn parse_orders(text: &str) -> Result<Vec<usize>, Failure> {
    let bad = || usage(format!("invalid order list '{text}'"));
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn cmd_graph(generator: &str, params: &GenParams, out: &Path) -> Result<(), Failure> {
    if generator == "file" {
        return Err(usage("the graph command generates graphs; 'file' is not a generator"));
    }
    let g = params.config(generator).build(params.seed)?;
    write(out, &io::write_edge_list(&g))?;
    println!("nodes {} edges {} connected {}", g.n(), g.num_edges(), g.is_connected());
    Ok(())
}

fn design_target<T: Scalar>(args: &DesignArgs, s: &ShiftOperator<T>) -> Result<DMatrix<T>, Failure> {
    let n = s.n();
    let modal = |f: &dyn Fn(&nalgebra::DVector<f64>) -> nalgebra::DVector<f64>| -> Result<DMatrix<T>, Failure> {
        let dec = eigendecompose(s)?;
        let lam = dec.eigvals().map(|l| l.to_c64().re);
        if dec.eigvals().iter().any(|l| l.to_c64().im.abs() > 1e-9) {
            return Err(Error::ComplexSpectrum.into());
        }
        Ok(dec.synthesize_diagonal(&f(&lam).map(T::of)))
    };
    match args.target.as_str() {
        "identity" => Ok(DMatrix::identity(n, n)),
        "consensus" => Ok(DMatrix::from_element(n, n, T::of(1.0 / n as f64))),
        "exp" | "exp-kernel" => modal(&|l| target_exponential_kernel(l, args.gamma, args.mu)),
        "lowpass" => modal(&|l| target_ideal_lowpass(l, args.lambda_c)),
        path => {
            let m: DMatrix<T> = io::read_matrix_market(&read(Path::new(path))?)?;
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch { expected: n, got: m.nrows() }.into());
            }
            Ok(m)
        }
    }
}

fn run_design<T: Scalar>(args: &DesignArgs, family: FilterFamily, s: &ShiftOperator<T>) -> Result<DesignReport<T>, Failure> {
    let target = design_target(args, s)?;
    let k = args.order;
    let ctx = || ShiftInvariantBasis::new(s, DEFAULT_RANK_TOL);
    let modal = |ctx: &ShiftInvariantBasis<T>| ctx.decomposition().modal_projection(&target);
    let report = match family {
        FilterFamily::Classical => design_classical_matrix_ls(s, &target, k),
        FilterFamily::NodeVariant => design_nv_ls(s, &target, k, CevOptions::default()),
        FilterFamily::ConstrainedEv => design_cev_ls(s, &target, k, CevOptions::default()),
        FilterFamily::EdgeVariant => design_ev_bcd(s, &target, k, &bcd_options(args)),
        FilterFamily::Siev => ctx().and_then(|c| design_siev_bcd(&c, &modal(&c), k, &bcd_options(args))),
        FilterFamily::Sicev => ctx().and_then(|c| design_sicev_ls(&c, &modal(&c), k)),
        FilterFamily::EvArma1 => design_ev_arma1(s, &target, args.delta),
        FilterFamily::Sieva1 => ctx().and_then(|c| design_sieva1(&c, &modal(&c), args.delta)),
        FilterFamily::ClassicalArma1 => Err(Error::UnsupportedKind {
            kind: family.to_string(),
            reason: "no design routine; write the two coefficients directly".into(),
        }),
    };
    report.map_err(|e| {
        let mut f = Failure::from(e);
        if f.code != 4 {
            f.code = 3;
        }
        f
    })
}

fn bcd_options<T: Scalar>(args: &DesignArgs) -> BcdOptions<T> {
    BcdOptions {
        seed: args.source.params.seed,
        ..BcdOptions::default()
    }
}

fn cmd_design<T: Scalar>(args: &DesignArgs) -> Result<(), Failure> {
    let family = parse_family(&args.family)?;
    let graph = args.source.load()?;
    let s = build_shift::<T>(&graph, args.source.shift)?;
    let report = run_design(args, family, &s)?;
    write(&args.out.join("filter.json"), &report.fitted.to_json()?)?;
    write(&args.out.join("report.json"), &report.to_json()?)?;
    println!("nse {}", fmt_f64(report.nse));
    Ok(())
}

/// Everything `apply` and `simulate` read from disk.
struct Loaded<T: Scalar> {
    graph: Graph,
    s: ShiftOperator<T>,
    f: FilterSpec<T>,
    x: evfilt::GraphSignal<T>,
    opts: ArmaOptions,
}

fn load_apply<T: Scalar>(args: &ApplyArgs) -> Result<Loaded<T>, Failure> {
    let graph = args.source.load()?;
    let s = build_shift::<T>(&graph, args.source.shift)?;
    let f = FilterSpec::from_json(&read(&args.filter)?, &s)?;
    let x = io::read_signal_csv::<T>(&read(&args.signal)?)?;
    x.check_len(s.n())?;
    let opts = ArmaOptions {
        tol: args.tol,
        max_iter: args.max_iter,
    };
    Ok(Loaded { graph, s, f, x, opts })
}

fn cmd_apply<T: Scalar>(args: &ApplyArgs) -> Result<(), Failure> {
    let Loaded { s, f, x, opts, .. } = load_apply::<T>(args)?;
    let y = f.apply_recursive_with(&s, &x, opts)?;
    write(&args.out, &io::write_signal_csv(&y))?;
    println!("norm {}", fmt_f64(y.norm()));
    Ok(())
}

fn cmd_simulate<T: Scalar>(args: &ApplyArgs, trace_path: Option<&Path>) -> Result<(), Failure> {
    let Loaded { graph, s, f, x, opts } = load_apply::<T>(args)?;
    let (y, trace) = distsim::simulate(&graph, &s, &f, &x, opts)?;
    write(&args.out, &io::write_signal_csv(&y))?;
    if let Some(p) = trace_path {
        write(p, &trace.to_json()?)?;
    }
    println!(
        "rounds {} scalars {} violations {}",
        trace.rounds,
        trace.total_scalars_sent,
        trace.violations.len()
    );
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), Failure> {
    let name = args.name.as_str();
    if !experiments::EXPERIMENTS.contains(&name) {
        return Err(usage(format!(
            "unknown experiment '{name}' (expected one of {})",
            experiments::EXPERIMENTS.join(", ")
        )));
    }
    let mut cfg = ExperimentConfig::preset(name)?;
    if let Some(p) = &args.config {
        cfg = cfg.merged_with_json(&read(p)?)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n {
        cfg.graph.n = n;
    }
    if let Some(o) = &args.orders {
        cfg.orders = parse_orders(o)?;
    }
    if let Some(f) = &args.families {
        cfg.families = Some(f.iter().map(|s| parse_family(s)).collect::<Result<_, _>>()?);
    }
    if let Some(s) = args.shift {
        cfg.shift = s;
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(m) = args.mu {
        cfg.mu = m;
    }
    if let Some(l) = args.lambda_c {
        cfg.lambda_c = l;
    }
    if let Some(d) = &args.delta {
        cfg.deltas = d.clone();
    }
    let out_dir = cfg.output.clone().unwrap_or_else(|| args.out.clone());
    let output = experiments::run(name, &cfg)?;
    let files = output.write(name, &out_dir)?;
    println!("{name}: {} rows", output.table.rows.len());
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Graph { generator, params, out } => cmd_graph(&generator, &params, &out),
        Command::Design(args) => match args.source.field {
            FieldKind::Real => cmd_design::<f64>(&args),
            FieldKind::Complex => cmd_design::<Complex64>(&args),
        },
        Command::Apply(args) => match args.source.field {
            FieldKind::Real => cmd_apply::<f64>(&args),
            FieldKind::Complex => cmd_apply::<Complex64>(&args),
        },
        Command::Simulate { apply, trace } => match apply.source.field {
            FieldKind::Real => cmd_simulate::<f64>(&apply, trace.as_deref()),
            FieldKind::Complex => cmd_simulate::<Complex64>(&apply, trace.as_deref()),
        },
        Command::Experiment(args) => cmd_experiment(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
