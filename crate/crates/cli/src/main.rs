//! Command-line front end: hierarchical significance analysis of a dataset,
//! the simulation harness, and standalone clustering.

mod io;
mod svg;

use clap::{Args, Parser, Subcommand};
use hiertest_core::engine::{self, EngineConfig, Mode};
use hiertest_core::matrix::center;
use hiertest_core::sim::{self, ScenarioSpec};
use hiertest_core::tree::{build_correlation_tree, newick, ClusterTree};
use io::{atomic_write, parse_matrix_csv, parse_vector_csv, CliError, ResultRecord};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hiertest",
    version,
    about = "Hierarchical FWER-controlled significance testing of variable groups \
             in high-dimensional linear regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a dataset: screening, per-cluster partial F-tests over repeated
    /// sample splits, aggregation, and hierarchical adjustment.
    Analyze(AnalyzeArgs),
    /// Run a simulation scenario described by a JSON spec file.
    Simulate(SimulateArgs),
    /// Build the correlation hierarchy only.
    Cluster(ClusterArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct EngineOpts {
    /// JSON file with engine settings (fields of the engine configuration).
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed; omitting it draws one from entropy and echoes it.
    #[arg(long)]
    seed: Option<u64>,
    /// Significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of sample splits B.
    #[arg(long)]
    splits: Option<usize>,
    /// Disable the Shaffer multiplicity improvement.
    #[arg(long)]
    no_shaffer: bool,
    /// Hierarchical adjustment direction.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Design matrix CSV (rows = observations).
    #[arg(long)]
    x: PathBuf,
    /// Response CSV (single column).
    #[arg(long)]
    y: PathBuf,
    /// Newick tree to use instead of building one by clustering.
    #[arg(long)]
    tree: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineOpts,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario spec JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides spec.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    no_shaffer: bool,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "top_down" => Ok(Mode::TopDown),
        "bottom_up" => Ok(Mode::BottomUp),
        other => Err(format!("mode must be top_down or bottom_up, got '{other}'")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Simulate(args) => simulate(args),
        Command::Cluster(args) => cluster(args),
        Command::Version => {
            println!("hiertest {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Engine settings merged from file, flags, and an entropy seed when none
/// was supplied anywhere; returns the config and whether the seed was drawn.
fn resolve_engine(opts: &EngineOpts) -> Result<(EngineConfig, bool), CliError> {
    let mut config = EngineConfig::default();
    let mut seed_present = false;
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        seed_present = value.get("seed").is_some();
        config = serde_json::from_value(value)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    }
    if let Some(seed) = opts.seed {
        config.seed = seed;
        seed_present = true;
    }
    if let Some(alpha) = opts.alpha {
        config.alpha = alpha;
    }
    if let Some(b) = opts.splits {
        config.b = b;
    }
    if opts.no_shaffer {
        config.shaffer = false;
    }
    if let Some(mode) = opts.mode {
        config.mode = mode;
    }
    let mut drew_entropy = false;
    if !seed_present {
        config.seed = rand::random();
        drew_entropy = true;
    }
    config
        .validate()
        .map_err(|e| CliError::Parse(e.to_string()))?;
    Ok((config, drew_entropy))
}

#[derive(Serialize)]
struct RunConfigEcho<'a> {
    engine: &'a EngineConfig,
    seed_source: &'a str,
    tree_source: String,
    x_path: String,
    y_path: String,
}

fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let (config, entropy_seed) = resolve_engine(&args.engine)?;

    let (mut x, _header) = parse_matrix_csv(&args.x)?;
    let mut y = parse_vector_csv(&args.y)?;
    if x.rows() != y.len() {
        return Err(CliError::Dimension(format!(
            "X has {} rows but y has {} entries",
            x.rows(),
            y.len()
        )));
    }

    // global standardization: columns to mean 0 / variance 1, response centered
    x.standardize_columns()
        .map_err(|e| CliError::Parse(format!("design matrix: {e}")))?;
    center(&mut y);

    let tree = match &args.tree {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Parse(format!("cannot read {}: {e}", path.display()))
            })?;
            let tree = newick::from_newick(&text)
                .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
            if tree.n_vars() != x.cols() {
                return Err(CliError::Dimension(format!(
                    "tree covers {} variables but X has {} columns",
                    tree.n_vars(),
                    x.cols()
                )));
            }
            tree
        }
        None => build_correlation_tree(&x)
            .map_err(|e| CliError::Parse(format!("clustering failed: {e}")))?,
    };

    let result = engine::run(&tree, &x, &y, &config)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let (rejected, minimal) = engine::significant_clusters(&result, config.alpha, None);

    if entropy_seed {
        println!("seed: {} (drawn from entropy; pass --seed to reproduce)", config.seed);
    } else {
        println!("seed: {}", config.seed);
    }
    println!(
        "rejected {} of {} clusters at alpha = {}; {} minimal detections",
        rejected.len(),
        tree.len(),
        config.alpha,
        minimal.len()
    );

    write_analysis_outputs(&args.out, &tree, &result, &rejected, &minimal, &config, &args)
}

fn write_analysis_outputs(
    out_dir: &Path,
    tree: &ClusterTree,
    result: &engine::HierTestResult,
    rejected: &[usize],
    minimal: &[engine::MinimalDetection],
    config: &EngineConfig,
    args: &AnalyzeArgs,
) -> Result<(), CliError> {
    let rejected_mask = {
        let mut mask = vec![false; tree.len()];
        for &id in rejected {
            mask[id] = true;
        }
        mask
    };
    let minimal_mask = {
        let mut mask = vec![false; tree.len()];
        for m in minimal {
            mask[m.node] = true;
        }
        mask
    };

    let records: Vec<ResultRecord> = tree
        .nodes()
        .iter()
        .map(|node| ResultRecord {
            cluster_id: node.id,
            variables: node.variables.iter().map(|v| v + 1).collect(),
            size: node.variables.len(),
            p_c: result.p_c[node.id],
            p_h: result.p_h[node.id],
            rejected: rejected_mask[node.id],
            minimal_detection: minimal_mask[node.id],
        })
        .collect();
    let json = serde_json::to_string_pretty(&records)
        .map_err(|e| CliError::Io(e.to_string()))?;
    atomic_write(&out_dir.join("results.json"), json.as_bytes())?;

    atomic_write(&out_dir.join("tree.nwk"), newick::to_newick(tree).as_bytes())?;

    let mut csv = String::from("cluster_id,size,p_c,p_h,minimal_detection,variables\n");
    for &id in rejected {
        let node = &tree.nodes()[id];
        let vars: Vec<String> =
            node.variables.iter().map(|v| (v + 1).to_string()).collect();
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{},{}\n",
            id,
            node.variables.len(),
            result.p_c[id],
            result.p_h[id],
            minimal_mask[id],
            vars.join(" ")
        ));
    }
    atomic_write(&out_dir.join("significant_clusters.csv"), csv.as_bytes())?;

    let highlight = svg::Highlight { rejected: rejected_mask, p_h: result.p_h.clone() };
    atomic_write(
        &out_dir.join("dendrogram.svg"),
        svg::render(tree, Some(&highlight)).as_bytes(),
    )?;

    let echo = RunConfigEcho {
        engine: config,
        seed_source: if args.engine.seed.is_some() { "flag" } else { "config-or-entropy" },
        tree_source: args
            .tree
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "built by correlation clustering".into()),
        x_path: args.x.display().to_string(),
        y_path: args.y.display().to_string(),
    };
    let echo_json =
        serde_json::to_string_pretty(&echo).map_err(|e| CliError::Io(e.to_string()))?;
    atomic_write(&out_dir.join("run_config.json"), echo_json.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    spec: &'a ScenarioSpec,
    hierarchical: &'a sim::MetricsReport,
    single_variable: &'a sim::MetricsReport,
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", args.config.display())))?;
    let mut spec: ScenarioSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(alpha) = args.alpha {
        spec.engine.alpha = alpha;
    }
    if let Some(b) = args.splits {
        spec.engine.b = b;
    }
    if args.no_shaffer {
        spec.engine.shaffer = false;
    }
    if let Some(mode) = args.mode {
        spec.engine.mode = mode;
    }
    spec.validate().map_err(|e| CliError::Parse(e.to_string()))?;

    let external = match &spec.external_matrix {
        Some(path) => Some(parse_matrix_csv(path)?.0),
        None => None,
    };

    let report = sim::run_scenario(&spec, external.as_ref())
        .map_err(|e| CliError::Parse(e.to_string()))?;

    let doc = MetricsDocument {
        spec: &spec,
        hierarchical: &report.hierarchical,
        single_variable: &report.single_variable,
    };
    let json =
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    atomic_write(&args.out.join("metrics.json"), json.as_bytes())?;

    let mut csv = String::from(
        "run,h_perf1,h_perf2,h_n_mtd,h_mtd_1,h_mtd_2,h_mtd_3_10,h_mtd_11_20,h_mtd_over_20,\
         h_fwer,h_screening_failures,s_perf1,s_perf2,s_n_mtd,s_fwer\n",
    );
    for (h, s) in report
        .hierarchical
        .per_run
        .iter()
        .zip(&report.single_variable.per_run)
    {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{},{},{},{},{},{:.6},{:.6},{},{}\n",
            h.run,
            h.perf1,
            h.perf2,
            h.n_mtd,
            h.mtd_sizes[0],
            h.mtd_sizes[1],
            h.mtd_sizes[2],
            h.mtd_sizes[3],
            h.mtd_sizes[4],
            h.fwer_event,
            h.screening_failures,
            s.perf1,
            s.perf2,
            s.n_mtd,
            s.fwer_event,
        ));
    }
    atomic_write(&args.out.join("runs.csv"), csv.as_bytes())?;

    println!(
        "{} runs | hierarchical: perf1 {:.3}, mtd {:.2}, fwer {} | single: perf1 {:.3}, mtd {:.2}, fwer {}",
        report.hierarchical.n_runs,
        report.hierarchical.perf1_mean,
        report.hierarchical.mtd_total_mean,
        report.hierarchical.fwer_count,
        report.single_variable.perf1_mean,
        report.single_variable.mtd_total_mean,
        report.single_variable.fwer_count,
    );
    Ok(())
}

fn cluster(args: ClusterArgs) -> Result<(), CliError> {
    let (x, _) = parse_matrix_csv(&args.x)?;
    let tree = build_correlation_tree(&x)
        .map_err(|e| CliError::Parse(format!("clustering failed: {e}")))?;
    atomic_write(&args.out.join("tree.nwk"), newick::to_newick(&tree).as_bytes())?;
    atomic_write(&args.out.join("dendrogram.svg"), svg::render(&tree, None).as_bytes())?;
    println!("clustered {} variables into {} nodes", tree.n_vars(), tree.len());
    Ok(())
}
