//! Command-line surface for the stable-regularity library.
//!
//! Exit codes: 0 = success / verified / satisfied; 1 = the property under
//! test does not hold (an honest negative); 2 = input error; 3 = capability
//! error (an exactness guard was exceeded).

use clap::{Args, Parser, Subcommand, ValueEnum};
use stable_regularity::decay::DecayFn;
use stable_regularity::decomposition::{decompose, decompose_no_error, graph_decompose, NoErrorVariant};
use stable_regularity::error::Error;
use stable_regularity::generators::{self, GeneratorSpec};
use stable_regularity::homogeneity::check_homogeneous;
use stable_regularity::io::{
    self, matrix_hash, write_decomposition_parts, ReportBody, ReportFile,
};
use stable_regularity::matrix::ValueMatrix;
use stable_regularity::norms::{pseudorandomness, PseudorandomBudget, PseudorandomMode};
use stable_regularity::params::Params;
use stable_regularity::partition::{
    equipartition, find_partition, PartitionBudget, PartitionMode, RegularityReport,
};
use stable_regularity::stability::{stability_index, SearchGuard, SearchMode};
use stable_regularity::witness::WitnessKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "streg", version, about = "Stability, homogeneity, and regularity analysis for bounded functions on finite bipartite domains")]
struct Cli {
    /// Worker threads for pair verification and search restarts
    /// (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Plain,
    Star,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Greedy,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PartitionModeArg {
    GreedyRefine,
    Exhaustive,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PrModeArg {
    Exact,
    Bounds,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    FoldErr,
    PerfectStr,
}

#[derive(Args)]
struct BudgetArgs {
    /// Cap on blocks per side.
    #[arg(long = "budget-max-blocks", default_value_t = 64)]
    max_blocks: usize,
    /// Cap on refinement rounds.
    #[arg(long = "budget-max-rounds", default_value_t = 32)]
    max_rounds: usize,
    /// Fraction of a side below which blocks become exceptional
    /// (default: epsilon^2 / blocks^2).
    #[arg(long = "budget-min-block-frac")]
    min_block_frac: Option<f64>,
}

impl BudgetArgs {
    fn to_budget(&self) -> PartitionBudget {
        PartitionBudget {
            max_blocks: self.max_blocks,
            max_rounds: self.max_rounds,
            min_block_frac: self.min_block_frac,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test matrix and write it as CSV.
    Generate {
        /// Generator kind; see --spec-json for full control.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long = "x-size")]
        x_size: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "noise-rate")]
        noise_rate: Option<f64>,
        /// Comma-separated row block sizes, e.g. 4,4.
        #[arg(long = "row-blocks", value_delimiter = ',')]
        row_blocks: Option<Vec<usize>>,
        #[arg(long = "col-blocks", value_delimiter = ',')]
        col_blocks: Option<Vec<usize>>,
        /// Per-block-pair values, row-major over blocks.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long = "value-set", value_delimiter = ',')]
        value_set: Option<Vec<f64>>,
        /// JSON generator spec file (overrides the flags above).
        #[arg(long = "spec-json")]
        spec_json: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a report documenting the spec and matrix hash.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute stability indices and witnesses.
    Stability {
        matrix: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_enum, default_value_t = KindArg::Both)]
        kind: KindArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        /// Cap on the searched chain length.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide homogeneity of the full block pair.
    Homogeneity {
        matrix: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a homogeneous partition pair.
    Partition {
        matrix: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        /// Decay function, e.g. const:0.2, inv:0.5, invsq:0.9, exp:1.0.
        #[arg(long)]
        sigma: String,
        #[arg(long, value_enum, default_value_t = PartitionModeArg::GreedyRefine)]
        mode: PartitionModeArg,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an equipartition meeting the homogeneity conclusion.
    Equipartition {
        matrix: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        sigma: String,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decompose into structured + pseudorandom + error parts.
    Decompose {
        matrix: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        sigma: String,
        /// Optional no-error rewrite.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// 0/1 graph specialization: round uniform values and check the
        /// near-empty/near-complete dichotomy.
        #[arg(long)]
        graph: bool,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure rectangle pseudorandomness.
    Pseudorandom {
        matrix: PathBuf,
        #[arg(long, value_enum, default_value_t = PrModeArg::Exact)]
        mode: PrModeArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "budget-restarts", default_value_t = 16)]
        restarts: usize,
        #[arg(long = "budget-sweeps", default_value_t = 64)]
        sweeps: usize,
        /// Exact-mode cap on the smaller side.
        #[arg(long, default_value_t = 20)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a report and check every certificate in it.
    Verify {
        report: PathBuf,
        /// Override the matrix file location.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Capability(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn sat_code(satisfied: bool) -> ExitCode {
    if satisfied {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn print_partition_summary(what: &str, r: &RegularityReport) {
    println!(
        "{what}: m={} n={} |V0|={} |W0|={} radius={} gamma={} satisfied={}",
        r.partition_v.num_blocks(),
        r.partition_w.num_blocks(),
        r.partition_v.exceptional.len(),
        r.partition_w.exceptional.len(),
        r.homog_radius,
        r.gamma_used,
        r.satisfied
    );
    if !r.satisfied {
        println!("  failing pairs: {}", r.failing_pairs());
    }
}

fn build_params(delta: f64, epsilon: f64, sigma: &str) -> Result<Params, Error> {
    let decay = DecayFn::parse_cli(sigma)?;
    Params::new(delta, epsilon, epsilon, 2, decay)
}

fn load(matrix: &Path) -> Result<ValueMatrix, Error> {
    io::read_matrix(matrix)
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Generate {
            kind,
            k,
            delta,
            rows,
            cols,
            x_size,
            n,
            seed,
            noise_rate,
            row_blocks,
            col_blocks,
            values,
            value_set,
            spec_json,
            out,
            report,
        } => {
            let spec = match spec_json {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => build_spec(
                    kind.as_deref(),
                    k,
                    delta,
                    rows,
                    cols,
                    x_size,
                    n,
                    seed,
                    noise_rate,
                    row_blocks,
                    col_blocks,
                    values,
                    value_set,
                )?,
            };
            let m = generators::generate(&spec)?;
            io::write_matrix(&out, &m)?;
            println!(
                "generated {}x{} {:?} matrix -> {} (hash {})",
                m.rows(),
                m.cols(),
                m.range(),
                out.display(),
                &matrix_hash(&m)[..12]
            );
            if let Some(report_path) = report {
                let body = ReportBody::Generate {
                    spec,
                    matrix_file: out.display().to_string(),
                };
                ReportFile::new(&m, out.display().to_string(), body).write(&report_path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stability { matrix, delta, kind, mode, k, out } => {
            let f = load(&matrix)?;
            let mode = match mode {
                ModeArg::Exact => SearchMode::Exact,
                ModeArg::Greedy => SearchMode::Greedy,
            };
            let guard = SearchGuard::default();
            let mut rep = stable_regularity::stability::StabilityReport {
                delta,
                plain_index: None,
                star_index: None,
                exact: true,
                plain_witness: None,
                star_witness: None,
            };
            if kind != KindArg::Star {
                let p = stability_index(&f, delta, WitnessKind::Plain, mode, &guard, k)?;
                rep.plain_index = p.plain_index;
                rep.plain_witness = p.plain_witness;
                rep.exact &= p.exact;
            }
            if kind != KindArg::Plain {
                let s = stability_index(&f, delta, WitnessKind::Star, mode, &guard, k)?;
                rep.star_index = s.star_index;
                rep.star_witness = s.star_witness;
                rep.exact &= s.exact;
            }
            println!(
                "stability at delta={delta}: plain_index={:?} star_index={:?} exact={}",
                rep.plain_index, rep.star_index, rep.exact
            );
            if let Some(out) = out {
                let body = ReportBody::Stability { mode, report: rep };
                ReportFile::new(&f, matrix.display().to_string(), body).write(&out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Homogeneity { matrix, delta, gamma, epsilon, out } => {
            let f = load(&matrix)?;
            let v: Vec<usize> = (0..f.rows()).collect();
            let w: Vec<usize> = (0..f.cols()).collect();
            let witness = check_homogeneous(&f, &v, &w, delta, gamma, epsilon)?;
            match &witness {
                Some(wit) => println!(
                    "homogeneous at ({delta}; {gamma}, {epsilon}): r={} s={} |V'|={} |W'|={}",
                    wit.r,
                    wit.s,
                    wit.v_prime.len(),
                    wit.w_prime.len()
                ),
                None => println!("not homogeneous at ({delta}; {gamma}, {epsilon})"),
            }
            let found = witness.is_some();
            if let Some(out) = out {
                let body = ReportBody::Homogeneity {
                    v_star: v,
                    w_star: w,
                    delta,
                    gamma,
                    epsilon,
                    witness,
                };
                ReportFile::new(&f, matrix.display().to_string(), body).write(&out)?;
            }
            Ok(sat_code(found))
        }
        Command::Partition { matrix, delta, epsilon, sigma, mode, budget, out } => {
            let f = load(&matrix)?;
            let params = build_params(delta, epsilon, &sigma)?;
            let mode = match mode {
                PartitionModeArg::GreedyRefine => PartitionMode::GreedyRefine,
                PartitionModeArg::Exhaustive => PartitionMode::Exhaustive,
            };
            let rep = find_partition(&f, &params, mode, &budget.to_budget())?;
            print_partition_summary("partition", &rep);
            let code = sat_code(rep.satisfied);
            if let Some(out) = out {
                let body = ReportBody::Partition { report: rep };
                ReportFile::new(&f, matrix.display().to_string(), body).write(&out)?;
            }
            Ok(code)
        }
        Command::Equipartition { matrix, delta, epsilon, sigma, budget, out } => {
            let f = load(&matrix)?;
            let params = build_params(delta, epsilon, &sigma)?;
            let rep = equipartition(&f, &params, &budget.to_budget())?;
            print_partition_summary("equipartition", &rep);
            let code = sat_code(rep.satisfied);
            if let Some(out) = out {
                let body = ReportBody::Equipartition { report: rep };
                ReportFile::new(&f, matrix.display().to_string(), body).write(&out)?;
            }
            Ok(code)
        }
        Command::Decompose { matrix, delta, epsilon, sigma, variant, graph, budget, out } => {
            let f = load(&matrix)?;
            // The decomposition needs homogeneity at sigma(mn)/2, so the
            // partition search runs with the decay halved.
            let params = build_params(delta, epsilon, &sigma)?;
            let halved = Params::new(
                params.delta,
                params.epsilon,
                params.gamma,
                params.k,
                params.decay.halved(),
            )?;
            let rep = find_partition(&f, &halved, PartitionMode::GreedyRefine, &budget.to_budget())?;
            if !rep.satisfied {
                print_partition_summary("decompose (partition stage)", &rep);
                return Ok(ExitCode::from(1));
            }
            let (d, table) = if graph {
                let (d, t) = graph_decompose(&f, &rep)?;
                (d, Some(t))
            } else {
                (decompose(&f, &rep)?, None)
            };
            let d = match variant {
                None => d,
                Some(VariantArg::FoldErr) => decompose_no_error(&d, NoErrorVariant::FoldErr)?,
                Some(VariantArg::PerfectStr) => {
                    decompose_no_error(&d, NoErrorVariant::PerfectStr)?
                }
            };
            let stem = out
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "decomposition".to_string());
            let meta = write_decomposition_parts(&d, &out, &stem)?;
            println!(
                "decomposition: sigma(mn)={} support(f_psd)={} ({} cells) ||f_str-g||_inf={}",
                d.sigma_mn,
                d.psd_support,
                f.rows() * f.cols(),
                d.str_template_linf
            );
            if let Some(t) = &table {
                println!(
                    "graph dichotomy at sigma(mn)={}: {} violations",
                    t.sigma_mn,
                    t.violations.len()
                );
            }
            let variant = variant.map(|v| match v {
                VariantArg::FoldErr => NoErrorVariant::FoldErr,
                VariantArg::PerfectStr => NoErrorVariant::PerfectStr,
            });
            let body = ReportBody::Decompose { report: rep, variant, meta, graph: table };
            ReportFile::new(&f, matrix.display().to_string(), body).write(&out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Pseudorandom { matrix, mode, seed, restarts, sweeps, cap, out } => {
            let f = load(&matrix)?;
            let mode = match mode {
                PrModeArg::Exact => PseudorandomMode::Exact,
                PrModeArg::Bounds => PseudorandomMode::Bounds,
            };
            let budget =
                PseudorandomBudget { exact_cap: cap, restarts, max_sweeps: sweeps, seed };
            let rep = pseudorandomness(&f, mode, budget)?;
            println!(
                "pseudorandomness: lower={} upper={} exact={} best rectangle {}x{}",
                rep.lower_bound,
                rep.upper_bound,
                rep.exact,
                rep.best_rectangle.0.len(),
                rep.best_rectangle.1.len()
            );
            if let Some(out) = out {
                let body = ReportBody::Pseudorandom { mode, budget, report: rep };
                ReportFile::new(&f, matrix.display().to_string(), body).write(&out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { report, matrix } => {
            let outcome = io::verify_report(&report, matrix.as_deref())?;
            if outcome.ok() {
                println!("verified: all certificates replay");
                Ok(ExitCode::SUCCESS)
            } else {
                for failure in &outcome.failures {
                    println!("FAILED {failure}");
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn build_spec(
    kind: Option<&str>,
    k: Option<usize>,
    delta: Option<f64>,
    rows: Option<usize>,
    cols: Option<usize>,
    x_size: Option<usize>,
    n: Option<usize>,
    seed: u64,
    noise_rate: Option<f64>,
    row_blocks: Option<Vec<usize>>,
    col_blocks: Option<Vec<usize>>,
    values: Option<Vec<f64>>,
    value_set: Option<Vec<f64>>,
) -> Result<GeneratorSpec, Error> {
    let kind = kind.ok_or_else(|| Error::input("--kind or --spec-json is required"))?;
    let need = |opt: Option<usize>, what: &str| {
        opt.ok_or_else(|| Error::input(format!("--{what} is required for kind '{kind}'")))
    };
    Ok(match kind {
        "half_graph" => GeneratorSpec::HalfGraph { k: need(k, "k")? },
        "fuzzy_half_graph" => GeneratorSpec::FuzzyHalfGraph {
            k: need(k, "k")?,
            delta: delta.ok_or_else(|| Error::input("--delta is required"))?,
        },
        "inner_product" => GeneratorSpec::InnerProduct {
            rows: need(rows, "rows")?,
            cols: need(cols, "cols")?,
            x_size: need(x_size, "x-size")?,
            seed,
            g: None,
            h: None,
        },
        "cyclic_convolution" => {
            GeneratorSpec::CyclicConvolution { n: need(n, "n")?, seed, g: None, h: None }
        }
        "planted_blocks" => GeneratorSpec::PlantedBlocks {
            row_blocks: row_blocks.ok_or_else(|| Error::input("--row-blocks is required"))?,
            col_blocks: col_blocks.ok_or_else(|| Error::input("--col-blocks is required"))?,
            values: values.ok_or_else(|| Error::input("--values is required"))?,
            noise_rate: noise_rate.unwrap_or(0.0),
            seed,
        },
        "discrete_stable" => GeneratorSpec::DiscreteStable {
            row_blocks: row_blocks.ok_or_else(|| Error::input("--row-blocks is required"))?,
            col_blocks: col_blocks.ok_or_else(|| Error::input("--col-blocks is required"))?,
            value_set: value_set.ok_or_else(|| Error::input("--value-set is required"))?,
            delta: delta.ok_or_else(|| Error::input("--delta is required"))?,
            seed,
        },
        "uniform_random" => GeneratorSpec::UniformRandom {
            rows: need(rows, "rows")?,
            cols: need(cols, "cols")?,
            seed,
        },
        other => return Err(Error::input(format!("unknown generator kind '{other}'"))),
    })
}
