use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bli_core::eval::{curate_pairs, load_pairs, load_word_list, precision_at_ks, CurationFilters, GoldDictionary, Rankings};
use bli_core::experiment::{
    default_alpha_grid, format_alpha_grid, format_table, run_experiment, run_matrix, sweep_alpha, sweep_minfreq,
    write_alpha_csv, write_minfreq_csv, write_results_csv, ExperimentConfig, ExperimentPlan,
};
use bli_core::fixtures::write_planted_fixture;
use bli_core::Vocabulary;

/// Unsupervised bilingual lexicon induction experiments.
#[derive(Parser)]
#[command(name = "bli", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (`key = value` lines, one section per plan).
    #[arg(long)]
    config: PathBuf,
    /// Directory for results.csv and per-plan artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Global seed; overrides the config's.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single plan.
    Run {
        #[command(flatten)]
        common: Common,
        /// Plan code; may be omitted when the config has one plan.
        #[arg(long)]
        plan: Option<String>,
    },
    /// Run every configured plan (or the listed ones) and tabulate Pr@1.
    Matrix {
        #[command(flatten)]
        common: Common,
        /// Restrict to these codes (repeatable).
        #[arg(long)]
        plan: Vec<String>,
        /// Run plans one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Grid over source and target alpha of the similarity-order transform.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        plan: String,
        /// Comma-separated alpha values (default: -0.5,-0.25,-0.15,0,0.15,0.25,0.5).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
    },
    /// Repeat a plan for several minimum word frequencies.
    SweepMinfreq {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        plan: String,
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<u64>,
    },
    /// Score a rankings file (`src<TAB>t1<TAB>t2...`) against a gold dictionary.
    Eval {
        #[arg(long)]
        rankings: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        k: Vec<usize>,
        /// Target word list; gold entries with no target in it are skipped.
        #[arg(long)]
        trg_words: Option<PathBuf>,
    },
    /// Filter candidate dictionary pairs.
    Curate {
        /// Candidate `src<TAB>trg` pairs.
        #[arg(long)]
        pairs: PathBuf,
        /// Source vocabulary, one word per line.
        #[arg(long)]
        src_words: PathBuf,
        #[arg(long)]
        trg_words: PathBuf,
        /// `src<TAB>back-translation` lines.
        #[arg(long)]
        roundtrip: Option<PathBuf>,
        /// Source words to drop, one per line.
        #[arg(long)]
        proper_nouns: Option<PathBuf>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a planted-isometry fixture with a ready-to-run config.
    Fixture {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 300)]
        words: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 32)]
        context_dim: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::Run { common, plan } => run(&common, plan.as_deref()),
        Command::Matrix {
            common,
            plan,
            sequential,
        } => matrix(&common, &plan, sequential),
        Command::SweepAlpha { common, plan, grid } => {
            let cfg = load(&common)?;
            let plan = pick(&cfg, &plan)?;
            let grid = grid.unwrap_or_else(default_alpha_grid);
            let points = sweep_alpha(&plan, &grid, None, true)?;
            fs::create_dir_all(&common.out_dir)?;
            let path = common.out_dir.join("alpha_sweep.csv");
            write_alpha_csv(&path, &points)?;
            print!("{}", format_alpha_grid(&points));
            report_failures(points.iter().filter_map(|p| p.error.as_deref()));
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Command::SweepMinfreq {
            common,
            plan,
            thresholds,
        } => {
            let cfg = load(&common)?;
            let plan = pick(&cfg, &plan)?;
            let points = sweep_minfreq(&plan, &thresholds, None, true);
            fs::create_dir_all(&common.out_dir)?;
            let path = common.out_dir.join("minfreq_sweep.csv");
            write_minfreq_csv(&path, &points)?;
            println!("{:>8}  {:>8}  {:>8}  {:>7}  {:>8}", "min_freq", "src", "trg", "pr@1", "coverage");
            for p in &points {
                let pct = |v: Option<f64>| v.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into());
                println!(
                    "{:>8}  {:>8}  {:>8}  {:>7}  {:>8}",
                    p.min_freq,
                    p.src_vocab,
                    p.trg_vocab,
                    pct(p.pr_at_1),
                    pct(p.coverage)
                );
            }
            report_failures(points.iter().filter_map(|p| p.error.as_deref()));
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Command::Eval {
            rankings,
            gold,
            k,
            trg_words,
        } => eval(&rankings, &gold, &k, trg_words.as_deref()),
        Command::Curate {
            pairs,
            src_words,
            trg_words,
            roundtrip,
            proper_nouns,
            out,
        } => {
            let raw = load_pairs(&pairs)?;
            let src = Vocabulary::new(load_word_list(&src_words)?)?;
            let trg = Vocabulary::new(load_word_list(&trg_words)?)?;
            let filters = CurationFilters {
                roundtrip: roundtrip
                    .map(|p| load_pairs(p).map(|v| v.into_iter().collect::<HashMap<_, _>>()))
                    .transpose()?,
                proper_nouns: proper_nouns
                    .map(|p| load_word_list(p).map(|v| v.into_iter().collect::<HashSet<_>>()))
                    .transpose()?,
            };
            let kept = curate_pairs(&raw, &src, &trg, &filters);
            let text: String = kept.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
            eprintln!("kept {} of {} pairs", kept.len(), raw.len());
            Ok(())
        }
        Command::Fixture {
            out_dir,
            words,
            dim,
            context_dim,
            noise,
            seed,
        } => {
            write_planted_fixture(&out_dir, words, dim, context_dim, noise, seed)?;
            eprintln!("wrote fixture to {}", out_dir.display());
            Ok(())
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&common.config, common.seed)
        .with_context(|| format!("reading config {}", common.config.display()))
}

/// A configured plan, or a standard code built from the global keys.
fn pick(cfg: &ExperimentConfig, code: &str) -> Result<ExperimentPlan> {
    match cfg.plan(code) {
        Ok(p) => Ok(p.clone()),
        Err(_) => Ok(cfg.standalone_plan(code)?),
    }
}

fn run(common: &Common, code: Option<&str>) -> Result<()> {
    let cfg = load(common)?;
    let plan = match code {
        Some(code) => pick(&cfg, code)?,
        None if cfg.plans.len() == 1 => cfg.plans[0].clone(),
        None => bail!("config has {} plans; choose one with --plan", cfg.plans.len()),
    };
    let outcome = run_experiment(&plan, Some(&common.out_dir))?;
    let rows = [outcome.row];
    write_results_csv(common.out_dir.join("results.csv"), &rows)?;
    print!("{}", format_table(&rows));
    for (k, p) in &outcome.report.precision_at {
        println!("Pr@{k} = {:.4}", p);
    }
    println!(
        "evaluated {}, skipped {} (coverage {:.3})",
        outcome.report.evaluated, outcome.report.skipped_oov, outcome.report.coverage
    );
    Ok(())
}

fn matrix(common: &Common, codes: &[String], sequential: bool) -> Result<()> {
    let cfg = load(common)?;
    let plans: Vec<ExperimentPlan> = if codes.is_empty() {
        cfg.plans.clone()
    } else {
        codes.iter().map(|c| pick(&cfg, c)).collect::<Result<_>>()?
    };
    let rows = run_matrix(&plans, Some(&common.out_dir), !sequential);
    let path = common.out_dir.join("results.csv");
    write_results_csv(&path, &rows)?;
    let table = format_table(&rows);
    fs::write(common.out_dir.join("results.txt"), &table)?;
    print!("{table}");
    report_failures(rows.iter().filter_map(|r| r.error.as_deref()));
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn report_failures<'a>(errors: impl Iterator<Item = &'a str>) {
    let n = errors.inspect(|e| log::warn!("{e}")).count();
    if n > 0 {
        eprintln!("{n} run(s) failed; see the error column");
    }
}

fn eval(rankings: &Path, gold: &Path, ks: &[usize], trg_words: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(rankings).with_context(|| format!("reading {}", rankings.display()))?;
    let ranked: Rankings = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut cols = l.split('\t').map(str::trim);
            let src = cols.next().unwrap_or_default().to_string();
            (src, cols.filter(|c| !c.is_empty()).map(String::from).collect())
        })
        .collect();
    let gold = GoldDictionary::load(gold)?;
    let vocab = trg_words.map(|p| load_word_list(p).and_then(Vocabulary::new)).transpose()?;
    let report = precision_at_ks(&ranked, &gold, ks, vocab.as_ref())?;
    println!("k,precision,hits,evaluated,skipped_oov,coverage");
    for (&(k, p), &(_, h)) in report.precision_at.iter().zip(&report.hits_at) {
        println!("{k},{p},{h},{},{},{}", report.evaluated, report.skipped_oov, report.coverage);
    }
    Ok(())
}
