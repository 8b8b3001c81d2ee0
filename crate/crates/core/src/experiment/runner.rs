use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::Params;
use super::plan::{ExperimentPlan, Step};
use crate::cscbli::{interpolated_scorer, map_contextual, train_cscbli, ContextualMatrix, CscbliConfig, CscbliModel};
use crate::embeddings::{filter_by_frequency, load_embeddings, EmbeddingMatrix, FrequencyTable, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{precision_at_ks, EvalReport, GoldDictionary, Rankings};
use crate::init::{iterative_dimred_init, unsupervised_init, DimSweep, InitConfig, SweepPoint};
use crate::preprocess::{fuse, linear_transform, normalize, pca_reduce, LinearTransformSpec, ALPHA_GRID};
use crate::retrieval::{Retrieval, Scorer};
use crate::selflearn::{self_learn, AlignmentResult, SelfLearnConfig};
use crate::util::derive_seed;

/// Monolingual inputs and gold dictionary shared by plans with the same
/// input keys.
#[derive(Debug, Clone)]
pub struct LoadedInputs {
    pub src_vocab: Vocabulary,
    pub trg_vocab: Vocabulary,
    pub x: EmbeddingMatrix,
    pub z: EmbeddingMatrix,
    pub gold: GoldDictionary,
    pub src_contextual: Option<ContextualMatrix>,
    pub trg_contextual: Option<ContextualMatrix>,
}

/// Identity of a plan's inputs after filtering; plans with equal keys can
/// share one [`LoadedInputs`].
fn input_key(plan: &ExperimentPlan) -> String {
    let p = Params::new(&plan.code, &plan.params);
    format!(
        "{:?}|{:?}|{:?}",
        plan.inputs,
        p.raw("min_freq"),
        p.raw("max_vocab")
    )
}

impl LoadedInputs {
    pub fn load(plan: &ExperimentPlan, with_contextual: bool) -> Result<Self> {
        let p = Params::new(&plan.code, &plan.params);
        let min_freq: Option<u64> = p.get("min_freq")?;
        let max_vocab: Option<usize> = p.get("max_vocab")?;
        let inputs = &plan.inputs;
        let (src_vocab, x) = load_side(&inputs.src_embeddings, inputs.src_freq.as_deref(), min_freq, max_vocab)?;
        let (trg_vocab, z) = load_side(&inputs.trg_embeddings, inputs.trg_freq.as_deref(), min_freq, max_vocab)?;
        let gold = GoldDictionary::load(&inputs.gold)?;
        let contextual = |path: &Option<PathBuf>, vocab: &Vocabulary| match path {
            Some(path) if with_contextual => ContextualMatrix::load_aligned(path, vocab).map(Some),
            _ => Ok(None),
        };
        Ok(LoadedInputs {
            src_contextual: contextual(&inputs.src_contextual, &src_vocab)?,
            trg_contextual: contextual(&inputs.trg_contextual, &trg_vocab)?,
            src_vocab,
            trg_vocab,
            x,
            z,
            gold,
        })
    }
}

fn load_side(
    emb: &Path,
    freq: Option<&Path>,
    min_freq: Option<u64>,
    max_vocab: Option<usize>,
) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let (mut vocab, mut m) = load_embeddings(emb, None)?;
    if let Some(freq) = freq {
        vocab = vocab.with_frequencies(&FrequencyTable::load(freq)?);
    }
    if let Some(min_freq) = min_freq {
        if freq.is_none() {
            return Err(Error::Config(format!(
                "min_freq is set but {} has no frequency sidecar",
                emb.display()
            )));
        }
        (vocab, m) = filter_by_frequency(&vocab, &m, min_freq)?;
    }
    if let Some(n) = max_vocab.filter(|&n| n < m.rows()) {
        let keep: Vec<usize> = (0..n).collect();
        vocab = vocab.select(&keep)?;
        m = m.head(n);
    }
    Ok((vocab, m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub code: String,
    pub embedding_kind: String,
    pub language_pair: String,
    /// Missing when the plan failed.
    pub pr_at_1: Option<f64>,
    pub delta_vs_baseline: Option<f64>,
    pub runtime_seconds: f64,
    pub seed: u64,
    pub error: Option<String>,
}

impl ResultRow {
    fn for_plan(plan: &ExperimentPlan) -> Result<Self> {
        let p = Params::new(&plan.code, &plan.params);
        Ok(ResultRow {
            code: plan.code.clone(),
            embedding_kind: p.get_or("embedding_kind", String::from("unknown"))?,
            language_pair: p.get_or("language_pair", String::from("unknown"))?,
            pr_at_1: None,
            delta_vs_baseline: None,
            runtime_seconds: 0.0,
            seed: plan.seed,
            error: None,
        })
    }
}

/// Everything a plan produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub row: ResultRow,
    pub report: EvalReport,
    pub alignment: AlignmentResult,
    /// Ranked target words for each evaluated gold source, sorted by source.
    pub rankings: Vec<(String, Vec<String>)>,
    pub init_sweep: Vec<SweepPoint>,
    pub cscbli: Option<CscbliModel>,
}

/// Hyperparameters resolved from a plan.
struct Settings {
    alpha: LinearTransformSpec,
    dimred_dim: Option<usize>,
    sweep_step: usize,
    sweep_k_freq: Option<usize>,
    init: InitConfig,
    selflearn: SelfLearnConfig,
    cscbli: CscbliConfig,
    fusion_post: bool,
    eval_retrieval: Retrieval,
    eval_ks: Vec<usize>,
}

impl Settings {
    fn from_plan(plan: &ExperimentPlan) -> Result<Self> {
        let p = Params::new(&plan.code, &plan.params);
        let pair: String = p.get_or("language_pair", String::new())?;
        let kind: String = p.get_or("embedding_kind", String::new())?;
        let preset = LinearTransformSpec::preset(&pair, &kind).unwrap_or_default();
        let alpha = LinearTransformSpec::new(
            p.get_or("alpha_src", preset.alpha_src)?,
            p.get_or("alpha_trg", preset.alpha_trg)?,
        )?;
        let csls_neighborhood = p.get_or("csls_neighborhood", 10usize)?;
        let init = InitConfig {
            vocab_cutoff: p.get_or("init_vocab_cutoff", InitConfig::default().vocab_cutoff)?,
            csls_neighborhood,
            seed: derive_seed(plan.seed, &[0]),
        };
        let d = SelfLearnConfig::default();
        let selflearn = SelfLearnConfig {
            dict_vocab_cutoff: p.get_or("dict_vocab_cutoff", d.dict_vocab_cutoff)?,
            retrieval: p.get_or("retrieval", d.retrieval)?,
            csls_neighborhood,
            keep_prob_initial: p.get_or("keep_prob_initial", d.keep_prob_initial)?,
            keep_prob_factor: p.get_or("keep_prob_factor", d.keep_prob_factor)?,
            stall_patience: p.get_or("stall_patience", d.stall_patience)?,
            convergence_eps: p.get_or("convergence_eps", d.convergence_eps)?,
            max_iters: p.get_or("max_iters", d.max_iters)?,
            reweight_exponent: p.get_or("reweight_exponent", d.reweight_exponent)?,
            bidirectional: p.get_or("bidirectional", d.bidirectional)?,
            renormalize_each_iter: p.get_or("renormalize_each_iter", d.renormalize_each_iter)?,
            seed: derive_seed(plan.seed, &[1]),
        };
        selflearn.validate()?;
        let c = CscbliConfig::default();
        let cscbli = CscbliConfig {
            learning_rate: p.get_or("learning_rate", c.learning_rate)?,
            margin: p.get_or("margin", c.margin)?,
            negatives_per_pair: p.get_or("negatives_per_pair", c.negatives_per_pair)?,
            batch_size: p.get_or("batch_size", c.batch_size)?,
            epochs_per_round: p.get_or("epochs_per_round", c.epochs_per_round)?,
            refine_rounds: p.get_or("refine_rounds", c.refine_rounds)?,
            lambda: p.get_or("lambda", c.lambda)?,
            dict_vocab_cutoff: p.get_or("cscbli_vocab_cutoff", c.dict_vocab_cutoff)?,
            csls_neighborhood,
            seed: derive_seed(plan.seed, &[2]),
        };
        cscbli.validate()?;
        let fusion_post = match p.raw("fusion_stage").unwrap_or("preprocess") {
            "preprocess" => false,
            "post" => true,
            other => {
                return Err(Error::Config(format!(
                    "plan {}: fusion_stage must be `preprocess` or `post`, got `{other}`",
                    plan.code
                )))
            }
        };
        let eval_ks = p.list("eval_ks")?.unwrap_or_else(|| vec![1, 5, 10]);
        if eval_ks.is_empty() || eval_ks.contains(&0) {
            return Err(Error::Config(format!("plan {}: eval_ks must be positive", plan.code)));
        }
        Ok(Settings {
            alpha,
            dimred_dim: p.get("dimred_dim")?,
            sweep_step: p.get_or("sweep_step", 50usize)?,
            sweep_k_freq: p.get("sweep_k_freq")?,
            init,
            selflearn,
            cscbli,
            fusion_post,
            eval_retrieval: p.get_or("eval_retrieval", Retrieval::Csls)?,
            eval_ks,
        })
    }
}

/// Loads the plan's inputs and runs it; artifacts go to `out_dir/<code>`
/// when `out_dir` is given.
pub fn run_experiment(plan: &ExperimentPlan, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    plan.validate()?;
    let inputs = LoadedInputs::load(plan, plan.has(Step::Cscbli)).map_err(|e| e.in_stage("load"))?;
    run_with_inputs(plan, &inputs, out_dir)
}

trait StageExt<T> {
    fn stage(self, name: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, name: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(name))
    }
}

pub fn run_with_inputs(plan: &ExperimentPlan, inputs: &LoadedInputs, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    let started = Instant::now();
    plan.validate().stage("config")?;
    let s = Settings::from_plan(plan).stage("config")?;
    let mut row = ResultRow::for_plan(plan).stage("config")?;

    let mut x = normalize(&inputs.x).stage("normalize")?;
    let mut z = normalize(&inputs.z).stage("normalize")?;
    for &step in &plan.steps {
        match step {
            Step::EffectiveDimred => {
                let dim = s.dimred_dim.unwrap_or((x.dim() / 2).max(1));
                let reduce = |m: &EmbeddingMatrix| pca_reduce(m, dim).and_then(|(r, _)| normalize(&r));
                x = reduce(&x).stage("effective_dimred")?;
                z = reduce(&z).stage("effective_dimred")?;
            }
            Step::LinearTransform => {
                let apply = |m: &EmbeddingMatrix, alpha: f64| {
                    if alpha == 0.0 {
                        Ok(m.clone())
                    } else {
                        linear_transform(m, alpha).and_then(|t| normalize(&t))
                    }
                };
                x = apply(&x, s.alpha.alpha_src).stage("linear_transform")?;
                z = apply(&z, s.alpha.alpha_trg).stage("linear_transform")?;
            }
            Step::Fusion if !s.fusion_post => {
                (x, z) = fuse(&x, &z).stage("fusion")?;
            }
            _ => {}
        }
    }

    let mut init_sweep = Vec::new();
    let d0 = if plan.has(Step::IterativeDimredInit) {
        let dim = x.dim().min(z.dim());
        let sweep = DimSweep {
            start_dim: dim,
            target_dim: s.dimred_dim.unwrap_or((dim / 2).max(1)),
            step: s.sweep_step,
            k_freq: s.sweep_k_freq.unwrap_or(s.init.vocab_cutoff),
        };
        let (d0, trace) = iterative_dimred_init(&x, &z, &sweep, &s.init).stage("init")?;
        init_sweep = trace;
        d0
    } else {
        unsupervised_init(&x, &z, &s.init).stage("init")?
    };

    let alignment = self_learn(&x, &z, &d0, &s.selflearn).stage("self_learn")?;
    let (mut xm, mut zm) = alignment.mapped(&x, &z).stage("self_learn")?;
    if plan.has(Step::Fusion) && s.fusion_post {
        (xm, zm) = fuse(&xm, &zm).stage("fusion")?;
    }

    let mut cscbli = None;
    let scorer = if plan.has(Step::Cscbli) {
        let (Some(ax), Some(az)) = (&inputs.src_contextual, &inputs.trg_contextual) else {
            return Err(Error::Config("contextual matrices were not loaded".into()).in_stage("cscbli"));
        };
        let (a0x, a0z) = map_contextual(ax, az, &alignment.dictionary).stage("cscbli")?;
        let model = train_cscbli(&xm, &zm, &a0x, &a0z, &s.cscbli).stage("cscbli")?;
        let (ux, uz) = model.unified(&xm, &zm, &a0x, &a0z).stage("cscbli")?;
        let scorer = interpolated_scorer(
            &ux,
            &uz,
            &a0x,
            &a0z,
            s.cscbli.lambda,
            s.eval_retrieval,
            s.selflearn.csls_neighborhood,
        )
        .stage("cscbli")?;
        cscbli = Some(model);
        scorer
    } else {
        Scorer::new(xm.matrix(), zm.matrix(), s.eval_retrieval, s.selflearn.csls_neighborhood)
    };

    let (report, rankings) = evaluate(&scorer, inputs, &s.eval_ks).stage("eval")?;
    row.pr_at_1 = report.precision(1).or(report.precision_at.first().map(|p| p.1));
    row.runtime_seconds = started.elapsed().as_secs_f64();
    let outcome = ExperimentOutcome {
        row,
        report,
        alignment,
        rankings,
        init_sweep,
        cscbli,
    };
    if let Some(dir) = out_dir {
        write_artifacts(&outcome, inputs, &dir.join(&plan.code)).stage("write")?;
    }
    log::info!(
        "{}: Pr@1 {:.4} in {:.2}s",
        plan.code,
        outcome.row.pr_at_1.unwrap_or(f64::NAN),
        outcome.row.runtime_seconds
    );
    Ok(outcome)
}

type Ranked = Vec<(String, Vec<String>)>;

fn evaluate(scorer: &Scorer, inputs: &LoadedInputs, ks: &[usize]) -> Result<(EvalReport, Ranked)> {
    let kmax = *ks.iter().max().expect("non-empty");
    let sources: Vec<(String, usize)> = inputs
        .gold
        .entries()
        .filter_map(|(w, _)| inputs.src_vocab.index_of(w).map(|i| (w.to_string(), i)))
        .collect();
    let rows: Vec<usize> = sources.iter().map(|s| s.1).collect();
    let top = scorer.select_queries(&rows).top_k(kmax);
    let ranked: Ranked = sources
        .into_iter()
        .zip(top)
        .map(|((w, _), list)| {
            let words = list.into_iter().map(|(j, _)| inputs.trg_vocab.word(j).to_string()).collect();
            (w, words)
        })
        .collect();
    let map: Rankings = ranked.iter().cloned().collect();
    let report = precision_at_ks(&map, &inputs.gold, ks, Some(&inputs.trg_vocab))?;
    Ok((report, ranked))
}

fn write_artifacts(outcome: &ExperimentOutcome, inputs: &LoadedInputs, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outcome.alignment.save(dir, &inputs.src_vocab, &inputs.trg_vocab)?;

    let mut eval = csv::Writer::from_path(dir.join("eval.csv"))?;
    eval.write_record(["k", "precision", "hits", "evaluated", "skipped_oov", "coverage"])?;
    for (&(k, p), &(_, h)) in outcome.report.precision_at.iter().zip(&outcome.report.hits_at) {
        eval.write_record([
            k.to_string(),
            p.to_string(),
            h.to_string(),
            outcome.report.evaluated.to_string(),
            outcome.report.skipped_oov.to_string(),
            outcome.report.coverage.to_string(),
        ])?;
    }
    eval.flush()?;

    let path = dir.join("rankings.tsv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    for (src, list) in &outcome.rankings {
        writeln!(out, "{src}\t{}", list.join("\t"))?;
    }
    out.flush()?;

    if !outcome.init_sweep.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("init_sweep.csv"))?;
        w.write_record(["dim", "score", "pairs"])?;
        for p in &outcome.init_sweep {
            w.write_record([p.dim.to_string(), p.score.to_string(), p.pairs.to_string()])?;
        }
        w.flush()?;
    }
    if let Some(model) = &outcome.cscbli {
        model.src.save(dir.join("spring_src.txt"))?;
        model.trg.save(dir.join("spring_trg.txt"))?;
        model
            .dictionary
            .save_tsv(dir.join("cscbli_dictionary.tsv"), &inputs.src_vocab, &inputs.trg_vocab)?;
    }
    Ok(())
}

fn par_map<T: Sync, R: Send>(items: &[T], parallel: bool, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Runs every plan, sharing loaded inputs between plans with the same
/// input files. A failing plan yields a row with `error` set. Deltas are
/// taken against the `M1` row with the same embedding kind and language
/// pair.
pub fn run_matrix(plans: &[ExperimentPlan], out_dir: Option<&Path>, parallel: bool) -> Vec<ResultRow> {
    let mut groups: Vec<(String, Vec<&ExperimentPlan>)> = Vec::new();
    for plan in plans {
        let key = input_key(plan);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(plan),
            None => groups.push((key, vec![plan])),
        }
    }
    let mut loaded: HashMap<String, std::result::Result<LoadedInputs, String>> = HashMap::new();
    for (key, group) in &groups {
        let contextual = group.iter().any(|p| p.has(Step::Cscbli));
        let inputs = LoadedInputs::load(group[0], contextual).map_err(|e| e.in_stage("load").to_string());
        loaded.insert(key.clone(), inputs);
    }
    let mut rows = par_map(plans, parallel, |plan| {
        let failed = |msg: String| {
            log::error!("{}: {msg}", plan.code);
            let mut row = ResultRow::for_plan(plan).unwrap_or_else(|_| ResultRow {
                code: plan.code.clone(),
                embedding_kind: String::new(),
                language_pair: String::new(),
                pr_at_1: None,
                delta_vs_baseline: None,
                runtime_seconds: 0.0,
                seed: plan.seed,
                error: None,
            });
            row.error = Some(msg);
            row
        };
        match &loaded[&input_key(plan)] {
            Ok(inputs) => match run_with_inputs(plan, inputs, out_dir) {
                Ok(outcome) => outcome.row,
                Err(e) => failed(e.to_string()),
            },
            Err(msg) => failed(msg.clone()),
        }
    });
    fill_deltas(&mut rows);
    rows
}

pub fn fill_deltas(rows: &mut [ResultRow]) {
    let baselines: Vec<(String, String, f64)> = rows
        .iter()
        .filter(|r| r.code == "M1")
        .filter_map(|r| r.pr_at_1.map(|p| (r.embedding_kind.clone(), r.language_pair.clone(), p)))
        .collect();
    for row in rows.iter_mut() {
        let base = baselines
            .iter()
            .find(|(k, l, _)| *k == row.embedding_kind && *l == row.language_pair)
            .map(|b| b.2);
        row.delta_vs_baseline = match (row.pr_at_1, base) {
            (Some(p), Some(b)) => Some(p - b),
            _ => None,
        };
    }
}

pub const RESULT_HEADER: [&str; 8] = [
    "code",
    "embedding_kind",
    "language_pair",
    "pr_at_1",
    "delta_vs_baseline",
    "runtime_seconds",
    "seed",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_results_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            r.code.clone(),
            r.embedding_kind.clone(),
            r.language_pair.clone(),
            opt(r.pr_at_1),
            opt(r.delta_vs_baseline),
            r.runtime_seconds.to_string(),
            r.seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| Error::parse(path.display().to_string(), format!("bad number `{s}`")))
    };
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").to_string();
            Ok(ResultRow {
                code: field(0),
                embedding_kind: field(1),
                language_pair: field(2),
                pr_at_1: num(&field(3))?,
                delta_vs_baseline: num(&field(4))?,
                runtime_seconds: num(&field(5))?.unwrap_or(0.0),
                seed: field(6)
                    .parse()
                    .map_err(|_| Error::parse(path.display().to_string(), "bad seed"))?,
                error: Some(field(7)).filter(|e| !e.is_empty()),
            })
        })
        .collect()
}

/// Plain-text table with Pr@1 in percent; `*` marks the best row of each
/// (embedding kind, language pair) group.
pub fn format_table(rows: &[ResultRow]) -> String {
    let best = |r: &ResultRow| {
        rows.iter()
            .filter(|o| o.embedding_kind == r.embedding_kind && o.language_pair == r.language_pair)
            .filter_map(|o| o.pr_at_1)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    };
    let header = ["", "code", "kind", "pair", "pr@1", "delta", "seconds", "error"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            let marker = match (r.pr_at_1, best(r)) {
                (Some(p), Some(b)) if p == b => "*",
                _ => "",
            };
            [
                marker.to_string(),
                r.code.clone(),
                r.embedding_kind.clone(),
                r.language_pair.clone(),
                r.pr_at_1.map(|p| format!("{:.2}", 100.0 * p)).unwrap_or_else(|| "-".into()),
                r.delta_vs_baseline
                    .map(|d| format!("{:+.2}", 100.0 * d))
                    .unwrap_or_else(|| "-".into()),
                format!("{:.2}", r.runtime_seconds),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..8)
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header);
    for r in &body {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&cells);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPoint {
    pub alpha_src: f64,
    pub alpha_trg: f64,
    pub pr_at_1: Option<f64>,
    pub error: Option<String>,
}

/// Runs `plan` (which must include `linear_transform`) for every pair of
/// `grid` values.
pub fn sweep_alpha(plan: &ExperimentPlan, grid: &[f64], out_dir: Option<&Path>, parallel: bool) -> Result<Vec<AlphaPoint>> {
    if !plan.has(Step::LinearTransform) {
        return Err(Error::Config(format!("plan {} has no linear_transform step", plan.code)));
    }
    let inputs = LoadedInputs::load(plan, plan.has(Step::Cscbli)).map_err(|e| e.in_stage("load"))?;
    let points: Vec<(f64, f64)> = grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect();
    Ok(par_map(&points, parallel, |&(a, b)| {
        let mut p = plan.clone();
        p.params.insert("alpha_src".into(), a.to_string());
        p.params.insert("alpha_trg".into(), b.to_string());
        p.code = format!("{}_as{a}_at{b}", plan.code);
        let result = run_with_inputs(&p, &inputs, out_dir);
        AlphaPoint {
            alpha_src: a,
            alpha_trg: b,
            pr_at_1: result.as_ref().ok().and_then(|o| o.row.pr_at_1),
            error: result.err().map(|e| e.to_string()),
        }
    }))
}

pub fn default_alpha_grid() -> Vec<f64> {
    ALPHA_GRID.to_vec()
}

pub fn write_alpha_csv(path: impl AsRef<Path>, points: &[AlphaPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["alpha_src", "alpha_trg", "pr_at_1", "error"])?;
    for p in points {
        w.write_record([
            p.alpha_src.to_string(),
            p.alpha_trg.to_string(),
            opt(p.pr_at_1),
            p.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Source alphas down, target alphas across, Pr@1 in percent.
pub fn format_alpha_grid(points: &[AlphaPoint]) -> String {
    let mut src: Vec<f64> = points.iter().map(|p| p.alpha_src).collect();
    let mut trg: Vec<f64> = points.iter().map(|p| p.alpha_trg).collect();
    for v in [&mut src, &mut trg] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let mut out = format!("{:>8}", "src\\trg");
    for t in &trg {
        let _ = write!(out, "{t:>8}");
    }
    out.push('\n');
    for s in &src {
        let _ = write!(out, "{s:>8}");
        for t in &trg {
            let cell = points
                .iter()
                .find(|p| p.alpha_src == *s && p.alpha_trg == *t)
                .and_then(|p| p.pr_at_1)
                .map(|v| format!("{:.2}", 100.0 * v))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, "{cell:>8}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinFreqPoint {
    pub min_freq: u64,
    pub src_vocab: usize,
    pub trg_vocab: usize,
    pub pr_at_1: Option<f64>,
    pub coverage: Option<f64>,
    pub error: Option<String>,
}

/// Runs `plan` once per frequency threshold.
pub fn sweep_minfreq(plan: &ExperimentPlan, thresholds: &[u64], out_dir: Option<&Path>, parallel: bool) -> Vec<MinFreqPoint> {
    par_map(thresholds, parallel, |&t| {
        let mut p = plan.clone();
        p.params.insert("min_freq".into(), t.to_string());
        p.code = format!("{}_minfreq{t}", plan.code);
        let loaded = LoadedInputs::load(&p, p.has(Step::Cscbli)).map_err(|e| e.in_stage("load"));
        let sizes = loaded
            .as_ref()
            .map(|i| (i.src_vocab.len(), i.trg_vocab.len()))
            .unwrap_or((0, 0));
        let result = loaded.and_then(|inputs| run_with_inputs(&p, &inputs, out_dir));
        MinFreqPoint {
            min_freq: t,
            src_vocab: sizes.0,
            trg_vocab: sizes.1,
            pr_at_1: result.as_ref().ok().and_then(|o| o.row.pr_at_1),
            coverage: result.as_ref().ok().map(|o| o.report.coverage),
            error: result.err().map(|e| e.to_string()),
        }
    })
}

pub fn write_minfreq_csv(path: impl AsRef<Path>, points: &[MinFreqPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["min_freq", "src_vocab", "trg_vocab", "pr_at_1", "coverage", "error"])?;
    for p in points {
        w.write_record([
            p.min_freq.to_string(),
            p.src_vocab.to_string(),
            p.trg_vocab.to_string(),
            opt(p.pr_at_1),
            opt(p.coverage),
            p.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
