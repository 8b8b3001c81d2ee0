use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use super::plan::{parse_steps, standard_steps, ExperimentPlan, PlanInputs};
use crate::error::{Error, Result};
use crate::util::{derive_seed, stable_hash};

const PATH_KEYS: [&str; 7] = [
    "src_embeddings",
    "trg_embeddings",
    "gold",
    "src_freq",
    "trg_freq",
    "src_contextual",
    "trg_contextual",
];

/// Every hyperparameter key the runner understands.
pub const KNOWN_KEYS: &[&str] = &[
    "plans",
    "steps",
    "seed",
    "language_pair",
    "embedding_kind",
    "max_vocab",
    "min_freq",
    "alpha_src",
    "alpha_trg",
    "dimred_dim",
    "sweep_step",
    "sweep_k_freq",
    "init_vocab_cutoff",
    "csls_neighborhood",
    "dict_vocab_cutoff",
    "retrieval",
    "keep_prob_initial",
    "keep_prob_factor",
    "stall_patience",
    "convergence_eps",
    "max_iters",
    "reweight_exponent",
    "bidirectional",
    "renormalize_each_iter",
    "fusion_stage",
    "learning_rate",
    "margin",
    "negatives_per_pair",
    "batch_size",
    "epochs_per_round",
    "refine_rounds",
    "lambda",
    "cscbli_vocab_cutoff",
    "eval_retrieval",
    "eval_ks",
];

/// Typed view over a plan's raw hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct Params<'a> {
    code: &'a str,
    map: &'a BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    pub fn new(code: &'a str, map: &'a BTreeMap<String, String>) -> Self {
        Params { code, map }
    }

    pub fn raw(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).map(|s| s.trim()).filter(|s| !s.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("plan {}: cannot parse {key} = `{v}`", self.code)))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|_| Error::Config(format!("plan {}: bad item `{s}` in {key}", self.code)))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn check_known(&self) -> Result<()> {
        match self
            .map
            .keys()
            .find(|k| !KNOWN_KEYS.contains(&k.as_str()) && !PATH_KEYS.contains(&k.as_str()))
        {
            Some(k) => Err(Error::Config(format!("plan {}: unknown key `{k}`", self.code))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub plans: Vec<ExperimentPlan>,
    /// Global keys, for building ad-hoc plans.
    pub global: BTreeMap<String, String>,
    pub base_dir: PathBuf,
}

/// Per-plan seed used when a plan does not set its own.
pub fn plan_seed(global_seed: u64, code: &str) -> u64 {
    derive_seed(global_seed, &[stable_hash(code)])
}

impl ExperimentConfig {
    /// Reads an INI-style file. Keys outside any section or in `[global]`
    /// apply to every plan; a section named after a plan code overrides
    /// them. `plans = M1, M3` selects and orders plans; without it every
    /// non-global section is a plan. Relative paths resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>, seed_override: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, seed_override)
    }

    pub fn parse(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("config syntax: {e}")))?;
        let mut global = BTreeMap::new();
        let mut sections: Vec<(String, BTreeMap<String, String>)> = Vec::new();
        for (name, props) in ini.iter() {
            let entries = props.iter().map(|(k, v)| (k.trim().to_string(), v.trim().to_string()));
            match name.map(str::trim) {
                None | Some("global") => global.extend(entries),
                Some(code) => match sections.iter_mut().find(|(c, _)| c == code) {
                    Some((_, m)) => m.extend(entries),
                    None => sections.push((code.to_string(), entries.collect())),
                },
            }
        }
        let global_params = Params::new("global", &global);
        let seed = match seed_override {
            Some(s) => s,
            None => global_params.get_or("seed", 0u64)?,
        };
        let codes: Vec<String> = match global_params.list::<String>("plans")? {
            Some(list) => list,
            None => sections.iter().map(|(c, _)| c.clone()).collect(),
        };
        if codes.is_empty() {
            return Err(Error::Config("no plans configured".into()));
        }
        let empty = BTreeMap::new();
        let plans = codes
            .iter()
            .map(|code| {
                let own = sections.iter().find(|(c, _)| c == code).map_or(&empty, |(_, m)| m);
                build_plan(code, &global, own, base_dir, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExperimentConfig {
            seed,
            plans,
            global,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn plan(&self, code: &str) -> Result<&ExperimentPlan> {
        self.plans
            .iter()
            .find(|p| p.code == code)
            .ok_or_else(|| Error::Config(format!("no plan `{code}` in config")))
    }

    /// A plan for `code` built from the global keys only.
    pub fn standalone_plan(&self, code: &str) -> Result<ExperimentPlan> {
        build_plan(code, &self.global, &BTreeMap::new(), &self.base_dir, self.seed)
    }
}

fn build_plan(
    code: &str,
    global: &BTreeMap<String, String>,
    own: &BTreeMap<String, String>,
    base_dir: &Path,
    global_seed: u64,
) -> Result<ExperimentPlan> {
    let mut params = global.clone();
    params.remove("plans");
    params.remove("seed");
    params.extend(own.iter().map(|(k, v)| (k.clone(), v.clone())));
    let view = Params::new(code, &params);
    view.check_known()?;

    let steps = match view.raw("steps") {
        Some(list) => parse_steps(list)?,
        None => standard_steps(code)
            .ok_or_else(|| Error::Config(format!("plan {code} is not a standard code and sets no `steps`")))?,
    };
    let path = |key: &str| view.raw(key).map(|p| base_dir.join(p));
    let required = |key: &str| path(key).ok_or_else(|| Error::Config(format!("plan {code}: `{key}` is required")));
    let inputs = PlanInputs {
        src_embeddings: required("src_embeddings")?,
        trg_embeddings: required("trg_embeddings")?,
        gold: required("gold")?,
        src_freq: path("src_freq"),
        trg_freq: path("trg_freq"),
        src_contextual: path("src_contextual"),
        trg_contextual: path("trg_contextual"),
    };
    let seed = match own.get("seed") {
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("plan {code}: bad seed `{s}`")))?,
        None => plan_seed(global_seed, code),
    };
    let plan = ExperimentPlan {
        code: code.to_string(),
        steps,
        inputs,
        params,
        seed,
    };
    plan.validate()?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Step;

    const TEXT: &str = "\
seed = 7
src_embeddings = data/src.vec
trg_embeddings = data/trg.vec
gold = data/gold.tsv
plans = M1, M3, mine

[M3]
alpha_src = 0.25
seed = 99

[mine]
steps = linear_transform, fusion
max_iters = 40
";

    #[test]
    fn parses_global_and_sections() {
        let cfg = ExperimentConfig::parse(TEXT, Path::new("/cfg"), None).unwrap();
        assert_eq!(cfg.seed, 7);
        let codes: Vec<&str> = cfg.plans.iter().map(|p| p.code.as_str()).collect();
        assert_eq!(codes, ["M1", "M3", "mine"]);
        let m1 = cfg.plan("M1").unwrap();
        assert_eq!(m1.inputs.src_embeddings, Path::new("/cfg/data/src.vec"));
        assert_eq!(m1.seed, plan_seed(7, "M1"));
        let m3 = cfg.plan("M3").unwrap();
        assert_eq!(m3.seed, 99);
        assert_eq!(Params::new("M3", &m3.params).get::<f64>("alpha_src").unwrap(), Some(0.25));
        let mine = cfg.plan("mine").unwrap();
        assert_eq!(mine.steps, vec![Step::LinearTransform, Step::Fusion]);
        assert_eq!(Params::new("mine", &mine.params).get_or("max_iters", 0usize).unwrap(), 40);
    }

    #[test]
    fn seed_override_rederives_plan_seeds() {
        let cfg = ExperimentConfig::parse(TEXT, Path::new("."), Some(3)).unwrap();
        assert_eq!(cfg.plan("M1").unwrap().seed, plan_seed(3, "M1"));
        assert_eq!(cfg.plan("M3").unwrap().seed, 99);
        assert_ne!(plan_seed(3, "M1"), plan_seed(3, "M2"));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_key = TEXT.replace("max_iters", "max_iter");
        assert!(ExperimentConfig::parse(&bad_key, Path::new("."), None).is_err());
        let bad_steps = TEXT.replace("linear_transform, fusion", "fusion, linear_transform");
        assert!(ExperimentConfig::parse(&bad_steps, Path::new("."), None).is_err());
        let unknown = TEXT.replace("M1, M3, mine", "M1, M42");
        assert!(ExperimentConfig::parse(&unknown, Path::new("."), None).is_err());
        let no_gold = TEXT.replace("gold = data/gold.tsv\n", "");
        assert!(ExperimentConfig::parse(&no_gold, Path::new("."), None).is_err());
        let bad_number = TEXT.replace("max_iters = 40", "max_iters = many");
        let cfg = ExperimentConfig::parse(&bad_number, Path::new("."), None).unwrap();
        let mine = cfg.plan("mine").unwrap();
        assert!(Params::new("mine", &mine.params).get::<usize>("max_iters").is_err());
    }
}
