use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    /// PCA in preprocessing.
    EffectiveDimred,
    LinearTransform,
    /// Dimension sweep inside initialization.
    IterativeDimredInit,
    Fusion,
    Cscbli,
}

impl Step {
    pub const ALL: [Step; 5] = [
        Step::EffectiveDimred,
        Step::LinearTransform,
        Step::IterativeDimredInit,
        Step::Fusion,
        Step::Cscbli,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Step::EffectiveDimred => "effective_dimred",
            Step::LinearTransform => "linear_transform",
            Step::IterativeDimredInit => "iterative_dimred_init",
            Step::Fusion => "fusion",
            Step::Cscbli => "cscbli",
        }
    }

    /// Pipeline phase; a valid plan lists steps in non-decreasing phase.
    fn phase(self) -> u8 {
        match self {
            Step::EffectiveDimred | Step::LinearTransform => 0,
            Step::IterativeDimredInit => 1,
            Step::Fusion => 2,
            Step::Cscbli => 3,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Step::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown step `{s}`")))
    }
}

pub fn parse_steps(list: &str) -> Result<Vec<Step>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

/// Steps of the standard method codes `M1`..`M20`, in execution order.
pub fn standard_steps(code: &str) -> Option<Vec<Step>> {
    use Step::*;
    let steps: &[Step] = match code {
        "M1" => &[],
        "M2" => &[EffectiveDimred],
        "M3" => &[LinearTransform],
        "M4" => &[LinearTransform, EffectiveDimred],
        "M5" => &[EffectiveDimred, LinearTransform],
        "M6" => &[IterativeDimredInit],
        "M7" => &[LinearTransform, IterativeDimredInit],
        "M8" => &[Fusion],
        "M9" => &[EffectiveDimred, Fusion],
        "M10" => &[LinearTransform, Fusion],
        "M11" => &[LinearTransform, EffectiveDimred, Fusion],
        "M12" => &[EffectiveDimred, LinearTransform, Fusion],
        "M13" => &[IterativeDimredInit, Fusion],
        "M14" => &[LinearTransform, IterativeDimredInit, Fusion],
        "M15" => &[Cscbli],
        "M16" => &[EffectiveDimred, Cscbli],
        "M17" => &[LinearTransform, Cscbli],
        "M18" => &[LinearTransform, EffectiveDimred, Cscbli],
        "M19" => &[IterativeDimredInit, Cscbli],
        "M20" => &[LinearTransform, IterativeDimredInit, Cscbli],
        _ => return None,
    };
    Some(steps.to_vec())
}

pub const STANDARD_CODES: [&str; 20] = [
    "M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8", "M9", "M10", "M11", "M12", "M13", "M14", "M15", "M16", "M17",
    "M18", "M19", "M20",
];

/// Rejects step lists that cannot be executed as one pipeline.
pub fn validate_steps(steps: &[Step]) -> Result<()> {
    for (i, s) in steps.iter().enumerate() {
        if steps[..i].contains(s) {
            return Err(Error::Config(format!("step `{s}` listed twice")));
        }
    }
    if steps.contains(&Step::EffectiveDimred) && steps.contains(&Step::IterativeDimredInit) {
        return Err(Error::Config(
            "effective_dimred and iterative_dimred_init both reduce dimension; pick one".into(),
        ));
    }
    if let Some(w) = steps.windows(2).find(|w| w[1].phase() < w[0].phase()) {
        return Err(Error::Config(format!("step `{}` cannot run after `{}`", w[1], w[0])));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlanInputs {
    pub src_embeddings: PathBuf,
    pub trg_embeddings: PathBuf,
    pub gold: PathBuf,
    pub src_freq: Option<PathBuf>,
    pub trg_freq: Option<PathBuf>,
    pub src_contextual: Option<PathBuf>,
    pub trg_contextual: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub code: String,
    pub steps: Vec<Step>,
    pub inputs: PlanInputs,
    /// Hyperparameters as raw strings; see [`Params`](super::Params).
    pub params: BTreeMap<String, String>,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn has(&self, step: Step) -> bool {
        self.steps.contains(&step)
    }

    pub fn validate(&self) -> Result<()> {
        if self.code.trim().is_empty() {
            return Err(Error::Config("plan code is empty".into()));
        }
        validate_steps(&self.steps).map_err(|e| Error::Config(format!("plan {}: {e}", self.code)))?;
        if self.has(Step::Cscbli) && (self.inputs.src_contextual.is_none() || self.inputs.trg_contextual.is_none()) {
            return Err(Error::Config(format!(
                "plan {} uses cscbli but src_contextual/trg_contextual are not set",
                self.code
            )));
        }
        Ok(())
    }
}
