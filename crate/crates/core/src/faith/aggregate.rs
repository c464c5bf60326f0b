//! Dataset-level aggregation of instance counts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::visual::{InstanceCounts, MatchCounts, Prf};
use super::FaithError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationScheme {
    /// Pool counts within each example, then average P, R and F1 over examples.
    #[default]
    Examplewise,
    /// Pool counts over the whole dataset.
    Cumulative,
    /// Score every occurrence (one node on one image) separately and average.
    Occurrence,
}

impl AggregationScheme {
    pub fn name(self) -> &'static str {
        match self {
            Self::Examplewise => "examplewise",
            Self::Cumulative => "cumulative",
            Self::Occurrence => "occurrence",
        }
    }
}

impl fmt::Display for AggregationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationScheme {
    type Err = FaithError;
    fn from_str(s: &str) -> Result<Self, FaithError> {
        match s {
            "examplewise" => Ok(Self::Examplewise),
            "cumulative" => Ok(Self::Cumulative),
            "occurrence" => Ok(Self::Occurrence),
            other => Err(FaithError::UnknownScheme(other.to_string())),
        }
    }
}

/// Aggregated score for one module type (or overall). `n` is the number of
/// averaged units: examples, occurrences, or 1 for cumulative pooling.
/// `skipped` counts examples that had no instance of this type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuleScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n: usize,
    pub skipped: usize,
}

/// Pooled scores of one example, the unit of paired significance testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub id: String,
    pub overall: Prf,
    pub modules: BTreeMap<String, Prf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub scheme: AggregationScheme,
    pub examples: usize,
    pub overall: ModuleScore,
    pub modules: BTreeMap<String, ModuleScore>,
    /// Always the examplewise per-example scores, whatever the scheme.
    pub per_example: Vec<ExampleScores>,
}

fn mean_score(scores: &[Prf], skipped: usize) -> ModuleScore {
    let n = scores.len() as f64;
    ModuleScore {
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
        n: scores.len(),
        skipped,
    }
}

fn pooled_score(counts: MatchCounts, skipped: usize) -> ModuleScore {
    let p = Prf::from_counts(&counts);
    ModuleScore { precision: p.precision, recall: p.recall, f1: p.f1, n: 1, skipped }
}

/// Aggregate scored instances. The result depends only on the set of
/// instances, not on their order.
pub fn aggregate(instances: &[InstanceCounts], scheme: AggregationScheme) -> Result<FaithfulnessReport, FaithError> {
    if instances.is_empty() {
        return Err(FaithError::Empty);
    }
    // example -> module -> pooled counts
    let mut by_example: BTreeMap<&str, BTreeMap<&str, MatchCounts>> = BTreeMap::new();
    for inst in instances {
        let slot = by_example.entry(&inst.example).or_default().entry(&inst.module).or_default();
        *slot = *slot + inst.counts;
    }
    let per_example: Vec<ExampleScores> = by_example
        .iter()
        .map(|(id, mods)| ExampleScores {
            id: id.to_string(),
            overall: Prf::from_counts(&mods.values().copied().sum()),
            modules: mods.iter().map(|(m, c)| (m.to_string(), Prf::from_counts(c))).collect(),
        })
        .collect();
    let examples = per_example.len();
    let module_names: Vec<&str> = {
        let mut v: Vec<&str> = instances.iter().map(|i| i.module.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let present = |m: &str| by_example.values().filter(|mods| mods.contains_key(m)).count();

    let (overall, modules) = match scheme {
        AggregationScheme::Examplewise => {
            let overall: Vec<Prf> = per_example.iter().map(|e| e.overall).collect();
            let modules = module_names
                .iter()
                .map(|m| {
                    let scores: Vec<Prf> = per_example.iter().filter_map(|e| e.modules.get(*m).copied()).collect();
                    (m.to_string(), mean_score(&scores, examples - scores.len()))
                })
                .collect();
            (mean_score(&overall, 0), modules)
        }
        AggregationScheme::Cumulative => {
            let overall = pooled_score(instances.iter().map(|i| i.counts).sum(), 0);
            let modules = module_names
                .iter()
                .map(|m| {
                    let pooled = instances.iter().filter(|i| i.module == *m).map(|i| i.counts).sum();
                    (m.to_string(), pooled_score(pooled, examples - present(m)))
                })
                .collect();
            (overall, modules)
        }
        AggregationScheme::Occurrence => {
            let all: Vec<Prf> = instances.iter().map(|i| Prf::from_counts(&i.counts)).collect();
            let modules = module_names
                .iter()
                .map(|m| {
                    let scores: Vec<Prf> = instances.iter().filter(|i| i.module == *m).map(|i| Prf::from_counts(&i.counts)).collect();
                    (m.to_string(), mean_score(&scores, examples - present(m)))
                })
                .collect();
            (mean_score(&all, 0), modules)
        }
    };
    Ok(FaithfulnessReport { scheme, examples, overall, modules, per_example })
}
