//! Bootstrap ranking of competing methods on subject-level scores.
//!
//! In every bootstrap sample and for every class, `N_l` subject-level scores are
//! drawn with shared indices for all methods (paired bootstrap). Each method's
//! draws are averaged per class and then across classes; methods are ranked by
//! that score, highest first, with ties sharing the average rank.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::SubjectScore;
use crate::augment::rng::{derive_seed, RngStream};
use crate::error::{Error, Result};

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingConfig {
    pub samples: usize,
    pub seed: u64,
    /// `false` draws all `N_l` subjects without replacement, which reproduces
    /// the point estimate in every sample.
    pub with_replacement: bool,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_BOOTSTRAP_SAMPLES,
            seed: 0,
            with_replacement: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankFrequency {
    pub rank: f64,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodRanking {
    pub method: String,
    /// Class-averaged score over all subjects.
    pub point_score: f64,
    pub point_rank: f64,
    pub mean_rank: f64,
    pub median_rank: f64,
    /// 2.5th and 97.5th percentile of the bootstrap ranks.
    pub rank_interval: (f64, f64),
    pub rank_frequencies: Vec<RankFrequency>,
}

impl MethodRanking {
    pub fn frequency_of(&self, rank: f64) -> f64 {
        self.rank_frequencies
            .iter()
            .find(|f| f.rank == rank)
            .map_or(0.0, |f| f.frequency)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankingResult {
    pub samples: usize,
    pub with_replacement: bool,
    pub methods: Vec<MethodRanking>,
}

impl RankingResult {
    pub fn method(&self, name: &str) -> Option<&MethodRanking> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// Scores laid out as `[method][class][subject]` over a common grid.
struct Grid {
    methods: Vec<String>,
    scores: Vec<Vec<Vec<f64>>>,
}

fn build_grid(per_method: &BTreeMap<String, Vec<SubjectScore>>) -> Result<Grid> {
    let mut layout: Option<BTreeMap<String, BTreeSet<String>>> = None;
    let mut tables = Vec::new();
    for (method, scores) in per_method {
        let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for s in scores {
            if table
                .entry(s.class.clone())
                .or_default()
                .insert(s.subject.clone(), s.score)
                .is_some()
            {
                return Err(Error::Structural(format!(
                    "method '{method}' has two scores for subject '{}', class '{}'",
                    s.subject, s.class
                )));
            }
        }
        let keys: BTreeMap<String, BTreeSet<String>> = table
            .iter()
            .map(|(c, subjects)| (c.clone(), subjects.keys().cloned().collect()))
            .collect();
        match &layout {
            None => layout = Some(keys),
            Some(expected) if *expected != keys => {
                return Err(Error::Structural(format!(
                    "method '{method}' is not evaluated on the same (subject, class) grid as the others"
                )))
            }
            Some(_) => {}
        }
        tables.push(table);
    }
    let scores = tables
        .into_iter()
        .map(|t| {
            t.into_values()
                .map(|subjects| subjects.into_values().collect())
                .collect()
        })
        .collect();
    Ok(Grid {
        methods: per_method.keys().cloned().collect(),
        scores,
    })
}

/// Ranks descending by score; tied scores share the average of their ranks.
pub fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn class_averaged(grid: &Grid, picks: &[Vec<usize>]) -> Vec<f64> {
    grid.scores
        .iter()
        .map(|classes| {
            let total: f64 = classes
                .iter()
                .zip(picks)
                .map(|(subjects, idx)| idx.iter().map(|&i| subjects[i]).sum::<f64>() / idx.len() as f64)
                .sum();
            total / classes.len() as f64
        })
        .collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn bootstrap_ranking(
    per_method: &BTreeMap<String, Vec<SubjectScore>>,
    config: &RankingConfig,
) -> Result<RankingResult> {
    if config.samples == 0 {
        return Err(Error::Parameter("bootstrap needs at least one sample".into()));
    }
    let grid = build_grid(per_method)?;
    let class_sizes: Vec<usize> = grid
        .scores
        .first()
        .map(|classes| classes.iter().map(Vec::len).collect())
        .unwrap_or_default();
    if class_sizes.is_empty() {
        return Ok(RankingResult {
            samples: config.samples,
            with_replacement: config.with_replacement,
            methods: Vec::new(),
        });
    }

    let full: Vec<Vec<usize>> = class_sizes.iter().map(|&n| (0..n).collect()).collect();
    let point_scores = class_averaged(&grid, &full);
    let point_ranks = average_ranks(&point_scores);

    let sample_ranks: Vec<Vec<f64>> = (0..config.samples)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(derive_seed(config.seed, &[b as u64]));
            let picks: Vec<Vec<usize>> = class_sizes
                .iter()
                .map(|&n| {
                    if config.with_replacement {
                        (0..n).map(|_| rng.index(n)).collect()
                    } else {
                        let all: Vec<usize> = (0..n).collect();
                        rng.choose_distinct(&all, n)
                    }
                })
                .collect();
            average_ranks(&class_averaged(&grid, &picks))
        })
        .collect();

    let b = config.samples as f64;
    let methods = grid
        .methods
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let mut ranks: Vec<f64> = sample_ranks.iter().map(|r| r[m]).collect();
            ranks.sort_by(f64::total_cmp);
            // ranks are multiples of 0.5
            let mut hist: BTreeMap<u64, usize> = BTreeMap::new();
            for r in &ranks {
                *hist.entry((r * 2.0).round() as u64).or_insert(0) += 1;
            }
            MethodRanking {
                method: name.clone(),
                point_score: point_scores[m],
                point_rank: point_ranks[m],
                mean_rank: ranks.iter().sum::<f64>() / b,
                median_rank: quantile(&ranks, 0.5),
                rank_interval: (quantile(&ranks, 0.025), quantile(&ranks, 0.975)),
                rank_frequencies: hist
                    .into_iter()
                    .map(|(r2, n)| RankFrequency {
                        rank: r2 as f64 / 2.0,
                        frequency: n as f64 / b,
                    })
                    .collect(),
            }
        })
        .collect();

    Ok(RankingResult {
        samples: config.samples,
        with_replacement: config.with_replacement,
        methods,
    })
}
