use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::LoggedDataset;
use crate::error::Result;
use crate::rng::{stream_rng, Stream};
use crate::timefeat::{TimeFeatureFn, Timestamp};

/// How continuous contexts are grouped into cells when matching pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContextCells {
    /// One cell per sign pattern of the context vector.
    Sign,
    /// Per-dimension empirical quantile bins.
    Quantile { bins: usize },
    /// Every context falls into the same cell.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    pub cells: ContextCells,
    /// Reservoir cap on the number of retained pairs.
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            cells: ContextCells::Sign,
            max_pairs: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BucketKey {
    pub action: usize,
    pub feature: usize,
    pub cell: Vec<u16>,
}

/// Two logged records sharing action, time feature and context cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub key: BucketKey,
    /// Record indices with `j < k`.
    pub j: usize,
    pub k: usize,
    pub t_j: Timestamp,
    pub t_k: Timestamp,
    pub r_j: f64,
    pub r_k: f64,
}

impl Pair {
    pub fn label(&self) -> f64 {
        self.r_j - self.r_k
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairDataset {
    pub pairs: Vec<Pair>,
    /// Number of eligible pairs before the reservoir cap.
    pub total: usize,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

struct CellMap {
    cuts: Vec<Vec<f64>>,
    kind: ContextCells,
}

impl CellMap {
    fn new(data: &LoggedDataset, kind: ContextCells) -> Self {
        let cuts = match kind {
            ContextCells::Quantile { bins } if bins > 1 => (0..data.context_dim())
                .map(|d| {
                    let mut col: Vec<f64> = data.records().iter().map(|r| r.x[d]).collect();
                    col.sort_by(f64::total_cmp);
                    (1..bins)
                        .map(|b| col[(b * col.len() / bins).min(col.len() - 1)])
                        .collect()
                })
                .collect(),
            _ => Vec::new(),
        };
        Self { cuts, kind }
    }

    fn cell(&self, x: &[f64]) -> Vec<u16> {
        match self.kind {
            ContextCells::Single => Vec::new(),
            ContextCells::Sign => x.iter().map(|&v| u16::from(v >= 0.0)).collect(),
            ContextCells::Quantile { bins } if bins <= 1 => Vec::new(),
            ContextCells::Quantile { .. } => x
                .iter()
                .zip(&self.cuts)
                .map(|(&v, cuts)| cuts.partition_point(|&c| c <= v) as u16)
                .collect(),
        }
    }
}

/// All unordered pairs of records that share action, `phi` cluster and
/// context cell, reservoir-sampled down to `config.max_pairs`.
pub fn build_pairwise_dataset(
    data: &LoggedDataset,
    phi: &TimeFeatureFn,
    config: &PairConfig,
) -> Result<PairDataset> {
    let cells = CellMap::new(data, config.cells);
    let mut buckets: BTreeMap<BucketKey, Vec<usize>> = BTreeMap::new();
    for (i, rec) in data.records().iter().enumerate() {
        let key = BucketKey {
            action: rec.a,
            feature: phi.feature_of(rec.t)?,
            cell: cells.cell(&rec.x),
        };
        buckets.entry(key).or_default().push(i);
    }

    let mut rng = stream_rng(config.seed, Stream::Pairs, 0);
    let mut kept: Vec<(usize, usize, &BucketKey)> = Vec::new();
    let mut seen = 0usize;
    for (key, members) in &buckets {
        for (p, &j) in members.iter().enumerate() {
            for &k in &members[p + 1..] {
                if kept.len() < config.max_pairs {
                    kept.push((j, k, key));
                } else {
                    let slot = rng.random_range(0..=seen);
                    if slot < config.max_pairs {
                        kept[slot] = (j, k, key);
                    }
                }
                seen += 1;
            }
        }
    }
    kept.sort_by_key(|&(j, k, _)| (j, k));
    let records = data.records();
    let pairs = kept
        .into_iter()
        .map(|(j, k, key)| Pair {
            key: key.clone(),
            j,
            k,
            t_j: records[j].t,
            t_k: records[k].t,
            r_j: records[j].r,
            r_k: records[k].r,
        })
        .collect();
    Ok(PairDataset { pairs, total: seen })
}
