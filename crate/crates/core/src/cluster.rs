//! Agent-profile clustering and diversity diagnostics.
//!
//! Specialist blueprints from run logs embed into profile vectors, k-means
//! groups them into role families, and per-case concentration (normalized
//! HHI, active cluster count) pairs with match rates for downstream
//! scatter analysis. Vectors are unit-normalized before clustering.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::runlog::RunRecord;
use crate::gateway::Gateway;

pub const DEFAULT_CLUSTER_COUNT: usize = 8;
const MAX_ITERATIONS: usize = 100;

/// Identifies one specialist instance across runs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentKey {
    pub run: String,
    pub case_id: String,
    pub agent_name: String,
}

/// One embedded agent profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileVector {
    pub key: AgentKey,
    pub vector: Vec<f64>,
    pub source_text: String,
}

/// Fitted clustering: centroids, assignments (parallel to `keys`), and the
/// silhouette of the result. `labels` are human-assigned afterwards.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub keys: Vec<AgentKey>,
    pub assignments: Vec<usize>,
    pub silhouette: f64,
    pub degenerate: bool,
    pub iterations: usize,
    #[serde(default)]
    pub labels: BTreeMap<usize, String>,
}

impl ClusterModel {
    pub fn assignment_of(&self, key: &AgentKey) -> Option<usize> {
        self.keys
            .iter()
            .position(|k| k == key)
            .map(|i| self.assignments[i])
    }

    pub fn cluster_sizes(&self) -> BTreeMap<usize, usize> {
        let mut sizes = BTreeMap::new();
        for &assignment in &self.assignments {
            *sizes.entry(assignment).or_insert(0) += 1;
        }
        sizes
    }

    pub fn set_label(&mut self, cluster: usize, label: impl Into<String>) {
        self.labels.insert(cluster, label.into());
    }
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least k={k} vectors, have {have}")]
    TooFewVectors { have: usize, k: usize },
    #[error("k must be >= 2, got {0}")]
    BadK(usize),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn unit_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Probability-proportional-to-squared-distance initialization.
fn seed_centroids(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(data[rng.gen_range(0..data.len())].clone());
    while centroids.len() < k {
        let distances: Vec<f64> = data
            .iter()
            .map(|point| {
                centroids
                    .iter()
                    .map(|c| squared_distance(point, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = distances.iter().sum();
        let next = if total > 0.0 {
            let mut draw = rng.gen_range(0.0..total);
            let mut chosen = data.len() - 1;
            for (i, d) in distances.iter().enumerate() {
                if draw < *d {
                    chosen = i;
                    break;
                }
                draw -= d;
            }
            chosen
        } else {
            // All points coincide with existing centroids.
            rng.gen_range(0..data.len())
        };
        centroids.push(data[next].clone());
    }
    centroids
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_distance = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_distance {
            best_distance = d;
            best = i;
        }
    }
    best
}

/// Lloyd's iteration with probability-proportional seeding; converges when
/// assignments stabilize or the iteration cap hits. Empty clusters are
/// re-seeded from the point farthest from its assigned centroid.
pub fn cluster_profiles(
    vectors: &[ProfileVector],
    k: usize,
    seed: u64,
) -> Result<ClusterModel, ClusterError> {
    if k < 2 {
        return Err(ClusterError::BadK(k));
    }
    if vectors.len() < k {
        return Err(ClusterError::TooFewVectors {
            have: vectors.len(),
            k,
        });
    }
    let dim = vectors[0].vector.len();
    for v in vectors {
        if v.vector.len() != dim {
            return Err(ClusterError::DimensionMismatch(dim, v.vector.len()));
        }
    }
    let data: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let mut x = v.vector.clone();
            unit_normalize(&mut x);
            x
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(&data, k, &mut rng);
    let mut assignments: Vec<usize> = vec![0; data.len()];
    let mut iterations = 0;
    // With fewer distinct points than k, re-seeding can never populate
    // every cluster; a bounded budget stops the oscillation.
    let mut reseed_budget = k;

    for iteration in 0..MAX_ITERATIONS {
        iterations = iteration + 1;
        let next: Vec<usize> = data
            .iter()
            .map(|point| nearest_centroid(point, &centroids))
            .collect();
        let converged = iteration > 0 && next == assignments;
        assignments = next;
        if converged {
            break;
        }

        // Recompute means; re-seed an emptied cluster from the point
        // farthest from its assigned centroid, while budget lasts.
        let mut sums: Vec<Vec<f64>> = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (point, &cluster) in data.iter().zip(&assignments) {
            counts[cluster] += 1;
            for (s, x) in sums[cluster].iter_mut().zip(point) {
                *s += x;
            }
        }
        for cluster in 0..k {
            if counts[cluster] == 0 {
                if reseed_budget == 0 {
                    continue;
                }
                reseed_budget -= 1;
                let farthest = data
                    .iter()
                    .enumerate()
                    .max_by(|(i, a), (j, b)| {
                        let da = squared_distance(a, &centroids[assignments[*i]]);
                        let db = squared_distance(b, &centroids[assignments[*j]]);
                        da.partial_cmp(&db).expect("finite distances")
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                log::warn!("cluster {cluster} emptied; re-seeding from the farthest point");
                centroids[cluster] = data[farthest].clone();
                continue;
            }
            for (s, sum) in centroids[cluster].iter_mut().zip(&sums[cluster]) {
                *s = sum / counts[cluster] as f64;
            }
        }
    }

    let (silhouette, degenerate) = silhouette_score(&data, &assignments);
    Ok(ClusterModel {
        k,
        centroids,
        keys: vectors.iter().map(|v| v.key.clone()).collect(),
        assignments,
        silhouette,
        degenerate,
        iterations,
        labels: BTreeMap::new(),
    })
}

/// Mean silhouette over all points: `s(i) = (b - a) / max(a, b)` with a =
/// mean intra-cluster distance and b = the best neighboring cluster's mean
/// distance. Returns (0, degenerate) when fewer than two clusters are
/// populated or every pairwise distance is zero.
pub fn silhouette_score(data: &[Vec<f64>], assignments: &[usize]) -> (f64, bool) {
    let populated: std::collections::BTreeSet<usize> = assignments.iter().copied().collect();
    if populated.len() < 2 {
        return (0.0, true);
    }
    let n = data.len();
    let mut total = 0.0;
    let mut defined = false;
    for i in 0..n {
        let own = assignments[i];
        let mut by_cluster: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = squared_distance(&data[i], &data[j]).sqrt();
            let entry = by_cluster.entry(assignments[j]).or_insert((0.0, 0));
            entry.0 += d;
            entry.1 += 1;
        }
        let a = by_cluster
            .get(&own)
            .map(|(sum, count)| sum / *count as f64)
            .unwrap_or(0.0); // singleton cluster
        let b = by_cluster
            .iter()
            .filter(|(cluster, _)| **cluster != own)
            .map(|(_, (sum, count))| sum / *count as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
            defined = true;
        }
    }
    if !defined {
        return (0.0, true);
    }
    (total / n as f64, false)
}

/// Normalized Herfindahl-Hirschman index over cluster counts: 0 = exactly
/// uniform across the populated clusters (most diverse), 1 = everything in
/// one cluster. K counts only populated clusters; K = 1 returns 1.
pub fn normalized_hhi<'a>(counts: impl IntoIterator<Item = &'a usize>) -> f64 {
    let nonzero: Vec<usize> = counts.into_iter().copied().filter(|c| *c > 0).collect();
    let total: usize = nonzero.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let k = nonzero.len();
    if k == 1 {
        return 1.0;
    }
    let hhi: f64 = nonzero
        .iter()
        .map(|count| {
            let share = *count as f64 / total as f64;
            share * share
        })
        .sum();
    let floor = 1.0 / k as f64;
    ((hhi - floor) / (1.0 - floor)).clamp(0.0, 1.0)
}

/// One Figure-style diagnostics row: concentration vs accuracy per case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDiversity {
    pub case_id: String,
    pub agent_count: usize,
    pub active_clusters: usize,
    pub normalized_hhi: f64,
    pub match_rate: Option<f64>,
}

/// Embeds every planner blueprint in the run log into a profile vector.
pub fn build_profile_vectors(
    run_label: &str,
    records: &[RunRecord],
    gateway: &Gateway,
) -> Result<Vec<ProfileVector>, ClusterError> {
    let mut keys: Vec<AgentKey> = Vec::new();
    let mut texts: Vec<String> = Vec::new();
    for record in records {
        if let Some(planner) = &record.planner {
            for blueprint in &planner.blueprints {
                keys.push(AgentKey {
                    run: run_label.to_string(),
                    case_id: record.case_id.clone(),
                    agent_name: blueprint.name.clone(),
                });
                texts.push(blueprint.profile_text());
            }
        }
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = gateway.embed(&texts)?;
    Ok(keys
        .into_iter()
        .zip(texts)
        .zip(vectors)
        .map(|((key, source_text), vector)| ProfileVector {
            key,
            vector,
            source_text,
        })
        .collect())
}

/// Per-case diversity diagnostics joining run records with a fitted model.
/// Cases with no clustered agents are skipped with a warning.
pub fn diversity_report(
    run_label: &str,
    records: &[RunRecord],
    model: &ClusterModel,
) -> Vec<CaseDiversity> {
    let assignment: BTreeMap<&AgentKey, usize> = model
        .keys
        .iter()
        .zip(model.assignments.iter().copied())
        .collect();
    let mut rows = Vec::new();
    for record in records {
        let Some(planner) = &record.planner else {
            continue;
        };
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut agent_count = 0;
        for blueprint in &planner.blueprints {
            let key = AgentKey {
                run: run_label.to_string(),
                case_id: record.case_id.clone(),
                agent_name: blueprint.name.clone(),
            };
            match assignment.get(&key) {
                Some(&cluster) => {
                    *counts.entry(cluster).or_insert(0) += 1;
                    agent_count += 1;
                }
                None => {
                    log::warn!(
                        "case {}: agent '{}' absent from cluster model",
                        record.case_id,
                        blueprint.name
                    );
                }
            }
        }
        if agent_count == 0 {
            log::warn!("case {}: no clustered agents; skipping", record.case_id);
            continue;
        }
        rows.push(CaseDiversity {
            case_id: record.case_id.clone(),
            agent_count,
            active_clusters: counts.len(),
            normalized_hhi: normalized_hhi(counts.values()),
            match_rate: record.match_rate,
        });
    }
    rows
}

/// Silhouette across a range of k, for picking a cluster count.
pub fn silhouette_sweep(
    vectors: &[ProfileVector],
    ks: impl IntoIterator<Item = usize>,
    seed: u64,
) -> Vec<(usize, f64)> {
    ks.into_iter()
        .filter_map(|k| {
            cluster_profiles(vectors, k, seed)
                .ok()
                .map(|m| (k, m.silhouette))
        })
        .collect()
}
