use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BenchError;
use crate::embed::EmbeddingVector;

pub const MAX_ITERATIONS: usize = 100;

/// Output of [`cluster_topics`].
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index per input vector.
    pub assignments: Vec<usize>,
    pub centroids: Vec<EmbeddingVector>,
    /// Mean cosine to the assigned centroid, recorded once per iteration.
    pub objective_history: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn iterations(&self) -> usize {
        self.objective_history.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Spherical k-means with k-means++ seeding.
///
/// Points are assumed unit-norm, so cosine is a dot product. Assignment ties
/// go to the lower cluster index. A cluster left empty takes the point
/// farthest from its own centroid among clusters that can spare one.
pub fn cluster_topics(vectors: &[EmbeddingVector], k: usize, seed: u64) -> Result<Clustering, BenchError> {
    if k == 0 {
        return Err(BenchError::BadParam("k must be at least 1".into()));
    }
    if vectors.len() < k {
        return Err(BenchError::TooFewPoints {
            points: vectors.len(),
            k,
        });
    }
    let dim = vectors[0].dim();
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(BenchError::DimMismatch {
            expected: dim,
            got: v.dim(),
        });
    }
    let points: Vec<&[f64]> = vectors.iter().map(EmbeddingVector::values).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = kmeans_pp(&points, k, &mut rng)
        .into_iter()
        .map(|i| points[i].to_vec())
        .collect();

    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        fill_empty(&points, &mut centroids, &mut next, k);
        centroids = recompute(&points, &next, k, dim);
        let objective = points
            .iter()
            .zip(&next)
            .map(|(p, &c)| dot(p, &centroids[c]))
            .sum::<f64>()
            / points.len() as f64;
        history.push(objective);
        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }
    }

    Ok(Clustering {
        assignments,
        centroids: centroids.into_iter().map(EmbeddingVector::normalized).collect(),
        objective_history: history,
    })
}

/// Index and similarity of the most similar centroid, lowest index on ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let s = dot(p, c);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

fn kmeans_pp(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    // Cosine distance to the closest chosen center.
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| (1.0 - dot(p, points[chosen[0]])).max(0.0))
        .collect();
    while chosen.len() < k {
        let weights: Vec<f64> = dist.iter().map(|d| d * d).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    pick = Some(i);
                    if target < *w {
                        break;
                    }
                    target -= w;
                }
            }
            pick
        } else {
            None
        };
        // Every remaining point coincides with a center: take the first unused.
        let pick = pick
            .filter(|i| !chosen.contains(i))
            .or_else(|| (0..points.len()).find(|i| !chosen.contains(i)))
            .expect("at least k points");
        chosen.push(pick);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((1.0 - dot(p, points[pick])).max(0.0));
        }
    }
    chosen
}

fn fill_empty(points: &[&[f64]], centroids: &mut [Vec<f64>], assignments: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..points.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .min_by(|&a, &b| {
                let sa = dot(points[a], &centroids[assignments[a]]);
                let sb = dot(points[b], &centroids[assignments[b]]);
                sa.total_cmp(&sb).then(a.cmp(&b))
            });
        if let Some(i) = donor {
            sizes[assignments[i]] -= 1;
            sizes[empty] = 1;
            assignments[i] = empty;
            centroids[empty] = points[i].to_vec();
        }
    }
}

fn recompute(points: &[&[f64]], assignments: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    for (p, &a) in points.iter().zip(assignments) {
        for (s, x) in sums[a].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    sums.into_iter()
        .map(|s| EmbeddingVector::normalized(s).values().to_vec())
        .collect()
}
