//! Linear-regression federated-learning mathematics: dataset generation,
//! local gradients, server-side aggregation, and the population error metric.
//!
//! Every user k owns a feature vector x_k drawn around a per-user center v_k
//! and a noiseless label y_k = x_k'w*, where w* is the ground truth. The
//! local loss is 0.5 |x_k'w - y_k|^2, so the local update is its gradient
//! (x_k'w - y_k) x_k.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::ConfigError;
use crate::rng::SimRng;

/// Training weights together with the ground truth they chase.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    /// Current training weights w(t). Starts at the zero vector.
    pub w: Vec<f64>,
    /// Ground-truth weights the labels were generated with.
    pub true_w: Vec<f64>,
}

impl GlobalModel {
    pub fn dim(&self) -> usize {
        self.true_w.len()
    }
}

/// One labelled data point owned by a user.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    /// Index of the owning user.
    pub owner: usize,
}

/// A computed local model update (gradient) with its cached Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub g: Vec<f64>,
    pub norm: f64,
    pub owner: usize,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Euclidean distance between two vectors of equal length.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn standard_normal_vec(dim: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draw the ground-truth weights w* ~ N(0, I).
pub fn draw_true_weights(dim: usize, rng: &mut SimRng) -> Vec<f64> {
    standard_normal_vec(dim, rng)
}

/// Draw the per-user feature centers v_k ~ N(0, beta I). `beta` is the
/// variance of each coordinate; beta = 0 collapses every center to the
/// origin and yields an IID population.
pub fn draw_centers(users: usize, dim: usize, beta: f64, rng: &mut SimRng) -> Vec<Vec<f64>> {
    let sd = beta.sqrt();
    (0..users)
        .map(|_| {
            (0..dim)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Draw one sample x ~ N(center, I) and label it y = x'true_w exactly.
pub fn draw_sample(center: &[f64], true_w: &[f64], owner: usize, rng: &mut SimRng) -> Sample {
    debug_assert_eq!(center.len(), true_w.len());
    let x: Vec<f64> = center
        .iter()
        .map(|c| c + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y = dot(&x, true_w);
    Sample { x, y, owner }
}

/// Generate the population: ground truth w* ~ N(0, I), one sample per user
/// around its center, and a fresh model with w(0) = 0.
///
/// Deterministic given the stream: true_w first, then per user the center
/// followed by the feature vector.
pub fn generate_population(
    users: usize,
    dim: usize,
    beta: f64,
    rng: &mut SimRng,
) -> Result<(Vec<Sample>, GlobalModel), ConfigError> {
    if users == 0 {
        return Err(ConfigError::new("K", "need at least one user"));
    }
    if dim == 0 {
        return Err(ConfigError::new("L", "model dimension must be at least 1"));
    }
    if beta < 0.0 || !beta.is_finite() {
        return Err(ConfigError::new("beta", "must be finite and nonnegative"));
    }
    let true_w = draw_true_weights(dim, rng);
    let samples = draw_centers(users, dim, beta, rng)
        .iter()
        .enumerate()
        .map(|(k, center)| draw_sample(center, &true_w, k, rng))
        .collect();
    let model = GlobalModel {
        w: vec![0.0; dim],
        true_w,
    };
    Ok((samples, model))
}

/// Gradient of 0.5 |x'w - y|^2 at w: (x'w - y) x, with its norm cached.
pub fn local_gradient(w: &[f64], sample: &Sample) -> LocalUpdate {
    assert_eq!(
        w.len(),
        sample.x.len(),
        "model/sample dimension mismatch ({} vs {})",
        w.len(),
        sample.x.len()
    );
    let residual = dot(&sample.x, w) - sample.y;
    let g: Vec<f64> = sample.x.iter().map(|xi| residual * xi).collect();
    let norm = norm(&g);
    LocalUpdate {
        g,
        norm,
        owner: sample.owner,
    }
}

/// Server update: w' = w - mu * sum_k d_k g_k over the received updates.
/// `weights` holds d_k indexed by owner; users whose updates were not
/// received contribute nothing. An empty update list returns w unchanged.
pub fn aggregate(w: &[f64], updates: &[LocalUpdate], mu: f64, weights: &[f64]) -> Vec<f64> {
    assert!(mu > 0.0, "learning rate must be positive");
    let mut step = vec![0.0; w.len()];
    for u in updates {
        assert_eq!(u.g.len(), w.len(), "update dimension mismatch");
        let d = weights[u.owner];
        for (s, g) in step.iter_mut().zip(&u.g) {
            *s += d * g;
        }
    }
    w.iter().zip(&step).map(|(wi, si)| wi - mu * si).collect()
}

/// Population error: mean over devices of the Euclidean distance between the
/// model copy a device holds and the ground truth.
pub fn error_metric(per_device_models: &[Vec<f64>], true_w: &[f64]) -> f64 {
    assert!(!per_device_models.is_empty(), "need at least one device");
    let sum: f64 = per_device_models.iter().map(|m| distance(m, true_w)).sum();
    sum / per_device_models.len() as f64
}
