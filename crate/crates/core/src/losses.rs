//! Training objectives as pure functions over embedding matrices.
//!
//! * masked-prediction cross-entropy over unit pseudo-labels,
//! * symmetric in-batch contrastive alignment between audio and image
//!   embeddings (cosine similarities, temperature-scaled softmax over all
//!   other pairs in the batch as negatives),
//! * their convex combination `(1 − α)·L_a + α·L_av`.
//!
//! Analytic gradients are provided for both losses and can be checked
//! against central finite differences with [`check_gradients`].

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{data_err, Result};
use crate::kernels::ZERO_NORM;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature: 0.07,
        }
    }
}

impl LossConfig {
    pub fn new(alpha: f64, temperature: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(data_err!("alpha must lie in [0, 1], got {alpha}"));
        }
        check_temperature(temperature)?;
        Ok(Self { alpha, temperature })
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(data_err!("temperature must be positive, got {t}"));
    }
    Ok(())
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in values {
        s += libm::exp(v - max);
    }
    max + libm::log(s)
}

fn check_ce_inputs(logits: &[f64], k: usize, labels: &[usize], mask: &[bool]) -> Result<usize> {
    if k == 0 || !logits.len().is_multiple_of(k) {
        return Err(data_err!("logits do not form rows of width {k}"));
    }
    let m = logits.len() / k;
    if labels.len() != m || mask.len() != m {
        return Err(data_err!("expected {m} labels and mask entries"));
    }
    if !mask.iter().any(|&b| b) {
        return Err(data_err!("empty mask: no positions to score"));
    }
    for (i, (&l, &on)) in labels.iter().zip(mask).enumerate() {
        if on && l >= k {
            return Err(data_err!(
                "label {l} at position {i} out of range for {k} classes"
            ));
        }
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(data_err!("non-finite logits"));
    }
    Ok(m)
}

/// Mean over masked positions of `−log softmax(logits)[label]`.
///
/// `logits` is `M × k` row-major.
pub fn masked_ce(logits: &[f64], k: usize, labels: &[usize], mask: &[bool]) -> Result<f64> {
    check_ce_inputs(logits, k, labels, mask)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for ((row, &label), &on) in logits.chunks_exact(k).zip(labels).zip(mask) {
        if !on {
            continue;
        }
        total += log_sum_exp(row.iter().copied()) - row[label];
        count += 1;
    }
    Ok(total / count as f64)
}

/// Gradient of [`masked_ce`] with respect to the logits.
pub fn grad_masked_ce(
    logits: &[f64],
    k: usize,
    labels: &[usize],
    mask: &[bool],
) -> Result<Vec<f64>> {
    check_ce_inputs(logits, k, labels, mask)?;
    let count = mask.iter().filter(|&&b| b).count() as f64;
    let mut grad = vec![0.0; logits.len()];
    for (((row, g), &label), &on) in logits
        .chunks_exact(k)
        .zip(grad.chunks_exact_mut(k))
        .zip(labels)
        .zip(mask)
    {
        if !on {
            continue;
        }
        let lse = log_sum_exp(row.iter().copied());
        for (gj, &z) in g.iter_mut().zip(row) {
            *gj = libm::exp(z - lse) / count;
        }
        g[label] -= 1.0 / count;
    }
    Ok(grad)
}

/// Paired audio/image embeddings; row `i` of each side forms a positive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPair {
    n: usize,
    d: usize,
    audio: Vec<f64>,
    image: Vec<f64>,
}

impl BatchPair {
    pub fn new(n: usize, d: usize, audio: Vec<f64>, image: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(data_err!("batch needs N >= 1 and d >= 1"));
        }
        if audio.len() != n * d || image.len() != n * d {
            return Err(data_err!("audio and image embeddings must both be {n}×{d}"));
        }
        for (side, m) in [("audio", &audio), ("image", &image)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(data_err!("{side} embeddings contain non-finite values"));
            }
            for (i, row) in m.chunks_exact(d).enumerate() {
                if norm(row) < ZERO_NORM {
                    return Err(data_err!("{side} row {i} has zero norm"));
                }
            }
        }
        Ok(Self { n, d, audio, image })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn audio(&self) -> &[f64] {
        &self.audio
    }

    pub fn image(&self) -> &[f64] {
        &self.image
    }

    /// `S[i][j] = cos(audio_i, image_j)`, row-major `N × N`.
    pub fn similarities(&self) -> Vec<f64> {
        let a = normalize_rows(&self.audio, self.d);
        let b = normalize_rows(&self.image, self.d);
        let mut s = Vec::with_capacity(self.n * self.n);
        for ai in a.chunks_exact(self.d) {
            for bj in b.chunks_exact(self.d) {
                s.push(dot(ai, bj));
            }
        }
        s
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    libm::sqrt(dot(u, u))
}

fn normalize_rows(m: &[f64], d: usize) -> Vec<f64> {
    let mut out = m.to_vec();
    for row in out.chunks_exact_mut(d) {
        let n = norm(row);
        for v in row {
            *v /= n;
        }
    }
    out
}

/// Symmetric InfoNCE-style alignment loss over in-batch negatives.
pub fn contrastive_av(batch: &BatchPair, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    let n = batch.n;
    let s = batch.similarities();
    let scaled = |i: usize, j: usize| s[i * n + j] / temperature;
    let mut total = 0.0;
    for i in 0..n {
        let row = log_sum_exp((0..n).map(|j| scaled(i, j)));
        let col = log_sum_exp((0..n).map(|j| scaled(j, i)));
        total += (row - scaled(i, i)) + (col - scaled(i, i));
    }
    Ok(total / (2 * n) as f64)
}

/// Gradients of [`contrastive_av`] with respect to the raw (unnormalised)
/// audio and image embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub audio: Vec<f64>,
    pub image: Vec<f64>,
}

pub fn grad_contrastive_av(batch: &BatchPair, temperature: f64) -> Result<PairGradient> {
    check_temperature(temperature)?;
    let (n, d) = (batch.n, batch.d);
    let a_hat = normalize_rows(&batch.audio, d);
    let b_hat = normalize_rows(&batch.image, d);
    let s = batch.similarities();
    let z: Vec<f64> = s.iter().map(|v| v / temperature).collect();

    // dL/dS = (P + Q − 2I) / (2Nτ), P row-softmax, Q column-softmax.
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        let lse = log_sum_exp((0..n).map(|j| z[i * n + j]));
        for j in 0..n {
            g[i * n + j] += libm::exp(z[i * n + j] - lse);
        }
    }
    for j in 0..n {
        let lse = log_sum_exp((0..n).map(|i| z[i * n + j]));
        for i in 0..n {
            g[i * n + j] += libm::exp(z[i * n + j] - lse);
        }
    }
    let scale = 1.0 / (2.0 * n as f64 * temperature);
    for i in 0..n {
        g[i * n + i] -= 2.0;
    }
    for v in &mut g {
        *v *= scale;
    }

    let mut ga = vec![0.0; n * d];
    let mut gb = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..n {
            let gij = g[i * n + j];
            for t in 0..d {
                ga[i * d + t] += gij * b_hat[j * d + t];
                gb[j * d + t] += gij * a_hat[i * d + t];
            }
        }
    }
    // Jacobian of u / |u|: (I − û ûᵀ) / |u|
    let project = |grad: &mut [f64], raw: &[f64], unit: &[f64]| {
        for ((g, r), u) in grad
            .chunks_exact_mut(d)
            .zip(raw.chunks_exact(d))
            .zip(unit.chunks_exact(d))
        {
            let len = norm(r);
            let along = dot(g, u);
            for (gv, &uv) in g.iter_mut().zip(u) {
                *gv = (*gv - along * uv) / len;
            }
        }
    };
    project(&mut ga, &batch.audio, &a_hat);
    project(&mut gb, &batch.image, &b_hat);
    Ok(PairGradient {
        audio: ga,
        image: gb,
    })
}

/// `(1 − α)·l_a + α·l_av`.
pub fn combined_loss(l_a: f64, l_av: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * l_a + alpha * l_av
}

/// Recall@k in both retrieval directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallAtK {
    pub k: usize,
    pub audio_to_image: f64,
    pub image_to_audio: f64,
}

/// Rank of the true item among candidates: strictly better scores rank
/// ahead, and equal scores at a lower index rank ahead.
fn rank_of(scores: impl Iterator<Item = f64>, target: usize, target_score: f64) -> usize {
    scores
        .enumerate()
        .filter(|&(j, v)| v > target_score || (v == target_score && j < target))
        .count()
}

pub fn retrieval_recall(batch: &BatchPair, ks: &[usize]) -> Result<Vec<RecallAtK>> {
    let n = batch.n;
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(data_err!("recall@{k} is undefined for a batch of {n}"));
    }
    let s = batch.similarities();
    let a2i: Vec<usize> = (0..n)
        .map(|i| rank_of((0..n).map(|j| s[i * n + j]), i, s[i * n + i]))
        .collect();
    let i2a: Vec<usize> = (0..n)
        .map(|j| rank_of((0..n).map(|i| s[i * n + j]), j, s[j * n + j]))
        .collect();
    let frac =
        |ranks: &[usize], k: usize| ranks.iter().filter(|&&r| r < k).count() as f64 / n as f64;
    Ok(ks
        .iter()
        .map(|&k| RecallAtK {
            k,
            audio_to_image: frac(&a2i, k),
            image_to_audio: frac(&i2a, k),
        })
        .collect())
}

/// Worst disagreement between analytic and finite-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    pub max_relative_error: f64,
    pub contrastive_max_relative_error: f64,
    pub cross_entropy_max_relative_error: f64,
}

/// Finite-difference step used by [`check_gradients`].
pub const FD_STEP: f64 = 1e-4;

/// Coordinate error scaled by the larger infinity norm of the two
/// gradients, so near-zero coordinates do not blow up the ratio.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    if scale == 0.0 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max(libm::fabs(a - b) / scale))
}

fn central_difference(x: &mut [f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(x);
            x[i] = orig - FD_STEP;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Random batches (N ≤ 8, d ≤ 16, τ cycling through 0.05, 0.07 and 1.0)
/// plus random masked cross-entropy problems, compared against central
/// differences.
pub fn check_gradients(trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let temps = [0.05, 0.07, 1.0];
    let mut worst_av = 0.0f64;
    let mut worst_ce = 0.0f64;
    for t in 0..trials {
        let n = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=16);
        let tau = temps[t % temps.len()];
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
        };
        let mut audio = draw(n * d);
        let mut image = draw(n * d);
        let batch = BatchPair::new(n, d, audio.clone(), image.clone())?;
        let g = grad_contrastive_av(&batch, tau)?;
        let loss = |a: &[f64], i: &[f64]| {
            BatchPair::new(n, d, a.to_vec(), i.to_vec())
                .and_then(|b| contrastive_av(&b, tau))
                .unwrap_or(f64::NAN)
        };
        let image_fixed = image.clone();
        let fa = central_difference(&mut audio, |a| loss(a, &image_fixed));
        let audio_fixed = audio.clone();
        let fi = central_difference(&mut image, |i| loss(&audio_fixed, i));
        worst_av = worst_av
            .max(relative_error(&g.audio, &fa))
            .max(relative_error(&g.image, &fi));

        let m = rng.gen_range(1..=6);
        let k = rng.gen_range(2..=10);
        let mut logits: Vec<f64> = (0..m * k)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                3.0 * v
            })
            .collect();
        let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..k)).collect();
        let mut mask: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.6)).collect();
        mask[0] = true;
        let gce = grad_masked_ce(&logits, k, &labels, &mask)?;
        let fce = central_difference(&mut logits, |z| {
            masked_ce(z, k, &labels, &mask).unwrap_or(f64::NAN)
        });
        worst_ce = worst_ce.max(relative_error(&gce, &fce));
    }
    let max = worst_av.max(worst_ce);
    if max.is_nan() {
        return Err(data_err!("gradient check produced NaN"));
    }
    Ok(GradCheckReport {
        trials,
        max_relative_error: max,
        contrastive_max_relative_error: worst_av,
        cross_entropy_max_relative_error: worst_ce,
    })
}
