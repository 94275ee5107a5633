//! k-means codebooks and discrete units.
//!
//! Fitting uses k-means++ seeding and Lloyd iterations. The assignment
//! step runs over fixed-size chunks of the sample through an
//! [`Executor`]; partial sums are combined in chunk order, so the codebook
//! is bit-identical for any worker count.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{data_err, Result};
use crate::exec::Executor;
use crate::kernels::Frames;
use crate::matrix::FeatureMatrix;

/// Frames per assignment chunk; fixed so reductions do not depend on threads.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the relative inertia improvement drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 300,
            tol: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    centroids: Vec<f64>,
    inertia: f64,
    iterations_run: usize,
    seed: u64,
    trace: Vec<f64>,
}

impl Codebook {
    /// Rebuilds a codebook from stored parts (no iteration trace).
    pub fn from_parts(
        k: usize,
        dim: usize,
        centroids: Vec<f64>,
        inertia: f64,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(data_err!("codebook needs k >= 1 and dim >= 1"));
        }
        if centroids.len() != k * dim {
            return Err(data_err!(
                "codebook has {} values, expected {k}×{dim}",
                centroids.len()
            ));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(data_err!("codebook contains non-finite centroids"));
        }
        if !(inertia.is_finite() && inertia >= 0.0) {
            return Err(data_err!(
                "codebook inertia must be finite and non-negative"
            ));
        }
        Ok(Self {
            k,
            dim,
            centroids,
            inertia,
            iterations_run: 0,
            seed,
            trace: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Inertia after the initial assignment and after every Lloyd update.
    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, self.dim, v)
    }
}

fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        let d = a - b;
        s += d * d;
    }
    s
}

fn nearest(centroids: &[f64], dim: usize, v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(c, v);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

struct ChunkStats {
    dists: Vec<f64>,
    sums: Vec<f64>,
    counts: Vec<usize>,
    inertia: f64,
}

fn assign_all<E: Executor>(
    points: Frames<'_>,
    centroids: &[f64],
    k: usize,
    exec: &E,
) -> (Vec<f64>, Vec<f64>, Vec<usize>, f64) {
    let dim = points.dim();
    let n = points.len();
    let ranges: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n)))
        .collect();
    let parts = exec.map(&ranges, |&(start, end)| {
        let mut st = ChunkStats {
            dists: Vec::with_capacity(end - start),
            sums: vec![0.0; k * dim],
            counts: vec![0; k],
            inertia: 0.0,
        };
        for i in start..end {
            let p = points.row(i);
            let (j, d) = nearest(centroids, dim, p);
            st.dists.push(d);
            st.counts[j] += 1;
            for (s, &v) in st.sums[j * dim..(j + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
            st.inertia += d;
        }
        st
    });
    let mut dists = Vec::with_capacity(n);
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    let mut inertia = 0.0;
    for st in parts {
        dists.extend(st.dists);
        for (s, v) in sums.iter_mut().zip(&st.sums) {
            *s += v;
        }
        for (c, v) in counts.iter_mut().zip(&st.counts) {
            *c += v;
        }
        inertia += st.inertia;
    }
    (dists, sums, counts, inertia)
}

fn kmeans_pp(points: Frames<'_>, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len();
    let dim = points.dim();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = points.row(first).to_vec();
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every point coincides with a centroid
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        let c = points.row(pick);
        centroids.extend_from_slice(c);
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(points.row(i), c);
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

/// Fits a `k`-centroid codebook to the sample (row-major, width `dim`).
pub fn fit_kmeans<E: Executor>(
    sample: Frames<'_>,
    config: KMeansConfig,
    exec: &E,
) -> Result<Codebook> {
    let KMeansConfig {
        k,
        max_iter,
        tol,
        seed,
    } = config;
    let n = sample.len();
    let dim = sample.dim();
    if k == 0 {
        return Err(data_err!("k must be at least 1"));
    }
    if n < k {
        return Err(data_err!("sample < k ({n} frames for k = {k})"));
    }
    if sample.data().iter().any(|v| !v.is_finite()) {
        return Err(data_err!("k-means sample contains non-finite values"));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(data_err!("tolerance must be finite and non-negative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(sample, k, &mut rng);
    let (mut dists, mut sums, mut counts, mut inertia) = assign_all(sample, &centroids, k, exec);
    let mut trace = vec![inertia];
    let mut iterations_run = 0;

    for it in 1..=max_iter {
        let mut taken = vec![false; n];
        for j in 0..k {
            let c = &mut centroids[j * dim..(j + 1) * dim];
            if counts[j] > 0 {
                let cnt = counts[j] as f64;
                for (cv, &s) in c.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                    *cv = s / cnt;
                }
            } else {
                // Re-seed on the point farthest from its current centroid.
                let mut far = None;
                for (i, &d) in dists.iter().enumerate() {
                    if taken[i] {
                        continue;
                    }
                    if far.is_none_or(|(_, fd)| d > fd) {
                        far = Some((i, d));
                    }
                }
                if let Some((i, _)) = far {
                    taken[i] = true;
                    c.copy_from_slice(sample.row(i));
                }
            }
        }
        let prev = inertia;
        (dists, sums, counts, inertia) = assign_all(sample, &centroids, k, exec);
        trace.push(inertia);
        iterations_run = it;
        if prev - inertia <= tol * prev {
            break;
        }
    }
    Ok(Codebook {
        k,
        dim,
        centroids,
        inertia,
        iterations_run,
        seed,
        trace,
    })
}

/// Discrete units of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSequence {
    pub utterance_id: String,
    pub units: Vec<u32>,
}

/// Nearest-centroid unit for every frame.
pub fn assign_units(m: &FeatureMatrix, cb: &Codebook) -> Result<UnitSequence> {
    if m.dim() != cb.dim() {
        return Err(data_err!(
            "{}: feature dim {} does not match codebook dim {}",
            m.utterance_id(),
            m.dim(),
            cb.dim()
        ));
    }
    let mut row = vec![0.0; m.dim()];
    let units = (0..m.frames())
        .map(|i| {
            for (r, &v) in row.iter_mut().zip(m.row(i)) {
                *r = v as f64;
            }
            cb.nearest(&row).0 as u32
        })
        .collect();
    Ok(UnitSequence {
        utterance_id: m.utterance_id().into(),
        units,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum UnitEncoding {
    /// k-dimensional indicator vector per frame.
    #[default]
    OneHot,
    /// The unit's centroid vector.
    Centroid,
}

/// Turns units back into frames for ABX on discrete units.
pub fn units_to_features(
    units: &UnitSequence,
    cb: &Codebook,
    encoding: UnitEncoding,
    frame_rate: f64,
) -> Result<FeatureMatrix> {
    if let Some(&u) = units.units.iter().find(|&&u| u as usize >= cb.k()) {
        return Err(data_err!(
            "{}: unit {u} out of range for k = {}",
            units.utterance_id,
            cb.k()
        ));
    }
    let (dim, data): (usize, Vec<f32>) = match encoding {
        UnitEncoding::OneHot => {
            let mut data = vec![0.0f32; units.units.len() * cb.k()];
            for (i, &u) in units.units.iter().enumerate() {
                data[i * cb.k() + u as usize] = 1.0;
            }
            (cb.k(), data)
        }
        UnitEncoding::Centroid => (
            cb.dim(),
            units
                .units
                .iter()
                .flat_map(|&u| cb.centroid(u as usize).iter().map(|&v| v as f32))
                .collect(),
        ),
    };
    FeatureMatrix::new(units.utterance_id.clone(), dim, frame_rate, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use rand_distr::{Distribution, StandardNormal};

    fn fit(points: &[f64], dim: usize, k: usize, seed: u64) -> Codebook {
        fit_kmeans(
            Frames::new(points, dim),
            KMeansConfig::new(k, seed),
            &Sequential,
        )
        .unwrap()
    }

    #[test]
    fn single_cluster_is_global_mean() {
        let pts = [1.0, 2.0, 3.0, 6.0, -1.0, 1.0, 5.0, 0.0];
        let cb = fit(&pts, 2, 1, 0);
        assert!((cb.centroid(0)[0] - 2.0).abs() < 1e-12);
        assert!((cb.centroid(0)[1] - 2.25).abs() < 1e-12);
        // sum of squared deviations: x: 1+1+9+9=20 ; y: 0.0625+14.0625+1.5625+5.0625=20.75
        assert!((cb.inertia() - 40.75).abs() < 1e-12);
    }

    #[test]
    fn k_equal_to_sample_size_has_zero_inertia() {
        let pts = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 3.0, 3.0];
        let cb = fit(&pts, 2, 4, 5);
        assert_eq!(cb.inertia(), 0.0);
    }

    #[test]
    fn rejects_small_sample_and_nan() {
        let pts = [0.0, 1.0];
        let err =
            fit_kmeans(Frames::new(&pts, 1), KMeansConfig::new(3, 0), &Sequential).unwrap_err();
        assert!(alloc::format!("{err}").contains("sample < k"));
        let bad = [0.0, f64::NAN];
        assert!(fit_kmeans(Frames::new(&bad, 1), KMeansConfig::new(1, 0), &Sequential).is_err());
    }

    #[test]
    fn inertia_trace_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<f64> = (0..600).map(|_| StandardNormal.sample(&mut rng)).collect();
        for k in [2, 5, 17] {
            let cb = fit(&pts, 3, k, k as u64);
            for w in cb.trace().windows(2) {
                assert!(w[1] <= w[0], "{:?}", cb.trace());
            }
            assert_eq!(*cb.trace().last().unwrap(), cb.inertia());
        }
    }

    #[test]
    fn assignment_tie_goes_to_lowest_index() {
        let cb =
            Codebook::from_parts(6, 1, vec![10.0, 11.0, -1.0, 12.0, 13.0, 1.0], 0.0, 0).unwrap();
        let m = FeatureMatrix::new("u", 1, 100.0, vec![0.0, -1.0, 13.0]).unwrap();
        assert_eq!(assign_units(&m, &cb).unwrap().units, vec![2, 2, 4]);
        let wrong = FeatureMatrix::new("u", 2, 100.0, vec![0.0, 1.0]).unwrap();
        assert!(assign_units(&wrong, &cb).is_err());
    }

    #[test]
    fn one_hot_and_centroid_encodings() {
        let cb = Codebook::from_parts(2, 2, vec![1.0, 0.0, 0.0, 1.0], 0.0, 0).unwrap();
        let u = UnitSequence {
            utterance_id: "u".into(),
            units: vec![0, 0, 1],
        };
        let oh = units_to_features(&u, &cb, UnitEncoding::OneHot, 50.0).unwrap();
        assert_eq!(oh.data(), &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(oh.frame_rate(), 50.0);
        let ce = units_to_features(&u, &cb, UnitEncoding::Centroid, 50.0).unwrap();
        assert_eq!(assign_units(&ce, &cb).unwrap(), u);
        let bad = UnitSequence {
            utterance_id: "u".into(),
            units: vec![2],
        };
        assert!(units_to_features(&bad, &cb, UnitEncoding::OneHot, 50.0).is_err());
    }
}
