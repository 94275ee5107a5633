//! Frame and sequence distances.
//!
//! All accumulation happens in `f64`. [`distance_matrix`] reuses the exact
//! arithmetic of [`frame_distance`] (same summation order, same final
//! formula) so the batched path is bit-identical to the scalar definition.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

/// Norm below which a vector is treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

static ZERO_VECTOR_WARNED: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FrameMetric {
    /// `1 - cos(u, v)`, in `[0, 2]`.
    #[default]
    Cosine,
    /// `arccos(cos(u, v)) / π`, in `[0, 1]`.
    Angular,
}

impl FrameMetric {
    pub fn name(self) -> &'static str {
        match self {
            FrameMetric::Cosine => "cosine",
            FrameMetric::Angular => "angular",
        }
    }

    fn degenerate(self) -> f64 {
        match self {
            FrameMetric::Cosine => 1.0,
            FrameMetric::Angular => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SequenceMode {
    #[default]
    Dtw,
    MeanPool,
}

impl SequenceMode {
    pub fn name(self) -> &'static str {
        match self {
            SequenceMode::Dtw => "dtw",
            SequenceMode::MeanPool => "mean_pool",
        }
    }
}

/// Frame metric plus how sequences are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DistanceSpec {
    pub frame_metric: FrameMetric,
    pub sequence_mode: SequenceMode,
}

impl DistanceSpec {
    pub fn new(frame_metric: FrameMetric, sequence_mode: SequenceMode) -> Self {
        Self {
            frame_metric,
            sequence_mode,
        }
    }

    /// Distance between two sequences under this spec.
    pub fn sequence_distance(&self, x: Frames<'_>, y: Frames<'_>) -> f64 {
        match self.sequence_mode {
            SequenceMode::Dtw => dtw_distance(x, y, self.frame_metric),
            SequenceMode::MeanPool => pooled_distance(x, y, self.frame_metric),
        }
    }
}

/// Borrowed row-major `frames × dim` view.
#[derive(Debug, Clone, Copy)]
pub struct Frames<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Frames<'a> {
    /// Panics if `data` is not a whole number of `dim`-wide rows.
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0, "dim must be positive");
        assert_eq!(data.len() % dim, 0, "data length is not a multiple of dim");
        Self { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &'a [f64] {
        self.data
    }
}

fn squared_norm(u: &[f64]) -> f64 {
    let mut s = 0.0;
    for &a in u {
        s += a * a;
    }
    s
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        s += a * b;
    }
    s
}

/// `sq_u`, `sq_v` are squared norms. Dividing by `sqrt(sq_u * sq_v)`
/// (rather than the product of the two roots) gives a ratio of exactly 1
/// for identical vectors.
fn from_parts(dot: f64, sq_u: f64, sq_v: f64, metric: FrameMetric) -> f64 {
    if libm::sqrt(sq_u) < ZERO_NORM || libm::sqrt(sq_v) < ZERO_NORM {
        if !ZERO_VECTOR_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!(
                "zero-norm frame encountered; using fallback distance {}",
                metric.degenerate()
            );
        }
        return metric.degenerate();
    }
    let ratio = (dot / libm::sqrt(sq_u * sq_v)).clamp(-1.0, 1.0);
    match metric {
        FrameMetric::Cosine => 1.0 - ratio,
        FrameMetric::Angular => libm::acos(ratio) / core::f64::consts::PI,
    }
}

/// Cosine or angular distance between two frames.
///
/// Panics on a dimension mismatch.
pub fn frame_distance(u: &[f64], v: &[f64], metric: FrameMetric) -> f64 {
    assert_eq!(u.len(), v.len(), "frame dimension mismatch");
    from_parts(dot(u, v), squared_norm(u), squared_norm(v), metric)
}

/// Dense `rows × cols` matrix of pairwise frame distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transpose(&self) -> DistanceMatrix {
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        DistanceMatrix {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }
}

/// All frame distances between `x` and `y`.
///
/// Norms are computed once per row; entries match [`frame_distance`]
/// exactly.
pub fn distance_matrix(x: Frames<'_>, y: Frames<'_>, metric: FrameMetric) -> DistanceMatrix {
    assert_eq!(x.dim(), y.dim(), "frame dimension mismatch");
    let nx: Vec<f64> = x.rows().map(squared_norm).collect();
    let ny: Vec<f64> = y.rows().map(squared_norm).collect();
    let mut values = Vec::with_capacity(x.len() * y.len());
    for (xi, &nxi) in x.rows().zip(&nx) {
        for (yj, &nyj) in y.rows().zip(&ny) {
            values.push(from_parts(dot(xi, yj), nxi, nyj, metric));
        }
    }
    DistanceMatrix {
        rows: x.len(),
        cols: y.len(),
        values,
    }
}

/// Length-normalised DTW cost over a precomputed cost matrix.
///
/// Steps are `(1,1)`, `(1,0)` and `(0,1)`; on equal accumulated cost the
/// predecessor is chosen in that order, which fixes the path length and
/// therefore the normalised value.
pub fn dtw_from_matrix(cost: &DistanceMatrix) -> f64 {
    let (n, m) = (cost.rows(), cost.cols());
    assert!(n > 0 && m > 0, "DTW needs non-empty sequences");
    // Two rolling rows of (accumulated cost, path length).
    let mut prev: Vec<(f64, u32)> = vec![(0.0, 0); m];
    let mut cur: Vec<(f64, u32)> = vec![(0.0, 0); m];
    for i in 0..n {
        for j in 0..m {
            let c = cost.get(i, j);
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else if i == 0 {
                cur[j - 1]
            } else if j == 0 {
                prev[j]
            } else {
                let diag = prev[j - 1];
                let up = prev[j]; // step (1, 0)
                let left = cur[j - 1]; // step (0, 1)
                let mut best = diag;
                if up.0 < best.0 {
                    best = up;
                }
                if left.0 < best.0 {
                    best = left;
                }
                best
            };
            cur[j] = if i == 0 && j == 0 {
                (c, 1)
            } else {
                (c + best.0, best.1 + 1)
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    let (total, len) = prev[m - 1];
    total / len as f64
}

/// DTW distance between two frame sequences, normalised by path length.
pub fn dtw_distance(x: Frames<'_>, y: Frames<'_>, metric: FrameMetric) -> f64 {
    assert!(
        !x.is_empty() && !y.is_empty(),
        "DTW needs non-empty sequences"
    );
    dtw_from_matrix(&distance_matrix(x, y, metric))
}

/// Per-dimension arithmetic mean of the frames.
pub fn mean_pool(x: Frames<'_>) -> Vec<f64> {
    assert!(!x.is_empty(), "cannot mean-pool an empty sequence");
    let mut acc = vec![0.0; x.dim()];
    for row in x.rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = x.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    acc
}

pub fn pooled_distance(x: Frames<'_>, y: Frames<'_>, metric: FrameMetric) -> f64 {
    frame_distance(&mean_pool(x), &mean_pool(y), metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frames(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
        (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Exhaustive search over monotone paths. Ties on total cost are
    /// resolved like the DP: prefer the path whose backward step sequence
    /// is lexicographically smallest with diagonal < up < left.
    fn dtw_brute(cost: &DistanceMatrix) -> f64 {
        fn walk(
            cost: &DistanceMatrix,
            i: usize,
            j: usize,
            acc: f64,
            path: &mut Vec<u8>,
            best: &mut Option<(f64, Vec<u8>)>,
        ) {
            let acc = acc + cost.get(i, j);
            if i == cost.rows() - 1 && j == cost.cols() - 1 {
                let mut back = path.clone();
                back.reverse();
                let better = match best {
                    None => true,
                    Some((b, bp)) => acc < *b || (acc == *b && back < *bp),
                };
                if better {
                    *best = Some((acc, back));
                }
                return;
            }
            if i + 1 < cost.rows() && j + 1 < cost.cols() {
                path.push(0);
                walk(cost, i + 1, j + 1, acc, path, best);
                path.pop();
            }
            if i + 1 < cost.rows() {
                path.push(1);
                walk(cost, i + 1, j, acc, path, best);
                path.pop();
            }
            if j + 1 < cost.cols() {
                path.push(2);
                walk(cost, i, j + 1, acc, path, best);
                path.pop();
            }
        }
        let mut best = None;
        walk(cost, 0, 0, 0.0, &mut Vec::new(), &mut best);
        let (total, steps) = best.unwrap();
        total / (steps.len() + 1) as f64
    }

    #[test]
    fn cosine_and_angular_reference_values() {
        let v = [0.3, -1.2, 4.0];
        let neg: Vec<f64> = v.iter().map(|a| -a).collect();
        assert!(frame_distance(&v, &v, FrameMetric::Cosine).abs() < 1e-15);
        assert!((frame_distance(&v, &neg, FrameMetric::Cosine) - 2.0).abs() < 1e-15);
        assert_eq!(
            frame_distance(&[1.0, 0.0], &[0.0, 1.0], FrameMetric::Cosine),
            1.0
        );
        assert_eq!(
            frame_distance(&[1.0, 0.0], &[0.0, 1.0], FrameMetric::Angular),
            0.5
        );
        assert_eq!(
            frame_distance(&[1.0, 0.0], &[-1.0, 0.0], FrameMetric::Angular),
            1.0
        );
    }

    #[test]
    fn zero_vector_fallback() {
        assert_eq!(
            frame_distance(&[0.0, 0.0], &[1.0, 2.0], FrameMetric::Cosine),
            1.0
        );
        assert_eq!(
            frame_distance(&[0.0, 0.0], &[0.0, 0.0], FrameMetric::Angular),
            0.5
        );
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn dim_mismatch_panics() {
        frame_distance(&[1.0], &[1.0, 2.0], FrameMetric::Cosine);
    }

    #[test]
    fn matrix_matches_scalar_loop_and_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let dim = rng.gen_range(1..9);
            let x = random_frames(&mut rng, 2, dim);
            let y = random_frames(&mut rng, 3, dim);
            for metric in [FrameMetric::Cosine, FrameMetric::Angular] {
                let (fx, fy) = (Frames::new(&x, dim), Frames::new(&y, dim));
                let m = distance_matrix(fx, fy, metric);
                assert_eq!((m.rows(), m.cols()), (2, 3));
                for i in 0..2 {
                    for j in 0..3 {
                        let s = frame_distance(fx.row(i), fy.row(j), metric);
                        assert!((m.get(i, j) - s).abs() <= 1e-12);
                        assert_eq!(m.get(i, j).to_bits(), s.to_bits());
                    }
                }
                assert_eq!(distance_matrix(fy, fx, metric), m.transpose());
            }
        }
        let v = [0.5, 0.25];
        let single = distance_matrix(Frames::new(&v, 2), Frames::new(&v, 2), FrameMetric::Cosine);
        assert_eq!(single.values(), &[0.0]);
    }

    #[test]
    fn dtw_single_frame_against_repeated_frame() {
        // d(a, b) = 0.3 under cosine: cos = 0.7
        let a = [1.0, 0.0];
        let b = [0.7, libm::sqrt(1.0 - 0.49)];
        let y = [b, b].concat();
        let d = dtw_distance(Frames::new(&a, 2), Frames::new(&y, 2), FrameMetric::Cosine);
        assert!((d - 0.3).abs() < 1e-12);
        let cost = distance_matrix(Frames::new(&a, 2), Frames::new(&y, 2), FrameMetric::Cosine);
        assert_eq!(dtw_brute(&cost), d);
    }

    #[test]
    fn dtw_identity_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..8 {
            let x = random_frames(&mut rng, n, 4);
            let f = Frames::new(&x, 4);
            assert_eq!(dtw_distance(f, f, FrameMetric::Cosine), 0.0);
        }
    }

    #[test]
    fn dtw_matches_brute_force_five_by_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_frames(&mut rng, 5, 3);
            let y = random_frames(&mut rng, 6, 3);
            let cost = distance_matrix(Frames::new(&x, 3), Frames::new(&y, 3), FrameMetric::Cosine);
            let d = dtw_from_matrix(&cost);
            assert!((d - dtw_brute(&cost)).abs() <= 1e-12);
        }
    }

    #[test]
    fn dtw_tie_rule_prefers_diagonal() {
        // Flat cost: every path has the same per-cell cost, the diagonal
        // gives the shortest path and the normalised value equals the cost.
        let x = [1.0, 0.0, 1.0, 0.0];
        let y = [0.0, 1.0, 0.0, 1.0];
        let cost = distance_matrix(Frames::new(&x, 2), Frames::new(&y, 2), FrameMetric::Cosine);
        assert_eq!(dtw_from_matrix(&cost), 1.0);
        // Zero diagonal through a 1x3 against 3 identical frames.
        let z = [1.0, 0.0];
        let w = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let c = distance_matrix(Frames::new(&z, 2), Frames::new(&w, 2), FrameMetric::Cosine);
        assert_eq!(dtw_from_matrix(&c), 0.0);
    }

    #[test]
    fn mean_pool_cases() {
        assert_eq!(
            mean_pool(Frames::new(&[1.0, 0.0, 0.0, 1.0], 2)),
            vec![0.5, 0.5]
        );
        assert_eq!(mean_pool(Frames::new(&[0.25, -3.0], 2)), vec![0.25, -3.0]);
        let c = [0.5, 2.0].repeat(7);
        assert_eq!(mean_pool(Frames::new(&c, 2)), vec![0.5, 2.0]);
    }

    #[test]
    fn pooled_distance_cases() {
        let x = [1.0, 0.0, 1.0, 0.2];
        assert_eq!(
            pooled_distance(Frames::new(&x, 2), Frames::new(&x, 2), FrameMetric::Cosine),
            0.0
        );
        let a = [1.0, 1.0, 1.0, -1.0];
        let b = [0.0, 1.0, 0.0, 3.0];
        assert_eq!(
            pooled_distance(Frames::new(&a, 2), Frames::new(&b, 2), FrameMetric::Cosine),
            1.0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_frames(&mut rng, 3, 4);
        let q = random_frames(&mut rng, 5, 4);
        let (fp, fq) = (Frames::new(&p, 4), Frames::new(&q, 4));
        assert_eq!(
            pooled_distance(fp, fq, FrameMetric::Angular),
            frame_distance(&mean_pool(fp), &mean_pool(fq), FrameMetric::Angular)
        );
    }
}
