use abxkit_core::kernels::Frames;
use abxkit_core::quantize::{fit_kmeans, KMeansConfig};
use abxkit_core::{Executor, Sequential};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs each item on a scoped thread; order is preserved.
struct Threaded;

impl Executor for Threaded {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        std::thread::scope(|s| {
            let handles: Vec<_> = items.iter().map(|it| s.spawn(|| f(it))).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        })
    }
}

fn cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
    (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn inertia_never_increases(seed in any::<u64>(), n in 5usize..200, dim in 1usize..5, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = cloud(&mut rng, n, dim);
        let cb = fit_kmeans(Frames::new(&data, dim), KMeansConfig::new(k.min(n), seed), &Sequential).unwrap();
        for w in cb.trace().windows(2) {
            prop_assert!(w[1] <= w[0], "trace {:?}", cb.trace());
        }
    }
}

#[test]
fn executor_does_not_change_the_codebook() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = cloud(&mut rng, 9000, 3);
    let cfg = KMeansConfig::new(6, 4);
    let a = fit_kmeans(Frames::new(&data, 3), cfg, &Sequential).unwrap();
    let b = fit_kmeans(Frames::new(&data, 3), cfg, &Threaded).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.centroids()), bits(b.centroids()));
    assert_eq!(bits(a.trace()), bits(b.trace()));
}

#[test]
fn planted_clusters_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut data = Vec::new();
    for i in 0..400 {
        let c = if i % 2 == 0 { 10.0 } else { -10.0 };
        data.extend([c + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
    }
    let cb = fit_kmeans(Frames::new(&data, 2), KMeansConfig::new(2, 3), &Sequential).unwrap();
    for (i, row) in data.chunks(2).enumerate() {
        let (j, _) = cb.nearest(row);
        let same: Vec<usize> = data
            .chunks(2)
            .enumerate()
            .filter(|(_, r)| cb.nearest(r).0 == j)
            .map(|(t, _)| t % 2)
            .collect();
        assert!(same.iter().all(|&p| p == i % 2));
    }
}
