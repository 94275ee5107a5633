//! Triplet scoring, per-cell scores and the aggregation hierarchy.
//!
//! Aggregation collapses cells in four unweighted steps: speakers (or
//! speaker pairs) → contexts → the two directions of a class pair → all
//! unordered pairs. Every step reduces in ascending key order, so the
//! result does not depend on token order or on how cells were scheduled.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{data_err, Error, Result};
use crate::exec::Executor;
use crate::items::{PhoneToken, UtteranceRecord};
use crate::kernels::{frame_distance, mean_pool, DistanceSpec, Frames, SequenceMode};
use crate::matrix::FeatureMatrix;
use crate::task::{
    build_language_cells, build_phonetic_cells, AbxCell, AbxCondition, CellKey, ConditionKind,
    Context,
};

/// 1 when X is closer to A, 0.5 on an exact tie, 0 otherwise.
///
/// Panics on non-finite distances.
pub fn score_triplet(d_ax: f64, d_bx: f64) -> f64 {
    half_units(d_ax, d_bx) as f64 / 2.0
}

fn half_units(d_ax: f64, d_bx: f64) -> u64 {
    assert!(
        d_ax.is_finite() && d_bx.is_finite(),
        "non-finite ABX distance"
    );
    if d_ax < d_bx {
        2
    } else if d_ax == d_bx {
        1
    } else {
        0
    }
}

/// Per-cell uniform downsampling of triplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletSampling {
    pub max_triplets: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbxOptions {
    pub distance: DistanceSpec,
    pub sampling: Option<TripletSampling>,
}

/// Sequences for every token, indexed like the token list.
#[derive(Debug, Clone)]
pub struct TokenFeatures {
    dim: usize,
    sequences: Vec<Vec<f64>>,
    pooled: Option<Vec<Vec<f64>>>,
}

impl TokenFeatures {
    /// `sequences[i]` holds token `i` as row-major frames of width `dim`.
    pub fn new(dim: usize, sequences: Vec<Vec<f64>>, mode: SequenceMode) -> Result<Self> {
        if dim == 0 {
            return Err(data_err!("feature dim must be positive"));
        }
        for (i, s) in sequences.iter().enumerate() {
            if s.is_empty() || s.len() % dim != 0 {
                return Err(data_err!(
                    "token {i}: sequence is not a non-empty multiple of dim {dim}"
                ));
            }
        }
        let pooled = (mode == SequenceMode::MeanPool).then(|| {
            sequences
                .iter()
                .map(|s| mean_pool(Frames::new(s, dim)))
                .collect()
        });
        Ok(Self {
            dim,
            sequences,
            pooled,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn frames(&self, token: usize) -> Frames<'_> {
        Frames::new(&self.sequences[token], self.dim)
    }

    fn distance(&self, spec: &DistanceSpec, i: usize, j: usize) -> f64 {
        match (&self.pooled, spec.sequence_mode) {
            (Some(p), SequenceMode::MeanPool) => frame_distance(&p[i], &p[j], spec.frame_metric),
            _ => spec.sequence_distance(self.frames(i), self.frames(j)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub key: CellKey,
    /// Triplets actually scored (after any downsampling).
    pub triplet_count: u64,
    pub score: f64,
    pub sampled: bool,
}

fn check_cell_tokens(cell: &AbxCell, features: &TokenFeatures) -> Result<()> {
    let n = features.len();
    for &t in cell
        .a_tokens
        .iter()
        .chain(&cell.b_tokens)
        .chain(&cell.x_tokens)
    {
        if t >= n {
            return Err(data_err!("cell {}: token {t} has no features", cell.key));
        }
    }
    if cell.triplet_count() == 0 {
        return Err(Error::Invariant(alloc::format!(
            "cell {} has no triplets",
            cell.key
        )));
    }
    Ok(())
}

/// Mean triplet outcome over a cell.
///
/// Distances are always taken as `d(A, X)` and `d(B, X)` with X second.
/// Without sampling, each pairwise distance is computed once and reused.
/// `ordinal` selects the sampling stream and only matters when `sampling`
/// is set.
pub fn score_cell(
    cell: &AbxCell,
    features: &TokenFeatures,
    spec: &DistanceSpec,
    sampling: Option<TripletSampling>,
    ordinal: u64,
) -> Result<CellScore> {
    check_cell_tokens(cell, features)?;
    let total = cell.triplet_count();
    if let Some(s) = sampling.filter(|s| total > s.max_triplets) {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(ordinal);
        let mut picks = rand::seq::index::sample(&mut rng, total, s.max_triplets).into_vec();
        picks.sort_unstable();
        let mut units = 0u64;
        for &i in &picks {
            let t = cell.triplet(i);
            units += half_units(
                features.distance(spec, t.a, t.x),
                features.distance(spec, t.b, t.x),
            );
        }
        let n = picks.len() as u64;
        return Ok(CellScore {
            key: cell.key.clone(),
            triplet_count: n,
            score: units as f64 / (2 * n) as f64,
            sampled: true,
        });
    }

    let x_pool: &[usize] = &cell.x_tokens;
    let d_ax: Vec<Vec<f64>> = cell
        .a_tokens
        .iter()
        .map(|&a| {
            x_pool
                .iter()
                .map(|&x| {
                    if a == x {
                        f64::NAN
                    } else {
                        features.distance(spec, a, x)
                    }
                })
                .collect()
        })
        .collect();
    let d_bx: Vec<Vec<f64>> = cell
        .b_tokens
        .iter()
        .map(|&b| {
            x_pool
                .iter()
                .map(|&x| features.distance(spec, b, x))
                .collect()
        })
        .collect();

    let mut units = 0u64;
    let mut n = 0u64;
    for (ai, &a) in cell.a_tokens.iter().enumerate() {
        for b_row in &d_bx {
            for (xi, &x) in x_pool.iter().enumerate() {
                if a == x {
                    continue;
                }
                units += half_units(d_ax[ai][xi], b_row[xi]);
                n += 1;
            }
        }
    }
    if n != total as u64 {
        return Err(Error::Invariant(alloc::format!(
            "cell {}: enumerated {n} triplets, expected {total}",
            cell.key
        )));
    }
    Ok(CellScore {
        key: cell.key.clone(),
        triplet_count: n,
        score: units as f64 / (2 * n) as f64,
        sampled: false,
    })
}

/// One entry of an intermediate aggregation level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEntry {
    pub class_a: String,
    pub class_b: String,
    pub context: Option<Context>,
    pub score: f64,
    /// Number of members averaged into this entry.
    pub members: usize,
}

/// Symmetrised score of an unordered class pair (`class_a < class_b`).
#[derive(Debug, Clone, PartialEq)]
pub struct PairEntry {
    pub class_a: String,
    pub class_b: String,
    pub score: f64,
    /// 2 when both directions were scored, 1 otherwise.
    pub directions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbxReport {
    pub condition: AbxCondition,
    pub distance: DistanceSpec,
    pub sampling: Option<TripletSampling>,
    pub cells: Vec<CellScore>,
    pub speaker_collapsed: Vec<LevelEntry>,
    pub context_collapsed: Vec<LevelEntry>,
    pub symmetrized: Vec<PairEntry>,
    pub final_score: f64,
    pub final_error_percent: f64,
    pub cells_scored: usize,
    pub cells_skipped: usize,
    pub cells_sampled: usize,
    pub triplets_scored: u64,
}

fn mean(values: &[f64]) -> f64 {
    let mut s = 0.0;
    for &v in values {
        s += v;
    }
    s / values.len() as f64
}

/// Folds cell scores into the level tables and the final score.
pub fn aggregate(
    cell_scores: &[CellScore],
    condition: AbxCondition,
    distance: DistanceSpec,
) -> Result<AbxReport> {
    if cell_scores.is_empty() {
        return Err(data_err!("no scorable cells"));
    }
    let mut sorted: Vec<&CellScore> = cell_scores.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    for w in sorted.windows(2) {
        if w[0].key == w[1].key {
            return Err(data_err!("duplicate cell {}", w[0].key));
        }
    }

    // (class_a, class_b, context) -> scores over speakers / speaker pairs
    let mut by_context: BTreeMap<(&str, &str, Option<&Context>), Vec<f64>> = BTreeMap::new();
    for c in &sorted {
        let (a, b) = c.key.classes();
        let context = match &c.key {
            CellKey::Phonetic { context, .. } => Some(context),
            CellKey::Language { .. } => None,
        };
        by_context.entry((a, b, context)).or_default().push(c.score);
    }
    let speaker_collapsed: Vec<LevelEntry> = by_context
        .iter()
        .map(|(&(a, b, ctx), v)| LevelEntry {
            class_a: a.into(),
            class_b: b.into(),
            context: ctx.cloned(),
            score: mean(v),
            members: v.len(),
        })
        .collect();

    let mut by_pair: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for e in &speaker_collapsed {
        by_pair
            .entry((&e.class_a, &e.class_b))
            .or_default()
            .push(e.score);
    }
    let context_collapsed: Vec<LevelEntry> = by_pair
        .iter()
        .map(|(&(a, b), v)| LevelEntry {
            class_a: a.into(),
            class_b: b.into(),
            context: None,
            score: mean(v),
            members: v.len(),
        })
        .collect();

    let mut unordered: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for e in &context_collapsed {
        let (a, b) = (e.class_a.as_str(), e.class_b.as_str());
        let key = if a <= b { (a, b) } else { (b, a) };
        unordered.entry(key).or_default().push(e.score);
    }
    let symmetrized: Vec<PairEntry> = unordered
        .iter()
        .map(|(&(a, b), v)| PairEntry {
            class_a: a.into(),
            class_b: b.into(),
            score: mean(v),
            directions: v.len(),
        })
        .collect();

    let pair_scores: Vec<f64> = symmetrized.iter().map(|p| p.score).collect();
    let final_score = mean(&pair_scores);
    if !(0.0..=1.0).contains(&final_score) {
        return Err(Error::Invariant(alloc::format!(
            "final score {final_score} outside [0, 1]"
        )));
    }
    Ok(AbxReport {
        condition,
        distance,
        sampling: None,
        cells: sorted.into_iter().cloned().collect(),
        speaker_collapsed,
        context_collapsed,
        symmetrized,
        final_score,
        final_error_percent: 100.0 * (1.0 - final_score),
        cells_scored: cell_scores.len(),
        cells_skipped: 0,
        cells_sampled: cell_scores.iter().filter(|c| c.sampled).count(),
        triplets_scored: cell_scores.iter().map(|c| c.triplet_count).sum(),
    })
}

/// Read access to utterance features, e.g. an on-disk archive or a map.
pub trait FeatureSource: Sync {
    fn load(&self, utterance_id: &str) -> Result<Cow<'_, FeatureMatrix>>;
}

impl FeatureSource for BTreeMap<String, FeatureMatrix> {
    fn load(&self, utterance_id: &str) -> Result<Cow<'_, FeatureMatrix>> {
        self.get(utterance_id)
            .map(Cow::Borrowed)
            .ok_or_else(|| data_err!("utterance {utterance_id} not found in features"))
    }
}

/// Loads each utterance once and cuts out the requested spans
/// (`None` = whole utterance) for every item.
fn materialize<S: FeatureSource, E: Executor>(
    source: &S,
    spans: &[(&str, Option<(f64, f64)>)],
    mode: SequenceMode,
    exec: &E,
) -> Result<TokenFeatures> {
    let mut by_utt: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (utt, _)) in spans.iter().enumerate() {
        by_utt.entry(utt).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = by_utt.into_iter().collect();
    let loaded = exec.map(
        &groups,
        |(utt, idx)| -> Result<Vec<(usize, usize, Vec<f64>)>> {
            let m = source.load(utt).map_err(|e| match e {
                Error::Data(msg) => data_err!("token {} ({utt}): {msg}", idx[0]),
                other => other,
            })?;
            idx.iter()
                .map(|&i| {
                    let piece = match spans[i].1 {
                        Some((on, off)) => Cow::Owned(
                            m.slice(on, off)
                                .map_err(|e| data_err!("token {i} ({utt} {on}-{off}): {e}"))?,
                        ),
                        None => Cow::Borrowed(m.as_ref()),
                    };
                    Ok((i, piece.dim(), piece.to_f64()))
                })
                .collect()
        },
    );
    let mut sequences: Vec<Vec<f64>> = alloc::vec![Vec::new(); spans.len()];
    let mut dim: Option<usize> = None;
    for group in loaded {
        for (i, d, seq) in group? {
            match dim {
                None => dim = Some(d),
                Some(prev) if prev != d => {
                    return Err(data_err!(
                        "inconsistent feature dims: {prev} vs {d} (token {i})"
                    ))
                }
                _ => {}
            }
            sequences[i] = seq;
        }
    }
    let dim = dim.ok_or_else(|| data_err!("no items to evaluate"))?;
    TokenFeatures::new(dim, sequences, mode)
}

fn score_all<E: Executor>(
    cells: &[AbxCell],
    features: &TokenFeatures,
    options: &AbxOptions,
    exec: &E,
) -> Result<Vec<CellScore>> {
    let indexed: Vec<(u64, &AbxCell)> = cells
        .iter()
        .enumerate()
        .map(|(i, c)| (i as u64, c))
        .collect();
    exec.map(&indexed, |&(ordinal, cell)| {
        score_cell(cell, features, &options.distance, options.sampling, ordinal)
    })
    .into_iter()
    .collect()
}

/// Builds cells from phone tokens, scores them and aggregates.
pub fn run_phonetic_abx<S: FeatureSource, E: Executor>(
    source: &S,
    tokens: &[PhoneToken],
    condition: AbxCondition,
    options: AbxOptions,
    exec: &E,
) -> Result<AbxReport> {
    if condition.kind == ConditionKind::Language {
        return Err(data_err!("phonetic ABX requires a phonetic condition"));
    }
    for (i, t) in tokens.iter().enumerate() {
        t.validate().map_err(|e| data_err!("token {i}: {e}"))?;
    }
    let set = build_phonetic_cells(tokens, &condition)?;
    if set.cells.is_empty() {
        return Err(data_err!("no scorable cells ({} skipped)", set.skipped));
    }
    let spans: Vec<(&str, Option<(f64, f64)>)> = tokens
        .iter()
        .map(|t| (t.utterance_id.as_str(), Some((t.onset, t.offset))))
        .collect();
    let features = materialize(source, &spans, options.distance.sequence_mode, exec)?;
    let scores = score_all(&set.cells, &features, &options, exec)?;
    let mut report = aggregate(&scores, condition, options.distance)?;
    report.cells_skipped = set.skipped;
    report.sampling = options.sampling;
    Ok(report)
}

/// Language discrimination over whole utterances.
pub fn run_language_abx<S: FeatureSource, E: Executor>(
    source: &S,
    records: &[UtteranceRecord],
    condition: AbxCondition,
    options: AbxOptions,
    exec: &E,
) -> Result<AbxReport> {
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| data_err!("record {i}: {e}"))?;
    }
    let set = build_language_cells(records, &condition)?;
    if set.cells.is_empty() {
        return Err(data_err!("no scorable cells ({} skipped)", set.skipped));
    }
    let spans: Vec<(&str, Option<(f64, f64)>)> = records
        .iter()
        .map(|r| (r.utterance_id.as_str(), None))
        .collect();
    let features = materialize(source, &spans, options.distance.sequence_mode, exec)?;
    let scores = score_all(&set.cells, &features, &options, exec)?;
    let mut report = aggregate(&scores, condition, options.distance)?;
    report.cells_skipped = set.skipped;
    report.sampling = options.sampling;
    Ok(report)
}
