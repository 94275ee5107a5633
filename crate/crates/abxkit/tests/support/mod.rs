//! Test fixtures and a deliberately naive ABX reference implementation.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use abxkit::featstore::write_archive;
use abxkit::itemfile::{write_language_items, write_phone_items};
use abxkit_core::items::{PhoneToken, UtteranceRecord};
use abxkit_core::kernels::FrameMetric;
use abxkit_core::score::AbxReport;
use abxkit_core::task::CellKey;
use abxkit_core::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RATE: f64 = 100.0;

pub struct Fixture {
    pub matrices: Vec<FeatureMatrix>,
    pub tokens: Vec<PhoneToken>,
    pub records: Vec<UtteranceRecord>,
    pub metric: FrameMetric,
}

impl Fixture {
    pub fn write(&self, dir: &Path) {
        write_archive(&self.matrices, &dir.join("features")).unwrap();
        let mut buf = Vec::new();
        write_phone_items(&self.tokens, &mut buf).unwrap();
        std::fs::write(dir.join("phone.item"), buf).unwrap();
        let mut buf = Vec::new();
        write_language_items(&self.records, &mut buf).unwrap();
        std::fs::write(dir.join("language.item"), buf).unwrap();
    }

    pub fn source(&self) -> BTreeMap<String, FeatureMatrix> {
        self.matrices
            .iter()
            .map(|m| (m.utterance_id().to_owned(), m.clone()))
            .collect()
    }
}

/// Small random corpus: at most 30 tokens of 1..=3 frames, utterances of at
/// most 6 frames, dims 2..=8. Some tokens copy another token's frames so
/// exact distance ties occur.
pub fn random_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(2..=8);
    let n_phones = rng.gen_range(2..=3);
    let n_speakers = rng.gen_range(2..=3);
    let n_contexts = rng.gen_range(1..=2);
    let metric = if rng.gen_bool(0.5) {
        FrameMetric::Cosine
    } else {
        FrameMetric::Angular
    };
    let phone_means: Vec<Vec<f32>> = (0..n_phones)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let target = rng.gen_range(12..=30);

    let mut matrices = Vec::new();
    let mut tokens: Vec<PhoneToken> = Vec::new();
    let mut records = Vec::new();
    let mut token_frames: Vec<Vec<f32>> = Vec::new();
    let mut u = 0;
    while tokens.len() < target {
        let id = format!("utt{u:03}");
        let speaker = format!("spk{}", rng.gen_range(0..n_speakers));
        let language = if u < 2 {
            format!("L{u}")
        } else {
            format!("L{}", rng.gen_range(0..2))
        };
        let n_tok = rng.gen_range(1..=2).min(target - tokens.len());
        let mut data: Vec<f32> = Vec::new();
        let mut frame = 0usize;
        for _ in 0..n_tok {
            let phone = rng.gen_range(0..n_phones);
            let ctx = rng.gen_range(0..n_contexts);
            let frames: Vec<f32> = if !token_frames.is_empty() && rng.gen_bool(0.15) {
                token_frames[rng.gen_range(0..token_frames.len())].clone()
            } else {
                let n = rng.gen_range(1..=3);
                (0..n * dim)
                    .map(|i| phone_means[phone][i % dim] + rng.gen_range(-0.8f32..0.8))
                    .collect()
            };
            let n = frames.len() / dim;
            tokens.push(PhoneToken {
                utterance_id: id.clone(),
                onset: frame as f64 / RATE,
                offset: (frame + n) as f64 / RATE,
                phone: format!("ph{phone}"),
                prev_phone: format!("c{ctx}"),
                next_phone: format!("c{}", (ctx + 1) % 2),
                speaker: speaker.clone(),
                language: None,
            });
            data.extend_from_slice(&frames);
            token_frames.push(frames);
            frame += n;
        }
        matrices.push(FeatureMatrix::new(id.clone(), dim, RATE, data).unwrap());
        records.push(UtteranceRecord {
            utterance_id: id,
            speaker,
            language,
        });
        u += 1;
    }
    Fixture {
        matrices,
        tokens,
        records,
        metric,
    }
}

// ---------------------------------------------------------------------------
// Reference implementation
// ---------------------------------------------------------------------------

fn frame_dist(u: &[f64], v: &[f64], metric: FrameMetric) -> f64 {
    let (mut uu, mut vv, mut uv) = (0.0, 0.0, 0.0);
    for a in u {
        uu += a * a;
    }
    for b in v {
        vv += b * b;
    }
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
    }
    let zero = uu.sqrt() < 1e-12 || vv.sqrt() < 1e-12;
    match metric {
        FrameMetric::Cosine if zero => 1.0,
        FrameMetric::Angular if zero => 0.5,
        FrameMetric::Cosine => 1.0 - (uv / (uu * vv).sqrt()).clamp(-1.0, 1.0),
        FrameMetric::Angular => {
            libm::acos((uv / (uu * vv).sqrt()).clamp(-1.0, 1.0)) / std::f64::consts::PI
        }
    }
}

/// Enumerates every monotone path; equal totals go to the path whose
/// backward step sequence is smallest with diagonal < vertical < horizontal.
pub fn exhaustive_dtw(x: &[Vec<f64>], y: &[Vec<f64>], metric: FrameMetric) -> f64 {
    let cost: Vec<Vec<f64>> = x
        .iter()
        .map(|a| y.iter().map(|b| frame_dist(a, b, metric)).collect())
        .collect();
    let (n, m) = (x.len(), y.len());
    let mut best: Option<(f64, Vec<u8>)> = None;
    let mut stack: Vec<(usize, usize, f64, Vec<u8>)> = vec![(0, 0, cost[0][0], Vec::new())];
    while let Some((i, j, acc, steps)) = stack.pop() {
        if i == n - 1 && j == m - 1 {
            let back: Vec<u8> = steps.iter().rev().copied().collect();
            let take = match &best {
                None => true,
                Some((b, bs)) => acc < *b || (acc == *b && back < *bs),
            };
            if take {
                best = Some((acc, back));
            }
            continue;
        }
        for (code, di, dj) in [(0u8, 1, 1), (1, 1, 0), (2, 0, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < n && nj < m {
                let mut s = steps.clone();
                s.push(code);
                stack.push((ni, nj, acc + cost[ni][nj], s));
            }
        }
    }
    let (total, steps) = best.unwrap();
    total / (steps.len() + 1) as f64
}

fn token_frames(m: &FeatureMatrix, span: Option<(f64, f64)>) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = m
        .data()
        .chunks(m.dim())
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    match span {
        None => rows,
        Some((on, off)) => {
            let clip =
                |t: f64| ((t * m.frame_rate() + 0.5).floor().max(0.0) as usize).min(rows.len());
            rows[clip(on)..clip(off)].to_vec()
        }
    }
}

/// (class_a, class_b, prev, next, speaker, x_speaker)
pub type OracleKey = (String, String, String, String, String, String);

#[derive(Debug, Default)]
pub struct OracleReport {
    pub cells: BTreeMap<OracleKey, f64>,
    pub by_context: BTreeMap<(String, String, String, String), f64>,
    pub by_pair: BTreeMap<(String, String), f64>,
    pub symmetric: BTreeMap<(String, String), f64>,
    pub final_score: f64,
}

struct Distances {
    seqs: Vec<Vec<Vec<f64>>>,
    metric: FrameMetric,
    memo: BTreeMap<(usize, usize), f64>,
}

impl Distances {
    fn get(&mut self, a: usize, x: usize) -> f64 {
        if let Some(&d) = self.memo.get(&(a, x)) {
            return d;
        }
        let d = exhaustive_dtw(&self.seqs[a], &self.seqs[x], self.metric);
        self.memo.insert((a, x), d);
        d
    }
}

fn mean(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

fn roll_up(cells: BTreeMap<OracleKey, f64>) -> Option<OracleReport> {
    if cells.is_empty() {
        return None;
    }
    let mut ctx: BTreeMap<(String, String, String, String), Vec<f64>> = BTreeMap::new();
    for ((a, b, p, n, _, _), s) in &cells {
        ctx.entry((a.clone(), b.clone(), p.clone(), n.clone()))
            .or_default()
            .push(*s);
    }
    let by_context: BTreeMap<_, f64> = ctx.into_iter().map(|(k, v)| (k, mean(&v))).collect();
    let mut pair: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for ((a, b, _, _), s) in &by_context {
        pair.entry((a.clone(), b.clone())).or_default().push(*s);
    }
    let by_pair: BTreeMap<_, f64> = pair.into_iter().map(|(k, v)| (k, mean(&v))).collect();
    let mut sym: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for ((a, b), s) in &by_pair {
        let k = if a < b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        sym.entry(k).or_default().push(*s);
    }
    let symmetric: BTreeMap<_, f64> = sym.into_iter().map(|(k, v)| (k, mean(&v))).collect();
    let final_score = mean(&symmetric.values().copied().collect::<Vec<_>>());
    Some(OracleReport {
        cells,
        by_context,
        by_pair,
        symmetric,
        final_score,
    })
}

fn same_context(u: &PhoneToken, v: &PhoneToken) -> bool {
    u.prev_phone == v.prev_phone && u.next_phone == v.next_phone
}

/// Phonetic ABX by looping over every (A, B, X) token triple.
pub fn oracle_phonetic(f: &Fixture, across: bool) -> Option<OracleReport> {
    let by_id: BTreeMap<&str, &FeatureMatrix> =
        f.matrices.iter().map(|m| (m.utterance_id(), m)).collect();
    let seqs = f
        .tokens
        .iter()
        .map(|t| token_frames(by_id[t.utterance_id.as_str()], Some((t.onset, t.offset))))
        .collect();
    let mut d = Distances {
        seqs,
        metric: f.metric,
        memo: BTreeMap::new(),
    };
    let mut sums: BTreeMap<OracleKey, (f64, usize)> = BTreeMap::new();
    let t = &f.tokens;
    for ia in 0..t.len() {
        for ib in 0..t.len() {
            for ix in 0..t.len() {
                let (a, b, x) = (&t[ia], &t[ib], &t[ix]);
                if ix == ia
                    || a.phone == b.phone
                    || x.phone != a.phone
                    || !same_context(a, b)
                    || !same_context(a, x)
                {
                    continue;
                }
                if a.speaker != b.speaker || (x.speaker != a.speaker) != across {
                    continue;
                }
                let dax = d.get(ia, ix);
                let dbx = d.get(ib, ix);
                let s = if dax < dbx {
                    1.0
                } else if dax == dbx {
                    0.5
                } else {
                    0.0
                };
                let xs = if across {
                    x.speaker.clone()
                } else {
                    String::new()
                };
                let key = (
                    a.phone.clone(),
                    b.phone.clone(),
                    a.prev_phone.clone(),
                    a.next_phone.clone(),
                    a.speaker.clone(),
                    xs,
                );
                let e = sums.entry(key).or_insert((0.0, 0));
                e.0 += s;
                e.1 += 1;
            }
        }
    }
    roll_up(
        sums.into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect(),
    )
}

/// Language ABX over whole utterances.
pub fn oracle_language(f: &Fixture, same_speaker: bool) -> Option<OracleReport> {
    let seqs = f.matrices.iter().map(|m| token_frames(m, None)).collect();
    let r = &f.records;
    let row: BTreeMap<&str, usize> = f
        .matrices
        .iter()
        .enumerate()
        .map(|(i, m)| (m.utterance_id(), i))
        .collect();
    let mut d = Distances {
        seqs,
        metric: f.metric,
        memo: BTreeMap::new(),
    };
    let mut sums: BTreeMap<OracleKey, (f64, usize)> = BTreeMap::new();
    for ia in 0..r.len() {
        for ib in 0..r.len() {
            for ix in 0..r.len() {
                let (a, b, x) = (&r[ia], &r[ib], &r[ix]);
                if ix == ia || a.language == b.language || x.language != a.language {
                    continue;
                }
                if same_speaker && (b.speaker != a.speaker || x.speaker != a.speaker) {
                    continue;
                }
                let (ma, mb, mx) = (
                    row[a.utterance_id.as_str()],
                    row[b.utterance_id.as_str()],
                    row[x.utterance_id.as_str()],
                );
                let dax = d.get(ma, mx);
                let dbx = d.get(mb, mx);
                let s = if dax < dbx {
                    1.0
                } else if dax == dbx {
                    0.5
                } else {
                    0.0
                };
                let spk = if same_speaker {
                    a.speaker.clone()
                } else {
                    String::new()
                };
                let key = (
                    a.language.clone(),
                    b.language.clone(),
                    String::new(),
                    String::new(),
                    spk,
                    String::new(),
                );
                let e = sums.entry(key).or_insert((0.0, 0));
                e.0 += s;
                e.1 += 1;
            }
        }
    }
    roll_up(
        sums.into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect(),
    )
}

fn engine_key(k: &CellKey) -> OracleKey {
    match k {
        CellKey::Phonetic {
            phone_a,
            phone_b,
            context,
            speaker,
            x_speaker,
        } => (
            phone_a.clone(),
            phone_b.clone(),
            context.prev.clone(),
            context.next.clone(),
            speaker.clone(),
            x_speaker.clone().unwrap_or_default(),
        ),
        CellKey::Language {
            language_a,
            language_b,
            speaker,
        } => (
            language_a.clone(),
            language_b.clone(),
            String::new(),
            String::new(),
            speaker.clone().unwrap_or_default(),
            String::new(),
        ),
    }
}

/// Exact comparison of every level; returns a description of the first
/// mismatch.
pub fn compare(engine: &AbxReport, oracle: &OracleReport) -> Result<(), String> {
    let cells: BTreeMap<OracleKey, f64> = engine
        .cells
        .iter()
        .map(|c| (engine_key(&c.key), c.score))
        .collect();
    if cells != oracle.cells {
        return Err(format!(
            "cell scores differ: engine {cells:?} oracle {:?}",
            oracle.cells
        ));
    }
    let by_context: BTreeMap<_, f64> = engine
        .speaker_collapsed
        .iter()
        .map(|e| {
            let (p, n) = e
                .context
                .as_ref()
                .map(|c| (c.prev.clone(), c.next.clone()))
                .unwrap_or_default();
            ((e.class_a.clone(), e.class_b.clone(), p, n), e.score)
        })
        .collect();
    if by_context != oracle.by_context {
        return Err(format!(
            "speaker level differs: {by_context:?} vs {:?}",
            oracle.by_context
        ));
    }
    let by_pair: BTreeMap<_, f64> = engine
        .context_collapsed
        .iter()
        .map(|e| ((e.class_a.clone(), e.class_b.clone()), e.score))
        .collect();
    if by_pair != oracle.by_pair {
        return Err(format!(
            "context level differs: {by_pair:?} vs {:?}",
            oracle.by_pair
        ));
    }
    let sym: BTreeMap<_, f64> = engine
        .symmetrized
        .iter()
        .map(|e| ((e.class_a.clone(), e.class_b.clone()), e.score))
        .collect();
    if sym != oracle.symmetric {
        return Err(format!(
            "symmetrized level differs: {sym:?} vs {:?}",
            oracle.symmetric
        ));
    }
    if engine.final_score.to_bits() != oracle.final_score.to_bits() {
        return Err(format!(
            "final score {} vs {}",
            engine.final_score, oracle.final_score
        ));
    }
    Ok(())
}
