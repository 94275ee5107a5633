//! ABX cells: the scorable (A class, B class, X pool) units.
//!
//! Phonetic cells compare two phones inside one exact triphone context.
//! Within-speaker cells draw A, B and X from one speaker; across-speaker
//! cells draw A and B from speaker s₁ and X from another speaker s₂.
//! Language cells compare whole utterances of two languages.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{data_err, Result};
use crate::items::{PhoneToken, UtteranceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionKind {
    PhoneticWithin,
    PhoneticAcross,
    Language,
}

impl ConditionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConditionKind::PhoneticWithin => "phonetic_within",
            ConditionKind::PhoneticAcross => "phonetic_across",
            ConditionKind::Language => "language",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbxCondition {
    pub kind: ConditionKind,
    /// Minimum A-class size where A and X share a pool.
    pub min_class_a: usize,
    pub min_class_b: usize,
    /// Language ABX only: A, B and X come from a single speaker that has
    /// utterances in both languages.
    pub same_speaker: bool,
}

impl AbxCondition {
    pub fn new(kind: ConditionKind) -> Self {
        Self {
            kind,
            min_class_a: 2,
            min_class_b: 1,
            same_speaker: false,
        }
    }

    pub fn with_min_classes(mut self, min_class_a: usize, min_class_b: usize) -> Result<Self> {
        if min_class_a < 2 {
            return Err(data_err!(
                "min_class_a must be at least 2, got {min_class_a}"
            ));
        }
        if min_class_b < 1 {
            return Err(data_err!(
                "min_class_b must be at least 1, got {min_class_b}"
            ));
        }
        self.min_class_a = min_class_a;
        self.min_class_b = min_class_b;
        Ok(self)
    }

    pub fn with_same_speaker(mut self, same_speaker: bool) -> Self {
        self.same_speaker = same_speaker;
        self
    }
}

/// Triphone context `(previous phone, next phone)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context {
    pub prev: String,
    pub next: String,
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.prev, self.next)
    }
}

/// Identity of a cell. Ordering is the lexicographic order of the fields,
/// which is also the reduction order during aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKey {
    Phonetic {
        phone_a: String,
        phone_b: String,
        context: Context,
        /// Speaker of A and B (and of X when within-speaker).
        speaker: String,
        /// Speaker of X for across-speaker cells.
        x_speaker: Option<String>,
    },
    Language {
        language_a: String,
        language_b: String,
        speaker: Option<String>,
    },
}

impl CellKey {
    /// The two discriminated classes, A first.
    pub fn classes(&self) -> (&str, &str) {
        match self {
            CellKey::Phonetic {
                phone_a, phone_b, ..
            } => (phone_a, phone_b),
            CellKey::Language {
                language_a,
                language_b,
                ..
            } => (language_a, language_b),
        }
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellKey::Phonetic {
                phone_a,
                phone_b,
                context,
                speaker,
                x_speaker,
            } => {
                write!(f, "{phone_a}|{phone_b}|{context}|{speaker}")?;
                if let Some(x) = x_speaker {
                    write!(f, "|{x}")?;
                }
                Ok(())
            }
            CellKey::Language {
                language_a,
                language_b,
                speaker,
            } => {
                write!(f, "{language_a}|{language_b}")?;
                if let Some(s) = speaker {
                    write!(f, "|{s}")?;
                }
                Ok(())
            }
        }
    }
}

/// Token indices for one triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub a: usize,
    pub b: usize,
    pub x: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbxCell {
    pub key: CellKey,
    pub condition: AbxCondition,
    pub a_tokens: Vec<usize>,
    pub b_tokens: Vec<usize>,
    pub x_tokens: Vec<usize>,
    /// X is drawn from the A pool without replacement.
    pub x_shares_a: bool,
}

impl AbxCell {
    fn x_choices(&self) -> usize {
        if self.x_shares_a {
            self.a_tokens.len().saturating_sub(1)
        } else {
            self.x_tokens.len()
        }
    }

    /// Closed-form number of triplets.
    pub fn triplet_count(&self) -> usize {
        self.a_tokens.len() * self.b_tokens.len() * self.x_choices()
    }

    /// The `i`-th triplet in enumeration order (A outermost, then B, then X).
    pub fn triplet(&self, i: usize) -> Triplet {
        let nx = self.x_choices();
        let nb = self.b_tokens.len();
        debug_assert!(i < self.triplet_count());
        let xi = i % nx;
        let bi = (i / nx) % nb;
        let ai = i / (nx * nb);
        let x = if self.x_shares_a {
            self.a_tokens[if xi >= ai { xi + 1 } else { xi }]
        } else {
            self.x_tokens[xi]
        };
        Triplet {
            a: self.a_tokens[ai],
            b: self.b_tokens[bi],
            x,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        (0..self.triplet_count()).map(move |i| self.triplet(i))
    }

    /// One audit line: condition, key and pool sizes.
    pub fn listing_line(&self) -> String {
        alloc::format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.condition.kind.name(),
            self.key,
            self.a_tokens.len(),
            self.b_tokens.len(),
            if self.x_shares_a {
                self.a_tokens.len()
            } else {
                self.x_tokens.len()
            },
            self.triplet_count()
        )
    }
}

/// Cells in ascending key order plus the number of candidate cells that
/// were dropped for having too few tokens.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellSet {
    pub cells: Vec<AbxCell>,
    pub skipped: usize,
}

type PhoneIndex<'a> = BTreeMap<&'a str, Vec<usize>>;

/// Enumerates phonetic cells for the within- or across-speaker condition.
pub fn build_phonetic_cells(tokens: &[PhoneToken], condition: &AbxCondition) -> Result<CellSet> {
    // context -> speaker -> phone -> token indices (input order)
    let mut index: BTreeMap<(&str, &str), BTreeMap<&str, PhoneIndex<'_>>> = BTreeMap::new();
    for (i, t) in tokens.iter().enumerate() {
        index
            .entry((t.prev_phone.as_str(), t.next_phone.as_str()))
            .or_default()
            .entry(t.speaker.as_str())
            .or_default()
            .entry(t.phone.as_str())
            .or_default()
            .push(i);
    }

    let mut out = CellSet::default();
    for (&(prev, next), speakers) in &index {
        let context = Context {
            prev: prev.into(),
            next: next.into(),
        };
        for (&s1, phones) in speakers {
            for (&pa, a_pool) in phones {
                for (&pb, b_pool) in phones {
                    if pa == pb {
                        continue;
                    }
                    match condition.kind {
                        ConditionKind::PhoneticWithin => {
                            if a_pool.len() < condition.min_class_a
                                || b_pool.len() < condition.min_class_b
                            {
                                out.skipped += 1;
                                continue;
                            }
                            out.cells.push(AbxCell {
                                key: CellKey::Phonetic {
                                    phone_a: pa.into(),
                                    phone_b: pb.into(),
                                    context: context.clone(),
                                    speaker: s1.into(),
                                    x_speaker: None,
                                },
                                condition: *condition,
                                a_tokens: a_pool.clone(),
                                b_tokens: b_pool.clone(),
                                x_tokens: a_pool.clone(),
                                x_shares_a: true,
                            });
                        }
                        ConditionKind::PhoneticAcross => {
                            for (&s2, other) in speakers {
                                if s2 == s1 {
                                    continue;
                                }
                                let Some(x_pool) = other.get(pa) else {
                                    continue;
                                };
                                if b_pool.len() < condition.min_class_b {
                                    out.skipped += 1;
                                    continue;
                                }
                                out.cells.push(AbxCell {
                                    key: CellKey::Phonetic {
                                        phone_a: pa.into(),
                                        phone_b: pb.into(),
                                        context: context.clone(),
                                        speaker: s1.into(),
                                        x_speaker: Some(s2.into()),
                                    },
                                    condition: *condition,
                                    a_tokens: a_pool.clone(),
                                    b_tokens: b_pool.clone(),
                                    x_tokens: x_pool.clone(),
                                    x_shares_a: false,
                                });
                            }
                        }
                        ConditionKind::Language => {
                            return Err(data_err!(
                                "phonetic cells requested with a language condition"
                            ))
                        }
                    }
                }
            }
        }
    }
    if condition.kind == ConditionKind::Language {
        return Err(data_err!(
            "phonetic cells requested with a language condition"
        ));
    }
    out.cells.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

/// Enumerates one cell per ordered language pair (per speaker when the
/// condition asks for same-speaker triplets).
pub fn build_language_cells(
    records: &[UtteranceRecord],
    condition: &AbxCondition,
) -> Result<CellSet> {
    if condition.kind != ConditionKind::Language {
        return Err(data_err!("language cells require the language condition"));
    }
    let mut languages: BTreeMap<&str, ()> = BTreeMap::new();
    // speaker group (None when unconstrained) -> language -> record indices
    let mut groups: BTreeMap<Option<&str>, PhoneIndex<'_>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        languages.insert(r.language.as_str(), ());
        let group = condition.same_speaker.then_some(r.speaker.as_str());
        groups
            .entry(group)
            .or_default()
            .entry(r.language.as_str())
            .or_default()
            .push(i);
    }
    if languages.len() < 2 {
        return Err(data_err!(
            "language ABX needs at least 2 languages, found {}",
            languages.len()
        ));
    }

    let mut out = CellSet::default();
    for (speaker, langs) in &groups {
        for (&la, a_pool) in langs {
            for (&lb, b_pool) in langs {
                if la == lb {
                    continue;
                }
                if a_pool.len() < condition.min_class_a || b_pool.len() < condition.min_class_b {
                    out.skipped += 1;
                    continue;
                }
                out.cells.push(AbxCell {
                    key: CellKey::Language {
                        language_a: la.into(),
                        language_b: lb.into(),
                        speaker: speaker.map(String::from),
                    },
                    condition: *condition,
                    a_tokens: a_pool.clone(),
                    b_tokens: b_pool.clone(),
                    x_tokens: a_pool.clone(),
                    x_shares_a: true,
                });
            }
        }
    }
    out.cells.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}
