//! Label space, gate questions and question partitioning.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// The bundled sample hierarchy: 33 object groups plus 19 singleton
/// questions over 157 household activities.
pub const SAMPLE_TAXONOMY_JSON: &str = include_str!("../data/taxonomy_sample.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionId(pub u32);

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub id: LabelId,
    pub name: String,
}

/// A top-level question. Groups gate several sub-questions behind one
/// "is someone interacting with X" prompt; singletons have one member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionGroup {
    pub id: QuestionId,
    pub prompt: String,
    pub members: Vec<LabelId>,
}

impl QuestionGroup {
    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaxonomyDoc {
    labels: Vec<Label>,
    questions: Vec<QuestionGroup>,
}

/// Validated label hierarchy. Labels and questions are stored densely by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    labels: Vec<Label>,
    questions: Vec<QuestionGroup>,
    owner: Vec<QuestionId>,
}

impl Taxonomy {
    /// Parses and validates a taxonomy document.
    pub fn from_json(source: &str) -> Result<Self> {
        let doc: TaxonomyDoc = serde_json::from_str(source).map_err(|e| Error::Parse {
            what: "taxonomy",
            message: e.to_string(),
        })?;
        Self::new(doc.labels, doc.questions)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn sample() -> Self {
        Self::from_json(SAMPLE_TAXONOMY_JSON).expect("bundled taxonomy is valid")
    }

    pub fn new(mut labels: Vec<Label>, mut questions: Vec<QuestionGroup>) -> Result<Self> {
        labels.sort_by_key(|l| l.id);
        for (i, label) in labels.iter().enumerate() {
            if label.id.0 as usize != i {
                return Err(if i > 0 && labels[i - 1].id == label.id {
                    Error::Taxonomy(format!("duplicate label {}", label.id))
                } else {
                    Error::Taxonomy(format!("label ids are not dense: missing {i}"))
                });
            }
            if label.name.trim().is_empty() {
                return Err(Error::Taxonomy(format!("label {} has an empty name", label.id)));
            }
        }

        questions.sort_by_key(|q| q.id);
        let mut owner: Vec<Option<QuestionId>> = vec![None; labels.len()];
        for (i, q) in questions.iter().enumerate() {
            if q.id.0 as usize != i {
                return Err(if i > 0 && questions[i - 1].id == q.id {
                    Error::Taxonomy(format!("duplicate question {}", q.id))
                } else {
                    Error::Taxonomy(format!("question ids are not dense: missing {i}"))
                });
            }
            if q.members.is_empty() {
                return Err(Error::Taxonomy(format!("question {} has no members", q.id)));
            }
            for &m in &q.members {
                let slot = owner.get_mut(m.0 as usize).ok_or_else(|| {
                    Error::Taxonomy(format!("question {} references unknown label {m}", q.id))
                })?;
                if let Some(prev) = slot {
                    return Err(Error::Taxonomy(if *prev == q.id {
                        format!("label {m} listed twice in question {}", q.id)
                    } else {
                        format!("label {m} appears in questions {prev} and {}", q.id)
                    }));
                }
                *slot = Some(q.id);
            }
        }
        let owner = owner
            .into_iter()
            .enumerate()
            .map(|(l, o)| o.ok_or_else(|| Error::Taxonomy(format!("label {l} belongs to no question"))))
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            labels,
            questions,
            owner,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = TaxonomyDoc {
            labels: self.labels.clone(),
            questions: self.questions.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("taxonomy serializes")
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn questions(&self) -> &[QuestionGroup] {
        &self.questions
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn question_count(&self) -> usize {
        self.questions.len()
    }

    pub fn question(&self, id: QuestionId) -> Option<&QuestionGroup> {
        self.questions.get(id.0 as usize)
    }

    pub fn label(&self, id: LabelId) -> Option<&Label> {
        self.labels.get(id.0 as usize)
    }

    /// The question that asks about `label`.
    pub fn question_of(&self, label: LabelId) -> Option<QuestionId> {
        self.owner.get(label.0 as usize).copied()
    }

    pub fn group_count(&self) -> usize {
        self.questions.iter().filter(|q| !q.is_singleton()).count()
    }

    /// Label set implied by one answer to a top-level question.
    pub fn expand_answer(
        &self,
        question: QuestionId,
        gate: bool,
        selected: &BTreeSet<LabelId>,
    ) -> Result<BTreeSet<LabelId>> {
        let q = self.question(question).ok_or_else(|| Error::Unknown {
            kind: "question",
            id: question.to_string(),
        })?;
        if let Some(stray) = selected.iter().find(|l| !q.members.contains(l)) {
            return Err(Error::Taxonomy(format!(
                "label {stray} is not a member of question {question}"
            )));
        }
        if !gate {
            if !selected.is_empty() {
                return Err(Error::Taxonomy(format!(
                    "question {question} answered no but has selected members"
                )));
            }
            return Ok(BTreeSet::new());
        }
        Ok(selected.clone())
    }

    /// Randomly partitions the question ids into subsets of size `k`.
    ///
    /// The final subset holds the remainder when the question count is not a
    /// multiple of `k`.
    pub fn partition_questions(&self, k: usize, seed: u64) -> Result<SubsetPlan> {
        let q = self.question_count();
        if k == 0 || k > q {
            return Err(Error::out_of_range("k", k, format!("1..={q}")));
        }
        let mut ids: Vec<QuestionId> = self.questions.iter().map(|q| q.id).collect();
        let mut rng = seed::rng(seed::stream_seed(seed, &[0x5053_4554, k as u64]));
        ids.shuffle(&mut rng);
        let subsets = ids.chunks(k).map(<[QuestionId]>::to_vec).collect();
        Ok(SubsetPlan { subsets, k, seed })
    }
}

/// Exact partition of the question ids into task-sized subsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPlan {
    pub subsets: Vec<Vec<QuestionId>>,
    pub k: usize,
    pub seed: u64,
}

impl SubsetPlan {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn question_total(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }
}
