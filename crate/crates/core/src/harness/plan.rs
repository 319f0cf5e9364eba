use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SessionEntry;
use crate::error::{Error, Result};

/// Which session pairs of a subject are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingPolicy {
    /// Each session against the next one in time.
    #[default]
    Consecutive,
    /// Each later session against the subject's earliest one.
    FirstReference,
    /// Every unordered pair.
    AllPairs,
}

impl PairingPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('-', "_").as_str() {
            "consecutive" => Some(PairingPolicy::Consecutive),
            "first_reference" | "first" => Some(PairingPolicy::FirstReference),
            "all_pairs" | "all" => Some(PairingPolicy::AllPairs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPair {
    pub a: SessionEntry,
    pub b: SessionEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPlan {
    pub policy: PairingPolicy,
    pub pairs: Vec<SessionPair>,
}

/// Sessions of each subject in time order: dated sessions by (date, id),
/// then undated ones by id.
pub(crate) fn ordered_by_subject(sessions: &[SessionEntry]) -> BTreeMap<&str, Vec<&SessionEntry>> {
    let mut subjects: BTreeMap<&str, Vec<&SessionEntry>> = BTreeMap::new();
    for s in sessions {
        subjects.entry(&s.meta.subject_id).or_default().push(s);
    }
    for list in subjects.values_mut() {
        list.sort_by(|x, y| {
            let kx = (
                x.meta.acquisition_date.is_none(),
                x.meta.acquisition_date,
                &x.meta.session_id,
            );
            let ky = (
                y.meta.acquisition_date.is_none(),
                y.meta.acquisition_date,
                &y.meta.session_id,
            );
            kx.cmp(&ky)
        });
    }
    subjects
}

/// Pairs sessions within each subject (subjects in id order).
pub fn build_plan(sessions: &[SessionEntry], policy: PairingPolicy) -> Result<ComparisonPlan> {
    let mut seen = std::collections::BTreeSet::new();
    for s in sessions {
        if !seen.insert((&s.meta.subject_id, &s.meta.session_id)) {
            return Err(Error::DuplicateSession {
                subject: s.meta.subject_id.clone(),
                session: s.meta.session_id.clone(),
                first: s.path.clone(),
                second: s.path.clone(),
            });
        }
    }
    let mut pairs = Vec::new();
    for list in ordered_by_subject(sessions).values() {
        let n = list.len();
        let mut push = |i: usize, j: usize| {
            pairs.push(SessionPair {
                a: list[i].clone(),
                b: list[j].clone(),
            })
        };
        match policy {
            PairingPolicy::Consecutive => (1..n).for_each(|j| push(j - 1, j)),
            PairingPolicy::FirstReference => (1..n).for_each(|j| push(0, j)),
            PairingPolicy::AllPairs => {
                for i in 0..n {
                    for j in i + 1..n {
                        push(i, j);
                    }
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::TooFewSessions);
    }
    Ok(ComparisonPlan { policy, pairs })
}
