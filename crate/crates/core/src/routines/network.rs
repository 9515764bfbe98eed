use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::sequence::{match_positions, SymbolSequence};

/// Undirected category pair with `.0 <= .1`.
pub type CategoryPair = (String, String);

pub fn unordered(a: &str, b: &str) -> CategoryPair {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// A user's sequence for one period together with its significant routines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRoutines {
    pub sequence: SymbolSequence,
    pub routines: Vec<Vec<String>>,
}

impl UserRoutines {
    /// Unordered category pairs appearing as consecutive elements of any
    /// significant routine.
    pub fn pairs(&self) -> BTreeSet<CategoryPair> {
        self.routines
            .iter()
            .flat_map(|r| r.windows(2).map(|w| unordered(&w[0], &w[1])))
            .collect()
    }

    /// Flags each transition `(i, i + 1)` of the sequence that lies inside a
    /// non-overlapping occurrence of some significant routine.
    fn covered_transitions(&self) -> Vec<bool> {
        let symbols = &self.sequence.symbols;
        let mut covered = vec![false; symbols.len().saturating_sub(1)];
        for r in self.routines.iter().filter(|r| r.len() >= 2) {
            for p in match_positions(symbols, r) {
                covered[p..p + r.len() - 1].iter_mut().for_each(|c| *c = true);
            }
        }
        covered
    }
}

/// Weighted undirected network of category transitions inside routines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutineNetwork {
    pub weights: BTreeMap<CategoryPair, f64>,
}

impl RoutineNetwork {
    pub fn weight(&self, a: &str, b: &str) -> f64 {
        self.weights.get(&unordered(a, b)).copied().unwrap_or(0.0)
    }
}

/// For each day, the share of all transitions (pooled over users) that lie
/// inside a significant routine and join `c1` and `c2` in either order; edge
/// weights average these shares over the days that have any transition.
/// Transitions are attributed to the day of their first visit.
pub fn routine_network(users: &[UserRoutines]) -> RoutineNetwork {
    let mut totals: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    let mut hits: BTreeMap<NaiveDate, BTreeMap<CategoryPair, usize>> = BTreeMap::new();
    for u in users {
        let s = &u.sequence;
        for (i, covered) in u.covered_transitions().into_iter().enumerate() {
            let day = s.days[i];
            *totals.entry(day).or_default() += 1;
            if covered {
                *hits
                    .entry(day)
                    .or_default()
                    .entry(unordered(&s.symbols[i], &s.symbols[i + 1]))
                    .or_default() += 1;
            }
        }
    }
    let n_days = totals.len() as f64;
    let mut weights: BTreeMap<CategoryPair, f64> = BTreeMap::new();
    for (day, pairs) in &hits {
        let total = totals[day] as f64;
        for (pair, n) in pairs {
            *weights.entry(pair.clone()).or_default() += *n as f64 / total / n_days;
        }
    }
    RoutineNetwork { weights }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeChange {
    pub c1: String,
    pub c2: String,
    pub pre: f64,
    pub during: f64,
    /// `(during - pre) / pre`; absent when `pre` is zero.
    pub pct_change: Option<f64>,
}

/// Edge-by-edge comparison over the union of both networks' edges.
pub fn edge_changes(pre: &RoutineNetwork, during: &RoutineNetwork) -> Vec<EdgeChange> {
    let keys: BTreeSet<&CategoryPair> = pre.weights.keys().chain(during.weights.keys()).collect();
    keys.into_iter()
        .map(|k| {
            let a = pre.weights.get(k).copied().unwrap_or(0.0);
            let b = during.weights.get(k).copied().unwrap_or(0.0);
            EdgeChange {
                c1: k.0.clone(),
                c2: k.1.clone(),
                pre: a,
                during: b,
                pct_change: (a > 0.0).then(|| (b - a) / a),
            }
        })
        .collect()
}
