//! Merges overlapping annotations of the same passage.
//!
//! Two excerpts of the same document are related when one is a substring of
//! the other (case-insensitive, whitespace-normalized). Groups are the
//! connected components of that relation; each group keeps its longest
//! quote and the union of all member codes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::RawExcerpt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsolidatedExcerpt {
    /// Id of the representative (longest) member.
    pub excerpt_id: String,
    pub document_id: String,
    pub page: u32,
    pub text: String,
    pub merged_codes: BTreeSet<String>,
    pub member_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuoteGroup {
    pub member_ids: BTreeSet<String>,
    pub representative: ConsolidatedExcerpt,
}

/// One line of the consolidation report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group_id: String,
    pub representative_id: String,
    pub member_ids: BTreeSet<String>,
    pub merged_codes: BTreeSet<String>,
}

/// Comparison form: lowercase, single-spaced.
pub fn normalize_for_match(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index wins so roots do not depend on union order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Representative order: longest text first, then lexicographically
/// smallest text, then smallest excerpt id.
fn representative_order(a: &RawExcerpt, b: &RawExcerpt) -> Ordering {
    b.text
        .chars()
        .count()
        .cmp(&a.text.chars().count())
        .then_with(|| a.text.cmp(&b.text))
        .then_with(|| a.excerpt_id.cmp(&b.excerpt_id))
}

/// Groups excerpts into substring-connected components per document.
///
/// Output is sorted by `(document_id, representative excerpt_id)` and does
/// not depend on input order.
pub fn group_related_quotes(excerpts: &[RawExcerpt]) -> Vec<QuoteGroup> {
    let mut by_doc: BTreeMap<&str, Vec<&RawExcerpt>> = BTreeMap::new();
    for e in excerpts {
        by_doc.entry(e.document_id.as_str()).or_default().push(e);
    }

    let mut groups = Vec::new();
    for members in by_doc.into_values() {
        let keys: Vec<String> = members.iter().map(|e| normalize_for_match(&e.text)).collect();
        let mut sets = DisjointSet::new(members.len());
        for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                let (a, b) = (&keys[i], &keys[j]);
                if a.contains(b.as_str()) || b.contains(a.as_str()) {
                    sets.union(i, j);
                }
            }
        }
        let mut components: BTreeMap<usize, Vec<&RawExcerpt>> = BTreeMap::new();
        for (i, e) in members.iter().enumerate() {
            components.entry(sets.find(i)).or_default().push(e);
        }
        for component in components.into_values() {
            groups.push(build_group(&component));
        }
    }
    groups.sort_by(|a, b| {
        a.representative
            .document_id
            .cmp(&b.representative.document_id)
            .then_with(|| a.representative.excerpt_id.cmp(&b.representative.excerpt_id))
    });
    groups
}

fn build_group(members: &[&RawExcerpt]) -> QuoteGroup {
    let rep = members
        .iter()
        .copied()
        .min_by(|a, b| representative_order(a, b))
        .expect("component is nonempty");
    let member_ids: BTreeSet<String> = members.iter().map(|e| e.excerpt_id.clone()).collect();
    let merged_codes: BTreeSet<String> =
        members.iter().flat_map(|e| e.codes.iter().cloned()).collect();
    QuoteGroup {
        member_ids: member_ids.clone(),
        representative: ConsolidatedExcerpt {
            excerpt_id: rep.excerpt_id.clone(),
            document_id: rep.document_id.clone(),
            page: rep.page,
            text: rep.text.clone(),
            merged_codes,
            member_ids,
        },
    }
}

/// One consolidated excerpt per group, codes merged by set union.
pub fn consolidate(excerpts: &[RawExcerpt]) -> Vec<ConsolidatedExcerpt> {
    group_related_quotes(excerpts).into_iter().map(|g| g.representative).collect()
}

pub fn report(groups: &[ConsolidatedExcerpt]) -> Vec<GroupReport> {
    groups
        .iter()
        .enumerate()
        .map(|(i, g)| GroupReport {
            group_id: format!("g{:06}", i + 1),
            representative_id: g.excerpt_id.clone(),
            member_ids: g.member_ids.clone(),
            merged_codes: g.merged_codes.clone(),
        })
        .collect()
}
