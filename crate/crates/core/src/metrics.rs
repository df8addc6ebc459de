//! Group fairness (GH, GP, GU, MGU, DGU) and accuracy (NDCG@K, HR@K)
//! under the all-ranking protocol.
//!
//! GH and GP both count membership indicators: an item in two groups adds
//! one to each group's numerator and two to the shared denominator. Items
//! in no group contribute nothing to either side.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::grouping::GroupScheme;
use crate::{Error, Id, Result};

/// Per-group values in scheme order.
pub type GroupValues = IndexMap<String, f64>;

/// Ordered top-K recommendation list for one evaluated sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slate {
    pub sequence_ref: Id,
    pub items: Vec<Id>,
}

impl Slate {
    pub fn new(sequence_ref: impl Into<Id>, items: Vec<Id>) -> Self {
        Self {
            sequence_ref: sequence_ref.into(),
            items,
        }
    }

    pub fn top(&self, k: usize) -> &[Id] {
        &self.items[..k.min(self.items.len())]
    }
}

fn membership_counts<'a>(lists: impl IntoIterator<Item = &'a [Id]>, scheme: &GroupScheme) -> Vec<u64> {
    let mut counts = vec![0u64; scheme.num_groups()];
    for list in lists {
        for item in list {
            for &g in scheme.groups_of(item) {
                counts[g] += 1;
            }
        }
    }
    counts
}

fn proportions(counts: &[u64], scheme: &GroupScheme) -> Result<GroupValues> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoGroupedInteractions);
    }
    Ok(scheme
        .groups()
        .iter()
        .zip(counts)
        .map(|(g, &c)| (g.clone(), c as f64 / total as f64))
        .collect())
}

/// Interaction proportion of each group over the given histories.
pub fn gh<'a>(histories: impl IntoIterator<Item = &'a [Id]>, scheme: &GroupScheme) -> Result<GroupValues> {
    proportions(&membership_counts(histories, scheme), scheme)
}

/// Recommendation proportion of each group over the top-`k` prefix of every
/// slate. Slates shorter than `k` contribute what they have.
pub fn gp(slates: &[Slate], scheme: &GroupScheme, k: usize) -> Result<GroupValues> {
    proportions(&membership_counts(slates.iter().map(|s| s.top(k)), scheme), scheme)
}

/// `GP(G) - GH(G)` per group. Positive means over-recommended.
pub fn group_unfairness(gh: &GroupValues, gp: &GroupValues) -> Result<GroupValues> {
    if gh.len() != gp.len() || gh.keys().any(|g| !gp.contains_key(g)) {
        let a: Vec<&str> = gh.keys().map(String::as_str).collect();
        let b: Vec<&str> = gp.keys().map(String::as_str).collect();
        return Err(Error::GroupMismatch(format!("GH {a:?} vs GP {b:?}")));
    }
    Ok(gh.iter().map(|(g, h)| (g.clone(), gp[g] - h)).collect())
}

/// Mean absolute GU.
pub fn mgu(gu: &GroupValues) -> f64 {
    if gu.is_empty() {
        return 0.0;
    }
    gu.values().map(|v| v.abs()).sum::<f64>() / gu.len() as f64
}

/// Spread between the largest and smallest GU.
pub fn dgu(gu: &GroupValues) -> f64 {
    let max = gu.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = gu.values().copied().fold(f64::INFINITY, f64::min);
    if gu.is_empty() {
        0.0
    } else {
        max - min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub ndcg: f64,
    pub hr: f64,
}

/// Binary-gain NDCG@k and HR@k with the target as the single relevant item.
pub fn accuracy(slates: &[Slate], targets: &[Id], k: usize) -> Result<Accuracy> {
    if slates.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: slates.len(),
            right: targets.len(),
        });
    }
    if slates.is_empty() {
        return Ok(Accuracy { ndcg: 0.0, hr: 0.0 });
    }
    let mut hits = 0usize;
    let mut gain = 0.0;
    for (slate, target) in slates.iter().zip(targets) {
        if let Some(pos) = slate.top(k).iter().position(|i| i == target) {
            hits += 1;
            gain += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let n = slates.len() as f64;
    Ok(Accuracy {
        ndcg: gain / n,
        hr: hits as f64 / n,
    })
}

/// Everything measured at one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub scheme: String,
    pub k: usize,
    pub gh: GroupValues,
    pub gp: GroupValues,
    pub gu: GroupValues,
    pub mgu: f64,
    pub dgu: f64,
    pub ndcg: f64,
    pub hr: f64,
    /// Slates holding fewer than `k` items.
    #[serde(default)]
    pub short_slates: usize,
}

impl FairnessReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("scheme,k,row,group,gh,gp,gu,mgu,dgu,ndcg,hr\n");
        for (g, h) in &self.gh {
            let _ = writeln!(
                out,
                "{},{},group,{},{},{},{},,,,",
                self.scheme, self.k, g, h, self.gp[g], self.gu[g]
            );
        }
        let _ = writeln!(
            out,
            "{},{},summary,,,,,{},{},{},{}",
            self.scheme, self.k, self.mgu, self.dgu, self.ndcg, self.hr
        );
        out
    }
}

/// Reports at every cutoff in `ks`. `histories` supply GH; `targets` are
/// aligned with `slates` for accuracy.
pub fn evaluate<'a>(
    slates: &[Slate],
    histories: impl IntoIterator<Item = &'a [Id]>,
    targets: &[Id],
    scheme: &GroupScheme,
    ks: &[usize],
) -> Result<Vec<FairnessReport>> {
    let gh_values = gh(histories, scheme)?;
    ks.iter()
        .map(|&k| evaluate_with_gh(slates, &gh_values, targets, scheme, k))
        .collect()
}

pub fn evaluate_with_gh(
    slates: &[Slate],
    gh_values: &GroupValues,
    targets: &[Id],
    scheme: &GroupScheme,
    k: usize,
) -> Result<FairnessReport> {
    let gp_values = gp(slates, scheme, k)?;
    let gu = group_unfairness(gh_values, &gp_values)?;
    let acc = accuracy(slates, targets, k)?;
    Ok(FairnessReport {
        scheme: scheme.name().to_string(),
        k,
        mgu: mgu(&gu),
        dgu: dgu(&gu),
        gh: gh_values.clone(),
        gp: gp_values,
        gu,
        ndcg: acc.ndcg,
        hr: acc.hr,
        short_slates: slates.iter().filter(|s| s.items.len() < k).count(),
    })
}

pub fn write_slates(path: &Path, slates: &[Slate]) -> Result<()> {
    let mut buf = Vec::new();
    for s in slates {
        serde_json::to_writer(&mut buf, s)?;
        buf.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_slates(path: &Path) -> Result<Vec<Slate>> {
    crate::dataset::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<Id> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn ab_scheme() -> GroupScheme {
        let mut m = IndexMap::new();
        m.insert("A".to_string(), ids(&["1", "2"]));
        m.insert("B".to_string(), ids(&["3"]));
        GroupScheme::from_members("t", m)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn gh_hand_count() {
        let h = [ids(&["1", "3"]), ids(&["3"])];
        let v = gh(h.iter().map(Vec::as_slice), &ab_scheme()).unwrap();
        assert!(close(v["A"], 1.0 / 3.0));
        assert!(close(v["B"], 2.0 / 3.0));
    }

    #[test]
    fn gh_single_group_and_multi_membership() {
        let mut m = IndexMap::new();
        m.insert("only".to_string(), ids(&["1", "2"]));
        let single = GroupScheme::from_members("s", m);
        let h = [ids(&["1", "2", "9"])];
        assert!(close(gh(h.iter().map(Vec::as_slice), &single).unwrap()["only"], 1.0));

        let mut m = IndexMap::new();
        m.insert("X".to_string(), ids(&["1", "2"]));
        m.insert("Y".to_string(), ids(&["2"]));
        let multi = GroupScheme::from_members("m", m);
        let v = gh(h.iter().map(Vec::as_slice), &multi).unwrap();
        assert!(close(v["X"], 2.0 / 3.0));
        assert!(close(v.values().sum::<f64>(), 1.0));
    }

    #[test]
    fn gh_without_grouped_items_fails() {
        let h = [ids(&["7", "8"])];
        let err = gh(h.iter().map(Vec::as_slice), &ab_scheme()).unwrap_err();
        assert_eq!(err.to_string(), "no grouped interactions");
    }

    #[test]
    fn gp_hand_counts() {
        let s = ab_scheme();
        let v = gp(&[Slate::new("s", ids(&["1", "2"]))], &s, 2).unwrap();
        assert_eq!((v["A"], v["B"]), (1.0, 0.0));

        let slates = [
            Slate::new("a", ids(&["1", "3"])),
            Slate::new("b", ids(&["2", "3"])),
            Slate::new("c", ids(&["3", "1"])),
        ];
        let v = gp(&slates, &s, 1).unwrap();
        assert!(close(v["A"], 2.0 / 3.0));
    }

    #[test]
    fn gu_mgu_dgu_arithmetic() {
        let s = ab_scheme();
        let h = [ids(&["1", "3"]), ids(&["3"])];
        let ghv = gh(h.iter().map(Vec::as_slice), &s).unwrap();
        let gpv = gp(&[Slate::new("s", ids(&["1", "2"]))], &s, 2).unwrap();
        let gu = group_unfairness(&ghv, &gpv).unwrap();
        assert!(close(gu["A"], 2.0 / 3.0));
        assert!(close(gu["A"], -gu["B"]));
        assert!(close(mgu(&gu), 2.0 / 3.0));
        assert!(close(dgu(&gu), 4.0 / 3.0));

        let three: GroupValues = [("A", 0.1), ("B", -0.05), ("C", -0.05)]
            .into_iter()
            .map(|(g, v)| (g.to_string(), v))
            .collect();
        assert!((mgu(&three) - 0.0667).abs() < 1e-4);

        let zero: GroupValues = [("A".to_string(), 0.0)].into_iter().collect();
        assert_eq!(mgu(&zero), 0.0);
        assert_eq!(dgu(&zero), 0.0);
    }

    #[test]
    fn mismatched_groups_rejected() {
        let a: GroupValues = [("A".to_string(), 1.0)].into_iter().collect();
        let b: GroupValues = [("B".to_string(), 1.0)].into_iter().collect();
        assert!(matches!(group_unfairness(&a, &b), Err(Error::GroupMismatch(_))));
    }

    #[test]
    fn accuracy_ranks() {
        let slate = Slate::new("s", ids(&["t", "x", "y", "z", "w"]));
        let a = accuracy(&[slate], &ids(&["t"]), 5).unwrap();
        assert_eq!((a.ndcg, a.hr), (1.0, 1.0));

        let slate = Slate::new("s", ids(&["x", "y", "t", "z", "w"]));
        let a = accuracy(std::slice::from_ref(&slate), &ids(&["t"]), 5).unwrap();
        assert!(close(a.ndcg, 0.5));
        let a = accuracy(std::slice::from_ref(&slate), &ids(&["t"]), 2).unwrap();
        assert_eq!((a.ndcg, a.hr), (0.0, 0.0));

        assert!(matches!(
            accuracy(&[slate], &[], 5),
            Err(Error::LengthMismatch { left: 1, right: 0 })
        ));
    }

    #[test]
    fn short_slates_are_counted() {
        let s = ab_scheme();
        let h = [ids(&["1", "3"])];
        let slates = [Slate::new("a", ids(&["1"])), Slate::new("b", ids(&["3", "2"]))];
        let r = evaluate(&slates, h.iter().map(Vec::as_slice), &ids(&["1", "2"]), &s, &[2]).unwrap();
        assert_eq!(r[0].short_slates, 1);
        assert!(close(r[0].gp["A"], 2.0 / 3.0));
        assert!(r[0].csv().lines().count() == 4);
    }
}
