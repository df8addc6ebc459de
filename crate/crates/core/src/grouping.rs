//! Item group assignments: popularity quantiles, genres, or custom schemes
//! loaded from JSON.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_periods, InteractionLog, Split};
use crate::{Error, Id, Result};

pub const DEFAULT_POPULARITY_GROUPS: usize = 5;

/// A named assignment of items to zero or more groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScheme {
    name: String,
    groups: Vec<String>,
    membership: HashMap<Id, Vec<usize>>,
}

impl GroupScheme {
    /// Builds a scheme from `label -> items` lists. Labels keep the given
    /// order; an item listed under several labels belongs to all of them.
    pub fn from_members(name: impl Into<String>, members: IndexMap<String, Vec<Id>>) -> Self {
        let groups: Vec<String> = members.keys().cloned().collect();
        let mut membership: HashMap<Id, Vec<usize>> = HashMap::new();
        for (g, (_, items)) in members.into_iter().enumerate() {
            for item in items {
                let entry = membership.entry(item).or_default();
                if !entry.contains(&g) {
                    entry.push(g);
                }
            }
        }
        for v in membership.values_mut() {
            v.sort_unstable();
        }
        Self {
            name: name.into(),
            groups,
            membership,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == label)
    }

    /// Indices of the groups `item` belongs to; empty for unknown items.
    pub fn groups_of(&self, item: &str) -> &[usize] {
        self.membership.get(item).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The identity function: 1 iff `item` belongs to `group`. Unknown items
    /// and unknown labels yield 0.
    pub fn membership(&self, item: &str, group: &str) -> u8 {
        match self.group_index(group) {
            Some(g) => u8::from(self.groups_of(item).contains(&g)),
            None => 0,
        }
    }

    /// Items per group, each list sorted by item id.
    pub fn members(&self) -> IndexMap<String, Vec<Id>> {
        let mut out: IndexMap<String, Vec<Id>> = self.groups.iter().map(|g| (g.clone(), Vec::new())).collect();
        for (item, gs) in &self.membership {
            for &g in gs {
                out[g].push(item.clone());
            }
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }

    pub fn to_json(&self) -> SchemeFile {
        SchemeFile {
            name: self.name.clone(),
            groups: self.groups.clone(),
            members: self.members(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SchemeFile = serde_json::from_str(&text)?;
        file.into_scheme()
    }
}

/// On-disk form of a scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeFile {
    pub name: String,
    pub groups: Vec<String>,
    pub members: IndexMap<String, Vec<Id>>,
}

impl SchemeFile {
    pub fn into_scheme(self) -> Result<GroupScheme> {
        let mut ordered = IndexMap::new();
        for g in &self.groups {
            ordered.insert(g.clone(), Vec::new());
        }
        for (label, items) in self.members {
            match ordered.get_mut(&label) {
                Some(slot) => *slot = items,
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "scheme `{}` lists members for undeclared group `{label}`",
                        self.name
                    )))
                }
            }
        }
        Ok(GroupScheme::from_members(self.name, ordered))
    }
}

/// Which events popularity is counted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopularityBasis {
    /// Training periods only, so test-time popularity never leaks in.
    #[default]
    Train,
    All,
}

/// Popularity groups over `log`: items ascending by interaction count (ties
/// by item id) cut into `n_groups` equal-size buckets, the lowest-ranked
/// buckets absorbing the remainder. Label "0" is the least popular.
pub fn popularity_scheme(log: &InteractionLog, basis: PopularityBasis, n_groups: usize) -> Result<GroupScheme> {
    let counts = match basis {
        PopularityBasis::All => log.item_counts(log.events()),
        PopularityBasis::Train => {
            let split = split_periods(log)?;
            log.item_counts(split.events_in(Split::Train))
        }
    };
    popularity_from_counts(counts.iter().map(|(k, v)| (*k, *v)), n_groups)
}

/// Popularity grouping over explicit `(item, count)` pairs.
pub fn popularity_from_counts<'a>(
    counts: impl IntoIterator<Item = (&'a str, u64)>,
    n_groups: usize,
) -> Result<GroupScheme> {
    let mut ranked: Vec<(u64, &str)> = counts.into_iter().map(|(k, c)| (c, k)).collect();
    if n_groups == 0 || ranked.len() < n_groups {
        return Err(Error::TooFewItems {
            items: ranked.len(),
            groups: n_groups,
        });
    }
    ranked.sort_unstable();

    let base = ranked.len() / n_groups;
    let extra = ranked.len() % n_groups;
    let mut members = IndexMap::new();
    let mut rest = ranked.into_iter();
    for g in 0..n_groups {
        let size = base + usize::from(g < extra);
        let items: Vec<Id> = rest.by_ref().take(size).map(|(_, id)| id.to_string()).collect();
        members.insert(g.to_string(), items);
    }
    Ok(GroupScheme::from_members("popularity", members))
}

/// One group per distinct genre label (sorted); items join every genre they
/// list and genre-less items join none.
pub fn genre_scheme(log: &InteractionLog) -> GroupScheme {
    let labels: BTreeSet<&str> = log
        .items()
        .values()
        .flat_map(|m| m.genres.iter().map(String::as_str))
        .collect();
    let mut members: IndexMap<String, Vec<Id>> = labels.iter().map(|g| (g.to_string(), Vec::new())).collect();
    for (id, meta) in log.items() {
        for g in &meta.genres {
            members[g.as_str()].push(id.clone());
        }
    }
    GroupScheme::from_members("genre", members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Event, ItemMeta};

    fn log_with_counts(counts: &[(&str, u64)], genres: &[(&str, &str)]) -> InteractionLog {
        let mut events = Vec::new();
        let mut t = 0;
        for (item, c) in counts {
            for _ in 0..*c {
                events.push(Event {
                    user: "u".into(),
                    item: item.to_string(),
                    timestamp: t,
                });
                t += 1;
            }
        }
        let items = genres
            .iter()
            .map(|(id, g)| (id.to_string(), ItemMeta::new(*id, g.split('|'))))
            .collect();
        InteractionLog::new(events, items).unwrap()
    }

    #[test]
    fn ten_items_five_groups() {
        let names: Vec<String> = (1..=10).map(|i| format!("c{i:02}")).collect();
        let counts: Vec<(&str, u64)> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i as u64 + 1))
            .collect();
        let s = popularity_from_counts(counts, 5).unwrap();
        let m = s.members();
        assert_eq!(m["0"], vec!["c01", "c02"]);
        assert_eq!(m["4"], vec!["c09", "c10"]);
        assert_eq!(s.groups(), &["0", "1", "2", "3", "4"]);
    }

    #[test]
    fn remainder_goes_to_least_popular() {
        let names: Vec<String> = (0..11).map(|i| format!("i{i:02}")).collect();
        let s = popularity_from_counts(names.iter().map(|n| (n.as_str(), 7)), 5).unwrap();
        let sizes: Vec<usize> = s.members().values().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
        // identical counts: order is purely by id
        assert_eq!(s.members()["0"], vec!["i00", "i01", "i02"]);
    }

    #[test]
    fn too_few_items() {
        assert!(matches!(
            popularity_from_counts([("a", 1), ("b", 2)], 5),
            Err(Error::TooFewItems { items: 2, groups: 5 })
        ));
    }

    #[test]
    fn popularity_from_log_counts_training_by_default() {
        // 12 events: "late" only appears in the last two (test) periods.
        let log = log_with_counts(
            &[("early", 10), ("late", 2)],
            &[("early", "X"), ("late", "X"), ("never", "X")],
        );
        let train = popularity_scheme(&log, PopularityBasis::Train, 3).unwrap();
        assert_eq!(train.members()["0"], vec!["late"]);
        assert_eq!(train.members()["1"], vec!["never"]);
        let all = popularity_scheme(&log, PopularityBasis::All, 3).unwrap();
        assert_eq!(all.members()["0"], vec!["never"]);
        assert_eq!(all.members()["1"], vec!["late"]);
    }

    #[test]
    fn genre_membership() {
        let log = log_with_counts(&[("a", 1)], &[("a", "Action|Comedy"), ("b", "Comedy"), ("c", "")]);
        let s = genre_scheme(&log);
        assert_eq!(s.groups(), &["Action", "Comedy"]);
        assert_eq!(s.membership("a", "Action"), 1);
        assert_eq!(s.membership("a", "Comedy"), 1);
        assert_eq!(s.membership("b", "Action"), 0);
        assert!(s.groups_of("c").is_empty());
        assert_eq!(s.membership("unknown", "Action"), 0);
    }

    #[test]
    fn single_genre_log() {
        let log = log_with_counts(&[], &[("a", "Drama"), ("b", "Drama"), ("c", "")]);
        let s = genre_scheme(&log);
        assert_eq!(s.num_groups(), 1);
        assert_eq!(s.members()["Drama"], vec!["a", "b"]);
    }

    #[test]
    fn json_round_trip_and_undeclared_group() {
        let log = log_with_counts(&[], &[("a", "X|Y"), ("b", "Y")]);
        let s = genre_scheme(&log);
        let back = s.to_json().into_scheme().unwrap();
        assert_eq!(back, s);

        let mut bad = s.to_json();
        bad.members.insert("Z".into(), vec!["a".into()]);
        assert!(bad.into_scheme().is_err());
    }
}
