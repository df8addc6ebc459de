use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use itemfair::dataset::{
    build_sequences, draw_training_sample, filter_rare_genres, split_periods, Event, InteractionLog, ItemMeta, Split,
};
use itemfair::grouping::{genre_scheme, popularity_scheme, PopularityBasis};
use proptest::prelude::*;

const GENRES: [&str; 4] = ["Action", "Comedy", "Drama", "Horror"];

prop_compose! {
    fn arb_log()(
        n_items in 1usize..15,
        n_users in 1usize..6,
    )(
        genres in prop::collection::vec(prop::collection::vec(0usize..4, 0..3), n_items),
        raw in prop::collection::vec((0..n_users, 0..n_items, 0u64..40), 10..120),
    ) -> InteractionLog {
        let items: IndexMap<String, ItemMeta> = genres
            .iter()
            .enumerate()
            .map(|(i, gs)| (format!("m{i:02}"), ItemMeta::new(format!("M{i}"), gs.iter().map(|&g| GENRES[g]))))
            .collect();
        let events = raw
            .into_iter()
            .map(|(u, i, t)| Event { user: format!("u{u}"), item: format!("m{i:02}"), timestamp: t })
            .collect();
        InteractionLog::new(events, items).unwrap()
    }
}

fn key(e: &Event) -> (u64, &str, &str) {
    (e.timestamp, e.user.as_str(), e.item.as_str())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn periods_are_ordered_balanced_and_complete(log in arb_log()) {
        let split = split_periods(&log).unwrap();
        let sizes: Vec<usize> = split.periods().iter().map(Vec::len).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), log.num_events());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        let flat: Vec<&Event> = split.periods().iter().flatten().collect();
        prop_assert!(flat.windows(2).all(|w| key(w[0]) <= key(w[1])));
        let mut a: Vec<_> = log.events().iter().map(key).collect();
        let mut b: Vec<_> = flat.iter().map(|e| key(e)).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
        prop_assert_eq!(
            split.count(Split::Train) + split.count(Split::Validation) + split.count(Split::Test),
            log.num_events()
        );
    }

    #[test]
    fn sequences_only_look_backwards(log in arb_log(), max_len in 1usize..6) {
        let split = split_periods(&log).unwrap();
        let seqs = build_sequences(&split, max_len);
        let mut timeline: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut expected = Vec::new();
        for (p, period) in split.periods().iter().enumerate() {
            for e in period {
                let t = timeline.entry(e.user.as_str()).or_default();
                if !t.is_empty() {
                    let start = t.len().saturating_sub(max_len);
                    expected.push((e.user.clone(), t[start..].join(","), e.item.clone(), Split::of_period(p)));
                }
                t.push(e.item.as_str());
            }
        }
        prop_assert_eq!(seqs.len(), expected.len());
        let mut ids = HashSet::new();
        for (s, (user, hist, target, which)) in seqs.iter().zip(expected) {
            prop_assert!(!s.history.is_empty() && s.history.len() <= max_len);
            prop_assert_eq!(&s.user_id, &user);
            prop_assert_eq!(s.history.join(","), hist);
            prop_assert_eq!(&s.target, &target);
            prop_assert_eq!(s.split, which);
            prop_assert!(ids.insert(s.id.clone()));
        }
    }

    #[test]
    fn training_draw_is_a_seeded_subset(log in arb_log(), size in 1usize..50, seed in any::<u64>()) {
        let split = split_periods(&log).unwrap();
        let pool: Vec<_> = build_sequences(&split, 10).into_iter().filter(|s| s.split == Split::Train).collect();
        let draw = draw_training_sample(&pool, size, seed);
        prop_assert_eq!(draw.sequences.len(), size.min(pool.len()));
        let pool_ids: Vec<&str> = pool.iter().map(|s| s.id.as_str()).collect();
        let mut last = None;
        for s in &draw.sequences {
            let pos = pool_ids.iter().position(|id| *id == s.id);
            prop_assert!(pos.is_some());
            prop_assert!(last < pos);
            last = pos;
        }
        prop_assert_eq!(draw.sequences, draw_training_sample(&pool, size, seed).sequences);
    }

    #[test]
    fn popularity_groups_partition_by_count(log in arb_log(), n_groups in 1usize..6) {
        let Ok(scheme) = popularity_scheme(&log, PopularityBasis::All, n_groups) else {
            prop_assert!(log.num_items() < n_groups);
            return Ok(());
        };
        let counts = log.item_counts(log.events());
        let members = scheme.members();
        let sizes: Vec<usize> = members.values().map(Vec::len).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), log.num_items());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for id in log.items().keys() {
            prop_assert_eq!(scheme.groups_of(id).len(), 1);
        }
        let ranges: Vec<(u64, u64)> = members
            .values()
            .filter(|m| !m.is_empty())
            .map(|m| {
                let c: Vec<u64> = m.iter().map(|id| counts[id.as_str()]).collect();
                (*c.iter().min().unwrap(), *c.iter().max().unwrap())
            })
            .collect();
        prop_assert!(ranges.windows(2).all(|w| w[0].1 <= w[1].0));
    }

    #[test]
    fn genre_groups_cover_tagged_items(log in arb_log()) {
        let scheme = genre_scheme(&log);
        for (id, meta) in log.items() {
            let mut mine: Vec<&str> = scheme.groups_of(id).iter().map(|&g| scheme.groups()[g].as_str()).collect();
            mine.sort_unstable();
            let mut want: Vec<&str> = meta.genres.iter().map(String::as_str).collect();
            want.sort_unstable();
            prop_assert_eq!(mine, want);
        }
    }

    #[test]
    fn genre_filter_keeps_exactly_qualifying_items(log in arb_log(), min in 0u64..20) {
        let kept = filter_rare_genres(&log, min);
        let mut genre_counts: HashMap<&str, u64> = HashMap::new();
        for e in log.events() {
            for g in &log.items()[&e.item].genres {
                *genre_counts.entry(g).or_default() += 1;
            }
        }
        for (id, meta) in log.items() {
            let qualifies = min == 0 || meta.genres.iter().any(|g| genre_counts.get(g.as_str()).copied().unwrap_or(0) >= min);
            prop_assert_eq!(kept.items().contains_key(id), qualifies);
        }
        prop_assert!(kept.events().iter().all(|e| kept.items().contains_key(&e.item)));
        let dropped = log.events().iter().filter(|e| !kept.items().contains_key(&e.item)).count();
        prop_assert_eq!(kept.num_events() + dropped, log.num_events());
    }
}
