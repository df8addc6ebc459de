mod common;

use common::{naive_dgu, naive_mgu, rng, to_f64, MetricCase};
use itemfair::metrics::{accuracy, dgu, gh, gp, group_unfairness, mgu, Slate};
use itemfair::Error;
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_naive_counting(seed in any::<u64>()) {
        let case = MetricCase::random(&mut rng(seed));
        let scheme = case.scheme();
        let got_gh = gh(case.histories.iter().map(Vec::as_slice), &scheme);
        let got_gp = gp(&case.slates, &scheme, case.k);
        match (case.naive_gh(), case.naive_gp(case.k)) {
            (Some(h), Some(p)) => {
                let (got_gh, got_gp) = (got_gh.unwrap(), got_gp.unwrap());
                let gu: Vec<_> = p.iter().zip(&h).map(|(a, b)| a - b).collect();
                let got_gu = group_unfairness(&got_gh, &got_gp).unwrap();
                for (i, label) in case.labels.iter().enumerate() {
                    prop_assert!(close(got_gh[label], to_f64(h[i])));
                    prop_assert!(close(got_gp[label], to_f64(p[i])));
                    prop_assert!(close(got_gu[label], to_f64(gu[i])));
                }
                prop_assert!(close(mgu(&got_gu), to_f64(naive_mgu(&gu))));
                prop_assert!(close(dgu(&got_gu), to_f64(naive_dgu(&gu))));
            }
            (h, p) => {
                prop_assert_eq!(h.is_none(), matches!(got_gh, Err(Error::NoGroupedInteractions)));
                prop_assert_eq!(p.is_none(), matches!(got_gp, Err(Error::NoGroupedInteractions)));
            }
        }
    }

    #[test]
    fn zero_sum_and_ordering(seed in any::<u64>()) {
        let case = MetricCase::random(&mut rng(seed));
        let scheme = case.scheme();
        let (Ok(h), Ok(p)) = (
            gh(case.histories.iter().map(Vec::as_slice), &scheme),
            gp(&case.slates, &scheme, case.k),
        ) else {
            return Ok(());
        };
        let gu = group_unfairness(&h, &p).unwrap();
        let (m, d) = (mgu(&gu), dgu(&gu));
        prop_assert!(gu.values().sum::<f64>().abs() < 1e-9);
        prop_assert!(m >= 0.0);
        prop_assert!(m <= d + 1e-12);
        prop_assert!(d <= gu.len() as f64 * m + 1e-12);
    }

    #[test]
    fn slates_shaped_like_histories_are_calibrated(seed in any::<u64>()) {
        let case = MetricCase::random(&mut rng(seed));
        let scheme = case.scheme();
        let Ok(h) = gh(case.histories.iter().map(Vec::as_slice), &scheme) else {
            return Ok(());
        };
        let slates: Vec<Slate> = case
            .histories
            .iter()
            .enumerate()
            .map(|(i, l)| Slate::new(format!("s{i}"), l.clone()))
            .collect();
        let p = gp(&slates, &scheme, 10).unwrap();
        let gu = group_unfairness(&h, &p).unwrap();
        prop_assert!(gu.values().all(|v| v.abs() < 1e-12));
        prop_assert!(mgu(&gu) < 1e-12 && dgu(&gu) < 1e-12);
    }

    #[test]
    fn gp_ignores_items_past_k(seed in any::<u64>(), extra in 1usize..5) {
        let case = MetricCase::random(&mut rng(seed));
        let scheme = case.scheme();
        let padded: Vec<Slate> = case
            .slates
            .iter()
            .map(|s| {
                let mut items = s.items.clone();
                items.resize(case.k, common::item(0));
                items.extend((0..extra).map(|i| common::item(i % case.n_items)));
                Slate::new(s.sequence_ref.clone(), items)
            })
            .collect();
        let trimmed: Vec<Slate> = padded
            .iter()
            .map(|s| Slate::new(s.sequence_ref.clone(), s.items[..case.k].to_vec()))
            .collect();
        prop_assert_eq!(gp(&padded, &scheme, case.k).ok(), gp(&trimmed, &scheme, case.k).ok());
    }

    #[test]
    fn single_hit_scores_by_rank(len in 1usize..30, rank in 0usize..30, k in 1usize..30) {
        let rank = rank % len;
        let items: Vec<String> = (0..len).map(|i| format!("x{i}")).collect();
        let target = items[rank].clone();
        let a = accuracy(&[Slate::new("s", items)], &[target], k).unwrap();
        if rank < k {
            prop_assert!((a.ndcg - 1.0 / ((rank + 2) as f64).log2()).abs() < 1e-12);
            prop_assert_eq!(a.hr, 1.0);
        } else {
            prop_assert_eq!(a.ndcg, 0.0);
            prop_assert_eq!(a.hr, 0.0);
        }
        prop_assert!(a.ndcg <= a.hr);
    }
}
