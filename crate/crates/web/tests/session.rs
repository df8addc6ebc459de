use itemfair_web::{DemoSession, PROFILE_KS};

#[test]
fn profile_shows_bias_only_when_oracles_drift() {
    let biased = DemoSession::new(11, 0.8).unwrap().bias_profile().unwrap();
    assert_eq!(biased.groups.len(), 5);
    assert_eq!(biased.rows.iter().map(|r| r.k).collect::<Vec<_>>(), PROFILE_KS);
    let top = *biased.rows[0].gu.last().unwrap();
    assert!(top > 0.0, "top group GU@1 {top}");
    for row in &biased.rows {
        assert!(row.gu.iter().sum::<f64>().abs() < 1e-9);
    }
    let neutral = DemoSession::new(11, 0.0).unwrap().bias_profile().unwrap();
    assert!(neutral.rows[0].gu.last().unwrap().abs() < top);
}

#[test]
fn zero_alpha_rerank_leaves_slates_alone() {
    let mut s = DemoSession::new(5, 0.8).unwrap();
    let v = s.rerank(0.0).unwrap();
    assert_eq!(v.gp_before, v.gp_after);
    assert_eq!(v.before.len(), v.after.len());
    assert!(v.punishment.iter().all(|u| (-1.0..=1.0).contains(u)));
    let strong = s.rerank(0.1).unwrap();
    assert!(strong.after.last().unwrap().mgu < strong.before.last().unwrap().mgu);
    assert!(s.rerank(-1.0).is_err());
}

#[test]
fn sweep_covers_default_alphas_and_serializes() {
    let s = DemoSession::new(3, 0.8).unwrap();
    let v = s.sweep().unwrap();
    assert_eq!(v.points.len(), 11);
    assert_eq!(v.k, 20);
    let json = serde_json::to_value(&v).unwrap();
    assert!(json["points"][0]["mgu"].is_number());
}
