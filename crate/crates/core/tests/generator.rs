use lvad_core::data::{
    generate_benchmark, generate_dataset, generate_with_clean, BenchmarkConfig, Label, Layout, Split,
};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn same_seed_same_dataset() {
    let cfg = BenchmarkConfig {
        groups: 2,
        executions_per_group: 6,
        ..Default::default()
    };
    assert_eq!(generate_benchmark(&cfg).unwrap(), generate_benchmark(&cfg).unwrap());
    let other = BenchmarkConfig { seed: 1, ..cfg.clone() };
    assert_ne!(generate_benchmark(&cfg).unwrap(), generate_benchmark(&other).unwrap());
}

#[test]
fn anomaly_count_is_exact() {
    let cfg = BenchmarkConfig {
        groups: 5,
        executions_per_group: 40,
        ..Default::default()
    };
    let data = generate_benchmark(&cfg).unwrap();
    assert_eq!(data.len(), 200);
    assert_eq!(data.iter().filter(|e| e.is_anomalous()).count(), 90);
}

#[test]
fn splits_follow_labels() {
    let ds = generate_dataset(&BenchmarkConfig::default()).unwrap();
    for (entry, e) in ds.entries() {
        assert_eq!(entry.split == Split::Test, e.label == Label::Anomalous);
        assert!(e.len() >= 120 && e.len() <= 160);
        assert_eq!(e.layout, Layout::Raw17);
    }
    for g in 0..8 {
        let group = format!("g{g:02}");
        let val = ds.split(Split::Val).filter(|e| e.group == group).count();
        let train = ds.split(Split::Train).filter(|e| e.group == group).count();
        assert_eq!(val, ((train + val) as f64 * 0.2).round() as usize);
    }
}

#[test]
fn every_family_is_represented() {
    let ds = generate_benchmark(&BenchmarkConfig::default()).unwrap();
    for fam in lvad_core::data::AnomalyFamily::ALL {
        let count = ds.iter().filter(|e| e.anomaly_type.as_deref() == Some(fam.name())).count();
        assert!(count >= 20, "{fam}: {count}");
    }
}

#[test]
fn force_bump_shifts_the_channel_mean() {
    let cfg = BenchmarkConfig {
        families: vec![lvad_core::data::AnomalyFamily::ForceBump],
        ..Default::default()
    };
    let gen = generate_with_clean(&cfg).unwrap();
    let (mut hits, mut total) = (0, 0);
    for g in gen.iter().filter(|g| g.execution.is_anomalous()) {
        let e = &g.execution;
        let onset = e.onset.unwrap();
        let channel = (1..4)
            .max_by(|&a, &b| {
                let d = |c: usize| {
                    (0..e.len())
                        .map(|t| (e.signals.get(t, c) - g.clean.get(t, c)).abs())
                        .fold(0.0, f64::max)
                };
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        let sigma = std(&g.clean.column_values(channel));
        let col = e.signals.column_values(channel);
        let w = 5.min(onset).max(1);
        let pre = mean(&col[onset.saturating_sub(w)..onset.max(1)]);
        let post = mean(&col[onset..(onset + 5).min(col.len())]);
        total += 1;
        if post - pre >= 3.0 * sigma {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.95 * total as f64, "{hits}/{total}");
}

fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let va = std(a).powi(2) / a.len() as f64;
    let vb = std(b).powi(2) / b.len() as f64;
    (ma - mb).abs() / (va + vb).sqrt().max(1e-12)
}

/// Post-onset samples of some channel differ from the anomaly-free
/// counterpart of the same execution (brute-force search over channels).
#[test]
fn every_anomaly_is_visible_in_some_channel() {
    let gen = generate_with_clean(&BenchmarkConfig::default()).unwrap();
    for g in gen.iter().filter(|g| g.execution.is_anomalous()) {
        let e = &g.execution;
        let onset = e.onset.unwrap();
        let shifted = (0..e.dim()).any(|c| {
            let post: Vec<f64> = (onset..e.len()).map(|t| e.signals.get(t, c)).collect();
            let base: Vec<f64> = (onset..e.len()).map(|t| g.clean.get(t, c)).collect();
            let diff: Vec<f64> = post.iter().zip(&base).map(|(a, b)| a - b).collect();
            diff.iter().any(|d| d.abs() > 1e-9) && (welch_t(&post, &base) > 2.0 || diff.iter().map(|d| d.abs()).fold(0.0, f64::max) > 4.0 * std(&base).max(1e-3))
        });
        assert!(shifted, "{} ({:?}) shows no shift", e.id, e.anomaly_type);
    }
}

#[test]
fn features_layout_has_four_channels() {
    let cfg = BenchmarkConfig {
        groups: 2,
        executions_per_group: 4,
        layout: Layout::Features4,
        ..Default::default()
    };
    for e in generate_benchmark(&cfg).unwrap() {
        assert_eq!(e.dim(), 4);
        let acc = e.signals.column_values(2);
        assert!(acc.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        BenchmarkConfig { anomaly_fraction: 1.5, ..Default::default() },
        BenchmarkConfig { groups: 1, ..Default::default() },
        BenchmarkConfig { min_len: 200, max_len: 100, ..Default::default() },
        BenchmarkConfig { families: vec![], ..Default::default() },
    ] {
        assert!(generate_benchmark(&cfg).is_err());
    }
}
