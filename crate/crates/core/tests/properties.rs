use proptest::prelude::*;
use reprstruct::io::{decode_reps, encode_reps};
use reprstruct::synth::oracle_measures;
use reprstruct::{
    analyze, discretize, fit_bins, jsd, spearman, AnalyzeOptions, LabelKind, LabelSet, RepresentationBatch, Weighting,
};

/// (rows, dims, values on a small integer grid, label ids)
fn instance(
    max_rows: usize,
    max_dims: usize,
    max_labels: u32,
) -> impl Strategy<Value = (usize, usize, Vec<f32>, Vec<u32>)> {
    (1..=max_rows, 1..=max_dims, 1..=max_labels).prop_flat_map(|(m, d, k)| {
        (
            Just(m),
            Just(d),
            prop::collection::vec((-8i32..8).prop_map(|v| v as f32), m * d),
            prop::collection::vec(0..k, m),
        )
    })
}

fn options() -> impl Strategy<Value = AnalyzeOptions> {
    (any::<bool>(), 1usize..4, any::<bool>()).prop_map(|(corrected, min_count, freq)| AnalyzeOptions {
        corrected,
        min_count,
        weighting: if freq {
            Weighting::Frequency
        } else {
            Weighting::Unweighted
        },
        ..Default::default()
    })
}

fn bins() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![2usize, 3, 4, 8, 16])
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn histogram_counts_are_conserved((m, d, values, _) in instance(60, 5, 1), n in bins()) {
        let batch = RepresentationBatch::new(m, d, values).unwrap();
        let spec = fit_bins(&batch, n).unwrap();
        let hist = discretize(&batch, &spec).unwrap();
        for dim in 0..d {
            prop_assert_eq!(hist.counts(dim).iter().sum::<u64>(), m as u64);
            prop_assert!(hist.occupied(dim) <= n.min(m));
            prop_assert!(hist.occupied(dim) >= 1);
        }
    }

    #[test]
    fn analyze_agrees_with_oracle((m, d, values, ids) in instance(48, 3, 6), n in bins(), opts in options()) {
        let batch = RepresentationBatch::new(m, d, values).unwrap();
        let spec = fit_bins(&batch, n).unwrap();
        let sets = [LabelSet::from_ids(LabelKind::Token, &ids).unwrap()];
        prop_assert_eq!(analyze(&batch, &spec, &sets, &opts).unwrap(), oracle_measures(&batch, &spec, &sets, &opts).unwrap());
    }

    #[test]
    fn measures_are_bounded_and_regularity_is_exact((m, d, values, ids) in instance(64, 4, 8), n in bins()) {
        let batch = RepresentationBatch::new(m, d, values).unwrap();
        let spec = fit_bins(&batch, n).unwrap();
        let sets = [LabelSet::from_ids(LabelKind::Token, &ids).unwrap()];
        let opts = AnalyzeOptions { corrected: false, min_count: 1, ..Default::default() };
        let report = analyze(&batch, &spec, &sets, &opts).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.information));
        let set = report.set("token").unwrap();
        prop_assert!((0.0..=1.0).contains(&set.variation));
        prop_assert_eq!(set.regularity, report.information - set.variation);
        if let Some(dis) = set.disentanglement {
            prop_assert!((0.0..=1.0).contains(&dis));
        }
        for l in &set.per_label {
            prop_assert!((0.0..=1.0).contains(&l.variation));
        }
    }

    #[test]
    fn positive_affine_maps_leave_measures_unchanged(
        (m, d, values, ids) in instance(64, 3, 5),
        n in bins(),
        shift in -1000i32..1000,
        exp in -3i32..6,
    ) {
        let batch = RepresentationBatch::new(m, d, values).unwrap();
        let scale = 2f32.powi(exp);
        let moved = batch.map(|_, x| x * scale + shift as f32).unwrap();
        let sets = [LabelSet::from_ids(LabelKind::Token, &ids).unwrap()];
        let opts = AnalyzeOptions { min_count: 1, ..Default::default() };
        let a = analyze(&batch, &fit_bins(&batch, n).unwrap(), &sets, &opts).unwrap();
        let b = analyze(&moved, &fit_bins(&moved, n).unwrap(), &sets, &opts).unwrap();
        for ((ka, va), (kb, vb)) in a.scalars().into_iter().zip(b.scalars()) {
            prop_assert_eq!(ka, kb);
            match (va, vb) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9, "{} vs {}", x, y),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn row_order_does_not_matter((m, d, values, ids) in instance(40, 3, 5), n in bins(), seed in any::<u64>()) {
        let batch = RepresentationBatch::new(m, d, values).unwrap();
        let mut order: Vec<usize> = (0..m).collect();
        let mut s = seed | 1;
        for i in (1..m).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let permuted = batch.select_rows(&order).unwrap();
        let permuted_ids: Vec<u32> = order.iter().map(|&i| ids[i]).collect();
        let opts = AnalyzeOptions { min_count: 1, ..Default::default() };
        let a = analyze(&batch, &fit_bins(&batch, n).unwrap(), &[LabelSet::from_ids(LabelKind::Token, &ids).unwrap()], &opts).unwrap();
        let b = analyze(&permuted, &fit_bins(&permuted, n).unwrap(), &[LabelSet::from_ids(LabelKind::Token, &permuted_ids).unwrap()], &opts).unwrap();
        for ((ka, va), (kb, vb)) in a.scalars().into_iter().zip(b.scalars()) {
            prop_assert_eq!(ka, kb);
            match (va, vb) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12, "{} vs {}", x, y),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
        let by_label = |r: &reprstruct::MeasureReport| {
            let mut v = r.set("token").unwrap().per_label.clone();
            v.sort_by(|x, y| x.label.cmp(&y.label));
            v
        };
        prop_assert_eq!(by_label(&a), by_label(&b));
    }

    #[test]
    fn jsd_is_symmetric_and_bounded(raw in prop::collection::vec((0u32..5, 0u32..5), 1..12)) {
        let (a, b): (Vec<u32>, Vec<u32>) = raw.into_iter().unzip();
        prop_assume!(a.iter().sum::<u32>() > 0 && b.iter().sum::<u32>() > 0);
        let norm = |v: &[u32]| {
            let s: u32 = v.iter().sum();
            v.iter().map(|&x| x as f64 / s as f64).collect::<Vec<_>>()
        };
        let (p, q) = (norm(&a), norm(&b));
        let pq = jsd(&p, &q).unwrap();
        prop_assert!((pq - jsd(&q, &p).unwrap()).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!(jsd(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn spearman_is_symmetric_and_rank_based(pairs in prop::collection::vec((-20i32..20, -20i32..20), 3..30)) {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let Ok(r) = spearman(&xs, &ys) else {
            return Ok(());
        };
        prop_assert!((-1.0..=1.0).contains(&r.rho));
        prop_assert!((0.0..=1.0).contains(&r.p_two_sided));
        let swapped = spearman(&ys, &xs).unwrap();
        prop_assert_eq!(r.rho, swapped.rho);
        let exp_xs: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        prop_assert!((spearman(&exp_xs, &ys).unwrap().rho - r.rho).abs() <= 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        prop_assert!((spearman(&neg, &ys).unwrap().rho + r.rho).abs() <= 1e-12);
    }

    #[test]
    fn hrep_round_trip_is_bit_exact(rows in 1usize..20, dims in 1usize..20, seed in prop::collection::vec(any::<u32>(), 400)) {
        let values: Vec<f32> = seed
            .iter()
            .map(|&b| f32::from_bits(b))
            .map(|v| if v.is_finite() { v } else { 0.5 })
            .take(rows * dims)
            .collect();
        let batch = RepresentationBatch::new(rows, dims, values).unwrap();
        let bytes = encode_reps(&batch);
        prop_assert_eq!(bytes.len(), 18 + rows * dims * 4);
        let back = decode_reps(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(encode_reps(&back), bytes);
    }
}
