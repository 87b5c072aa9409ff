use carets::data::{
    apply_scaler, build_windows, fit_feature_scaler, fit_scaler, invert_scaler, make_deviation_targets,
    make_folds, make_trend_labels, window_count, SeriesRecord,
};
use carets::heads::{fuse_carets1, fuse_carets2, fuse_carets3, trend_decide, trend_softmax};
use carets::loss::{clamp_state, task_weight, total_loss, Arch, TaskLosses, UncertaintyState};
use carets::synthetic::{generate, SyntheticConfig};
use proptest::prelude::*;

fn series(len: usize, seed: u64) -> Vec<SeriesRecord> {
    generate(&SyntheticConfig {
        len,
        seed,
        ..SyntheticConfig::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_count_formula(len in 16usize..300, n_lags in 1usize..20, horizon in 1usize..10, seed in 0u64..1000) {
        prop_assume!(len >= n_lags + horizon);
        let s = series(len, seed);
        let scaler = fit_feature_scaler(&s).unwrap();
        let w = build_windows(&s, n_lags, horizon, &scaler).unwrap();
        prop_assert_eq!(w.len(), len - n_lags - horizon + 1);
        prop_assert_eq!(w.len(), window_count(len, n_lags, horizon));
        for sample in &w {
            prop_assert_eq!(sample.features.len(), n_lags + 3);
            prop_assert_eq!(sample.x_n, *sample.features.last().unwrap());
        }
    }

    #[test]
    fn deviation_targets_are_consistent(y in prop::collection::vec(-5.0..5.0f64, 1..12), x_n in -5.0..5.0f64) {
        let d = make_deviation_targets(&y, x_n);
        let t = make_trend_labels(&y, x_n);
        for k in 0..y.len() {
            prop_assert_eq!(d.up[k] * d.down[k], 0.0);
            prop_assert!(d.up[k] >= 0.0 && d.down[k] >= 0.0);
            prop_assert_eq!(d.abs[k], d.up[k] + d.down[k]);
            prop_assert_eq!(t[k] == 1, y[k] >= x_n);
        }
    }

    #[test]
    fn folds_partition_the_pool(pool in 10usize..2000, folds in 2usize..12, seed in 0u64..10_000) {
        prop_assume!(pool >= folds);
        let a = make_folds(pool, 5, folds, seed).unwrap();
        prop_assert_eq!(&a, &make_folds(pool, 5, folds, seed).unwrap());
        let mut count = vec![0; pool];
        let sizes: Vec<usize> = a.iter().map(|f| f.val_indices.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in &a {
            prop_assert_eq!(f.train_indices.len() + f.val_indices.len(), pool);
            for i in &f.val_indices {
                count[*i] += 1;
            }
        }
        prop_assert!(count.iter().all(|c| *c == 1));
    }

    #[test]
    fn scaler_round_trip(values in prop::collection::vec(-1e4..1e4f64, 2..50)) {
        let params = fit_scaler(&[("value", &values)]).unwrap();
        for v in &values {
            let scaled = apply_scaler(&[*v], &params).unwrap();
            prop_assert!((0.0..=1.0).contains(&scaled[0]));
            let back = invert_scaler(&scaled, &params).unwrap()[0];
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn fusion_rules(
        x_n in -1.0..2.0f64,
        p in prop::collection::vec(0.001..0.999f64, 6),
        up in prop::collection::vec(0.0..1.0f64, 6),
        down in prop::collection::vec(0.0..1.0f64, 6),
    ) {
        let d: Vec<i8> = p.iter().map(|v| trend_decide(*v)).collect();
        let y1 = fuse_carets1(x_n, &d, &up).unwrap();
        let y2 = fuse_carets2(x_n, &d, &up, &down).unwrap();
        let y3 = fuse_carets3(x_n, &p, &up, &down).unwrap();
        for k in 0..6 {
            prop_assert!(((y1[k] - x_n).abs() - up[k]).abs() <= 4.0 * f64::EPSILON);
            let selected = if d[k] == 1 { up[k] } else { down[k] };
            let diff = y2[k] - x_n;
            prop_assert!(diff == 0.0 || diff.signum() == f64::from(d[k]) || selected == 0.0);
            prop_assert!(y3[k] >= x_n - down[k] - 1e-15 && y3[k] <= x_n + up[k] + 1e-15);
        }
    }

    #[test]
    fn softmax_pairs_are_normalised(a in -1e3..1e3f64, b in -1e3..1e3f64) {
        let (u, d) = trend_softmax(a, b);
        prop_assert!((u + d - 1.0).abs() <= 1e-12);
        prop_assert_eq!(u >= d, a >= b);
    }

    #[test]
    fn total_loss_is_monotone_in_each_task(
        l in prop::array::uniform3(0.0..10.0f64),
        s in prop::array::uniform3(-10.0..10.0f64),
        bump in 1e-3..1.0f64,
        task in 0usize..3,
    ) {
        let state = UncertaintyState { log_var_ca: s[0], log_var_de: s[1], log_var_op: s[2] };
        let base = TaskLosses { ca: l[0], de: l[1], op: l[2] };
        let mut more = base;
        match task {
            0 => more.ca += bump,
            1 => more.de += bump,
            _ => more.op += bump,
        }
        let a = total_loss(&base, &state, Arch::A, 0.01).unwrap();
        let b = total_loss(&more, &state, Arch::A, 0.01).unwrap();
        prop_assert!(b.total > a.total);
        prop_assert!((a.recompute(&state) - a.total).abs() <= 1e-12 * a.total.abs().max(1.0));
    }

    #[test]
    fn clamp_keeps_weights_positive_and_bounded(s in prop::array::uniform3(-100.0..100.0f64)) {
        let state = clamp_state(UncertaintyState { log_var_ca: s[0], log_var_de: s[1], log_var_op: s[2] });
        prop_assert!(state.within_bounds());
        for v in state.as_array() {
            prop_assert!(task_weight(v) > 0.0);
        }
    }
}
