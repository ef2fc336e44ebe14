use envelope_lab::construction::{build_boundary_stage, build_f_nm};
use envelope_lab::envelope::{compute_envelope, SampledFunction, Side};
use envelope_lab::holder::*;
use envelope_lab::mesh::CubeFace;
use envelope_lab::FnField;
use proptest::prelude::*;

#[test]
fn stage_envelope_is_mostly_cap_in_one_dimension() {
    for m in [3, 4, 6] {
        let s = build_f_nm(1, m, 1, 8).unwrap();
        let grid = HolderGrid::new(1, 1024).unwrap();
        let (spec, _) = spectrum(&s.envelope, &grid, &default_scales(1), 1, &default_bin_edges()).unwrap();
        assert!(spec.cap_fraction() >= 0.9, "m = {m}: {}", spec.cap_fraction());
    }
}

#[test]
fn stage_envelope_spectrum_in_two_dimensions() {
    let s = build_f_nm(1, 3, 2, 11).unwrap();
    let grid = HolderGrid::new(2, 256).unwrap();
    let (spec, cells) = spectrum(&s.envelope, &grid, &default_scales(2), 1, &default_bin_edges()).unwrap();
    let one = spec.lipschitz_bin().unwrap().dimension.value.unwrap();
    assert!((one - 1.0).abs() <= 0.2, "h~1 bin dimension {one}");
    let cap = spec.bin("CAP").unwrap().dimension.value.unwrap();
    assert!((cap - 2.0).abs() <= 0.1, "CAP dimension {cap}");
    // non-CAP cells hug the folds
    let spacing = grid.spacing();
    for c in cells.iter().filter(|c| c.flag == CellFlag::Ok) {
        assert!(s.folding.distance_to(&c.x) <= 0.5f64.powi(3) + spacing);
    }
}

#[test]
fn affine_spectrum_is_all_cap() {
    let f = FnField::new(2, |x: &[f64]| 0.4 * x[0] + 0.9 * x[1] - 3.0);
    let grid = HolderGrid::new(2, 64).unwrap();
    let (spec, _) = spectrum(&f, &grid, &default_scales(2), 1, &default_bin_edges()).unwrap();
    let cap = spec.bin("CAP").unwrap();
    assert_eq!(cap.count, spec.cell_count);
    assert!((cap.dimension.value.unwrap() - 2.0).abs() < 0.1);
}

#[test]
fn boundary_family_envelope_has_small_exponent_at_face() {
    for m in [2, 3, 5] {
        let b = build_boundary_stage(1, m, 1, CubeFace::new(0, 0), 12).unwrap();
        let est = pointwise_holder(&b.envelope, &[0.0], &default_scales(1), 0).unwrap();
        assert!(est.h_hat.unwrap() <= 1.0 / f64::from(m) + 0.1);
        let p = boundary_derivative_probe(&b.envelope, CubeFace::new(0, 0), &[0.0], 3, 12, 1.0).unwrap();
        assert!(p.blow_up);
    }
    let b = build_boundary_stage(1, 3, 1, CubeFace::new(0, 0), 12).unwrap();
    let p = boundary_derivative_probe(&b.envelope, CubeFace::new(0, 0), &[0.0], 3, 12, 1.0).unwrap();
    assert!((p.exponent + 2.0 / 3.0).abs() < 0.05);
}

#[test]
fn stage_folds_satisfy_exponent_bound() {
    for d in [1, 2] {
        let s = build_f_nm(1, 3, d, 21).unwrap();
        for x in fold_probe_points(&s.folding, 2) {
            assert!(fold_exponent_check(&s.envelope, &s.folding, &x, 3).unwrap(), "{x:?}");
        }
    }
}

#[test]
fn non_fold_point_is_rejected() {
    let s = SampledFunction::new(vec![vec![0.0], vec![0.5], vec![1.0]], vec![0.0, 1.0, 0.0]).unwrap();
    let e = compute_envelope(&s, Side::Upper).unwrap();
    let folds = envelope_lab::envelope::folding_region(&e, 1e-8, 0.0);
    assert!(fold_exponent_check(&e, &folds, &[0.3], 2).is_err());
}

#[test]
fn exponent_level_queries() {
    let tent = FnField::new(1, |x: &[f64]| (x[0] - 0.5).abs());
    let cells = holder_field(&tent, &HolderGrid::new(1, 64).unwrap(), &default_scales(1), 1);
    assert_eq!(cells_with_exponent_at_most(&cells, 1.2).len(), 1);
    assert_eq!(cells_with_exponent_below(&cells, 0.5).len(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn power_laws_are_recovered(h in prop::sample::select(vec![0.3, 0.5, 0.7, 1.5]), c in 0.3f64..0.7, amp in 0.1f64..10.0) {
        let f = FnField::new(1, move |x: &[f64]| amp * (x[0] - c).abs().powf(h));
        let order = if h > 1.0 { 1 } else { 0 };
        let est = pointwise_holder(&f, &[c], &default_scales(1), order).unwrap();
        prop_assert!((est.h_hat.unwrap() - h).abs() <= 0.05);
    }

    #[test]
    fn radial_power_laws_in_the_plane(h in prop::sample::select(vec![0.3, 0.5, 0.7]), c in (0.3f64..0.7, 0.3f64..0.7)) {
        let f = FnField::new(2, move |x: &[f64]| ((x[0] - c.0).powi(2) + (x[1] - c.1).powi(2)).sqrt().powf(h));
        let est = pointwise_holder(&f, &[c.0, c.1], &default_scales(2), 0).unwrap();
        prop_assert!((est.h_hat.unwrap() - h).abs() <= 0.05);
    }

    #[test]
    fn box_counts_are_monotone_under_inclusion(
        pts in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..200),
        split in 0usize..200,
    ) {
        let all: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
        let sub = &all[..split.min(all.len()).max(1)];
        for eps in dyadic_scales(1, 8) {
            prop_assert!(occupied_boxes(sub, eps) <= occupied_boxes(&all, eps));
        }
    }

    #[test]
    fn slope_gap_ignores_affine_terms(
        vals in prop::collection::vec(-1.0f64..1.0, 21),
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let points: Vec<Vec<f64>> = (0..21).map(|i| vec![i as f64 / 20.0]).collect();
        let s1 = SampledFunction::new(points.clone(), vals.clone()).unwrap();
        let shifted: Vec<f64> = points.iter().zip(&vals).map(|(p, v)| v + a * p[0] + b).collect();
        let s2 = SampledFunction::new(points, shifted).unwrap();
        let e1 = compute_envelope(&s1, Side::Upper).unwrap();
        let e2 = compute_envelope(&s2, Side::Upper).unwrap();
        let probes: Vec<Vec<f64>> = (0..30).map(|i| vec![0.11 + 0.78 * i as f64 / 29.0]).collect();
        let g1 = slope_gap_check(&e1, 0, &probes, 0.1).unwrap();
        let g2 = slope_gap_check(&e2, 0, &probes, 0.1).unwrap();
        prop_assert!((g1 - g2).abs() <= 1e-9 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn boundary_verdict_ignores_vertical_shifts(m in 1u32..8, c in -100.0f64..100.0) {
        let p = 1.0 / f64::from(m);
        let f = FnField::new(1, move |x: &[f64]| x[0].powf(p));
        let g = FnField::new(1, move |x: &[f64]| x[0].powf(p) + c);
        let face = CubeFace::new(0, 0);
        let a = boundary_derivative_probe(&f, face, &[0.0], 3, 12, 1.0).unwrap();
        let b = boundary_derivative_probe(&g, face, &[0.0], 3, 12, 1.0).unwrap();
        prop_assert_eq!(a.blow_up, b.blow_up);
    }

    #[test]
    fn spectrum_bins_cover_the_grid(
        kinks in prop::collection::vec(0.05f64..0.95, 0..4),
        intervals in 16usize..128,
    ) {
        let f = FnField::new(1, move |x: &[f64]| kinks.iter().map(|k| (x[0] - k).abs()).sum::<f64>() + x[0].powf(0.4));
        let grid = HolderGrid::new(1, intervals).unwrap();
        let (spec, cells) = spectrum(&f, &grid, &default_scales(1), 1, &default_bin_edges()).unwrap();
        let total: usize = spec.bins.iter().map(|b| b.count).sum();
        prop_assert_eq!(total, cells.len());
        prop_assert_eq!(cells.len(), intervals + 1);
    }
}
