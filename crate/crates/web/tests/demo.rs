use geoaug_web::{distances, interpolation_curves, notch_curve, BEAT_LEN};

fn peaks(x: &[f64]) -> usize {
    let max = x.iter().cloned().fold(f64::MIN, f64::max);
    (1..x.len() - 1)
        .filter(|&i| x[i] > 0.3 * max && x[i] >= x[i - 1] && x[i] > x[i + 1])
        .count()
}

#[test]
fn geodesic_midpoint_keeps_one_complex() {
    let v = interpolation_curves(200.0, 12.0, 0.5).unwrap();
    assert_eq!(v.len(), 4 * BEAT_LEN);
    let (geo, lin) = (&v[2 * BEAT_LEN..3 * BEAT_LEN], &v[3 * BEAT_LEN..]);
    assert_eq!(peaks(geo), 1);
    assert_eq!(peaks(lin), 2);
    let top = (0..BEAT_LEN).max_by(|&a, &b| geo[a].total_cmp(&geo[b])).unwrap();
    assert!((top as i64 - 125).abs() <= 2, "peak at {top}");
}

#[test]
fn notch_curve_dips_at_centre() {
    let db = notch_curve(50.0, 30.0, 500.0, 251).unwrap();
    assert!(db[50] < -30.0, "{}", db[50]);
    assert!(db[0].abs() < 1e-9);
    assert!(notch_curve(300.0, 30.0, 500.0, 10).is_err());
}

#[test]
fn shape_distance_grows_linearly_with_offset() {
    let a = distances(40.0, 12.0).unwrap();
    let b = distances(80.0, 12.0).unwrap();
    assert!((b[0] / a[0] - 2.0).abs() < 0.05, "{a:?} {b:?}");
    // the euclidean distance saturates once the complexes stop overlapping
    let c = distances(160.0, 12.0).unwrap();
    assert!((c[1] / b[1] - 1.0).abs() < 0.05, "{b:?} {c:?}");
}
