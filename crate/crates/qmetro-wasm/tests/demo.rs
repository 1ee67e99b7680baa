use std::f64::consts::PI;

use qmetro_wasm::{imaging_rows, network_rows, qubit_pair};

#[test]
fn network_sweep_never_beats_the_optimum() {
    let rows = network_rows(3, 9).unwrap();
    assert_eq!(rows.len(), 36);
    for r in rows.chunks(4) {
        assert!(r[0] > -1.0 && r[0] < 2.0);
        assert!(r[2] <= r[3] + 1e-14, "h(J_opt) {} > h(0) {}", r[2], r[3]);
    }
    assert!(network_rows(3, 1).is_err());
    assert!(network_rows(1, 5).is_err());
}

#[test]
fn imaging_rows_end_with_global_bound() {
    let (nbar, d) = (2.0, 4);
    let rows = imaging_rows(nbar, d, 5).unwrap();
    assert_eq!(rows.len(), 11);
    let global = (PI * PI / 3.0 - 4.0 / 9.0) / (nbar * nbar);
    assert!((rows[10] - global).abs() < 1e-12);
    assert_eq!(rows[8], 5.0);
    assert!(imaging_rows(2.0, 4, 0).is_ok_and(|r| r.len() == 1));
}

#[test]
fn qubit_routes_agree() {
    let [closed, pipeline] = qubit_pair(1.0).unwrap();
    assert!((closed - pipeline).abs() < 1e-10);
    assert!((closed - (PI * PI / 48.0 - (4.0 - PI).powi(2) / (2.0 * PI * PI))).abs() < 1e-12);
}
