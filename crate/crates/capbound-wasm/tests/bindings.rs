use capbound_wasm::{project_with, spectrum_of, uniform_capacity, Geometry};

const G: Geometry = Geometry { c_out: 2, c_in: 2, k: 3, side: 5 };

#[test]
fn delta_kernel_spectrum_is_flat() {
    let k = capbound::tensors::KernelTensor::delta(2, 3, 3);
    let s = spectrum_of(G, k.data()).unwrap();
    assert_eq!(s.len(), 50);
    assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn spectrum_sorted_and_matches_random_kernel_scaling() {
    let w = capbound_wasm::random_kernel(2, 2, 3, 1.0, 7);
    let s = spectrum_of(G, &w).unwrap();
    assert!(s.windows(2).all(|p| p[0] >= p[1]));
    let w3: Vec<f64> = w.iter().map(|x| 3.0 * x).collect();
    let s3 = spectrum_of(G, &w3).unwrap();
    assert!((s3[0] - 3.0 * s[0]).abs() < 1e-10);
    assert!(spectrum_of(G, &w[1..]).is_err());
}

#[test]
fn projection_lands_in_the_intersection() {
    let w = capbound_wasm::random_kernel(2, 2, 3, 1.0, 3);
    let r = vec![0.0; w.len()];
    for scheme in ["alternating", "radial"] {
        let v = project_with(G, &w, &r, 0.5, 1.0, scheme, 15).unwrap();
        assert!(v.lipschitz <= 0.5 * (1.0 + 1e-3), "{scheme}: {}", v.lipschitz);
        assert!(v.distance <= 1.0 + 1e-3, "{scheme}: {}", v.distance);
        assert!(v.initial.max_relative() > 0.0);
    }
    // Dykstra converges slowly on this instance; it must still make progress
    let v = project_with(G, &w, &r, 0.5, 1.0, "dykstra", 100).unwrap();
    assert!(v.final_violations.max_relative() < 0.1 * v.initial.max_relative());
    assert!(project_with(G, &w, &r, 0.5, 1.0, "sideways", 10).is_err());
}

#[test]
fn capacity_grows_with_bounds() {
    let base = uniform_capacity(3, 1.0, 0.5, 18, 1.0, 100, 10.0).unwrap();
    let wider = uniform_capacity(3, 1.0, 1.0, 18, 1.0, 100, 10.0).unwrap();
    assert!(wider.clubs > base.clubs && wider.spades > base.spades);
    let zero = uniform_capacity(3, 1.0, 0.0, 18, 1.0, 100, 10.0).unwrap();
    assert_eq!((zero.clubs, zero.spades), (4.0 / 100.0, 0.0));
    assert!(uniform_capacity(0, 1.0, 0.5, 18, 1.0, 100, 10.0).is_err());
}
