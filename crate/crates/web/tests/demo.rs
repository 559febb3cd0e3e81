use thinrod_web::demo::{field_map, fit_demo, grid, localization_map, FitDemo, Rod};

fn long_rod() -> Rod {
    Rod {
        length: 10.0,
        delta: 5.0 * (std::f64::consts::PI / 36.0).tan(),
        sigma0: 2.0,
        angle: 0.0,
    }
}

#[test]
fn field_map_peaks_near_a_cap() {
    let rod = long_rod();
    let g = grid(-7.5, 7.5, -3.0, 3.0, 121, 49);
    for asymptotic in [false, true] {
        let v = field_map(rod, [1.0, 0.0], asymptotic, g).unwrap();
        assert_eq!(v.len(), 121 * 49);
        assert!(v.iter().any(|x| x.is_nan()), "rod interior is masked");
        let (k, _) = v
            .iter()
            .enumerate()
            .filter(|(_, x)| x.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let x = -7.5 + 15.0 * (k % 121) as f64 / 120.0;
        let y = -3.0 + 6.0 * (k / 121) as f64 / 48.0;
        let d = ((x.abs() - 5.0).powi(2) + y * y).sqrt();
        assert!(d <= 2.0 * rod.delta, "asymptotic = {asymptotic}: peak at ({x}, {y})");
    }
}

#[test]
fn localization_is_one_just_outside_the_cap() {
    let (l, d) = (2.0, 0.01);
    let g = grid(1.0 + d, 2.0, 0.0, 1.0, 2, 2);
    let v = localization_map(l, d, g).unwrap();
    assert!((0.9..=1.0).contains(&v[0]), "{}", v[0]);
    let centre = localization_map(l, d, grid(-1.0, 1.0, 0.0, 1.0, 2, 2)).unwrap();
    assert!(centre[0].is_nan() && centre[1].is_nan());
}

#[test]
fn fit_demo_round_trip() {
    let rod = Rod {
        length: 2.0,
        delta: 0.05,
        sigma0: 2.0,
        angle: 0.4,
    };
    let opts = FitDemo {
        center: [0.3, -0.2],
        noise_rms: 0.0,
        seed: 1,
        bem_data: false,
        layer_transverse: false,
    };
    let r = fit_demo(rod, opts).unwrap();
    assert!(r.converged);
    assert!(r.endpoint_error < 1e-3, "{r:?}");
    assert_eq!(r.sensors.len(), 64);

    let bem = fit_demo(
        rod,
        FitDemo {
            bem_data: true,
            layer_transverse: true,
            ..opts
        },
    )
    .unwrap();
    assert!(bem.endpoint_error < 2.0 * rod.delta, "{bem:?}");
    let json = serde_json::to_string(&bem).unwrap();
    assert!(json.contains("fitted_endpoints"));
}

#[test]
fn rejects_oversized_or_invalid_requests() {
    let rod = long_rod();
    let big = grid(-1.0, 1.0, -1.0, 1.0, 1000, 1000);
    assert!(field_map(rod, [1.0, 0.0], true, big).is_err());
    assert!(field_map(rod, [0.0, 0.0], true, grid(-1.0, 1.0, -1.0, 1.0, 4, 4)).is_err());
    let thin = Rod { delta: 1e-4, ..rod };
    let err = field_map(thin, [1.0, 0.0], false, grid(-1.0, 1.0, -1.0, 1.0, 4, 4)).unwrap_err();
    assert!(err.contains("boundary nodes"), "{err}");
    assert!(localization_map(0.0, 0.1, grid(-1.0, 1.0, -1.0, 1.0, 4, 4)).is_err());
}
