use wipp_mlmc_web::Explorer;

#[test]
fn field_draws_are_reproducible() {
    let e = Explorer::new(16).unwrap();
    let f = e.field(3, true).unwrap();
    assert_eq!(f.len(), 256);
    assert_eq!(f, e.field(3, true).unwrap());
    assert_ne!(f, e.field(4, true).unwrap());
    assert_ne!(f, e.field(3, false).unwrap());
    assert_eq!(e.boreholes().len(), 3 * 39);
}

#[test]
fn kriging_std_is_below_prior() {
    let e = Explorer::new(16).unwrap();
    let k = e.kriging().unwrap();
    let (mean, std) = k.split_at(256);
    assert!(mean.iter().all(|m| m.is_finite()));
    let prior = 6.4791f64.sqrt();
    assert!(std.iter().all(|&s| (0.0..=prior + 1e-9).contains(&s)));
    assert!(std.iter().any(|&s| s < 0.5 * prior));
}

#[test]
fn flow_tracks_from_the_release_point() {
    let e = Explorer::new(32).unwrap();
    let g = e.geometry();
    let f = e.flow(1, true).unwrap();
    assert!(f.exited());
    assert!(f.years() > 0.0);
    assert_eq!(f.head().len(), 32 * 32);
    let p = f.path();
    assert_eq!((p[0], p[1]), (g[8], g[9]));
    let (x, y) = (p[p.len() - 2], p[p.len() - 1]);
    let on_site_edge = |v: f64, a: f64, b: f64| (v - a).abs() < 1e-6 || (v - b).abs() < 1e-6;
    assert!(on_site_edge(x, g[4], g[6]) || on_site_edge(y, g[5], g[7]));
}
