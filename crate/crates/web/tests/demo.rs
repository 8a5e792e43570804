use abcnet_web::{abc_autocov, ma2_posterior_grid, sample_ising, simulate_ma2, sufficient_stat};

fn in_triangle(t1: f64, t2: f64) -> bool {
    t2 >= -1.0 && t2 <= 1.0 && t2 + t1 >= -1.0 && t2 - t1 >= -1.0
}

#[test]
fn ising_draws_are_spins_and_reproducible() {
    let a = sample_ising(8, 0.3, 200, 5).unwrap();
    assert_eq!(a.len(), 64);
    assert!(a.iter().all(|&s| s == 1 || s == -1));
    assert_eq!(a, sample_ising(8, 0.3, 200, 5).unwrap());
    assert_ne!(a, sample_ising(8, 0.3, 200, 6).unwrap());
    assert!(sample_ising(1, 0.3, 10, 0).is_err());
    assert!(sample_ising(8, -0.1, 10, 0).is_err());
}

#[test]
fn sufficient_stat_counts_neighbour_agreements() {
    // All aligned: 2m² agreeing bonds on the torus.
    assert_eq!(sufficient_stat(&[1; 16], 4).unwrap(), 32.0);
    // Checkerboard: every bond disagrees.
    let board: Vec<i8> = (0..16).map(|i| if (i / 4 + i % 4) % 2 == 0 { 1 } else { -1 }).collect();
    assert_eq!(sufficient_stat(&board, 4).unwrap(), -32.0);
}

#[test]
fn strong_coupling_orders_the_lattice() {
    let m = 8;
    let hot = sufficient_stat(&sample_ising(m, 0.0, 200, 1).unwrap(), m).unwrap();
    let cold = sufficient_stat(&sample_ising(m, 1.5, 500, 1).unwrap(), m).unwrap();
    assert!(hot.abs() < 40.0, "{hot}");
    assert!(cold > 100.0, "{cold}");
}

#[test]
fn ma2_series_validates_inputs() {
    let x = simulate_ma2(0.6, 0.2, 100, 3).unwrap();
    assert_eq!(x.len(), 100);
    assert_eq!(x, simulate_ma2(0.6, 0.2, 100, 3).unwrap());
    assert!(simulate_ma2(0.0, 1.5, 100, 3).is_err());
    assert!(simulate_ma2(0.6, 0.2, 2, 3).is_err());
}

#[test]
fn posterior_grid_is_normalized_and_concentrates() {
    let x = simulate_ma2(0.6, 0.2, 1000, 11).unwrap();
    let post = ma2_posterior_grid(&x, 100).unwrap();
    assert_eq!(post.mass().len(), 100 * 100);
    assert!((post.mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let s = post.summary();
    assert!((s[0] - 0.6).abs() < 0.15 && (s[1] - 0.2).abs() < 0.15, "{s:?}");
    assert!(s[2] > 0.0 && s[2] < 0.1 && s[3] > 0.0 && s[3] < 0.1, "{s:?}");
    assert!(ma2_posterior_grid(&x, 1).is_err());
}

#[test]
fn abc_returns_quantile_of_prior_draws() {
    let x = simulate_ma2(0.6, 0.2, 100, 2).unwrap();
    let r = abc_autocov(&x, 5000, 0.01, 9).unwrap();
    let t = r.thetas();
    assert_eq!(t.len(), 2 * 50);
    assert_eq!(r.n_proposed(), 5000);
    assert!(r.epsilon() > 0.0);
    assert!(t.chunks(2).all(|c| in_triangle(c[0], c[1])));
    assert_eq!(t, abc_autocov(&x, 5000, 0.01, 9).unwrap().thetas());
    // Accepted draws move towards the truth from the prior mean (0, 1/3).
    let s = r.summary();
    assert!(s[0] > 0.2, "{s:?}");
    assert!(abc_autocov(&x, 0, 0.01, 9).is_err());
}
