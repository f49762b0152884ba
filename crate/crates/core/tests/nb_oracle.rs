//! Negative binomial log-likelihood against values frozen from a 50-digit
//! mpmath evaluation (see the header of the data file).

use infosphere_core::numerics::{nb_log_likelihood, CountPrediction};

const GRID: &str = include_str!("data/nb_loglik_grid.txt");

fn ll(k: u64, mu: f64, r: f64) -> f64 {
    nb_log_likelihood(k, CountPrediction::new(mu, r).unwrap()).unwrap()
}

#[test]
fn single_point_to_1e9() {
    // mpmath: -3.2438145675985041852313181976
    let got = ll(7, 3.2, 1.7);
    assert!((got - -3.243_814_567_598_504).abs() < 1e-9, "{got}");
}

#[test]
fn frozen_grid_of_125_points() {
    let mut n = 0;
    for line in GRID.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let (k, mu, r, want): (u64, f64, f64, f64) =
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
        let got = ll(k, mu, r);
        assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "k={k} mu={mu} r={r}: {got} vs {want}");
        n += 1;
    }
    assert_eq!(n, 125);
}
