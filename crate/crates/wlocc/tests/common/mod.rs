//! Shared samplers and helpers for the integration suites.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wlocc::bounds::r1_feasible;
use wlocc::measurement::Mat2;
use wlocc::WClassComponents;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random interior state: all components and x0 bounded away from zero.
pub fn sample_state(rng: &mut impl Rng, n: usize) -> WClassComponents {
    let raw: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps: Vec<f64> = raw[1..].iter().map(|v| v / total).collect();
    WClassComponents::new(comps).expect("normalized draw is valid")
}

/// Random pair conditioned on the second-smallest ratio clearing the zeroth
/// ratio, i.e. the regime where the minimum-ratio rate is attainable.
pub fn sample_feasible_pair(
    rng: &mut impl Rng,
    n: usize,
) -> (WClassComponents, WClassComponents) {
    loop {
        let x = sample_state(rng, n);
        let y = sample_state(rng, n);
        if r1_feasible(&x, &y).expect("interior states satisfy preconditions") {
            return (x, y);
        }
    }
}

/// Random unconditioned pair of interior states.
pub fn sample_pair(rng: &mut impl Rng, n: usize) -> (WClassComponents, WClassComponents) {
    (sample_state(rng, n), sample_state(rng, n))
}

#[allow(dead_code)]
pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (|diff| = {})", (a - b).abs());
}

/// Largest eigenvalue of M†M for a 2x2 complex operator.
pub fn gram_top(m: &Mat2) -> f64 {
    let dag = |m: &Mat2| -> Mat2 {
        [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
    };
    let d = dag(m);
    let mut g = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = d[i][0] * m[0][j] + d[i][1] * m[1][j];
        }
    }
    let (a, dd) = (g[0][0].re, g[1][1].re);
    0.5 * (a + dd) + (0.25 * (a - dd) * (a - dd) + g[0][1].norm_sqr()).sqrt()
}
