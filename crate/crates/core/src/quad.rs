//! Fixed-order quadrature rules used by the spectral estimators.
//!
//! Gauss-Chebyshev (second kind) handles integrands carrying a
//! `sqrt((b - x)(x - a))` factor exactly once the endpoints are mapped to
//! the rule's interval; Gauss-Legendre covers the smooth remainders left
//! after substitutions.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights for `int_-1^1 f(t) sqrt(1 - t^2) dt ~ sum w_i f(t_i)`.
///
/// Closed form: `t_i = cos(i pi / (n+1))`, `w_i = pi/(n+1) sin^2(i pi/(n+1))`.
pub fn gauss_chebyshev2(n: usize) -> Vec<(f64, f64)> {
    let m = (n + 1) as f64;
    (1..=n)
        .map(|i| {
            let angle = i as f64 * PI / m;
            (angle.cos(), PI / m * angle.sin().powi(2))
        })
        .collect()
}

type RuleCache = Mutex<HashMap<usize, Arc<[(f64, f64)]>>>;

fn cached(
    cache: &'static OnceLock<RuleCache>,
    n: usize,
    build: fn(usize) -> Vec<(f64, f64)>,
) -> Arc<[(f64, f64)]> {
    let mut map = cache
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .expect("quadrature rule cache poisoned");
    map.entry(n).or_insert_with(|| build(n).into()).clone()
}

/// Memoized [`gauss_chebyshev2`]; node construction is cheap but the rules
/// are requested per estimator call on hot paths.
pub fn gauss_chebyshev2_cached(n: usize) -> Arc<[(f64, f64)]> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    cached(&CACHE, n, gauss_chebyshev2)
}

/// Memoized [`gauss_legendre`]; the Newton construction costs O(n^2), far
/// more than applying the rule, so hot paths must not rebuild it.
pub fn gauss_legendre_cached(n: usize) -> Arc<[(f64, f64)]> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    cached(&CACHE, n, gauss_legendre)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, exact for polynomials of
/// degree `2n - 1`. Nodes are found by Newton iteration on the Legendre
/// recurrence from Chebyshev initial guesses.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut pairs = vec![(0.0, 0.0); n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        // The middle node of an odd rule is exactly zero.
        let (_, d) = legendre_with_derivative(n, 0.0);
        pairs[n / 2] = (0.0, 2.0 / (d * d));
    }
    pairs
}

/// Legendre polynomial `P_n(x)` and its derivative via the three-term
/// recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = 0.0;
    for j in 0..n {
        let p2 = p1;
        p1 = p0;
        p0 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p2) / (j + 1) as f64;
    }
    let derivative = if (x * x - 1.0).abs() < f64::EPSILON {
        // Endpoint formula, only reachable for degenerate guesses.
        0.5 * (n * (n + 1)) as f64 * if x > 0.0 { 1.0 } else { -1.0 }
    } else {
        n as f64 * (x * p0 - p1) / (x * x - 1.0)
    };
    (p0, derivative)
}

/// `int_a^b f(x) dx` with an `n`-point Gauss-Legendre rule mapped to `[a, b]`.
pub fn integrate_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    gauss_legendre_cached(n)
        .iter()
        .map(|&(t, w)| w * f(mid + half * t))
        .sum::<f64>()
        * half
}
