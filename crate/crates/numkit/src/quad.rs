//! Gauss-Legendre quadrature with runtime node generation.
//!
//! Nodes and weights are computed once per order by Newton iteration on
//! the Legendre polynomial (machine-precision accurate for the orders
//! used here) and cached.

use std::collections::HashMap;
use std::ops::{Add, Mul};
use std::sync::{Mutex, OnceLock};

use num_traits::Zero;

type NodesWeights = (Vec<f64>, Vec<f64>);

/// Nodes and weights of the n-point rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> NodesWeights {
    assert!(n >= 1);
    static CACHE: OnceLock<Mutex<HashMap<usize, NodesWeights>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&n) {
        return hit.clone();
    }
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pd(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        ws[i] = w;
        xs[n - 1 - i] = x;
        ws[n - 1 - i] = w;
    }
    cache.lock().unwrap().insert(n, (xs.clone(), ws.clone()));
    (xs, ws)
}

/// Legendre P_n and derivative at x via the three-term recurrence.
fn legendre_pd(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite n-point Gauss-Legendre over `cells` equal cells of [a, b].
/// Works for f64 and Complex64 integrands.
pub fn integrate<T, F>(f: F, a: f64, b: f64, cells: usize, n: usize) -> T
where
    T: Zero + Copy + Add<Output = T> + Mul<f64, Output = T>,
    F: Fn(f64) -> T,
{
    let (xs, ws) = gauss_legendre(n);
    let h = (b - a) / cells as f64;
    let mut acc = T::zero();
    for c in 0..cells {
        let lo = a + h * c as f64;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (x, w) in xs.iter().zip(ws.iter()) {
            acc = acc + f(mid + half * x) * (w * half);
        }
    }
    acc
}

/// Single-cell rule on [a, b] with the n-point rule.
pub fn cell<T, F>(f: F, a: f64, b: f64, n: usize) -> T
where
    T: Zero + Copy + Add<Output = T> + Mul<f64, Output = T>,
    F: Fn(f64) -> T,
{
    integrate(f, a, b, 1, n)
}
