//! Local polynomial interpolation: Newton divided differences over a
//! sliding node window, and quintic Hermite segments built from value,
//! first and second derivative at both ends.

/// Greatest index i with xs[i] <= x, clamped to [0, xs.len()-2].
/// xs must be strictly increasing.
pub fn locate(xs: &[f64], x: f64) -> usize {
    debug_assert!(xs.len() >= 2);
    match xs.binary_search_by(|a| a.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(xs.len() - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(xs.len() - 2),
    }
}

/// Newton divided-difference coefficients for nodes xs (may repeat only
/// if ys carries confluent data; plain distinct nodes here).
pub fn newton_coeffs(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut c = ys.to_vec();
    for level in 1..n {
        for i in (level..n).rev() {
            c[i] = (c[i] - c[i - 1]) / (xs[i] - xs[i - level]);
        }
    }
    c
}

/// Evaluate a Newton-form polynomial and its derivative at x.
pub fn newton_eval_d(coeffs: &[f64], xs: &[f64], x: f64) -> (f64, f64) {
    let n = coeffs.len();
    let mut p = coeffs[n - 1];
    let mut dp = 0.0;
    for i in (0..n - 1).rev() {
        dp = dp * (x - xs[i]) + p;
        p = p * (x - xs[i]) + coeffs[i];
    }
    (p, dp)
}

/// Degree-(window-1) local interpolation on a strictly increasing grid:
/// value and derivative at x using the `window` nodes nearest to x.
pub fn local_poly_eval_d(xs: &[f64], ys: &[f64], x: f64, window: usize) -> (f64, f64) {
    let n = xs.len();
    let w = window.min(n);
    let i = locate(xs, x);
    let lo = i.saturating_sub((w - 1) / 2).min(n - w);
    let nodes = &xs[lo..lo + w];
    let vals = &ys[lo..lo + w];
    let c = newton_coeffs(nodes, vals);
    newton_eval_d(&c, nodes, x)
}

/// Quintic Hermite segment on [z0, z1] with value/1st/2nd derivative
/// prescribed at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hermite5 {
    pub z0: f64,
    pub z1: f64,
    pub f0: f64,
    pub d0: f64,
    pub s0: f64,
    pub f1: f64,
    pub d1: f64,
    pub s1: f64,
}

impl Hermite5 {
    /// Value, first and second derivative at z.
    pub fn eval_d2(&self, z: f64) -> (f64, f64, f64) {
        let (nodes, coeffs) = self.newton_form();
        let mut p = coeffs[5];
        let mut dp = 0.0;
        let mut ddp = 0.0;
        for i in (0..5).rev() {
            ddp = ddp * (z - nodes[i]) + 2.0 * dp;
            dp = dp * (z - nodes[i]) + p;
            p = p * (z - nodes[i]) + coeffs[i];
        }
        (p, dp, ddp)
    }

    fn newton_form(&self) -> ([f64; 5], [f64; 6]) {
        // Confluent Newton divided differences on nodes [z0,z0,z0,z1,z1,z1].
        let h = self.z1 - self.z0;
        let f01 = (self.f1 - self.f0) / h;
        let c0 = self.f0;
        let c1 = self.d0;
        let c2 = self.s0 / 2.0;
        let d2 = (f01 - self.d0) / h; // [z0,z0,z1]
        let c3 = (d2 - c2) / h; // [z0,z0,z0,z1]
        let e2 = (self.d1 - f01) / h; // [z0,z1,z1]
        let d3 = (e2 - d2) / h; // [z0,z0,z1,z1]
        let c4 = (d3 - c3) / h; // [z0,z0,z0,z1,z1]
        let f2 = self.s1 / 2.0;
        let e3 = (f2 - e2) / h; // [z0,z1,z1,z1]
        let d4 = (e3 - d3) / h; // [z0,z0,z1,z1,z1]
        let c5 = (d4 - c4) / h; // all six
        ([self.z0, self.z0, self.z0, self.z1, self.z1], [c0, c1, c2, c3, c4, c5])
    }

    /// Value and first derivative at z.
    pub fn eval_d(&self, z: f64) -> (f64, f64) {
        let (nodes, coeffs) = self.newton_form();
        let mut p = coeffs[5];
        let mut dp = 0.0;
        for i in (0..5).rev() {
            dp = dp * (z - nodes[i]) + p;
            p = p * (z - nodes[i]) + coeffs[i];
        }
        (p, dp)
    }
}
