//! Least-squares fitting: polynomials in a scaled variable, straight
//! lines, and log-log slopes. The QR factorization is a plain Householder
//! on tall skinny matrices (the fits here never exceed ~15 columns).

/// Polynomial fitted in the scaled variable s = (x - x0) / scale.
#[derive(Debug, Clone)]
pub struct PolyFit {
    pub x0: f64,
    pub scale: f64,
    /// Coefficients in the scaled variable, constant term first.
    pub coeffs: Vec<f64>,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        let s = (x - self.x0) / self.scale;
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * s + c;
        }
        acc
    }
}

/// Least-squares polynomial of the given degree through (xs, ys).
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> PolyFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() > degree, "need more samples than coefficients");
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x0 = 0.5 * (lo + hi);
    let scale = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let m = xs.len();
    let n = degree + 1;
    let mut a = vec![0.0; m * n];
    for (i, &x) in xs.iter().enumerate() {
        let s = (x - x0) / scale;
        let mut p = 1.0;
        for j in 0..n {
            a[i * n + j] = p;
            p *= s;
        }
    }
    let coeffs = lstsq(&mut a, m, n, ys);
    PolyFit { x0, scale, coeffs }
}

/// Householder least squares; consumes the design matrix.
pub fn lstsq(a: &mut [f64], m: usize, n: usize, rhs: &[f64]) -> Vec<f64> {
    assert!(m >= n);
    let mut b = rhs.to_vec();
    for kcol in 0..n {
        // Householder vector for column kcol, rows kcol..m.
        let mut norm = 0.0;
        for i in kcol..m {
            norm += a[i * n + kcol] * a[i * n + kcol];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[kcol * n + kcol] > 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - kcol];
        v[0] = a[kcol * n + kcol] - alpha;
        for i in kcol + 1..m {
            v[i - kcol] = a[i * n + kcol];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        a[kcol * n + kcol] = alpha;
        for i in kcol + 1..m {
            a[i * n + kcol] = 0.0;
        }
        for j in kcol + 1..n {
            let mut dot = 0.0;
            for i in kcol..m {
                let av = if i == kcol { v[0] } else { v[i - kcol] };
                dot += av * a[i * n + j];
            }
            let f = 2.0 * dot / vtv;
            for i in kcol..m {
                let av = if i == kcol { v[0] } else { v[i - kcol] };
                a[i * n + j] -= f * av;
            }
        }
        let mut dot = 0.0;
        for i in kcol..m {
            dot += v[i - kcol] * b[i];
        }
        let f = 2.0 * dot / vtv;
        for i in kcol..m {
            b[i] -= f * v[i - kcol];
        }
    }
    // Back substitution on the upper-triangular block.
    let mut x = vec![0.0; n];
    for j in (0..n).rev() {
        let mut acc = b[j];
        for jj in j + 1..n {
            acc -= a[j * n + jj] * x[jj];
        }
        x[j] = acc / a[j * n + j];
    }
    x
}

/// Ordinary least squares line y = slope x + intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Slope of log|y| against log x; xs and |ys| must be positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Wrong-parity contamination of samples of a nominally even or odd
/// function on [0, max(xs)]. Fits a full polynomial in the scaled
/// variable and returns (max wrong-parity |coeff|) / (max right-parity
/// |coeff|, floored at 1).
pub fn parity_leakage(xs: &[f64], ys: &[f64], degree: usize, even: bool) -> f64 {
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi > 0.0);
    let m = xs.len();
    let n = degree + 1;
    let mut a = vec![0.0; m * n];
    for (i, &x) in xs.iter().enumerate() {
        let s = x / hi;
        let mut p = 1.0;
        for j in 0..n {
            a[i * n + j] = p;
            p *= s;
        }
    }
    let coeffs = lstsq(&mut a, m, n, ys);
    let mut good = 0.0f64;
    let mut bad = 0.0f64;
    for (j, &c) in coeffs.iter().enumerate() {
        let is_even_term = j % 2 == 0;
        if is_even_term == even {
            good = good.max(c.abs());
        } else {
            bad = bad.max(c.abs());
        }
    }
    bad / good.max(1.0)
}
