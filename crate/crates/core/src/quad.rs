//! Quadrature nodes and special functions.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Exponential integral `E1(x)` for `x > 0`.
pub fn exp_int_e1(x: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x < 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER - x.ln() + sum
    } else {
        // Lentz continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut cc = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            cc = b + a / cc;
            let del = cc * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Upper incomplete gamma `Gamma(m, x)` for integer `m >= 0`, `x > 0`.
pub fn upper_gamma_int(m: u32, x: f64) -> f64 {
    let mut g = exp_int_e1(x);
    let ex = (-x).exp();
    for k in 0..m {
        // Gamma(k+1, x) = k Gamma(k, x) + x^k e^{-x}
        g = k as f64 * g + x.powi(k as i32) * ex;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((int - 2.0 / 23.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn e1_reference_values() {
        // Abramowitz-Stegun table values.
        assert!((exp_int_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((exp_int_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((exp_int_e1(5.0) - 0.001_148_295_591_275_325_9).abs() < 1e-16);
        assert!((upper_gamma_int(1, 2.0) - (-2.0f64).exp()).abs() < 1e-16);
    }
}
