//! Spectral and finite-difference helpers shared by the geometry, solver and
//! flow modules.

use std::f64::consts::PI;

use gauss_quad::GaussLegendre;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Compensated (Neumaier) summation; deterministic for a fixed input order.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Derivative of order `order` of a periodic function sampled at `N`
/// equispaced points on a period of length 2pi. The Nyquist mode is dropped
/// for odd orders.
pub fn periodic_derivative(values: &[f64], order: u32) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        if n % 2 == 0 && j == n / 2 && order % 2 == 1 {
            *c = Complex::new(0.0, 0.0);
            continue;
        }
        let ik = Complex::new(0.0, k).powu(order);
        *c *= ik;
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Finite-difference weights for derivatives `0..=m` at `z` from the nodes
/// `x` (Fornberg's recursion). Row `k` holds the weights of the k-th
/// derivative.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`, nodes ascending.
pub fn gauss_legendre_unit(order: usize) -> Result<Vec<(f64, f64)>> {
    let rule = GaussLegendre::new(order)
        .map_err(|e| Error::Domain(format!("Gauss-Legendre rule of order {order}: {e}")))?;
    let mut out: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Fejér's first rule in colatitude: nodes `phi_j = (j + 1/2) pi / N` and
/// weights integrating `int_0^pi g(phi) sin(phi) dphi`.
pub fn fejer_colatitude(count: usize) -> Vec<(f64, f64)> {
    let n = count as f64;
    (0..count)
        .map(|j| {
            let phi = (j as f64 + 0.5) * PI / n;
            let mut s = 0.0;
            for k in 1..=(count / 2) {
                let kf = k as f64;
                s += (2.0 * kf * phi).cos() / (4.0 * kf * kf - 1.0);
            }
            (phi, 2.0 / n * (1.0 - 2.0 * s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_derivative_of_trig_polynomial() {
        let n = 32;
        let th: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let f: Vec<f64> = th.iter().map(|t| (3.0 * t).sin() + 0.5 * (t).cos()).collect();
        let d1 = periodic_derivative(&f, 1);
        let d2 = periodic_derivative(&f, 2);
        for (j, t) in th.iter().enumerate() {
            assert!((d1[j] - (3.0 * (3.0 * t).cos() - 0.5 * t.sin())).abs() < 1e-12);
            assert!((d2[j] - (-9.0 * (3.0 * t).sin() - 0.5 * t.cos())).abs() < 1e-11);
        }
    }

    #[test]
    fn fornberg_reproduces_central_stencils() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
        let w = fd_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w[1].iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fejer_integrates_sphere_moments() {
        let rule = fejer_colatitude(12);
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
        let m2: f64 = rule.iter().map(|(p, w)| w * p.cos().powi(2)).sum();
        assert!((m2 - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_on_unit_interval() {
        let rule = gauss_legendre_unit(6).unwrap();
        let v: f64 = rule.iter().map(|(s, w)| w * s.powi(11)).sum();
        assert!((v - 1.0 / 12.0).abs() < 1e-15);
        assert!(rule.windows(2).all(|p| p[0].0 < p[1].0));
    }

    #[test]
    fn compensated_sum() {
        let v = vec![1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(v), 2.0);
    }
}
