//! Shared test oracles, independent of the library's implementation paths:
//! a cyclic Jacobi eigenvalue solver, a dense Cholesky factorization/solve,
//! reference radical inverses, and brute-force combination coefficients.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// All eigenvalues of a dense symmetric matrix (row-major), ascending,
/// by the cyclic Jacobi rotation method.
pub fn jacobi_eigenvalues(n: usize, data: &[f64]) -> Vec<f64> {
    assert_eq!(data.len(), n * n);
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| data[i * n..(i + 1) * n].to_vec()).collect();
    let scale: f64 = data.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Eigenvalues of a symmetric 3×3 matrix, ascending.
pub fn jacobi_eigenvalues_3x3(m: [[f64; 3]; 3]) -> [f64; 3] {
    let flat: Vec<f64> = m.iter().flatten().copied().collect();
    let e = jacobi_eigenvalues(3, &flat);
    [e[0], e[1], e[2]]
}

/// Dense Cholesky factor (lower triangular, row-major); None if the matrix
/// is not positive definite.
pub fn dense_cholesky(n: usize, data: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = data[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves a dense SPD system by Cholesky factorization plus substitution.
pub fn dense_solve_spd(n: usize, data: &[f64], b: &[f64]) -> Vec<f64> {
    let l = dense_cholesky(n, data).expect("oracle matrix must be SPD");
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

/// A random PSD matrix G·Gᵀ of exact rank ≤ `rank`, row-major.
pub fn random_psd(n: usize, rank: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..n * rank).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut sum = 0.0;
            for k in 0..rank {
                sum += g[i * rank + k] * g[j * rank + k];
            }
            a[i * n + j] = sum;
        }
    }
    a
}

/// ‖A − LLᵀ‖_F / ‖A‖_F for a column-list factor.
pub fn relative_factor_error(n: usize, a: &[f64], columns: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in 0..n {
            let recon: f64 = columns.iter().map(|c| c[i] * c[j]).sum();
            let d = a[i * n + j] - recon;
            num += d * d;
            den += a[i * n + j] * a[i * n + j];
        }
    }
    (num / den).sqrt()
}

/// Reference radical inverse: digits collected first, then summed from the
/// least significant end (a different evaluation order than the library).
pub fn radical_inverse_reference(i: u64, base: u64) -> f64 {
    let mut digits = Vec::new();
    let mut k = i;
    while k > 0 {
        digits.push(k % base);
        k /= base;
    }
    let mut x = 0.0;
    for &d in digits.iter().rev() {
        x = (x + d as f64) / base as f64;
    }
    x
}

/// Brute-force combination coefficient: the literal signed sum over all
/// 2^M corners.
pub fn combination_coefficient_bruteforce(q: f64, w: &[f64], alpha: &[u32]) -> i64 {
    let m = w.len();
    let mut total = 0i64;
    for mask in 0..(1u32 << m) {
        let mut inner = 0.0;
        let mut parity = 0u32;
        for k in 0..m {
            let beta = (mask >> k) & 1;
            parity += beta;
            inner += (alpha[k] + beta) as f64 * w[k];
        }
        if inner <= q {
            total += if parity % 2 == 0 { 1 } else { -1 };
        }
    }
    total
}

/// Brute-force enumeration of Y_w(q,M) over a bounding box.
pub fn index_set_bruteforce(q: f64, w: &[f64]) -> Vec<Vec<u32>> {
    let m = w.len();
    let lower: f64 = q - w.iter().sum::<f64>();
    let caps: Vec<u32> = w.iter().map(|&wk| (q / wk).floor() as u32).collect();
    let mut out = Vec::new();
    let mut alpha = vec![0u32; m];
    loop {
        let inner: f64 = alpha.iter().zip(w).map(|(&a, &wk)| a as f64 * wk).sum();
        if inner <= q && inner >= lower {
            out.push(alpha.clone());
        }
        let mut k = 0;
        loop {
            if k == m {
                return out;
            }
            alpha[k] += 1;
            if alpha[k] <= caps[k] {
                break;
            }
            alpha[k] = 0;
            k += 1;
        }
    }
}

/// Exact uniform-measure moment of a monomial on [−1,1]: E[y^a].
pub fn uniform_moment(power: u32) -> f64 {
    if power % 2 == 1 {
        0.0
    } else {
        1.0 / (power as f64 + 1.0)
    }
}
