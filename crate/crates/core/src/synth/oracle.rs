//! Dense brute-force reference computations.
//!
//! Everything here works on plain `Vec`s with its own Gaussian elimination
//! so results can be checked against the production solvers.

#![allow(clippy::needless_range_loop)]

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for a (numerically) singular system.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(*bi);
            r
        })
        .collect();
    let scale = m
        .iter()
        .flat_map(|r| r[..n].iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|i, j| m[*i][col].abs().total_cmp(&m[*j][col].abs()))?;
        if m[piv][col].abs() <= 1e-300_f64.max(scale * 1e-15) {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    Some(x)
}

fn transpose_mul(b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = b.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; k]; k];
    for row in b {
        for i in 0..k {
            for j in 0..k {
                out[i][j] += row[i] * row[j];
            }
        }
    }
    out
}

/// Generalized ridge solution `(B'B + lambda S)^{-1} B'y`. `b` is given by rows.
pub fn oracle_ridge(b: &[Vec<f64>], s: &[Vec<f64>], lambda: f64, y: &[f64]) -> Option<Vec<f64>> {
    let mut a = transpose_mul(b);
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v += lambda * s[i][j];
        }
    }
    let k = a.len();
    let mut rhs = vec![0.0; k];
    for (row, yi) in b.iter().zip(y) {
        for j in 0..k {
            rhs[j] += row[j] * yi;
        }
    }
    solve_dense(&a, &rhs)
}

/// Conditional mean of a zero-mean Gaussian vector given the entries at
/// `observed` (in order) equal `values`. Observed entries are returned as given.
pub fn oracle_gaussian_condition(cov: &[Vec<f64>], observed: &[usize], values: &[f64]) -> Option<Vec<f64>> {
    let n = cov.len();
    let mut out = vec![0.0; n];
    if observed.is_empty() {
        return Some(out);
    }
    let soo: Vec<Vec<f64>> = observed
        .iter()
        .map(|i| observed.iter().map(|j| cov[*i][*j]).collect())
        .collect();
    let w = solve_dense(&soo, values)?;
    for (t, o) in out.iter_mut().enumerate() {
        *o = observed.iter().zip(&w).map(|(j, wj)| cov[t][*j] * wj).sum();
    }
    for (i, v) in observed.iter().zip(values) {
        out[*i] = *v;
    }
    Some(out)
}

/// Conditional variances matching [`oracle_gaussian_condition`].
pub fn oracle_gaussian_condition_var(cov: &[Vec<f64>], observed: &[usize]) -> Option<Vec<f64>> {
    let n = cov.len();
    let soo: Vec<Vec<f64>> = observed
        .iter()
        .map(|i| observed.iter().map(|j| cov[*i][*j]).collect())
        .collect();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        if observed.contains(&t) {
            out.push(0.0);
            continue;
        }
        let c: Vec<f64> = observed.iter().map(|j| cov[t][*j]).collect();
        let w = if observed.is_empty() {
            vec![]
        } else {
            solve_dense(&soo, &c)?
        };
        out.push(cov[t][t] - c.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
    }
    Some(out)
}

/// Autocovariances `gamma_0..=gamma_maxlag` of a stationary AR process with
/// innovation variance `sigma2`, from the Yule-Walker system.
pub fn oracle_ar_autocovariance(psi: &[f64], sigma2: f64, maxlag: usize) -> Option<Vec<f64>> {
    let p = psi.len();
    // unknowns gamma_0..gamma_p:
    // gamma_0 - sum psi_i gamma_i = sigma2
    // gamma_k - sum psi_i gamma_|k-i| = 0, k = 1..p
    let mut a = vec![vec![0.0; p + 1]; p + 1];
    let mut b = vec![0.0; p + 1];
    b[0] = sigma2;
    for k in 0..=p {
        a[k][k] += 1.0;
        for (i, ps) in psi.iter().enumerate() {
            let lag = (k as i64 - (i as i64 + 1)).unsigned_abs() as usize;
            a[k][lag] -= ps;
        }
    }
    let mut g = solve_dense(&a, &b)?;
    for k in p + 1..=maxlag {
        let v = psi.iter().enumerate().map(|(i, ps)| ps * g[k - 1 - i]).sum();
        g.push(v);
    }
    g.truncate(maxlag + 1);
    Some(g)
}

/// Textbook sample cross-correlation `r_k` for `k = 1..=max_lag`, pairing
/// `x_t` with `y_{t+k}`, with the overall means and the `1/n` convention.
/// Non-finite values are skipped pairwise.
pub fn oracle_classical_ccf(x: &[f64], y: &[f64], max_lag: usize) -> Vec<f64> {
    let mean_sd = |v: &[f64]| {
        let obs: Vec<f64> = v.iter().copied().filter(|a| a.is_finite()).collect();
        let m = obs.iter().sum::<f64>() / obs.len() as f64;
        let var = obs.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / obs.len() as f64;
        (m, var.sqrt(), obs.len() as f64)
    };
    let (mx, sx, nx) = mean_sd(x);
    let (my, sy, ny) = mean_sd(y);
    let n = nx.min(ny);
    (1..=max_lag)
        .map(|k| {
            let mut s = 0.0;
            for t in 0..x.len().saturating_sub(k) {
                if x[t].is_finite() && y[t + k].is_finite() {
                    s += (x[t] - mx) * (y[t + k] - my);
                }
            }
            s / (n * sx * sy)
        })
        .collect()
}
