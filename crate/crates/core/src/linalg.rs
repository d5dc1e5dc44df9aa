//! Dense symmetric positive-definite inversion for the small Gram matrices
//! used by the polynomial fits (dimension <= 6).

/// Relative pivot tolerance below which a Gram matrix is treated as singular.
pub const RANK_TOL: f64 = 1e-10;

/// Inverse of a symmetric positive-definite matrix given row-major, via
/// Cholesky. Returns `None` when a pivot falls below `RANK_TOL` times the
/// corresponding diagonal entry.
pub fn spd_inverse(a: &[f64], dim: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), dim * dim);
    let mut l = vec![0.0; dim * dim];
    for j in 0..dim {
        let mut d = a[j * dim + j];
        for k in 0..j {
            d -= l[j * dim + k] * l[j * dim + k];
        }
        let diag = a[j * dim + j];
        if !(diag > 0.0) || !(d > RANK_TOL * diag) {
            return None;
        }
        let ljj = d.sqrt();
        l[j * dim + j] = ljj;
        for i in (j + 1)..dim {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            l[i * dim + j] = s / ljj;
        }
    }
    // invert L (lower triangular), then A^-1 = L^-T L^-1
    let mut linv = vec![0.0; dim * dim];
    for i in 0..dim {
        linv[i * dim + i] = 1.0 / l[i * dim + i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i * dim + k] * linv[k * dim + j];
            }
            linv[i * dim + j] = s / l[i * dim + i];
        }
    }
    let mut inv = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..dim {
                s += linv[k * dim + i] * linv[k * dim + j];
            }
            inv[i * dim + j] = s;
            inv[j * dim + i] = s;
        }
    }
    Some(inv)
}

pub fn mat_vec(a: &[f64], dim: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..dim {
        out[i] = (0..dim).map(|k| a[i * dim + k] * x[k]).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_hilbert() {
        let dim = 4;
        let a: Vec<f64> = (0..dim * dim)
            .map(|idx| 1.0 / ((idx / dim + idx % dim + 1) as f64))
            .collect();
        let inv = spd_inverse(&a, dim).unwrap();
        for i in 0..dim {
            for j in 0..dim {
                let s: f64 = (0..dim).map(|k| a[i * dim + k] * inv[k * dim + j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-9, "({i},{j}) = {s}");
            }
        }
    }

    #[test]
    fn detects_rank_deficiency() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(spd_inverse(&a, 2).is_none());
        assert!(spd_inverse(&[0.0], 1).is_none());
    }
}
