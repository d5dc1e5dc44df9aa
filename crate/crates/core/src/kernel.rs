use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::spd_inverse;

/// Kernel used to weight observations by their distance to the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    #[default]
    Triangular,
    Uniform,
    Epanechnikov,
}

impl KernelSpec {
    pub const ALL: [KernelSpec; 3] = [
        KernelSpec::Triangular,
        KernelSpec::Uniform,
        KernelSpec::Epanechnikov,
    ];

    pub fn weight(self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            KernelSpec::Triangular => (1.0 - a).max(0.0),
            KernelSpec::Uniform => {
                if a <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelSpec::Epanechnikov => (0.75 * (1.0 - u * u)).max(0.0),
        }
    }

    /// `∫_0^1 u^j K(u) du`.
    fn moment(self, j: usize) -> f64 {
        let j = j as f64;
        match self {
            KernelSpec::Triangular => 1.0 / ((j + 1.0) * (j + 2.0)),
            KernelSpec::Uniform => 1.0 / (j + 1.0),
            KernelSpec::Epanechnikov => 0.75 * (1.0 / (j + 1.0) - 1.0 / (j + 3.0)),
        }
    }

    /// `∫_0^1 u^j K(u)^2 du`.
    fn squared_moment(self, j: usize) -> f64 {
        let j = j as f64;
        match self {
            KernelSpec::Triangular => 2.0 / ((j + 1.0) * (j + 2.0) * (j + 3.0)),
            KernelSpec::Uniform => 1.0 / (j + 1.0),
            KernelSpec::Epanechnikov => {
                0.5625 * (1.0 / (j + 1.0) - 2.0 / (j + 3.0) + 1.0 / (j + 5.0))
            }
        }
    }

    /// Boundary equivalent-kernel constants for an order-`p` local polynomial
    /// intercept on a one-sided support `[0, 1]`.
    pub fn boundary_constants(self, p: usize) -> BoundaryConstants {
        let dim = p + 1;
        let gamma: Vec<f64> = (0..dim * dim)
            .map(|idx| self.moment(idx / dim + idx % dim))
            .collect();
        let psi: Vec<f64> = (0..dim * dim)
            .map(|idx| self.squared_moment(idx / dim + idx % dim))
            .collect();
        let inv = spd_inverse(&gamma, dim).expect("kernel moment matrix is positive definite");
        // first row of Γ⁻¹
        let e0: Vec<f64> = inv[..dim].to_vec();
        let bias = (0..dim).map(|k| e0[k] * self.moment(p + 1 + k)).sum();
        let mut variance = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                variance += e0[i] * psi[i * dim + j] * e0[j];
            }
        }
        BoundaryConstants { bias, variance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConstants {
    /// Leading bias of the intercept per unit of the order-`p+1` coefficient,
    /// in units of `h^(p+1)`.
    pub bias: f64,
    /// Variance of the intercept in units of `σ² / (n h f)`.
    pub variance: f64,
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelSpec::Triangular => "triangular",
            KernelSpec::Uniform => "uniform",
            KernelSpec::Epanechnikov => "epanechnikov",
        })
    }
}

impl FromStr for KernelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" | "tri" => Ok(KernelSpec::Triangular),
            "uniform" | "uni" => Ok(KernelSpec::Uniform),
            "epanechnikov" | "epa" => Ok(KernelSpec::Epanechnikov),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights() {
        assert_eq!(KernelSpec::Triangular.weight(0.0), 1.0);
        assert_eq!(KernelSpec::Triangular.weight(0.5), 0.5);
        assert_eq!(KernelSpec::Uniform.weight(1.0), 1.0);
        assert_eq!(KernelSpec::Epanechnikov.weight(0.0), 0.75);
        for k in KernelSpec::ALL {
            assert_eq!(k.weight(1.5), 0.0);
            assert_eq!(k.weight(-1.5), 0.0);
            for i in -20..=20 {
                assert!(k.weight(i as f64 * 0.1) >= 0.0);
            }
        }
    }

    #[test]
    fn triangular_local_linear_constants() {
        // closed forms from the moments 1/2, 1/6, 1/12, 1/20 and 1/3, 1/12, 1/30
        let c = KernelSpec::Triangular.boundary_constants(1);
        assert!((c.variance - 4.8).abs() < 1e-10);
        assert!((c.bias + 0.1).abs() < 1e-12);
        let u = KernelSpec::Uniform.boundary_constants(1);
        assert!((u.variance - 4.0).abs() < 1e-10);
        assert!((u.bias + 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn moments_match_quadrature() {
        let n = 200_000;
        for k in KernelSpec::ALL {
            for j in 0..6 {
                let (mut m, mut s) = (0.0, 0.0);
                for i in 0..n {
                    let u = (i as f64 + 0.5) / n as f64;
                    let w = k.weight(u);
                    m += u.powi(j as i32) * w / n as f64;
                    s += u.powi(j as i32) * w * w / n as f64;
                }
                assert!((m - k.moment(j)).abs() < 1e-8, "{k} moment {j}");
                assert!((s - k.squared_moment(j)).abs() < 1e-8, "{k} sq moment {j}");
            }
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!(
            "EPA".parse::<KernelSpec>().unwrap(),
            KernelSpec::Epanechnikov
        );
        assert!("gauss".parse::<KernelSpec>().is_err());
    }
}
