//! Shift-invariant base kernels, Gram matrices, mixture kernels and alignment.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{row, squared_distance};
use crate::error::{Error, Result};
use crate::mmd::MixtureWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-|x-y|^2 / (2 rho^2))`
    Gaussian,
    /// `exp(-|x-y| / rho)`
    Laplacian,
    /// `prod_k exp(-(x_k-y_k)^2 / (2 rho^2))`
    Anova,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "laplacian" => Ok(KernelFamily::Laplacian),
            "anova" => Ok(KernelFamily::Anova),
            other => Err(Error::invalid(format!("unknown kernel family {other:?}"))),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplacian => "laplacian",
            KernelFamily::Anova => "anova",
        })
    }
}

/// A kernel family with bandwidth `rho > 0`. All built-in families satisfy
/// `k(x, x) = 1` and `0 < k <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseKernel {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl BaseKernel {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { family, bandwidth })
    }

    /// Builds a kernel from `gamma = 1 / (2 rho^2)`.
    pub fn from_gamma(family: KernelFamily, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
        }
        Self::new(family, (0.5 / gamma).sqrt())
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    pub fn laplacian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplacian, bandwidth)
    }

    pub fn anova(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Anova, bandwidth)
    }

    pub fn gamma(&self) -> f64 {
        0.5 / (self.bandwidth * self.bandwidth)
    }

    /// `sup |k|`; 1 for every built-in family.
    pub fn bound(&self) -> f64 {
        1.0
    }

    /// Evaluates the kernel. Slices must have equal length (checked in debug
    /// builds only; use [`eval_kernel`] for a checked call).
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let two_rho_sq = 2.0 * self.bandwidth * self.bandwidth;
        match self.family {
            KernelFamily::Gaussian => (-squared_distance(x, y) / two_rho_sq).exp(),
            KernelFamily::Laplacian => (-squared_distance(x, y).sqrt() / self.bandwidth).exp(),
            KernelFamily::Anova => x
                .iter()
                .zip(y)
                .map(|(a, b)| (-(a - b) * (a - b) / two_rho_sq).exp())
                .product(),
        }
    }
}

impl fmt::Display for BaseKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(rho={})", self.family, self.bandwidth)
    }
}

pub fn eval_kernel(k: &BaseKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel argument".into()));
    }
    Ok(k.eval(x, y))
}

/// Dense symmetric kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix(pub Array2<f64>);

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diag().sum()
    }

    /// Frobenius inner product `Tr(A B^T)`.
    pub fn frobenius_dot(&self, other: &KernelMatrix) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    /// Largest eigenvalue magnitude via a dense symmetric eigensolve.
    pub fn spectral_norm(&self) -> f64 {
        crate::linalg::symmetric_spectral_norm(&self.0)
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        crate::linalg::symmetric_eigenvalues(&self.0)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `K[i][j] = k(x_i, x_j)`; each upper-triangle entry is computed once and mirrored.
pub fn gram_matrix(k: &BaseKernel, x: &Array2<f64>) -> KernelMatrix {
    let n = x.nrows();
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        let xi = row(x, i);
        g[[i, i]] = k.eval(xi, xi);
        for j in i + 1..n {
            let v = k.eval(xi, row(x, j));
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    KernelMatrix(g)
}

/// Cross-kernel matrix `K[i][j] = k(a_i, b_j)`.
pub fn cross_gram(k: &BaseKernel, a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| k.eval(row(a, i), row(b, j)))
}

/// `K^w = sum_l w_l K^l`.
pub fn mixture_gram(kernels: &[BaseKernel], w: &MixtureWeights, x: &Array2<f64>) -> Result<KernelMatrix> {
    if kernels.is_empty() || kernels.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: kernels.len(),
            found: w.len(),
        });
    }
    let n = x.nrows();
    let mut out = Array2::zeros((n, n));
    for (k, &wl) in kernels.iter().zip(w.as_slice()) {
        if wl == 0.0 {
            continue;
        }
        out.scaled_add(wl, &gram_matrix(k, x).0);
    }
    Ok(KernelMatrix(out))
}

/// `<K1, K2> / sqrt(<K1, K1> <K2, K2>)`.
pub fn alignment(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<f64> {
    if k1.0.dim() != k2.0.dim() {
        return Err(Error::DimensionMismatch {
            expected: k1.n(),
            found: k2.n(),
        });
    }
    let n1 = k1.frobenius_dot(k1);
    let n2 = k2.frobenius_dot(k2);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((k1.frobenius_dot(k2) / (n1.sqrt() * n2.sqrt())).clamp(-1.0, 1.0))
}

/// Alignment with the ideal label kernel: `<K, y y^T> / (n |K|_F)`.
pub fn target_alignment(k: &KernelMatrix, y: &[i8]) -> Result<f64> {
    let n = k.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    let fro = k.frobenius_dot(k).sqrt();
    if fro == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut dot = 0.0;
    for i in 0..n {
        for j in 0..n {
            dot += k.0[[i, j]] * f64::from(y[i]) * f64::from(y[j]);
        }
    }
    Ok((dot / (n as f64 * fro)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    const FAMILIES: [KernelFamily; 3] = [KernelFamily::Gaussian, KernelFamily::Laplacian, KernelFamily::Anova];

    #[test]
    fn unit_on_diagonal() {
        for f in FAMILIES {
            let k = BaseKernel::new(f, 0.7).unwrap();
            assert_eq!(k.eval(&[1.0, -2.0], &[1.0, -2.0]), 1.0);
        }
    }

    #[test]
    fn scalar_values() {
        let g = BaseKernel::from_gamma(KernelFamily::Gaussian, 0.5).unwrap();
        assert!((g.bandwidth - 1.0).abs() < 1e-15);
        assert!((g.eval(&[0.0, 0.0], &[1.0, 1.0]) - (-1f64).exp()).abs() < 1e-15);
        let l = BaseKernel::laplacian(1.0).unwrap();
        assert!((l.eval(&[0.0, 0.0], &[3.0, 4.0]) - (-5f64).exp()).abs() < 1e-15);
        assert!((0.367879 - (-1f64).exp()).abs() < 1e-6);
        assert!((0.0067379 - (-5f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn invalid_bandwidth_and_dimension() {
        assert!(BaseKernel::gaussian(0.0).is_err());
        assert!(BaseKernel::gaussian(f64::NAN).is_err());
        assert!(BaseKernel::from_gamma(KernelFamily::Gaussian, -1.0).is_err());
        let k = BaseKernel::gaussian(1.0).unwrap();
        assert!(matches!(
            eval_kernel(&k, &[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gram_small_cases() {
        let k = BaseKernel::gaussian(1.0).unwrap();
        assert_eq!(gram_matrix(&k, &array![[0.3, 0.1]]).0, array![[1.0]]);
        assert_eq!(gram_matrix(&k, &array![[0.3, 0.1], [0.3, 0.1]]).0, Array2::<f64>::ones((2, 2)));
    }

    #[test]
    fn gram_matches_double_loop() {
        let x = array![[0.1, -0.4], [1.3, 0.2], [-0.7, 0.9]];
        for f in FAMILIES {
            let k = BaseKernel::new(f, 0.8).unwrap();
            let g = gram_matrix(&k, &x);
            for i in 0..3 {
                for j in 0..3 {
                    let xi = x.row(i).to_vec();
                    let xj = x.row(j).to_vec();
                    let d2: f64 = xi.iter().zip(&xj).map(|(a, b)| (a - b).powi(2)).sum();
                    let expect = match f {
                        KernelFamily::Gaussian | KernelFamily::Anova => (-d2 / (2.0 * 0.64)).exp(),
                        KernelFamily::Laplacian => (-d2.sqrt() / 0.8).exp(),
                    };
                    assert!((g.0[[i, j]] - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn mixture_gram_cases() {
        let x = array![[0.0, 0.0], [1.0, 0.5], [-0.5, 2.0], [0.3, 0.3]];
        let k1 = BaseKernel::gaussian(1.0).unwrap();
        let k2 = BaseKernel::gaussian(2.0).unwrap();
        let single = mixture_gram(&[k1], &MixtureWeights::new(vec![1.0]).unwrap(), &x).unwrap();
        assert_eq!(single, gram_matrix(&k1, &x));
        let dup = mixture_gram(&[k1, k1], &MixtureWeights::new(vec![0.5, 0.5]).unwrap(), &x).unwrap();
        assert!((&dup.0 - &gram_matrix(&k1, &x).0).iter().all(|v| v.abs() < 1e-14));
        let mix = mixture_gram(&[k1, k2], &MixtureWeights::new(vec![0.3, 0.7]).unwrap(), &x).unwrap();
        let expect = gram_matrix(&k1, &x).0 * 0.3 + gram_matrix(&k2, &x).0 * 0.7;
        assert!((&mix.0 - &expect).iter().all(|v| v.abs() < 1e-14));
        assert!(mixture_gram(&[k1], &MixtureWeights::new(vec![0.5, 0.5]).unwrap(), &x).is_err());
    }

    #[test]
    fn alignment_cases() {
        let i2 = KernelMatrix(Array2::eye(2));
        let j2 = KernelMatrix(Array2::ones((2, 2)));
        assert!((alignment(&i2, &i2).unwrap() - 1.0).abs() < 1e-15);
        // <I,J> = 2, |I| = sqrt 2, |J| = 2.
        assert!((alignment(&i2, &j2).unwrap() - 2.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        let scaled = KernelMatrix(&j2.0 * 3.5);
        assert!((alignment(&j2, &scaled).unwrap() - 1.0).abs() < 1e-15);
        let zero = KernelMatrix(Array2::zeros((2, 2)));
        assert!(matches!(alignment(&zero, &i2), Err(Error::ZeroNorm)));
    }

    #[test]
    fn target_alignment_cases() {
        let y: Vec<i8> = vec![1, -1, 1, 1, -1];
        let yy = KernelMatrix(Array2::from_shape_fn((5, 5), |(i, j)| f64::from(y[i] * y[j])));
        assert!((target_alignment(&yy, &y).unwrap() - 1.0).abs() < 1e-14);
        let eye = KernelMatrix(Array2::eye(5));
        assert!((target_alignment(&eye, &y).unwrap() - 1.0 / 5f64.sqrt()).abs() < 1e-14);
        assert!(target_alignment(&eye, &y[..3]).is_err());
    }

    #[test]
    fn psd_and_spectral_triangle() {
        let x = Array2::from_shape_fn((30, 3), |(i, j)| ((i * 13 + j * 7) % 17) as f64 / 5.0 - 1.5);
        let kernels = [BaseKernel::gaussian(0.5).unwrap(), BaseKernel::laplacian(2.0).unwrap()];
        for k in &kernels {
            assert!(gram_matrix(k, &x).min_eigenvalue() >= -1e-8);
        }
        let w = MixtureWeights::new(vec![0.4, 0.6]).unwrap();
        let mix = mixture_gram(&kernels, &w, &x).unwrap();
        let bound: f64 = kernels
            .iter()
            .zip(w.as_slice())
            .map(|(k, wl)| wl * gram_matrix(k, &x).spectral_norm())
            .sum();
        assert!(mix.spectral_norm() <= bound + 1e-8);
    }

    fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, d)
    }

    proptest! {
        #[test]
        fn bounded_symmetric_shift_invariant(
            x in point(3), y in point(3), t in point(3),
            rho in 0.2f64..4.0, fam in 0usize..3,
        ) {
            let k = BaseKernel::new(FAMILIES[fam], rho).unwrap();
            let v = k.eval(&x, &y);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, k.eval(&y, &x));
            let xs: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a + b).collect();
            let ys: Vec<f64> = y.iter().zip(&t).map(|(a, b)| a + b).collect();
            prop_assert!((v - k.eval(&xs, &ys)).abs() <= 1e-12);
        }

        #[test]
        fn gram_is_psd(rows in proptest::collection::vec(point(2), 2..20), rho in 0.3f64..3.0, fam in 0usize..3) {
            let n = rows.len();
            let x = Array2::from_shape_vec((n, 2), rows.concat()).unwrap();
            let g = gram_matrix(&BaseKernel::new(FAMILIES[fam], rho).unwrap(), &x);
            prop_assert!(g.min_eigenvalue() >= -1e-8);
            for i in 0..n {
                prop_assert_eq!(g.0[[i, i]], 1.0);
            }
        }

        #[test]
        fn target_alignment_equals_alignment_with_label_kernel(
            rows in proptest::collection::vec(point(2), 2..12),
            signs in proptest::collection::vec(proptest::bool::ANY, 12),
        ) {
            let n = rows.len();
            let x = Array2::from_shape_vec((n, 2), rows.concat()).unwrap();
            let y: Vec<i8> = signs[..n].iter().map(|&s| if s { 1 } else { -1 }).collect();
            let k = gram_matrix(&BaseKernel::gaussian(1.0).unwrap(), &x);
            let yy = KernelMatrix(Array2::from_shape_fn((n, n), |(i, j)| f64::from(y[i] * y[j])));
            let a = target_alignment(&k, &y).unwrap();
            let b = alignment(&k, &yy).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
