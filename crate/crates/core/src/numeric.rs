//! Small numerical building blocks shared by the estimators: compensated
//! summation, the normal and Student-t quantiles, and a rank-revealing
//! inverse for symmetric positive semi-definite Gram matrices.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated mean of an iterator of known length `n`.
pub fn compensated_mean<I: IntoIterator<Item = f64>>(values: I, n: usize) -> f64 {
    values.into_iter().collect::<CompensatedSum>().total() / n as f64
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    standard_normal().cdf(z)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    standard_normal().pdf(z)
}

/// Standard normal quantile.
///
/// Backed by `statrs`, which evaluates `-sqrt(2) * erfc_inv(2p)` using the
/// Boost rational approximations of the inverse error function. Those are
/// accurate to a few ulps, well inside the 1e-9 budget needed for
/// table-level reproducibility.
pub fn norm_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Two-sided normal critical value `z0 = Phi^{-1}(1 - alpha/2)`.
pub fn two_sided_normal_cv(alpha: f64) -> f64 {
    norm_quantile(1.0 - alpha / 2.0)
}

/// Quantile of Student's t with `df` degrees of freedom.
pub fn student_t_quantile(df: f64, p: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Domain(format!("Student t with df={df}: {e}")))?;
    Ok(dist.inverse_cdf(p))
}

/// Spectral decomposition of a symmetric PSD matrix, used both for
/// checked inversion and for the Moore-Penrose fallback.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl GramSpectrum {
    pub fn new(gram: &DMatrix<f64>) -> Self {
        let eig = gram.clone().symmetric_eigen();
        Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    fn max_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn argmin_abs(&self) -> usize {
        self.eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Ratio of smallest to largest singular value (0 for the zero matrix).
    pub fn reciprocal_condition(&self) -> f64 {
        let max = self.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        self.eigenvalues[self.argmin_abs()].abs() / max
    }

    pub fn is_singular(&self) -> bool {
        self.reciprocal_condition() <= RANK_TOLERANCE
    }

    /// Eigenvector belonging to the smallest singular value.
    pub fn null_direction(&self) -> DVector<f64> {
        self.eigenvectors.column(self.argmin_abs()).into_owned()
    }

    /// Pseudo-inverse, dropping singular values below the relative cutoff.
    /// For a well-conditioned matrix this is the ordinary inverse.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let k = self.eigenvalues.len();
        let cutoff = RANK_TOLERANCE * self.max_abs();
        let mut out = DMatrix::zeros(k, k);
        for (j, &ev) in self.eigenvalues.iter().enumerate() {
            if ev.abs() <= cutoff || ev == 0.0 {
                continue;
            }
            let v = self.eigenvectors.column(j);
            out.ger(1.0 / ev, &v, &v, 1.0);
        }
        symmetrize(&mut out);
        out
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Inverse of a symmetric PSD matrix, or a rank error naming the null
/// direction when it is numerically singular.
pub fn checked_inverse(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let spectrum = GramSpectrum::new(gram);
    if spectrum.is_singular() {
        return Err(Error::Rank {
            condition: spectrum.reciprocal_condition(),
            null_direction: spectrum.null_direction().iter().copied().collect(),
        });
    }
    Ok(spectrum.pseudo_inverse())
}

/// Largest absolute entry of `m - m'`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        let acc: CompensatedSum = values.iter().copied().collect();
        assert_eq!(acc.total(), 2.0);
        assert_ne!(values.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn normal_quantile_reference_values() {
        assert_abs_diff_eq!(norm_quantile(0.975), 1.959_963_984_540_054, epsilon = 1e-12);
        assert_abs_diff_eq!(norm_quantile(0.5), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_quantile(0.995), 2.575_829_303_548_901, epsilon = 1e-12);
        for &p in &[1e-6, 0.01, 0.3, 0.7, 0.99] {
            assert_abs_diff_eq!(
                norm_cdf(norm_quantile(p)),
                p,
                epsilon = 1e-9 * p.min(1.0 - p)
            );
        }
    }

    #[test]
    fn student_quantile_reference_values() {
        assert_abs_diff_eq!(
            student_t_quantile(9.0, 0.975).unwrap(),
            2.262_157_162_740_992,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            student_t_quantile(199.0, 0.975).unwrap(),
            1.971_956_544_249_063,
            epsilon = 1e-9
        );
        assert!(student_t_quantile(0.0, 0.975).is_err());
    }

    #[test]
    fn checked_inverse_detects_singularity() {
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match checked_inverse(&gram) {
            Err(Error::Rank { null_direction, .. }) => {
                let r = null_direction[0] / null_direction[1];
                assert_abs_diff_eq!(r, -1.0, epsilon = 1e-12);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn pseudo_inverse_of_rank_one_gram() {
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let pinv = GramSpectrum::new(&gram).pseudo_inverse();
        let expected = DMatrix::from_element(2, 2, 0.25);
        assert!((pinv - expected).abs().max() < 1e-14);

        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let pinv = GramSpectrum::new(&gram).pseudo_inverse();
        assert!((pinv - gram).abs().max() < 1e-14);
    }

    #[test]
    fn inverse_of_regular_gram() {
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.5]);
        let inv = checked_inverse(&gram).unwrap();
        let id = &inv * &gram;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        assert!(max_asymmetry(&inv) == 0.0);
    }
}
