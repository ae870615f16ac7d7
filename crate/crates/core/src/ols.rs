//! Clustered least squares, the cluster-robust variance of `lambda' beta_hat`,
//! the t-statistic, and the per-cluster score decomposition that feeds the
//! Edgeworth moments.

use nalgebra::{DMatrix, DVector};

use crate::data::{ClusteredDataset, Hypothesis};
use crate::error::{Error, Result};
use crate::numeric::{checked_inverse, compensated_mean, CompensatedSum};

/// Relative size below which a variance is treated as exactly zero.
pub(crate) const DEGENERATE_TOLERANCE: f64 = 1e-13;

/// Per-cluster cross products `X_g'X_g` and `X_g'Y_g`.
///
/// Everything the estimators need besides residual vectors is a function
/// of these, which is what makes the bootstrap loops cheap.
#[derive(Debug, Clone)]
pub(crate) struct CrossProducts {
    pub xtx: Vec<DMatrix<f64>>,
    pub xty: Vec<DVector<f64>>,
}

impl CrossProducts {
    pub fn new(d: &ClusteredDataset) -> Self {
        let (xtx, xty) = d
            .clusters()
            .iter()
            .map(|c| (c.x().tr_mul(c.x()), c.x().tr_mul(c.y())))
            .unzip();
        Self { xtx, xty }
    }

    pub fn k(&self) -> usize {
        self.xty[0].len()
    }

    pub fn num_clusters(&self) -> usize {
        self.xty.len()
    }

    /// `(1/G) sum_g X_g'X_g`
    pub fn gram(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut gram = DMatrix::zeros(k, k);
        for m in &self.xtx {
            gram += m;
        }
        gram / self.num_clusters() as f64
    }

    pub fn mean_xty(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.k());
        for v in &self.xty {
            acc += v;
        }
        acc / self.num_clusters() as f64
    }
}

/// True when `value` is negligible next to the typical magnitude `scale`
/// of the terms that produced it.
pub(crate) fn is_negligible(value: f64, scale: f64) -> bool {
    value.abs() <= DEGENERATE_TOLERANCE * scale
}

/// Result of a clustered OLS fit with its cluster-robust t-statistic.
#[derive(Debug, Clone)]
pub struct ClusterFit {
    beta_hat: DVector<f64>,
    pi: DMatrix<f64>,
    resid: Vec<DVector<f64>>,
    scores: Vec<DVector<f64>>,
    sigma2_hat: f64,
    t_stat: f64,
    hypothesis: Hypothesis,
}

impl ClusterFit {
    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    /// `Pi = ((1/G) sum_g X_g'X_g)^{-1}`
    pub fn pi(&self) -> &DMatrix<f64> {
        &self.pi
    }

    /// Residual vectors `u_hat_g = Y_g - X_g beta_hat`.
    pub fn resid(&self) -> &[DVector<f64>] {
        &self.resid
    }

    /// Score vectors `X_g' u_hat_g`.
    pub fn scores(&self) -> &[DVector<f64>] {
        &self.scores
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.sigma2_hat
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma2_hat.sqrt()
    }

    pub fn t_stat(&self) -> f64 {
        self.t_stat
    }

    pub fn hypothesis(&self) -> &Hypothesis {
        &self.hypothesis
    }

    pub fn num_clusters(&self) -> usize {
        self.resid.len()
    }

    /// `lambda' beta_hat`
    pub fn estimate(&self) -> f64 {
        self.hypothesis.lambda().dot(&self.beta_hat)
    }

    /// Standard error of `lambda' beta_hat`, `sigma_hat / sqrt(G)`.
    pub fn std_error(&self) -> f64 {
        self.sigma_hat() / (self.num_clusters() as f64).sqrt()
    }

    /// Projected scores `lambda' Pi X_g' u_hat_g`.
    pub fn projected_scores(&self) -> Vec<f64> {
        let w = self.pi.tr_mul(self.hypothesis.lambda());
        self.scores.iter().map(|s| w.dot(s)).collect()
    }
}

/// Fits OLS and the cluster-robust t-statistic for `h`.
///
/// Fails with a rank error when the Gram matrix is numerically singular and
/// with [`Error::DegenerateVariance`] when `sigma_hat` is zero.
pub fn fit(d: &ClusteredDataset, h: &Hypothesis) -> Result<ClusterFit> {
    let fit = fit_allow_degenerate(d, h)?;
    if fit.sigma2_hat == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok(fit)
}

/// Like [`fit`] but returns `sigma_hat = 0` (and a t-statistic of 0 or
/// infinity) instead of failing when the variance vanishes.
pub(crate) fn fit_allow_degenerate(d: &ClusteredDataset, h: &Hypothesis) -> Result<ClusterFit> {
    let k = d.num_regressors();
    h.check_dimension(k)?;
    let g = d.num_clusters();
    let cp = CrossProducts::new(d);
    let pi = checked_inverse(&cp.gram())?;
    let beta_hat = &pi * cp.mean_xty();

    let resid: Vec<DVector<f64>> = d
        .clusters()
        .iter()
        .map(|c| c.y() - c.x() * &beta_hat)
        .collect();
    let scores: Vec<DVector<f64>> = d
        .clusters()
        .iter()
        .zip(&resid)
        .map(|(c, u)| c.x().tr_mul(u))
        .collect();

    let w = pi.tr_mul(h.lambda());
    let projected: Vec<f64> = scores.iter().map(|s| w.dot(s)).collect();
    let mut sigma2_hat = compensated_mean(projected.iter().map(|p| p * p), g);
    let raw_scale = compensated_mean(cp.xty.iter().map(|v| w.dot(v).powi(2)), g);
    if is_negligible(sigma2_hat.sqrt(), raw_scale.sqrt()) {
        sigma2_hat = 0.0;
    }

    let numerator = (g as f64).sqrt() * (h.lambda().dot(&beta_hat) - h.c0());
    let t_stat = if sigma2_hat > 0.0 {
        numerator / sigma2_hat.sqrt()
    } else if numerator == 0.0 {
        0.0
    } else {
        numerator.signum() * f64::INFINITY
    };

    Ok(ClusterFit {
        beta_hat,
        pi,
        resid,
        scores,
        sigma2_hat,
        t_stat,
        hypothesis: h.clone(),
    })
}

/// Per-cluster normalized scores and the fixed matrix `Gamma`.
///
/// `omega1[g] = lambda' Pi X_g' u_hat_g / sigma_hat` and
/// `omega2[g] = [Pi X_g' u_hat_g ; X_g'X_g Pi' lambda lambda' Pi X_g' u_hat_g] / sigma_hat`.
/// `Gamma` has top-left block `-(1/G) sum_g X_g'X_g Pi' lambda lambda' Pi X_g'X_g`,
/// identity off-diagonal blocks, and a zero bottom-right block.
#[derive(Debug, Clone)]
pub struct ScoreComponents {
    omega1: Vec<f64>,
    omega2: Vec<DVector<f64>>,
    gamma: DMatrix<f64>,
    k: usize,
}

impl ScoreComponents {
    pub fn omega1(&self) -> &[f64] {
        &self.omega1
    }

    pub fn omega2(&self) -> &[DVector<f64>] {
        &self.omega2
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn num_clusters(&self) -> usize {
        self.omega1.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `v' Gamma v` for a stacked `2k` vector, evaluated blockwise as
    /// `a' A a + 2 a'b`.
    pub fn gamma_quadratic(&self, v: &DVector<f64>) -> f64 {
        let k = self.k;
        let a = v.rows(0, k);
        let b = v.rows(k, k);
        let top_left = self.gamma.view((0, 0), (k, k));
        (top_left * a).dot(&a) + 2.0 * a.dot(&b)
    }

    /// `v' Gamma w` for stacked `2k` vectors.
    pub fn gamma_bilinear(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let k = self.k;
        let (va, vb) = (v.rows(0, k), v.rows(k, k));
        let (wa, wb) = (w.rows(0, k), w.rows(k, k));
        let top_left = self.gamma.view((0, 0), (k, k));
        (top_left * wa).dot(&va) + va.dot(&wb) + vb.dot(&wa)
    }

    /// Builds components directly from normalized scores; mainly useful for
    /// feeding synthetic inputs to the moment estimator.
    pub fn from_parts(
        omega1: Vec<f64>,
        omega2: Vec<DVector<f64>>,
        gamma: DMatrix<f64>,
    ) -> Result<Self> {
        let k2 = gamma.nrows();
        if gamma.ncols() != k2 || k2 == 0 || k2 % 2 != 0 {
            return Err(Error::Argument(
                "Gamma must be a square 2k x 2k matrix".into(),
            ));
        }
        if omega1.len() != omega2.len() || omega1.len() < 2 {
            return Err(Error::Argument(
                "need matching omega1/omega2 for G >= 2 clusters".into(),
            ));
        }
        if omega2.iter().any(|v| v.len() != k2) {
            return Err(Error::Argument("omega2 entries must have length 2k".into()));
        }
        Ok(Self {
            omega1,
            omega2,
            gamma,
            k: k2 / 2,
        })
    }
}

fn gamma_matrix(top_left: &DMatrix<f64>) -> DMatrix<f64> {
    let k = top_left.nrows();
    let mut gamma = DMatrix::zeros(2 * k, 2 * k);
    gamma.view_mut((0, 0), (k, k)).copy_from(top_left);
    for i in 0..k {
        gamma[(i, k + i)] = 1.0;
        gamma[(k + i, i)] = 1.0;
    }
    gamma
}

/// `h_g = X_g'X_g Pi' lambda` for every cluster.
fn leverage_directions(
    d: &ClusteredDataset,
    pi: &DMatrix<f64>,
    lambda: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let w = pi.tr_mul(lambda);
    d.clusters()
        .iter()
        .map(|c| c.x().tr_mul(&(c.x() * &w)))
        .collect()
}

/// `-(1/G) sum_g h_g h_g'`
fn gamma_top_left(h: &[DVector<f64>]) -> DMatrix<f64> {
    let k = h[0].len();
    let mut acc = DMatrix::zeros(k, k);
    for v in h {
        acc.ger(1.0, v, v, 1.0);
    }
    acc * (-1.0 / h.len() as f64)
}

/// Leverage directions `h_g` and the matrix `Gamma`; both depend on the
/// regressors only.
pub(crate) fn leverage_and_gamma(
    d: &ClusteredDataset,
    pi: &DMatrix<f64>,
    lambda: &DVector<f64>,
) -> (Vec<DVector<f64>>, DMatrix<f64>) {
    let h = leverage_directions(d, pi, lambda);
    let gamma = gamma_matrix(&gamma_top_left(&h));
    (h, gamma)
}

/// Normalized per-cluster scores for the Edgeworth moment estimators.
pub fn score_components(fit: &ClusterFit, d: &ClusteredDataset) -> Result<ScoreComponents> {
    if d.num_clusters() != fit.num_clusters() || d.num_regressors() != fit.beta_hat.len() {
        return Err(Error::Argument("dataset does not match the fit".into()));
    }
    let sigma = fit.sigma_hat();
    if sigma <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let lambda = fit.hypothesis.lambda();
    let h = leverage_directions(d, &fit.pi, lambda);
    let w = fit.pi.tr_mul(lambda);
    let k = fit.beta_hat.len();

    let mut omega1 = Vec::with_capacity(d.num_clusters());
    let mut omega2 = Vec::with_capacity(d.num_clusters());
    for (s, hg) in fit.scores.iter().zip(&h) {
        let w1 = w.dot(s) / sigma;
        let top = (&fit.pi * s) / sigma;
        let mut v = DVector::zeros(2 * k);
        v.rows_mut(0, k).copy_from(&top);
        v.rows_mut(k, k).copy_from(&(hg * w1));
        omega1.push(w1);
        omega2.push(v);
    }
    Ok(ScoreComponents {
        omega1,
        omega2,
        gamma: gamma_matrix(&gamma_top_left(&h)),
        k,
    })
}

/// Checks the exact decomposition of `sigma_hat / sigma` into sample means of
/// independent terms, returning `|lhs - rhs|`.
///
/// `true_beta` generates the population errors `u_g = Y_g - X_g beta`;
/// `sigma_g2` are the per-cluster variances of `lambda' Pi X_g' u_g`, whose
/// mean is `sigma^2`. The left side is `sigma_hat / sigma` from the fitted
/// residuals; the right side is `sqrt(1 - W2' Gamma W2 + W3)` with
/// `W2 = mean(omega2_g)` and `W3 = mean(omega3_g)` built from the population
/// errors. The two agree for any inputs, so the residual measures rounding.
pub fn variance_identity_residual(
    d: &ClusteredDataset,
    h: &Hypothesis,
    true_beta: &DVector<f64>,
    sigma_g2: &[f64],
) -> Result<f64> {
    let g = d.num_clusters();
    if sigma_g2.len() != g || true_beta.len() != d.num_regressors() {
        return Err(Error::Argument(
            "sigma_g2 / true_beta do not match the dataset".into(),
        ));
    }
    if sigma_g2.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Argument("sigma_g2 entries must be positive".into()));
    }
    let fit = fit_allow_degenerate(d, h)?;
    let sigma2 = compensated_mean(sigma_g2.iter().copied(), g);
    let sigma = sigma2.sqrt();
    let k = d.num_regressors();
    let lambda = h.lambda();
    let w = fit.pi.tr_mul(lambda);
    let hdir = leverage_directions(d, &fit.pi, lambda);
    let gamma = gamma_matrix(&gamma_top_left(&hdir));

    let mut w2 = DVector::zeros(2 * k);
    let mut w3 = CompensatedSum::new();
    for ((c, hg), &s2g) in d.clusters().iter().zip(&hdir).zip(sigma_g2) {
        let u = c.y() - c.x() * true_beta;
        let xu = c.x().tr_mul(&u);
        let s = w.dot(&xu);
        let mut v = DVector::zeros(2 * k);
        v.rows_mut(0, k).copy_from(&(&fit.pi * &xu));
        v.rows_mut(k, k).copy_from(&(hg * s));
        w2 += v / sigma;
        w3.add((s * s - s2g) / sigma2);
    }
    w2 /= g as f64;
    let w3 = w3.total() / g as f64;
    let radicand = 1.0 - (&gamma * &w2).dot(&w2) + w3;
    if radicand < 0.0 {
        return Err(Error::IdentityFailure(radicand));
    }
    let lhs = fit.sigma_hat() / sigma;
    Ok((lhs - radicand.sqrt()).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClusterBlock;
    use crate::numeric::max_asymmetry;
    use crate::rng::{demeaned_exponential, uniform, StreamKey};
    use approx::assert_abs_diff_eq;

    fn dataset(blocks: Vec<(Vec<f64>, Vec<f64>)>, k: usize) -> ClusteredDataset {
        let clusters = blocks
            .into_iter()
            .enumerate()
            .map(|(i, (y, x))| {
                let n = y.len();
                ClusterBlock::new(
                    format!("c{i}"),
                    DVector::from_vec(y),
                    DMatrix::from_row_slice(n, k, &x),
                )
                .unwrap()
            })
            .collect();
        ClusteredDataset::new(clusters).unwrap()
    }

    pub(crate) fn random_dataset(seed: u64, g: usize, k: usize) -> ClusteredDataset {
        let mut rng = StreamKey::root(seed).rng();
        let blocks = (0..g)
            .map(|_| {
                let n = 1 + (crate::rng::index_below(&mut rng, 4));
                let x: Vec<f64> = (0..n * k).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
                let y: Vec<f64> = (0..n).map(|_| demeaned_exponential(&mut rng)).collect();
                (y, x)
            })
            .collect();
        dataset(blocks, k)
    }

    #[test]
    fn perfect_fit_is_degenerate() {
        let d = dataset(vec![(vec![2.0], vec![1.0]), (vec![4.0], vec![2.0])], 1);
        let h = Hypothesis::new(DVector::from_vec(vec![1.0]), 0.0, 0.05).unwrap();
        assert!(matches!(fit(&d, &h), Err(Error::DegenerateVariance)));
        let f = fit_allow_degenerate(&d, &h).unwrap();
        assert_abs_diff_eq!(f.beta_hat()[0], 2.0, epsilon = 1e-15);
        assert_eq!(f.sigma2_hat(), 0.0);
    }

    #[test]
    fn mean_model_reduces_to_sample_mean() {
        let y = [0.3, -1.2, 2.5, 0.1, -0.4];
        let d = dataset(y.iter().map(|&v| (vec![v], vec![1.0])).collect(), 1);
        let h = Hypothesis::new(DVector::from_vec(vec![1.0]), 0.0, 0.05).unwrap();
        let f = fit(&d, &h).unwrap();
        let mean = y.iter().sum::<f64>() / 5.0;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert_abs_diff_eq!(f.beta_hat()[0], mean, epsilon = 1e-14);
        assert_abs_diff_eq!(f.sigma2_hat(), var, epsilon = 1e-14);
        assert_abs_diff_eq!(f.t_stat(), 5f64.sqrt() * mean / var.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sigma2_matches_double_loop() {
        let d = random_dataset(11, 5, 2);
        let h = Hypothesis::new(DVector::from_vec(vec![0.7, -1.3]), 0.2, 0.05).unwrap();
        let f = fit(&d, &h).unwrap();

        // Naive oracle: explicit loops over clusters, rows and columns.
        let g = d.num_clusters();
        let k = 2;
        let mut gram = [[0.0; 2]; 2];
        for c in d.clusters() {
            for i in 0..c.len() {
                for a in 0..k {
                    for b in 0..k {
                        gram[a][b] += c.x()[(i, a)] * c.x()[(i, b)] / g as f64;
                    }
                }
            }
        }
        let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
        let pi = [
            [gram[1][1] / det, -gram[0][1] / det],
            [-gram[1][0] / det, gram[0][0] / det],
        ];
        let lam = [0.7, -1.3];
        let mut s2 = 0.0;
        for (c, u) in d.clusters().iter().zip(f.resid()) {
            let mut proj = 0.0;
            for i in 0..c.len() {
                for a in 0..k {
                    for b in 0..k {
                        proj += lam[a] * pi[a][b] * c.x()[(i, b)] * u[i];
                    }
                }
            }
            s2 += proj * proj / g as f64;
        }
        assert!((f.sigma2_hat() - s2).abs() <= 1e-12 * s2);
    }

    #[test]
    fn pi_inverts_gram() {
        let d = random_dataset(12, 8, 3);
        let h = Hypothesis::coefficient(3, 1, 0.0, 0.05).unwrap();
        let f = fit(&d, &h).unwrap();
        let gram = CrossProducts::new(&d).gram();
        let id = f.pi() * gram;
        assert!((id - DMatrix::identity(3, 3)).abs().max() < 1e-8);
    }

    #[test]
    fn collinear_regressors_give_rank_error() {
        let d = dataset(
            vec![
                (vec![1.0, 2.0], vec![1.0, 2.0, 2.0, 4.0]),
                (vec![0.5, 1.5], vec![3.0, 6.0, 1.0, 2.0]),
            ],
            2,
        );
        let h = Hypothesis::coefficient(2, 0, 0.0, 0.05).unwrap();
        match fit(&d, &h) {
            Err(Error::Rank { null_direction, .. }) => {
                assert_abs_diff_eq!(null_direction[1] / null_direction[0], -0.5, epsilon = 1e-8)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lambda_dimension_checked() {
        let d = random_dataset(13, 4, 2);
        let h = Hypothesis::new(DVector::from_vec(vec![1.0]), 0.0, 0.05).unwrap();
        assert!(matches!(fit(&d, &h), Err(Error::Argument(_))));
    }

    #[test]
    fn mean_model_score_components() {
        let y = [0.3, -1.2, 2.5, 0.1, -0.4, 1.1];
        let d = dataset(y.iter().map(|&v| (vec![v], vec![1.0])).collect(), 1);
        let h = Hypothesis::new(DVector::from_vec(vec![1.0]), 0.0, 0.05).unwrap();
        let f = fit(&d, &h).unwrap();
        let sc = score_components(&f, &d).unwrap();
        assert_abs_diff_eq!(f.pi()[(0, 0)], 1.0, epsilon = 1e-15);
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 0.0]);
        assert!((sc.gamma() - expected).abs().max() < 1e-14);
        for (w1, w2) in sc.omega1().iter().zip(sc.omega2()) {
            assert_abs_diff_eq!(w2[0], *w1, epsilon = 1e-14);
            assert_abs_diff_eq!(w2[1], *w1, epsilon = 1e-14);
        }
    }

    #[test]
    fn omega1_is_self_normalized_and_gamma_symmetric() {
        for seed in 0..10 {
            let d = random_dataset(100 + seed, 6, 2);
            let h = Hypothesis::new(DVector::from_vec(vec![1.0, 0.5]), 0.0, 0.05).unwrap();
            let f = fit(&d, &h).unwrap();
            let sc = score_components(&f, &d).unwrap();
            let m2 = sc.omega1().iter().map(|w| w * w).sum::<f64>() / 6.0;
            assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-10);
            assert!(max_asymmetry(sc.gamma()) <= 1e-12);
        }
    }

    #[test]
    fn gamma_quadratic_matches_full_matrix() {
        let d = random_dataset(21, 7, 3);
        let h = Hypothesis::new(DVector::from_vec(vec![1.0, -1.0, 2.0]), 0.0, 0.05).unwrap();
        let f = fit(&d, &h).unwrap();
        let sc = score_components(&f, &d).unwrap();
        for v in sc.omega2() {
            let full = (sc.gamma() * v).dot(v);
            assert_abs_diff_eq!(
                sc.gamma_quadratic(v),
                full,
                epsilon = 1e-12 * (1.0 + full.abs())
            );
        }
    }

    #[test]
    fn variance_identity_holds_with_equal_variances() {
        let d = random_dataset(31, 9, 2);
        let h = Hypothesis::new(DVector::from_vec(vec![0.0, 1.0]), 0.0, 0.05).unwrap();
        let beta = DVector::from_vec(vec![0.1, -0.2]);
        let r = variance_identity_residual(&d, &h, &beta, &vec![0.8; 9]).unwrap();
        assert!(r <= 1e-10, "{r}");
    }
}
