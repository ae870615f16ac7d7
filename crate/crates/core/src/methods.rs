//! Critical values for `|t|`: the corrected analytic value and the
//! comparison methods (normal, Student `t_{G-1}` with small-sample
//! adjustments, pairs percentile-t cluster bootstrap, restricted wild
//! cluster bootstrap with Rademacher weights).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ClusteredDataset, Hypothesis};
use crate::edgeworth::{
    critical_value, estimate_moments, CorrectedCritical, EdgeworthMoments, MomentOptions,
};
use crate::error::{Error, Result};
use crate::numeric::{
    checked_inverse, student_t_quantile, two_sided_normal_cv, CompensatedSum, GramSpectrum,
};
use crate::ols::{is_negligible, score_components, ClusterFit, CrossProducts};
use crate::rng::{index_below, rademacher, StreamKey};

/// Critical-value methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Normal,
    StudentD1,
    StudentD2,
    StudentD3,
    Pairs,
    Wcb,
    Analytic,
    /// Corrected value built from population moments; only available in
    /// simulation designs where those moments are known.
    CornishFisher,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Normal,
        Method::StudentD1,
        Method::StudentD2,
        Method::StudentD3,
        Method::Pairs,
        Method::Wcb,
        Method::Analytic,
        Method::CornishFisher,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Normal => "normal",
            Method::StudentD1 => "student_d1",
            Method::StudentD2 => "student_d2",
            Method::StudentD3 => "student_d3",
            Method::Pairs => "pairs",
            Method::Wcb => "wcb",
            Method::Analytic => "analytic",
            Method::CornishFisher => "cornish_fisher",
        }
    }

    pub fn is_bootstrap(self) -> bool {
        matches!(self, Method::Pairs | Method::Wcb)
    }

    /// Stable tag used to derive the method's random stream.
    pub(crate) fn stream_tag(self) -> u64 {
        match self {
            Method::Pairs => 1,
            Method::Wcb => 2,
            _ => 0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Argument(format!(
                    "unknown method {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Small-sample multipliers applied to `sigma_hat^2` before comparing with
/// the `t_{G-1}` quantile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudentVariant {
    /// `(N-1)G / ((N-k)(G-1))`
    D1,
    /// `G / (G-1)`
    D2,
    /// `(N-1)G / ((N-k-G)(G-1))`, counting each cluster effect as a regressor.
    D3,
}

/// The multiplier `d` for `variant`.
pub fn student_adjustment(g: usize, n: usize, k: usize, variant: StudentVariant) -> Result<f64> {
    let (g, n, k) = (g as f64, n as f64, k as f64);
    if g <= 1.0 {
        return Err(Error::Domain(format!("G-1 must be positive, got G={g}")));
    }
    let d = match variant {
        StudentVariant::D1 => {
            if n - k <= 0.0 {
                return Err(Error::Domain(format!("d1 needs N > k (N={n}, k={k})")));
            }
            (n - 1.0) * g / ((n - k) * (g - 1.0))
        }
        StudentVariant::D2 => g / (g - 1.0),
        StudentVariant::D3 => {
            if n - k - g <= 0.0 {
                return Err(Error::Domain(format!(
                    "d3 needs N > k + G (N={n}, k={k}, G={g})"
                )));
            }
            (n - 1.0) * g / ((n - k - g) * (g - 1.0))
        }
    };
    Ok(d)
}

/// `sqrt(d) * t_{G-1, 1-alpha/2}`: the adjusted Student critical value on
/// the scale of the unadjusted `|t|`.
pub fn student_cv(
    g: usize,
    n: usize,
    k: usize,
    variant: StudentVariant,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let d = student_adjustment(g, n, k, variant)?;
    Ok(d.sqrt() * student_t_quantile(g as f64 - 1.0, 1.0 - alpha / 2.0)?)
}

/// Index (1-based) of the order statistic used as the bootstrap critical
/// value: `ceil((B + 1)(1 - alpha))`.
pub fn order_statistic_index(draws: usize, alpha: f64) -> usize {
    // The 1e-9 guard keeps products such as 1000 * 0.95 from rounding up.
    ((draws as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil() as usize
}

/// Bootstrap distribution summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapOutcome {
    pub cv: f64,
    pub draws: usize,
    /// Draws whose bootstrap variance vanished.
    pub degenerate: usize,
    /// Draws whose resampled Gram matrix needed the pseudo-inverse.
    pub pseudo_inverse: usize,
    /// The order statistic index exceeded `B`; `cv` is `+inf`.
    pub sentinel: bool,
    /// Sorted `|t*|` values.
    #[serde(skip)]
    pub abs_t: Vec<f64>,
}

impl BootstrapOutcome {
    fn from_stats(
        mut abs_t: Vec<f64>,
        alpha: f64,
        degenerate: usize,
        pseudo_inverse: usize,
    ) -> Self {
        abs_t.sort_by(f64::total_cmp);
        let draws = abs_t.len();
        let idx = order_statistic_index(draws, alpha);
        let (cv, sentinel) = if idx == 0 {
            (0.0, false)
        } else if idx > draws {
            (f64::INFINITY, true)
        } else {
            (abs_t[idx - 1], false)
        };
        Self {
            cv,
            draws,
            degenerate,
            pseudo_inverse,
            sentinel,
            abs_t,
        }
    }
}

fn check_draws(draws: usize) -> Result<()> {
    if draws == 0 {
        return Err(Error::Argument(
            "bootstrap draw count must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Pairs percentile-t cluster bootstrap.
///
/// Each draw resamples `G` clusters with replacement, refits, and records
/// `|sqrt(G)(lambda' beta* - lambda' beta_hat) / sigma*|`. A numerically
/// singular resampled Gram matrix is replaced by its Moore-Penrose inverse;
/// a vanishing `sigma*` makes the draw `+inf`.
pub fn pairs_bootstrap(
    d: &ClusteredDataset,
    h: &Hypothesis,
    draws: usize,
    key: StreamKey,
) -> Result<BootstrapOutcome> {
    check_draws(draws)?;
    h.check_dimension(d.num_regressors())?;
    let cp = CrossProducts::new(d);
    let base = &checked_inverse(&cp.gram())? * cp.mean_xty();
    pairs_from_cross_products(&cp, h, h.lambda().dot(&base), draws, key)
}

pub(crate) fn pairs_from_cross_products(
    cp: &CrossProducts,
    h: &Hypothesis,
    base_estimate: f64,
    draws: usize,
    key: StreamKey,
) -> Result<BootstrapOutcome> {
    let g = cp.num_clusters();
    let k = cp.k();
    let gf = g as f64;
    let lambda = h.lambda();
    let mut picks = vec![0usize; g];
    let mut gram = DMatrix::zeros(k, k);
    let mut mean_xty = DVector::zeros(k);
    let mut resid_score = DVector::zeros(k);
    let mut abs_t = Vec::with_capacity(draws);
    let (mut degenerate, mut pinv_count) = (0, 0);

    for b in 0..draws {
        let mut rng = key.draw_rng(b as u64);
        for p in picks.iter_mut() {
            *p = index_below(&mut rng, g);
        }
        gram.fill(0.0);
        mean_xty.fill(0.0);
        for &j in &picks {
            gram += &cp.xtx[j];
            mean_xty += &cp.xty[j];
        }
        gram /= gf;
        mean_xty /= gf;

        let spectrum = GramSpectrum::new(&gram);
        if spectrum.is_singular() {
            pinv_count += 1;
        }
        let pi = spectrum.pseudo_inverse();
        let beta = &pi * &mean_xty;
        let w = pi.tr_mul(lambda);

        let mut s2 = CompensatedSum::new();
        let mut raw = CompensatedSum::new();
        for &j in &picks {
            cp.xtx[j].mul_to(&beta, &mut resid_score);
            resid_score.neg_mut();
            resid_score += &cp.xty[j];
            let proj = w.dot(&resid_score);
            s2.add(proj * proj);
            raw.add(w.dot(&cp.xty[j]).powi(2));
        }
        let sigma = (s2.total() / gf).sqrt();
        let scale = (raw.total() / gf).sqrt();
        if sigma == 0.0 || is_negligible(sigma, scale) {
            degenerate += 1;
            abs_t.push(f64::INFINITY);
        } else {
            abs_t.push((gf.sqrt() * (lambda.dot(&beta) - base_estimate) / sigma).abs());
        }
    }
    Ok(BootstrapOutcome::from_stats(
        abs_t,
        h.alpha(),
        degenerate,
        pinv_count,
    ))
}

/// Least squares subject to `lambda' beta = c0`, solved in the null space
/// of `lambda'`.
pub fn restricted_estimate(d: &ClusteredDataset, h: &Hypothesis) -> Result<DVector<f64>> {
    h.check_dimension(d.num_regressors())?;
    restricted_from_cross_products(&CrossProducts::new(d), h)
}

pub(crate) fn restricted_from_cross_products(
    cp: &CrossProducts,
    h: &Hypothesis,
) -> Result<DVector<f64>> {
    let lambda = h.lambda();
    let k = lambda.len();
    let norm2 = lambda.norm_squared();
    if norm2 == 0.0 {
        return Err(Error::Argument(
            "restricted estimation needs lambda != 0".into(),
        ));
    }
    let beta0 = lambda * (h.c0() / norm2);
    if k == 1 {
        return Ok(beta0);
    }
    // Orthonormal basis of {v : lambda'v = 0} from the projector's spectrum.
    let projector = DMatrix::identity(k, k) - lambda * lambda.transpose() / norm2;
    let eig = projector.symmetric_eigen();
    let cols: Vec<_> = (0..k)
        .filter(|&j| eig.eigenvalues[j] > 0.5)
        .map(|j| eig.eigenvectors.column(j).into_owned())
        .collect();
    let basis = DMatrix::from_columns(&cols);
    let gram = cp.gram();
    let reduced = basis.tr_mul(&(&gram * &basis));
    let rhs = basis.tr_mul(&(cp.mean_xty() - &gram * &beta0));
    let gamma = checked_inverse(&reduced)? * rhs;
    Ok(beta0 + basis * gamma)
}

/// Precomputed pieces of the restricted wild cluster bootstrap.
///
/// With null-imposed residual scores `r_g = X_g' u~_g`, a draw `v` gives
/// `beta* - beta~ = Pi mean(v_g r_g) = delta`, so
/// `lambda' beta* - c0 = lambda' delta` and the bootstrap score projection is
/// `v_g w_g - h_g' delta` with `w_g = lambda' Pi r_g`, `h_g = X_g'X_g Pi lambda`.
pub(crate) struct WildKernel {
    pi: DMatrix<f64>,
    lambda: DVector<f64>,
    r: Vec<DVector<f64>>,
    w: Vec<f64>,
    hdir: Vec<DVector<f64>>,
    alpha: f64,
}

impl WildKernel {
    pub fn new(cp: &CrossProducts, h: &Hypothesis) -> Result<Self> {
        let beta_r = restricted_from_cross_products(cp, h)?;
        let pi = checked_inverse(&cp.gram())?;
        let lambda = h.lambda().clone();
        let pl = pi.tr_mul(&lambda);
        let r: Vec<DVector<f64>> = cp
            .xtx
            .iter()
            .zip(&cp.xty)
            .map(|(xtx, xty)| xty - xtx * &beta_r)
            .collect();
        let w = r.iter().map(|rg| pl.dot(rg)).collect();
        let hdir = cp.xtx.iter().map(|xtx| xtx * &pl).collect();
        Ok(Self {
            pi,
            lambda,
            r,
            w,
            hdir,
            alpha: h.alpha(),
        })
    }

    /// `(|t*|, degenerate)` for one vector of cluster weights.
    pub fn statistic(&self, v: &[f64]) -> (f64, bool) {
        let g = self.r.len();
        let gf = g as f64;
        let k = self.lambda.len();
        let mut m = DVector::zeros(k);
        for (vg, rg) in v.iter().zip(&self.r) {
            m.axpy(*vg, rg, 1.0);
        }
        m /= gf;
        let delta = &self.pi * m;
        let num = self.lambda.dot(&delta);

        let mut s2 = CompensatedSum::new();
        let mut scale = CompensatedSum::new();
        let mut num_scale = 0.0;
        for ((vg, wg), hg) in v.iter().zip(&self.w).zip(&self.hdir) {
            let a = vg * wg;
            let b = hg.dot(&delta);
            let proj = a - b;
            s2.add(proj * proj);
            scale.add((a.abs() + b.abs()).powi(2));
            num_scale += wg.abs();
        }
        let sigma = (s2.total() / gf).sqrt();
        let sigma_scale = (scale.total() / gf).sqrt();
        if sigma == 0.0 || is_negligible(sigma, sigma_scale) {
            // 0/0 when the null-imposed scores vanish; otherwise unbounded.
            let t = if is_negligible(num, num_scale / gf) {
                0.0
            } else {
                f64::INFINITY
            };
            return (t, true);
        }
        ((gf.sqrt() * num / sigma).abs(), false)
    }

    pub fn run(&self, draws: usize, key: StreamKey) -> BootstrapOutcome {
        let g = self.r.len();
        let mut v = vec![0.0; g];
        let mut abs_t = Vec::with_capacity(draws);
        let mut degenerate = 0;
        for b in 0..draws {
            let mut rng = key.draw_rng(b as u64);
            for vg in v.iter_mut() {
                *vg = rademacher(&mut rng);
            }
            let (t, bad) = self.statistic(&v);
            degenerate += usize::from(bad);
            abs_t.push(t);
        }
        BootstrapOutcome::from_stats(abs_t, self.alpha, degenerate, 0)
    }
}

/// Restricted wild cluster bootstrap with Rademacher weights.
///
/// Outcomes are regenerated as `Y*_g = X_g beta~ + v_g u~_g` around the
/// null-imposed fit, refit without the restriction, and studentized with
/// the same variance formula as the original statistic.
pub fn wild_cluster_bootstrap(
    d: &ClusteredDataset,
    h: &Hypothesis,
    draws: usize,
    key: StreamKey,
) -> Result<BootstrapOutcome> {
    check_draws(draws)?;
    h.check_dimension(d.num_regressors())?;
    let cp = CrossProducts::new(d);
    Ok(WildKernel::new(&cp, h)?.run(draws, key))
}

/// Extra output attached to a method's critical value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodDetails {
    None,
    Bootstrap(BootstrapOutcome),
    Analytic {
        moments: EdgeworthMoments,
        critical: CorrectedCritical,
    },
}

/// Critical value and decision for one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub cv_effective: f64,
    pub reject: bool,
    pub details: MethodDetails,
}

impl MethodResult {
    fn new(method: Method, cv: f64, t: f64, details: MethodDetails) -> Self {
        Self {
            method,
            cv_effective: cv,
            reject: t.abs() > cv,
            details,
        }
    }

    /// `lambda' beta_hat -/+ cv * sigma_hat / sqrt(G)`.
    pub fn interval(&self, fit: &ClusterFit) -> (f64, f64) {
        let half = self.cv_effective * fit.std_error();
        (fit.estimate() - half, fit.estimate() + half)
    }
}

/// Settings shared by all methods.
#[derive(Debug, Clone, Copy)]
pub struct MethodOptions {
    pub boot: usize,
    pub key: StreamKey,
    pub moments: MomentOptions,
}

/// Evaluates `method` for a fitted dataset.
pub fn evaluate(
    method: Method,
    d: &ClusteredDataset,
    fit: &ClusterFit,
    opts: &MethodOptions,
) -> Result<MethodResult> {
    let h = fit.hypothesis();
    let t = fit.t_stat();
    let (g, n, k) = (d.num_clusters(), d.num_obs(), d.num_regressors());
    let alpha = h.alpha();
    let student = |variant| -> Result<MethodResult> {
        Ok(MethodResult::new(
            method,
            student_cv(g, n, k, variant, alpha)?,
            t,
            MethodDetails::None,
        ))
    };
    match method {
        Method::Normal => Ok(MethodResult::new(
            method,
            two_sided_normal_cv(alpha),
            t,
            MethodDetails::None,
        )),
        Method::StudentD1 => student(StudentVariant::D1),
        Method::StudentD2 => student(StudentVariant::D2),
        Method::StudentD3 => student(StudentVariant::D3),
        Method::Analytic => {
            let sc = score_components(fit, d)?;
            let moments = estimate_moments(&sc, opts.moments)?;
            let critical = critical_value(&moments, g, alpha)?.with_interval(fit);
            Ok(MethodResult::new(
                method,
                critical.cv,
                t,
                MethodDetails::Analytic { moments, critical },
            ))
        }
        Method::Pairs => {
            check_draws(opts.boot)?;
            let cp = CrossProducts::new(d);
            let out = pairs_from_cross_products(
                &cp,
                h,
                fit.estimate(),
                opts.boot,
                opts.key.child(method.stream_tag()),
            )?;
            Ok(MethodResult::new(
                method,
                out.cv,
                t,
                MethodDetails::Bootstrap(out),
            ))
        }
        Method::Wcb => {
            check_draws(opts.boot)?;
            let out = wild_cluster_bootstrap(d, h, opts.boot, opts.key.child(method.stream_tag()))?;
            Ok(MethodResult::new(
                method,
                out.cv,
                t,
                MethodDetails::Bootstrap(out),
            ))
        }
        Method::CornishFisher => Err(Error::Argument(
            "cornish_fisher needs population moments and is only available in simulation designs"
                .into(),
        )),
    }
}
