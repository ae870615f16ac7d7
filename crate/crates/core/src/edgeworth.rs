//! Edgeworth moments of the studentized statistic, the two-sided expansion
//! of `P(|t| <= z)` and its Cornish-Fisher inversion into a corrected
//! critical value.
//!
//! The chain is: normalized scores -> sample moments
//! `(mu_12, mu_22, mu_111, mu_1111)` -> `nu_1..nu_4` -> approximate cumulants
//! `k_1..k_4` of the t-statistic -> `q_2(z)` -> `cv = z0 - q_2(z0) / G`.
//! None of the intermediate quantities are clamped.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{norm_cdf, norm_pdf, two_sided_normal_cv, CompensatedSum};
use crate::ols::{ClusterFit, ScoreComponents};

/// Probabilists' Hermite polynomial `He_r(z)` for the orders used by the
/// expansion (1, 2, 3, 5).
pub fn hermite(r: u32, z: f64) -> Result<f64> {
    match r {
        1 => Ok(he1(z)),
        2 => Ok(he2(z)),
        3 => Ok(he3(z)),
        5 => Ok(he5(z)),
        _ => Err(Error::Argument(format!(
            "Hermite order {r} is not supported (use 1, 2, 3 or 5)"
        ))),
    }
}

#[inline]
fn he1(z: f64) -> f64 {
    z
}

#[inline]
fn he2(z: f64) -> f64 {
    z * z - 1.0
}

#[inline]
fn he3(z: f64) -> f64 {
    z * (z * z - 3.0)
}

#[inline]
fn he5(z: f64) -> f64 {
    let z2 = z * z;
    z * (z2 * (z2 - 10.0) + 15.0)
}

/// Options for [`estimate_moments`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentOptions {
    /// Winsorizing threshold for per-cluster summands; `None` disables it.
    pub truncation: Option<f64>,
}

/// Score moments and the cumulants derived from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeworthMoments {
    pub mu12: Vec<f64>,
    pub mu22: f64,
    pub mu111: f64,
    pub mu1111: f64,
    /// `mu12' Gamma mu12`
    pub mu12_gamma_mu12: f64,
    pub nu: [f64; 4],
    pub kcum: [f64; 4],
    pub truncation: Option<f64>,
}

impl EdgeworthMoments {
    /// Pushes moments through the `nu` and cumulant maps.
    pub fn from_moments(
        mu12: DVector<f64>,
        mu22: f64,
        mu111: f64,
        mu1111: f64,
        gamma: &DMatrix<f64>,
    ) -> Result<Self> {
        if gamma.nrows() != mu12.len() || gamma.ncols() != mu12.len() {
            return Err(Error::Argument("mu12 and Gamma dimensions differ".into()));
        }
        let q = (gamma * &mu12).dot(&mu12);
        Ok(Self::assemble(
            mu12.iter().copied().collect(),
            mu22,
            mu111,
            mu1111,
            q,
            None,
        ))
    }

    fn assemble(
        mu12: Vec<f64>,
        mu22: f64,
        mu111: f64,
        mu1111: f64,
        q: f64,
        truncation: Option<f64>,
    ) -> Self {
        let nu = nu_map(mu22, mu111, mu1111, q);
        Self {
            mu12,
            mu22,
            mu111,
            mu1111,
            mu12_gamma_mu12: q,
            nu,
            kcum: cumulant_map(nu),
            truncation,
        }
    }

    pub fn k1(&self) -> f64 {
        self.kcum[0]
    }

    pub fn k2(&self) -> f64 {
        self.kcum[1]
    }

    pub fn k3(&self) -> f64 {
        self.kcum[2]
    }

    pub fn k4(&self) -> f64 {
        self.kcum[3]
    }
}

/// `(mu_22, mu_111, mu_1111, mu12'Gamma mu12) -> (nu_1..nu_4)`.
pub fn nu_map(mu22: f64, mu111: f64, mu1111: f64, mu12_gamma_mu12: f64) -> [f64; 4] {
    [
        -mu111 / 2.0,
        2.0 * mu111 * mu111 + (mu22 + 2.0 * mu12_gamma_mu12),
        -3.5 * mu111,
        -2.0 * mu1111 + 28.0 * mu111 * mu111 + 6.0 * mu22 + 24.0 * mu12_gamma_mu12,
    ]
}

/// `(nu_1..nu_4) -> (k_1..k_4)`.
pub fn cumulant_map(nu: [f64; 4]) -> [f64; 4] {
    let [n1, n2, n3, n4] = nu;
    [
        n1,
        n2 - n1 * n1,
        n3 - 3.0 * n1,
        n4 - 4.0 * n1 * n3 - 6.0 * n2 + 12.0 * n1 * n1,
    ]
}

#[inline]
fn clip(v: f64, tau: Option<f64>) -> f64 {
    match tau {
        Some(t) if v.abs() > t => t.copysign(v),
        _ => v,
    }
}

/// Sample analogues of the score moments, optionally with truncated
/// summands.
pub fn estimate_moments(sc: &ScoreComponents, opts: MomentOptions) -> Result<EdgeworthMoments> {
    let g = sc.num_clusters();
    if g < 2 {
        return Err(Error::Argument("need at least 2 clusters".into()));
    }
    if let Some(t) = opts.truncation {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Argument(format!(
                "truncation threshold must be positive, got {t}"
            )));
        }
    }
    let tau = opts.truncation;
    let dim = 2 * sc.k();
    let mut mu12 = vec![CompensatedSum::new(); dim];
    let mut mu22 = CompensatedSum::new();
    let mut mu111 = CompensatedSum::new();
    let mut mu1111 = CompensatedSum::new();
    for (&w1, w2) in sc.omega1().iter().zip(sc.omega2()) {
        for (acc, &v) in mu12.iter_mut().zip(w2.iter()) {
            acc.add(clip(w1 * v, tau));
        }
        mu22.add(clip(sc.gamma_quadratic(w2), tau));
        let sq = w1 * w1;
        mu111.add(clip(sq * w1, tau));
        mu1111.add(clip(sq * sq, tau));
    }
    let gf = g as f64;
    let mu12 = DVector::from_iterator(dim, mu12.iter().map(|a| a.total() / gf));
    let q = sc.gamma_bilinear(&mu12, &mu12);
    Ok(EdgeworthMoments::assemble(
        mu12.iter().copied().collect(),
        mu22.total() / gf,
        mu111.total() / gf,
        mu1111.total() / gf,
        q,
        tau,
    ))
}

/// Second-order term of the two-sided expansion.
pub fn q2(z: f64, m: &EdgeworthMoments) -> f64 {
    let [k1, k2, k3, k4] = m.kcum;
    -(0.5 * (k2 + k1 * k1) * he1(z)
        + (k4 + 4.0 * k1 * k3) / 24.0 * he3(z)
        + k3 * k3 / 72.0 * he5(z))
}

/// First-order term of the one-sided expansion (diagnostic).
pub fn q1(z: f64, m: &EdgeworthMoments) -> f64 {
    -(m.kcum[0] + m.kcum[2] / 6.0 * he2(z))
}

/// Flags raised by pathological small-sample values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub negative_cv: bool,
    pub negative_k2: bool,
}

/// Corrected two-sided critical value and, when a fit is attached, the
/// matching confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectedCritical {
    pub z0: f64,
    pub q2_at_z0: f64,
    pub cv: f64,
    pub num_clusters: usize,
    pub ci: Option<(f64, f64)>,
    pub diagnostics: Diagnostics,
}

impl CorrectedCritical {
    /// Adds `lambda' beta_hat -/+ cv * sigma_hat / sqrt(G)`.
    pub fn with_interval(mut self, fit: &ClusterFit) -> Self {
        let half = self.cv * fit.std_error();
        let mid = fit.estimate();
        self.ci = Some((mid - half, mid + half));
        self
    }

    /// Critical value to pair with a t-statistic whose denominator uses an
    /// alternative variance estimate `sigma_tilde`: `(sigma_hat / sigma_tilde) cv`.
    /// The implied interval is unchanged.
    pub fn rescaled_for(&self, sigma_hat: f64, sigma_tilde: f64) -> f64 {
        sigma_hat / sigma_tilde * self.cv
    }
}

/// `cv = z0 - q2(z0) / G` with `z0 = Phi^{-1}(1 - alpha/2)`.
pub fn critical_value(
    m: &EdgeworthMoments,
    num_clusters: usize,
    alpha: f64,
) -> Result<CorrectedCritical> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if num_clusters < 2 {
        return Err(Error::Argument("need at least 2 clusters".into()));
    }
    let z0 = two_sided_normal_cv(alpha);
    let q2_at_z0 = q2(z0, m);
    let cv = z0 - q2_at_z0 / num_clusters as f64;
    Ok(CorrectedCritical {
        z0,
        q2_at_z0,
        cv,
        num_clusters,
        ci: None,
        diagnostics: Diagnostics {
            negative_cv: cv < 0.0,
            negative_k2: m.k2() < 0.0,
        },
    })
}

/// Values of the expansion at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionCdf {
    /// `2 Phi(z) - 1 + 2 q2(z) phi(z) / G`, approximating `P(|t| <= z)`.
    pub two_sided: f64,
    /// `Phi(z) + q1(z) phi(z) / sqrt(G) + q2(z) phi(z) / G`.
    pub one_sided: f64,
    /// Either value fell outside [0, 1].
    pub out_of_range: bool,
}

pub fn edgeworth_cdf(z: f64, m: &EdgeworthMoments, num_clusters: usize) -> Result<ExpansionCdf> {
    if num_clusters < 2 {
        return Err(Error::Argument("need at least 2 clusters".into()));
    }
    let g = num_clusters as f64;
    let phi = norm_pdf(z);
    let big_phi = norm_cdf(z);
    let q2z = q2(z, m);
    let two_sided = 2.0 * big_phi - 1.0 + 2.0 * q2z * phi / g;
    let one_sided = big_phi + q1(z, m) * phi / g.sqrt() + q2z * phi / g;
    let outside = |v: f64| !(0.0..=1.0).contains(&v);
    Ok(ExpansionCdf {
        two_sided,
        one_sided,
        out_of_range: outside(two_sided) || outside(one_sided),
    })
}
