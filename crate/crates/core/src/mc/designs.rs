//! Data-generating processes for the four simulation designs.
//!
//! Every generator is a pure function of the supplied random stream. Designs
//! 2-4 also return the population Edgeworth moments implied by their error
//! law, conditional on the generated regressors; those feed the infeasible
//! `cornish_fisher` critical value.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::panel::{StatePanel, FIRST_YEAR, LAST_YEAR};
use crate::data::{within_transform, ClusterBlock, ClusteredDataset, Hypothesis};
use crate::edgeworth::EdgeworthMoments;
use crate::error::{Error, Result};
use crate::numeric::{checked_inverse, CompensatedSum};
use crate::ols::{leverage_and_gamma, CrossProducts};
use crate::rng::{demeaned_exponential, index_below, permutation, uniform};

/// Earliest and latest admissible policy start years in design 1.
pub const POLICY_WINDOW: (u32, u32) = (1984, 1993);

/// Simulation design identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// State-year placebo-law panel (requires external data).
    Bdm1,
    /// Mean model with skewed errors.
    Exp2,
    /// Binary regressor with skewed errors.
    Binary3,
    /// Fixed effects with unequal cluster sizes.
    Fe4,
}

impl Design {
    pub const ALL: [Design; 4] = [Design::Bdm1, Design::Exp2, Design::Binary3, Design::Fe4];

    pub fn name(self) -> &'static str {
        match self {
            Design::Bdm1 => "bdm1",
            Design::Exp2 => "exp2",
            Design::Binary3 => "binary3",
            Design::Fe4 => "fe4",
        }
    }

    /// Tag mixed into the replication stream key.
    pub fn tag(self) -> u64 {
        match self {
            Design::Bdm1 => 1,
            Design::Exp2 => 2,
            Design::Binary3 => 3,
            Design::Fe4 => 4,
        }
    }

    pub fn needs_panel(self) -> bool {
        self == Design::Bdm1
    }

    /// Checks that `g` clusters are admissible for this design.
    pub fn check_clusters(self, g: usize) -> Result<()> {
        if g < 2 {
            return Err(Error::Argument(format!(
                "{self}: G must be at least 2, got {g}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Design::ALL
            .into_iter()
            .find(|d| d.name() == key || d.tag().to_string() == key)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown design {s:?} (expected bdm1, exp2, binary3 or fe4)"
                ))
            })
    }
}

/// One generated sample.
#[derive(Debug, Clone)]
pub struct DesignDraw {
    pub dataset: ClusteredDataset,
    pub hypothesis: Hypothesis,
    /// Population moments given the regressors, when the error law is known.
    pub population: Option<EdgeworthMoments>,
}

/// Third cumulant and fourth moment of the unit-variance demeaned
/// exponential.
const SHOCK_SKEWNESS: f64 = 2.0;
const SHOCK_FOURTH_MOMENT: f64 = 9.0;

fn scalar_cluster(label: usize, y: f64, x: &[f64]) -> Result<ClusterBlock> {
    ClusterBlock::new(
        label.to_string(),
        DVector::from_element(1, y),
        DMatrix::from_row_slice(1, x.len(), x),
    )
}

/// Design 2: `Y_g = E_g - 1`, `E_g ~ Exp(1)`, `X_g = 1`, one observation per
/// cluster; tests the mean against 0.
pub fn gen_design2<R: Rng + ?Sized>(g: usize, alpha: f64, rng: &mut R) -> Result<DesignDraw> {
    Design::Exp2.check_clusters(g)?;
    let clusters = (0..g)
        .map(|i| scalar_cluster(i + 1, demeaned_exponential(rng), &[1.0]))
        .collect::<Result<Vec<_>>>()?;
    let dataset = ClusteredDataset::with_names(clusters, vec!["const".into()])?;
    let hypothesis = Hypothesis::coefficient(1, 0, 0.0, alpha)?;
    let coeffs = vec![DMatrix::from_element(1, 1, 1.0); g];
    let population = Some(linear_shock_moments(&dataset, &hypothesis, &coeffs)?);
    Ok(DesignDraw {
        dataset,
        hypothesis,
        population,
    })
}

/// Design 3: `X_g = (1, 1)` for the first `floor(G/2)` clusters and `(1, 0)`
/// for the rest, `Y_g = (2 X_g2 - 1) u_g`; tests the slope against 0.
pub fn gen_design3<R: Rng + ?Sized>(g: usize, alpha: f64, rng: &mut R) -> Result<DesignDraw> {
    Design::Binary3.check_clusters(g)?;
    let mut signs = Vec::with_capacity(g);
    let clusters = (0..g)
        .map(|i| {
            let x2 = if i < g / 2 { 1.0 } else { 0.0 };
            let sign = 2.0 * x2 - 1.0;
            signs.push(DMatrix::from_element(1, 1, sign));
            scalar_cluster(i + 1, sign * demeaned_exponential(rng), &[1.0, x2])
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = ClusteredDataset::with_names(clusters, vec!["const".into(), "x".into()])?;
    let hypothesis = Hypothesis::coefficient(2, 1, 0.0, alpha)?;
    let population = Some(linear_shock_moments(&dataset, &hypothesis, &signs)?);
    Ok(DesignDraw {
        dataset,
        hypothesis,
        population,
    })
}

/// Cluster sizes `N_g = 2 + [2G exp(g/G) / sum_l exp(l/G)]`, `g = 1..G`, with
/// `[.]` the nearest integer.
pub fn design4_sizes(g: usize) -> Vec<usize> {
    let gf = g as f64;
    let total: f64 = (1..=g)
        .map(|l| (l as f64 / gf).exp())
        .collect::<CompensatedSum>()
        .total();
    (1..=g)
        .map(|l| 2 + (2.0 * gf * (l as f64 / gf).exp() / total).round() as usize)
        .collect()
}

/// Raw binary regressor of design 4: `1{j < N/2 and j odd}` on the 1-based
/// stacked index `j`, split into clusters.
pub fn design4_regressor(sizes: &[usize]) -> Vec<Vec<f64>> {
    let n: usize = sizes.iter().sum();
    let mut j = 0usize;
    sizes
        .iter()
        .map(|&ng| {
            (0..ng)
                .map(|_| {
                    j += 1;
                    // j < N/2  <=>  2j < N
                    if 2 * j < n && j % 2 == 1 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Design 4: `Y_ig = eps_g + (2 X_ig - 1) xi_ig` with `eps_g ~ U(0.5, 1)`,
/// followed by the within transformation; tests the slope against 0.
pub fn gen_design4<R: Rng + ?Sized>(g: usize, alpha: f64, rng: &mut R) -> Result<DesignDraw> {
    Design::Fe4.check_clusters(g)?;
    let sizes = design4_sizes(g);
    let xs = design4_regressor(&sizes);
    let mut coeffs = Vec::with_capacity(g);
    let mut clusters = Vec::with_capacity(g);
    for (i, x) in xs.iter().enumerate() {
        let ng = x.len();
        if x.iter().all(|&v| v == 1.0) {
            return Err(Error::DesignIntegrity(format!(
                "fe4: regressor is constant at 1 in cluster {}",
                i + 1
            )));
        }
        let eps = uniform(rng, 0.5, 1.0);
        let signs: Vec<f64> = x.iter().map(|&v| 2.0 * v - 1.0).collect();
        let y = DVector::from_iterator(
            ng,
            signs.iter().map(|s| eps + s * demeaned_exponential(rng)),
        );
        // Error coefficients after demeaning: M diag(2x - 1).
        let demean = DMatrix::identity(ng, ng) - DMatrix::from_element(ng, ng, 1.0 / ng as f64);
        coeffs.push(demean * DMatrix::from_diagonal(&DVector::from_vec(signs)));
        clusters.push(ClusterBlock::new(
            (i + 1).to_string(),
            y,
            DMatrix::from_column_slice(ng, 1, x),
        )?);
    }
    let raw = ClusteredDataset::with_names(clusters, vec!["x".into()])?;
    let dataset = within_transform(&raw)?;
    if dataset
        .clusters()
        .iter()
        .all(|c| c.x().iter().all(|&v| v == 0.0))
    {
        return Err(Error::DesignIntegrity(
            "fe4: the transformed regressor is identically zero".into(),
        ));
    }
    let hypothesis = Hypothesis::coefficient(1, 0, 0.0, alpha)?;
    let population = Some(linear_shock_moments(&dataset, &hypothesis, &coeffs)?);
    Ok(DesignDraw {
        dataset,
        hypothesis,
        population,
    })
}

/// Number of regressors in a design-1 sample with `g` draws:
/// intercept, policy, one dummy per non-base year and per non-base draw.
pub fn design1_num_regressors(g: usize) -> usize {
    2 + (LAST_YEAR - FIRST_YEAR) as usize + (g - 1)
}

/// Design 1: `G` states drawn with replacement from the panel, each draw a
/// separate cluster; a random `floor(G/2)` of them are treated from a random year `T` on
/// (policy dummy `1{treated and year > T}`); year and draw dummies.
pub fn gen_design1<R: Rng + ?Sized>(
    panel: &StatePanel,
    g: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<DesignDraw> {
    Design::Bdm1.check_clusters(g)?;
    let picks: Vec<usize> = (0..g)
        .map(|_| index_below(rng, panel.num_states()))
        .collect();
    let (lo, hi) = POLICY_WINDOW;
    let start = lo + index_below(rng, (hi - lo + 1) as usize) as u32;
    let order = permutation(rng, g);
    let mut treated = vec![false; g];
    for &i in &order[..g / 2] {
        treated[i] = true;
    }

    let years = panel.num_years();
    let k = design1_num_regressors(g);
    let mut clusters = Vec::with_capacity(g);
    for (draw, &state) in picks.iter().enumerate() {
        let mut x = DMatrix::zeros(years, k);
        for t in 0..years {
            let year = FIRST_YEAR + t as u32;
            x[(t, 0)] = 1.0;
            if treated[draw] && year > start {
                x[(t, 1)] = 1.0;
            }
            if t > 0 {
                x[(t, 1 + t)] = 1.0;
            }
            if draw > 0 {
                x[(t, 1 + years - 1 + draw)] = 1.0;
            }
        }
        let y = DVector::from_column_slice(panel.outcomes(state));
        clusters.push(ClusterBlock::new(
            format!("{}#{}", draw + 1, panel.state(state)),
            y,
            x,
        )?);
    }
    let mut names = vec!["const".to_string(), "policy".to_string()];
    names.extend((FIRST_YEAR + 1..=LAST_YEAR).map(|y| format!("year={y}")));
    names.extend((2..=g).map(|d| format!("draw={d}")));
    let dataset = ClusteredDataset::with_names(clusters, names)?;
    let hypothesis = Hypothesis::coefficient(k, 1, 0.0, alpha)?;
    Ok(DesignDraw {
        dataset,
        hypothesis,
        population: None,
    })
}

/// Population moments when cluster `g`'s error vector is `A_g xi_g` with
/// `xi_g` i.i.d. unit-variance demeaned exponential shocks.
///
/// With `c_g' = lambda' Pi X_g' A_g` and `sigma^2 = mean_g |c_g|^2`:
/// `E w1^3 = k3 sum c^3 / sigma^3`,
/// `E w1^4 = (3 (sum c^2)^2 + (m4 - 3) sum c^4) / sigma^4`,
/// `E w1 w2 = C_g c_g / sigma^2` and `E w2' Gamma w2 = tr(C_g' Gamma C_g) / sigma^2`
/// where `C_g = [Pi X_g' A_g ; h_g c_g']`.
pub fn linear_shock_moments(
    d: &ClusteredDataset,
    h: &Hypothesis,
    coeffs: &[DMatrix<f64>],
) -> Result<EdgeworthMoments> {
    let k = d.num_regressors();
    let g = d.num_clusters();
    if coeffs.len() != g {
        return Err(Error::Argument(
            "one coefficient matrix per cluster is required".into(),
        ));
    }
    let pi = checked_inverse(&CrossProducts::new(d).gram())?;
    let lambda = h.lambda();
    let (hdir, gamma) = leverage_and_gamma(d, &pi, lambda);
    let mut loadings = Vec::with_capacity(g);
    for (cl, a) in d.clusters().iter().zip(coeffs) {
        if a.nrows() != cl.len() {
            return Err(Error::Argument(
                "coefficient matrix does not match the cluster size".into(),
            ));
        }
        let b = &pi * cl.x().tr_mul(a);
        let c = b.tr_mul(lambda);
        loadings.push((b, c));
    }
    let var: f64 = loadings
        .iter()
        .map(|(_, c)| c.norm_squared())
        .collect::<CompensatedSum>()
        .total()
        / g as f64;
    if var <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let sigma = var.sqrt();

    let mut mu12 = DVector::zeros(2 * k);
    let (mut mu22, mut mu111, mut mu1111) = (
        CompensatedSum::new(),
        CompensatedSum::new(),
        CompensatedSum::new(),
    );
    for ((b, c), hg) in loadings.iter().zip(&hdir) {
        let mut cmat = DMatrix::zeros(2 * k, c.len());
        cmat.rows_mut(0, k).copy_from(b);
        cmat.rows_mut(k, k).copy_from(&(hg * c.transpose()));
        mu12 += &cmat * c;
        mu22.add((cmat.transpose() * &gamma * &cmat).trace());
        let s2 = c.norm_squared();
        mu111.add(SHOCK_SKEWNESS * c.iter().map(|v| v.powi(3)).sum::<f64>());
        mu1111.add(
            3.0 * s2 * s2 + (SHOCK_FOURTH_MOMENT - 3.0) * c.iter().map(|v| v.powi(4)).sum::<f64>(),
        );
    }
    let gf = g as f64;
    EdgeworthMoments::from_moments(
        mu12 / (gf * var),
        mu22.total() / (gf * var),
        mu111.total() / (gf * var * sigma),
        mu1111.total() / (gf * var * var),
        &gamma,
    )
}
