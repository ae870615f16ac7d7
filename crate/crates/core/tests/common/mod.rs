#![allow(dead_code)]

use cluster_edgeworth::rng::{uniform, StreamKey};
use cluster_edgeworth::{ClusterBlock, ClusteredDataset};
use nalgebra::{DMatrix, DVector};

/// Random dataset with `g` clusters of 1 to `max_size` rows and `k`
/// regressors, the first a constant. Outcomes have skewed errors.
pub fn random_dataset(seed: u64, g: usize, k: usize, max_size: usize) -> ClusteredDataset {
    let mut rng = StreamKey::root(seed).rng();
    loop {
        let clusters = (0..g)
            .map(|c| {
                let n = 1 + (uniform(&mut rng, 0.0, max_size as f64) as usize).min(max_size - 1);
                let x = DMatrix::from_fn(n, k, |_, j| {
                    if j == 0 {
                        1.0
                    } else {
                        uniform(&mut rng, -2.0, 2.0)
                    }
                });
                let y = DVector::from_fn(n, |i, _| {
                    let e = uniform(&mut rng, 0.0, 1.0);
                    x.row(i).sum() + e * e * 3.0 - 1.0
                });
                ClusterBlock::new(format!("c{c}"), y, x).unwrap()
            })
            .collect();
        let d = ClusteredDataset::new(clusters).unwrap();
        if d.num_obs() > k + 1 {
            return d;
        }
    }
}

/// Rebuilds `d` with transformed regressors and outcomes per cluster.
pub fn map_clusters(
    d: &ClusteredDataset,
    f: impl Fn(&DVector<f64>, &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>),
) -> ClusteredDataset {
    let clusters = d
        .clusters()
        .iter()
        .map(|c| {
            let (y, x) = f(c.y(), c.x());
            ClusterBlock::new(c.label(), y, x).unwrap()
        })
        .collect();
    ClusteredDataset::with_names(clusters, d.regressor_names().to_vec()).unwrap()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Score moments from nested loops over plain arrays.
pub struct LoopMoments {
    pub sigma2: f64,
    pub mu12: Vec<f64>,
    pub mu22: f64,
    pub mu111: f64,
    pub mu1111: f64,
    pub mu12_gamma_mu12: f64,
}

fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..k {
            if r != col {
                let f = m[r][col];
                for c in 0..2 * k {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    m.into_iter().map(|r| r[k..].to_vec()).collect()
}

pub fn loop_moments(d: &ClusteredDataset, lambda: &[f64]) -> LoopMoments {
    let k = lambda.len();
    let g = d.num_clusters() as f64;
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for c in d.clusters() {
        for i in 0..c.len() {
            for a in 0..k {
                xty[a] += c.x()[(i, a)] * c.y()[i] / g;
                for b in 0..k {
                    xtx[a][b] += c.x()[(i, a)] * c.x()[(i, b)] / g;
                }
            }
        }
    }
    let pi = gauss_jordan_inverse(&xtx);
    let beta: Vec<f64> = (0..k)
        .map(|a| (0..k).map(|b| pi[a][b] * xty[b]).sum())
        .collect();
    let w: Vec<f64> = (0..k)
        .map(|b| (0..k).map(|a| lambda[a] * pi[a][b]).sum())
        .collect();

    let mut p = Vec::new();
    let mut pis = Vec::new();
    let mut lev = Vec::new();
    for c in d.clusters() {
        let mut s = vec![0.0; k];
        let mut gram = vec![vec![0.0; k]; k];
        for i in 0..c.len() {
            let u = c.y()[i] - (0..k).map(|a| c.x()[(i, a)] * beta[a]).sum::<f64>();
            for a in 0..k {
                s[a] += c.x()[(i, a)] * u;
                for b in 0..k {
                    gram[a][b] += c.x()[(i, a)] * c.x()[(i, b)];
                }
            }
        }
        p.push((0..k).map(|a| w[a] * s[a]).sum::<f64>());
        pis.push(
            (0..k)
                .map(|a| (0..k).map(|b| pi[a][b] * s[b]).sum::<f64>())
                .collect::<Vec<_>>(),
        );
        lev.push(
            (0..k)
                .map(|a| (0..k).map(|b| gram[a][b] * w[b]).sum::<f64>())
                .collect::<Vec<_>>(),
        );
    }
    let sigma2 = p.iter().map(|v| v * v).sum::<f64>() / g;
    let sigma = sigma2.sqrt();
    let mut top_left = vec![vec![0.0; k]; k];
    for h in &lev {
        for a in 0..k {
            for b in 0..k {
                top_left[a][b] -= h[a] * h[b] / g;
            }
        }
    }
    let quad = |v: &[f64], u: &[f64]| {
        let mut q = 0.0;
        for a in 0..k {
            for b in 0..k {
                q += v[a] * top_left[a][b] * u[b];
            }
            q += v[a] * u[k + a] + v[k + a] * u[a];
        }
        q
    };
    let mut mu12 = vec![0.0; 2 * k];
    let (mut mu22, mut mu111, mut mu1111) = (0.0, 0.0, 0.0);
    for i in 0..p.len() {
        let w1 = p[i] / sigma;
        let w2: Vec<f64> = pis[i]
            .iter()
            .map(|v| v / sigma)
            .chain(lev[i].iter().map(|h| h * w1))
            .collect();
        for a in 0..2 * k {
            mu12[a] += w1 * w2[a] / g;
        }
        mu22 += quad(&w2, &w2) / g;
        mu111 += w1.powi(3) / g;
        mu1111 += w1.powi(4) / g;
    }
    let mu12_gamma_mu12 = quad(&mu12, &mu12);
    LoopMoments {
        sigma2,
        mu12,
        mu22,
        mu111,
        mu1111,
        mu12_gamma_mu12,
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

/// Largest relative gap between the library moments and the loop oracle.
pub fn moment_gap(m: &cluster_edgeworth::EdgeworthMoments, o: &LoopMoments) -> f64 {
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
    m.mu12
        .iter()
        .zip(&o.mu12)
        .map(|(a, b)| rel(*a, *b))
        .chain([
            rel(m.mu22, o.mu22),
            rel(m.mu111, o.mu111),
            rel(m.mu1111, o.mu1111),
            rel(m.mu12_gamma_mu12, o.mu12_gamma_mu12),
        ])
        .fold(0.0, f64::max)
}
