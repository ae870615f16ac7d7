mod common;

use std::collections::HashSet;

use cluster_edgeworth::data::{add_dummies, DataTable, Factor};
use cluster_edgeworth::edgeworth::{estimate_moments, q2};
use cluster_edgeworth::ols::{fit, score_components, variance_identity_residual};
use cluster_edgeworth::{ClusterBlock, ClusteredDataset, Hypothesis, MomentOptions, PanelSchema};
use common::close;
use nalgebra::{DMatrix, DVector};
use num::{BigRational, ToPrimitive, Zero};

/// Moments recomputed with plain loops and a Gauss-Jordan inverse.
#[test]
fn moments_match_brute_force_loops() {
    for (seed, k, lambda) in [
        (77, 2, vec![0.4, -1.3]),
        (78, 3, vec![0.0, 1.0, 2.0]),
        (79, 1, vec![1.0]),
    ] {
        let d = common::random_dataset(seed, 7, k, 5);
        let h = Hypothesis::new(DVector::from_vec(lambda.clone()), 0.0, 0.05).unwrap();
        let o = common::loop_moments(&d, &lambda);
        let f = fit(&d, &h).unwrap();
        assert!(close(f.sigma2_hat(), o.sigma2, 1e-12));
        let m =
            estimate_moments(&score_components(&f, &d).unwrap(), MomentOptions::default()).unwrap();
        let gap = common::moment_gap(&m, &o);
        assert!(gap <= 1e-12, "k={k}: gap {gap:e}");
    }
}

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(v.into())
}

fn mean(values: &[BigRational]) -> BigRational {
    values.iter().fold(BigRational::zero(), |a, b| a + b) / rat(values.len() as i64)
}

struct Small {
    x: Vec<Vec<i64>>,
    y: Vec<Vec<i64>>,
}

impl Small {
    fn example() -> Self {
        Self {
            x: vec![vec![1, 2], vec![3], vec![1, -1, 2]],
            y: vec![vec![2, 5], vec![4], vec![0, 3, 1]],
        }
    }

    fn dataset(&self) -> ClusteredDataset {
        let clusters = self
            .x
            .iter()
            .zip(&self.y)
            .enumerate()
            .map(|(i, (x, y))| {
                let n = x.len();
                ClusterBlock::new(
                    format!("g{i}"),
                    DVector::from_iterator(n, y.iter().map(|&v| v as f64)),
                    DMatrix::from_iterator(n, 1, x.iter().map(|&v| v as f64)),
                )
                .unwrap()
            })
            .collect();
        ClusteredDataset::new(clusters).unwrap()
    }

    /// `Pi`, the leverage scalars `h_g` and `(X_g' e_g)` for the residual
    /// vector `e = y - x b`.
    fn pieces(&self, b: &BigRational) -> (BigRational, Vec<BigRational>, Vec<BigRational>) {
        let grams: Vec<BigRational> = self
            .x
            .iter()
            .map(|x| rat(x.iter().map(|v| v * v).sum()))
            .collect();
        let pi = mean(&grams).recip();
        let h = grams.iter().map(|gg| gg * &pi).collect();
        let xe = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| {
                x.iter()
                    .zip(y)
                    .fold(BigRational::zero(), |acc, (&xi, &yi)| {
                        acc + rat(xi) * (rat(yi) - rat(xi) * b)
                    })
            })
            .collect();
        (pi, h, xe)
    }

    fn beta_hat(&self) -> BigRational {
        let xty: Vec<BigRational> = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| rat(x.iter().zip(y).map(|(a, b)| a * b).sum()))
            .collect();
        let (pi, _, _) = self.pieces(&rat(0));
        pi * mean(&xty)
    }
}

/// With one regressor every moment is rational up to powers of
/// `sigma_hat`, so exact arithmetic pins the estimator.
#[test]
fn moments_match_exact_rational_arithmetic() {
    let s = Small::example();
    let b = s.beta_hat();
    let (pi, h, xe) = s.pieces(&b);
    let p: Vec<BigRational> = xe.iter().map(|v| v * &pi).collect();
    let pow = |k: i32| {
        mean(
            &p.iter()
                .map(|v| num::pow(v.clone(), k as usize))
                .collect::<Vec<_>>(),
        )
    };
    let m2 = pow(2);
    let hp2 = mean(
        &p.iter()
            .zip(&h)
            .map(|(v, hg)| v * v * hg)
            .collect::<Vec<_>>(),
    );
    let gamma = -mean(&h.iter().map(|v| v * v).collect::<Vec<_>>());
    let two = rat(2);

    let mu12_b = &hp2 / &m2;
    let mu22 = (&gamma * &m2 + &two * &hp2) / &m2;
    let mu1111 = pow(4) / (&m2 * &m2);
    let mu111_sq = pow(3) * pow(3) / (&m2 * &m2 * &m2);
    let quad = &gamma + &two * &mu12_b;
    let nu2 = &two * &mu111_sq + &mu22 + &two * &quad;
    let nu4 = -&two * &mu1111 + rat(28) * &mu111_sq + rat(6) * &mu22 + rat(24) * &quad;
    let k2 = &nu2 - &mu111_sq / rat(4);
    // 4 nu1 nu3 = 7 mu111^2 and 12 nu1^2 = 3 mu111^2
    let k4 = &nu4 - rat(7) * &mu111_sq - rat(6) * &nu2 + rat(3) * &mu111_sq;
    let mu111 = pow(3).to_f64().unwrap() / m2.to_f64().unwrap().powf(1.5);

    let d = s.dataset();
    let h1 = Hypothesis::coefficient(1, 0, 0.0, 0.05).unwrap();
    let f = fit(&d, &h1).unwrap();
    assert!(close(f.beta_hat()[0], b.to_f64().unwrap(), 1e-14));
    assert!(close(f.sigma2_hat(), m2.to_f64().unwrap(), 1e-12));
    let m = estimate_moments(&score_components(&f, &d).unwrap(), MomentOptions::default()).unwrap();
    assert!(close(m.mu12[0], 1.0, 1e-12));
    assert!(close(m.mu12[1], mu12_b.to_f64().unwrap(), 1e-12));
    assert!(close(m.mu22, mu22.to_f64().unwrap(), 1e-12));
    assert!(close(m.mu111, mu111, 1e-12));
    assert!(close(m.mu1111, mu1111.to_f64().unwrap(), 1e-12));
    assert!(close(m.kcum[0], -mu111 / 2.0, 1e-12));
    assert!(close(m.kcum[1], k2.to_f64().unwrap(), 1e-12));
    assert!(close(m.kcum[2], -2.0 * mu111, 1e-12));
    assert!(close(m.kcum[3], k4.to_f64().unwrap(), 1e-12));
}

/// Both sides of the variance decomposition, squared, are rational for one
/// regressor; they agree exactly and the library residual is at rounding
/// level.
#[test]
fn variance_identity_exact_at_three_clusters() {
    let s = Small::example();
    let beta = rat(1);
    let sigma_g2 = [rat(1), rat(2), rat(3)];
    let sigma2 = mean(&sigma_g2);

    let b = s.beta_hat();
    let (pi, h, xe_hat) = s.pieces(&b);
    let lhs_sq = mean(&xe_hat.iter().map(|v| v * v * &pi * &pi).collect::<Vec<_>>()) / &sigma2;

    let (_, _, xu) = s.pieces(&beta);
    let p: Vec<BigRational> = xu.iter().map(|v| v * &pi).collect();
    let v_top = mean(&p);
    let v_bottom = mean(&p.iter().zip(&h).map(|(v, hg)| v * hg).collect::<Vec<_>>());
    let gamma = -mean(&h.iter().map(|v| v * v).collect::<Vec<_>>());
    let w2_quad = (&gamma * &v_top * &v_top + rat(2) * &v_top * &v_bottom) / &sigma2;
    let w3 = mean(
        &p.iter()
            .zip(&sigma_g2)
            .map(|(v, s2)| v * v - s2)
            .collect::<Vec<_>>(),
    ) / &sigma2;
    let rhs_sq = rat(1) - w2_quad + w3;
    assert_eq!(lhs_sq, rhs_sq);

    let d = s.dataset();
    let h1 = Hypothesis::coefficient(1, 0, 0.0, 0.05).unwrap();
    let s2: Vec<f64> = sigma_g2.iter().map(|v| v.to_f64().unwrap()).collect();
    let r = variance_identity_residual(&d, &h1, &DVector::from_element(1, 1.0), &s2).unwrap();
    assert!(r <= 1e-12, "residual {r:e}");
}

#[test]
fn q2_at_population_cumulants() {
    let z = 1.959964_f64;
    let he1 = z;
    let he3 = z.powi(3) - 3.0 * z;
    let he5 = z.powi(5) - 10.0 * z.powi(3) + 15.0 * z;
    let by_hand = -(0.5 * (10.0 + 1.0) * he1 + (42.0 + 16.0) / 24.0 * he3 + 16.0 / 72.0 * he5);
    let mut m = cluster_edgeworth::EdgeworthMoments::from_moments(
        DVector::from_vec(vec![1.0, 1.0]),
        1.0,
        2.0,
        9.0,
        &DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 0.0]),
    )
    .unwrap();
    assert_eq!(m.kcum, [-1.0, 10.0, -4.0, 42.0]);
    assert!((q2(z, &m) - by_hand).abs() < 1e-12);
    assert!((by_hand + 10.9946).abs() < 5e-4);
    m.kcum = [0.0, 0.0, 6.0, 0.0];
    assert_eq!(q2(0.0, &m), 0.0);
}

fn tiny(levels: &[&[&str]]) -> (ClusteredDataset, Factor) {
    let clusters = levels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let n = l.len();
            ClusterBlock::new(
                format!("c{i}"),
                DVector::from_fn(n, |r, _| (i * 10 + r) as f64),
                DMatrix::from_element(n, 1, 1.0),
            )
            .unwrap()
        })
        .collect();
    let d = ClusteredDataset::new(clusters).unwrap();
    let f = Factor::new(
        "year",
        levels
            .iter()
            .map(|l| l.iter().map(|s| s.to_string()).collect())
            .collect(),
    );
    (d, f)
}

#[test]
fn three_levels_add_two_exclusive_columns() {
    let (d, f) = tiny(&[&["a", "b"], &["c", "a", "b"]]);
    let e = add_dummies(&d, &f).unwrap();
    assert_eq!(e.columns_added, 2);
    assert_eq!(e.dataset.num_regressors(), 3);
    for c in e.dataset.clusters() {
        for i in 0..c.len() {
            let ones = (1..3).filter(|&j| c.x()[(i, j)] == 1.0).count();
            assert!(ones <= 1);
        }
    }
}

#[test]
fn sequential_factors_add_up() {
    let (d, years) = tiny(&[
        &["79", "80", "81"],
        &["79", "80", "81"],
        &["79", "80", "81"],
    ]);
    let once = add_dummies(&d, &years).unwrap().dataset;
    let states = Factor::cluster_labels(&once);
    let twice = add_dummies(&once, &states).unwrap().dataset;
    assert_eq!(twice.num_regressors(), 1 + (3 - 1) + (3 - 1));
}

#[test]
fn cluster_count_matches_independent_scan() {
    let mut text = String::from("state,year,lnwage\n");
    for i in 0..400 {
        let st = (i * 37) % 53;
        text.push_str(&format!(
            "ST{st},{},{}\n",
            1979 + i % 21,
            (i % 17) as f64 / 10.0
        ));
    }
    let distinct: HashSet<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    let table = DataTable::read(text.as_bytes(), b',').unwrap();
    let schema = PanelSchema {
        cluster: "state".into(),
        y: "lnwage".into(),
        x: vec!["year".into()],
    };
    let d = table.to_dataset(&schema).unwrap();
    assert_eq!(d.num_clusters(), distinct.len());
    assert_eq!(d.num_obs(), 400);
}
