//! Monte Carlo harness: the four simulation designs, a replication driver
//! that evaluates every method on the same sample, and aggregation into
//! rejection rates and median critical values.
//!
//! Replication `r` of design `d` at `G` clusters draws its data from the
//! stream keyed by `(seed, d, G, r)`; bootstrap draws derive from that key.
//! Results therefore do not depend on scheduling or the thread count.

pub mod designs;
pub mod panel;
pub mod report;

use rayon::prelude::*;
use serde::Serialize;

use crate::edgeworth::{critical_value, MomentOptions};
use crate::error::{Error, Result};
use crate::methods::{evaluate, Method, MethodDetails, MethodOptions, MethodResult};
use crate::ols::fit;
use crate::rng::StreamKey;

pub use designs::{gen_design1, gen_design2, gen_design3, gen_design4, Design, DesignDraw};
pub use panel::{PanelColumns, StatePanel};
pub use report::Report;

/// Grid of simulations to run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub designs: Vec<Design>,
    #[serde(rename = "G")]
    pub clusters: Vec<usize>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub boot: usize,
    pub alpha: f64,
    pub seed: u64,
    pub truncation: Option<f64>,
    /// Worker threads; `None` uses the rayon default. Not part of the output.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl GridConfig {
    pub fn validate(&self, panel: Option<&StatePanel>) -> Result<()> {
        if self.designs.is_empty() || self.clusters.is_empty() || self.methods.is_empty() {
            return Err(Error::Config(
                "designs, G and methods must be non-empty".into(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.boot == 0 && self.methods.iter().any(|m| m.is_bootstrap()) {
            return Err(Error::Config(
                "boot must be at least 1 for bootstrap methods".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        for &d in &self.designs {
            if d.needs_panel() && panel.is_none() {
                return Err(Error::Config(format!(
                    "design {d} needs a state-year panel (--panel)"
                )));
            }
            for &g in &self.clusters {
                d.check_clusters(g)
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// Draws one sample of `design` with `g` clusters.
pub fn generate(
    design: Design,
    g: usize,
    alpha: f64,
    key: StreamKey,
    panel: Option<&StatePanel>,
) -> Result<DesignDraw> {
    let mut rng = key.rng();
    match design {
        Design::Bdm1 => {
            let panel = panel
                .ok_or_else(|| Error::Config("design bdm1 needs a state-year panel".into()))?;
            gen_design1(panel, g, alpha, &mut rng)
        }
        Design::Exp2 => gen_design2(g, alpha, &mut rng),
        Design::Binary3 => gen_design3(g, alpha, &mut rng),
        Design::Fe4 => gen_design4(g, alpha, &mut rng),
    }
}

/// Key of replication `rep` of `design` at `g` clusters.
pub fn replication_key(seed: u64, design: Design, g: usize, rep: usize) -> StreamKey {
    StreamKey::root(seed).path(&[design.tag(), g as u64, rep as u64])
}

/// Everything computed for one simulated sample.
#[derive(Debug, Clone)]
pub struct Replication {
    /// `None` when the original fit failed.
    pub t_stat: Option<f64>,
    /// One entry per requested method; `None` when the method failed.
    pub results: Vec<Option<MethodResult>>,
}

/// Generates replication `rep` and evaluates every method on it.
pub fn replicate(
    cfg: &GridConfig,
    design: Design,
    g: usize,
    rep: usize,
    panel: Option<&StatePanel>,
) -> Result<Replication> {
    let key = replication_key(cfg.seed, design, g, rep);
    let draw = generate(design, g, cfg.alpha, key, panel)?;
    let fitted = match fit(&draw.dataset, &draw.hypothesis) {
        Ok(f) => f,
        Err(e) if e.is_numerical() => {
            return Ok(Replication {
                t_stat: None,
                results: vec![None; cfg.methods.len()],
            })
        }
        Err(e) => return Err(e),
    };
    let opts = MethodOptions {
        boot: cfg.boot,
        key,
        moments: MomentOptions {
            truncation: cfg.truncation,
        },
    };
    let t = fitted.t_stat();
    let results = cfg
        .methods
        .iter()
        .map(|&m| match m {
            Method::CornishFisher => {
                let pop = draw.population.as_ref()?;
                let crit = critical_value(pop, g, cfg.alpha).ok()?;
                Some(MethodResult {
                    method: m,
                    cv_effective: crit.cv,
                    reject: t.abs() > crit.cv,
                    details: MethodDetails::None,
                })
            }
            _ => evaluate(m, &draw.dataset, &fitted, &opts).ok(),
        })
        .collect();
    Ok(Replication {
        t_stat: Some(t),
        results,
    })
}

/// Aggregate for one (design, G, method).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub design: Design,
    #[serde(rename = "G")]
    pub g: usize,
    pub method: Method,
    pub alpha: f64,
    pub reps: usize,
    pub boot: usize,
    pub seed: u64,
    /// Replications in which the method produced a critical value.
    pub completed: usize,
    pub reject_rate: Option<f64>,
    /// `sqrt(p (1 - p) / completed)`.
    pub se: Option<f64>,
    pub median_cv: Option<f64>,
    /// Bootstrap draws with a vanishing variance, summed over replications.
    pub degenerate_count: usize,
    /// Bootstrap draws that used the pseudo-inverse, summed over replications.
    pub pseudo_inverse_count: usize,
    /// Replications whose bootstrap order statistic fell beyond `B`.
    pub sentinel_count: usize,
}

/// Per-(design, G) quantities shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub design: Design,
    #[serde(rename = "G")]
    pub g: usize,
    pub fit_failures: usize,
    /// `ceil(reps (1 - alpha))`-th order statistic of `|t|` across replications.
    pub simulated_cv: Option<f64>,
}

/// Output of [`run_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutput {
    pub config: GridConfig,
    pub cells: Vec<CellSummary>,
    pub results: Vec<McResult>,
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// The `ceil(n (1 - alpha))`-th order statistic of `values`.
pub fn simulated_quantile(values: &mut [f64], alpha: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let idx = ((values.len() as f64) * (1.0 - alpha) - 1e-9)
        .ceil()
        .max(1.0) as usize;
    Some(values[idx.min(values.len()) - 1])
}

fn aggregate(
    cfg: &GridConfig,
    design: Design,
    g: usize,
    reps: &[Replication],
) -> (CellSummary, Vec<McResult>) {
    let mut abs_t: Vec<f64> = reps.iter().filter_map(|r| r.t_stat.map(f64::abs)).collect();
    let cell = CellSummary {
        design,
        g,
        fit_failures: reps.iter().filter(|r| r.t_stat.is_none()).count(),
        simulated_cv: simulated_quantile(&mut abs_t, cfg.alpha),
    };
    let results = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let done: Vec<&MethodResult> =
                reps.iter().filter_map(|r| r.results[j].as_ref()).collect();
            let completed = done.len();
            let rejections = done.iter().filter(|m| m.reject).count();
            let rate = (completed > 0).then(|| rejections as f64 / completed as f64);
            let mut cvs: Vec<f64> = done.iter().map(|m| m.cv_effective).collect();
            let (mut degenerate, mut pinv, mut sentinel) = (0, 0, 0);
            for m in &done {
                if let MethodDetails::Bootstrap(b) = &m.details {
                    degenerate += b.degenerate;
                    pinv += b.pseudo_inverse;
                    sentinel += usize::from(b.sentinel);
                }
            }
            McResult {
                design,
                g,
                method,
                alpha: cfg.alpha,
                reps: cfg.reps,
                boot: cfg.boot,
                seed: cfg.seed,
                completed,
                reject_rate: rate,
                se: rate.map(|p| (p * (1.0 - p) / completed as f64).sqrt()),
                median_cv: median(&mut cvs),
                degenerate_count: degenerate,
                pseudo_inverse_count: pinv,
                sentinel_count: sentinel,
            }
        })
        .collect();
    (cell, results)
}

/// Runs every (design, G) cell of the grid.
pub fn run_grid(cfg: &GridConfig, panel: Option<&StatePanel>) -> Result<GridOutput> {
    cfg.validate(panel)?;
    let work = || -> Result<GridOutput> {
        let mut cells = Vec::new();
        let mut results = Vec::new();
        for &design in &cfg.designs {
            for &g in &cfg.clusters {
                let reps = (0..cfg.reps)
                    .into_par_iter()
                    .map(|r| replicate(cfg, design, g, r, panel))
                    .collect::<Result<Vec<_>>>()?;
                let (cell, rows) = aggregate(cfg, design, g, &reps);
                cells.push(cell);
                results.extend(rows);
            }
        }
        Ok(GridOutput {
            config: cfg.clone(),
            cells,
            results,
        })
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(work),
        None => work(),
    }
}
