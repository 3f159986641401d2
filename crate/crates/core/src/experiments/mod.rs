//! Desk-scale studies: response approximation, consensus, Wiener
//! denoising, beamforming, distributed least squares and Tikhonov
//! denoising. Each run is a pure function of its configuration.

mod beamforming;
mod consensus;
mod distls;
mod response;
mod tikhonov;
mod wiener;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{
    design_classical_matrix_ls, design_cev_ls, design_ev_bcd, design_nv_ls, design_sicev_ls,
    design_siev_bcd, nse, BcdInit, BcdOptions, CevOptions, DesignReport,
};
use crate::distsim;
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::filters::{ArmaOptions, FilterFamily, FilterSpec, SupportedMatrix};
use crate::graph::{build_shift, generators, Graph, GraphSignal, ShiftKind, ShiftOperator};
use crate::io::fmt_f64;
use crate::nullspace::{ShiftInvariantBasis, DEFAULT_RANK_TOL};

pub use beamforming::{angle_grid, exp_beamforming, steering_matrix, Beampattern};
pub use consensus::exp_consensus;
pub use distls::exp_distributed_ls;
pub use response::exp_response_approx;
pub use tikhonov::{exp_tikhonov, measured_rate};
pub use wiener::{exp_wiener, sample_covariance, synthetic_covariance, wiener_target};

pub const EXPERIMENTS: [&str; 6] = ["response", "consensus", "wiener", "beamforming", "distls", "tikhonov"];

/// `h̃ᵢ = exp(−γ (λᵢ − μ)²)`.
pub fn target_exponential_kernel(lambda: &DVector<f64>, gamma: f64, mu: f64) -> DVector<f64> {
    lambda.map(|l| (-gamma * (l - mu).powi(2)).exp())
}

/// `h̃ᵢ = 1` on `0 ≤ λᵢ ≤ λ_c`, else 0.
pub fn target_ideal_lowpass(lambda: &DVector<f64>, lambda_c: f64) -> DVector<f64> {
    lambda.map(|l| if (0.0..=lambda_c).contains(&l) { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// community, knn, ring, path, complete, star, grid or file.
    pub generator: String,
    pub n: usize,
    pub clusters: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub k: usize,
    pub side: f64,
    pub rows: usize,
    pub cols: usize,
    /// Edge list, for `generator = "file"`.
    pub path: Option<PathBuf>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        let c = generators::CommunityParams::default();
        GraphConfig {
            generator: "community".into(),
            n: 64,
            clusters: c.clusters,
            p_in: c.p_in,
            p_out: c.p_out,
            k: 8,
            side: 4.0,
            rows: 8,
            cols: 8,
            path: None,
        }
    }
}

impl GraphConfig {
    pub fn build(&self, seed: u64) -> Result<Graph> {
        let n = self.n;
        match self.generator.as_str() {
            "community" => generators::random_community_graph(
                n,
                generators::CommunityParams {
                    clusters: self.clusters,
                    p_in: self.p_in,
                    p_out: self.p_out,
                },
                seed,
            ),
            "knn" => generators::random_knn_graph(n, self.k, self.side, seed),
            "ring" => generators::ring(n),
            "path" => generators::path(n),
            "complete" => generators::complete(n),
            "star" => generators::star(n),
            "grid" => generators::grid(self.rows, self.cols),
            "file" => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("graph.path is required for file graphs".into()))?;
                crate::io::read_edge_list(&std::fs::read_to_string(path)?)
            }
            other => Err(Error::InvalidParameter(format!("unknown graph generator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphConfig,
    pub shift: ShiftKind,
    pub seed: u64,
    /// Families to compare; each experiment has its own default set.
    pub families: Option<Vec<FilterFamily>>,
    pub orders: Vec<usize>,
    /// exp or lowpass (response experiment).
    pub target: String,
    pub gamma: f64,
    pub mu: f64,
    pub lambda_c: f64,
    pub deltas: Vec<f64>,
    pub mu_tik: f64,
    pub noise_var: f64,
    /// Iteration budget of the recursive filters (Tikhonov).
    pub iterations: usize,
    /// CEV order of the Tikhonov comparison.
    pub cev_order: usize,
    pub wavelength: f64,
    /// Steering angles (degrees) whose beampatterns are emitted.
    pub steering: Vec<f64>,
    pub pattern_points: usize,
    /// Per-node observations (rows = samples) for the Wiener experiment.
    pub data_csv: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            graph: GraphConfig::default(),
            shift: ShiftKind::Laplacian,
            seed: 0,
            families: None,
            orders: (1..=8).collect(),
            target: "exp".into(),
            gamma: 3.0,
            mu: 0.75,
            lambda_c: 1.0,
            deltas: vec![0.6, 0.7, 0.8],
            mu_tik: 0.8,
            noise_var: 0.1,
            iterations: 200,
            cev_order: 15,
            wavelength: 1.0,
            steering: vec![0.0, 90.0],
            pattern_points: 361,
            data_csv: None,
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// Defaults of one named experiment.
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        match name {
            "response" | "consensus" => {}
            "wiener" => cfg.graph.n = 32,
            "beamforming" => {
                cfg.graph.generator = "knn".into();
                cfg.graph.n = 40;
                cfg.graph.k = 8;
                cfg.graph.side = 4.0;
                cfg.orders = vec![5];
                cfg.families = Some(vec![FilterFamily::ConstrainedEv, FilterFamily::NodeVariant]);
            }
            "distls" => cfg.graph.n = 16,
            "tikhonov" => cfg.graph.n = 32,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown experiment '{other}' (expected one of {})",
                    EXPERIMENTS.join(", ")
                )))
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Keys present in `text` override `self`; nested objects merge key by key.
    pub fn merged_with_json(&self, text: &str) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        let over: serde_json::Value = serde_json::from_str(text)?;
        merge_json(&mut base, over);
        let cfg: ExperimentConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() || self.orders.contains(&0) {
            return Err(Error::InvalidParameter("orders must be positive".into()));
        }
        if self.deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return Err(Error::InvalidParameter("every delta must lie in (0, 1)".into()));
        }
        if !(self.gamma >= 0.0) || !(self.mu_tik >= 0.0) || !(self.noise_var >= 0.0) {
            return Err(Error::InvalidParameter("gamma, mu_tik and noise_var must be nonnegative".into()));
        }
        if !(self.wavelength > 0.0) || self.pattern_points < 2 {
            return Err(Error::InvalidParameter("wavelength must be positive and pattern_points ≥ 2".into()));
        }
        Ok(())
    }

    fn families_or(&self, default: &[FilterFamily]) -> Vec<FilterFamily> {
        self.families.clone().unwrap_or_else(|| default.to_vec())
    }

    fn max_order(&self) -> usize {
        self.orders.iter().copied().max().unwrap_or(1)
    }

    fn shift_for<T: Scalar>(&self, g: &Graph) -> Result<ShiftOperator<T>> {
        build_shift(g, self.shift)
    }
}

fn merge_json(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub family: String,
    pub k_or_iter: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// Seed, graph statistics and scenario parameters.
    pub metadata: BTreeMap<String, String>,
}

impl ResultTable {
    pub fn push(&mut self, family: impl Into<String>, k: usize, metric: impl Into<String>, value: f64) {
        self.rows.push(ResultRow {
            family: family.into(),
            k_or_iter: k,
            metric: metric.into(),
            value,
        });
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    /// First value matching `(family, k, metric)`.
    pub fn value(&self, family: &str, k: usize, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.family == family && r.k_or_iter == k && r.metric == metric)
            .map(|r| r.value)
    }

    /// Values of one `(family, metric)` series ordered as recorded.
    pub fn series(&self, family: &str, metric: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.family == family && r.metric == metric)
            .map(|r| (r.k_or_iter, r.value))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,K_or_iter,metric,value\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.family, r.k_or_iter, r.metric, fmt_f64(r.value));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn graph_stats(&mut self, g: &Graph, seed: u64) {
        self.meta("seed", seed);
        self.meta("nodes", g.n());
        self.meta("edges", g.num_edges());
        self.meta("connected", g.is_connected());
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub beampatterns: Vec<Beampattern>,
}

impl ExperimentOutput {
    /// Writes `<name>.csv`, `<name>.json` and any beampattern CSVs into `dir`.
    pub fn write(&self, name: &str, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let csv = dir.join(format!("{name}.csv"));
        std::fs::write(&csv, self.table.to_csv())?;
        written.push(csv);
        let json = dir.join(format!("{name}.json"));
        std::fs::write(&json, self.table.to_json()?)?;
        written.push(json);
        for b in &self.beampatterns {
            let p = dir.join(b.file_name());
            std::fs::write(&p, b.to_csv())?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Runs the named experiment.
pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let table_only = |t: Result<ResultTable>| {
        t.map(|table| ExperimentOutput {
            table,
            beampatterns: Vec::new(),
        })
    };
    match name {
        "response" => table_only(exp_response_approx(cfg)),
        "consensus" => table_only(exp_consensus(cfg)),
        "wiener" => table_only(exp_wiener(cfg)),
        "beamforming" => exp_beamforming(cfg),
        "distls" => table_only(exp_distributed_ls(cfg)),
        "tikhonov" => table_only(exp_tikhonov(cfg)),
        other => Err(Error::InvalidParameter(format!(
            "unknown experiment '{other}' (expected one of {})",
            EXPERIMENTS.join(", ")
        ))),
    }
}

/// Fits FIR families against a matrix target, reusing one nullspace basis.
pub(crate) struct FirFitter<'a, T: Scalar> {
    s: &'a ShiftOperator<T>,
    ctx: Option<Arc<ShiftInvariantBasis<T>>>,
    seed: u64,
}

impl<'a, T: Scalar> FirFitter<'a, T> {
    pub(crate) fn new(s: &'a ShiftOperator<T>, families: &[FilterFamily], seed: u64) -> Result<Self> {
        if let Some(f) = families.iter().find(|f| f.is_arma()) {
            return Err(Error::UnsupportedKind {
                kind: f.to_string(),
                reason: "this experiment compares FIR families only".into(),
            });
        }
        let ctx = if families.iter().any(|f| matches!(f, FilterFamily::Siev | FilterFamily::Sicev)) {
            Some(ShiftInvariantBasis::new(s, DEFAULT_RANK_TOL)?)
        } else {
            None
        };
        Ok(FirFitter { s, ctx, seed })
    }

    fn ctx(&self) -> Result<&Arc<ShiftInvariantBasis<T>>> {
        self.ctx
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("no shift-invariant basis was prepared".into()))
    }

    /// Order-`order` design. `warm` is the same family's fit one order
    /// lower; the descent designs also start from it (padded with a zero
    /// coefficient) so the sweep is monotone in the order.
    pub(crate) fn fit(
        &self,
        family: FilterFamily,
        target: &DMatrix<T>,
        order: usize,
        warm: Option<&FilterSpec<T>>,
    ) -> Result<FilterSpec<T>> {
        let s = self.s;
        let report = match family {
            FilterFamily::Classical => design_classical_matrix_ls(s, target, order)?,
            FilterFamily::NodeVariant => design_nv_ls(s, target, order, CevOptions::default())?,
            FilterFamily::ConstrainedEv => design_cev_ls(s, target, order, CevOptions::default())?,
            FilterFamily::Sicev => {
                let ctx = self.ctx()?;
                let h = ctx.decomposition().modal_projection(target);
                design_sicev_ls(ctx, &h, order)?
            }
            FilterFamily::EdgeVariant => self.best_of(warm, |opts| design_ev_bcd(s, target, order, opts))?,
            FilterFamily::Siev => {
                let ctx = self.ctx()?;
                let h = ctx.decomposition().modal_projection(target);
                self.best_of(warm, |opts| design_siev_bcd(ctx, &h, order, opts))?
            }
            other => {
                return Err(Error::UnsupportedKind {
                    kind: other.to_string(),
                    reason: "not an FIR family".into(),
                })
            }
        };
        Ok(report.fitted)
    }

    fn best_of(
        &self,
        warm: Option<&FilterSpec<T>>,
        run: impl Fn(&BcdOptions<T>) -> Result<DesignReport<T>>,
    ) -> Result<DesignReport<T>> {
        let base = BcdOptions {
            restarts: 0,
            seed: self.seed,
            ..BcdOptions::default()
        };
        let mut best = run(&base)?;
        if let Some(prev) = warm.map(pad_with_zero).transpose()? {
            let opts = BcdOptions {
                init: BcdInit::Given(prev),
                ..base
            };
            let r = run(&opts)?;
            if r.nse < best.nse {
                best = r;
            }
        }
        Ok(best)
    }
}

/// Appends a zero coefficient, which leaves the operator unchanged.
fn pad_with_zero<T: Scalar>(f: &FilterSpec<T>) -> Result<FilterSpec<T>> {
    match f {
        FilterSpec::EdgeVariantFir { mats } => {
            let n = mats.first().map_or(0, SupportedMatrix::n);
            let mut mats = mats.clone();
            mats.push(SupportedMatrix::zeros(n));
            Ok(FilterSpec::EdgeVariantFir { mats })
        }
        FilterSpec::Siev { alpha0, alphas, ctx } => {
            let mut alphas = alphas.clone();
            alphas.push(DVector::zeros(ctx.dim()));
            Ok(FilterSpec::Siev {
                alpha0: alpha0.clone(),
                alphas,
                ctx: ctx.clone(),
            })
        }
        other => Err(Error::UnsupportedKind {
            kind: other.family().to_string(),
            reason: "only descent designs take a warm start".into(),
        }),
    }
}

/// NSE of a fitted filter against a matrix target.
pub(crate) fn spec_nse<T: Scalar>(s: &ShiftOperator<T>, target: &DMatrix<T>, f: &FilterSpec<T>) -> Result<f64> {
    nse(target, &f.dense_matrix(s)?)
}

/// Relative gap between the message-passing output and the dense product
/// for one signal.
pub(crate) fn sim_gap<T: Scalar>(
    graph: &Graph,
    s: &ShiftOperator<T>,
    f: &FilterSpec<T>,
    x: &GraphSignal<T>,
) -> Result<f64> {
    let opts = ArmaOptions {
        tol: 1e-13,
        ..ArmaOptions::default()
    };
    let (y, _) = distsim::simulate(graph, s, f, x, opts)?;
    let dense = f.dense_matrix(s)? * x.values();
    Ok(distsim::relative_gap(y.values(), &dense))
}

/// Tracks the largest dense-versus-simulated gap of a run.
#[derive(Debug, Default)]
pub(crate) struct GapTracker(f64);

impl GapTracker {
    pub(crate) fn check<T: Scalar>(
        &mut self,
        graph: &Graph,
        s: &ShiftOperator<T>,
        f: &FilterSpec<T>,
        x: &GraphSignal<T>,
    ) -> Result<()> {
        self.0 = self.0.max(sim_gap(graph, s, f, x)?);
        Ok(())
    }

    pub(crate) fn record(&self, table: &mut ResultTable) {
        table.meta("max_sim_gap", fmt_f64(self.0));
    }
}

pub(crate) fn signal_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5157)
}

pub(crate) fn random_signal<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> GraphSignal<T> {
    GraphSignal::from_vec((0..n).map(|_| T::sample(rng)).collect())
}
