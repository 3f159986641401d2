use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{signal_rng, ExperimentConfig, GapTracker, ResultTable};
use crate::design::{design_cev_ls, design_ev_arma1, CevOptions};
use crate::error::{Error, Result};
use crate::filters::{arma_iterates, ArmaOptions, FilterSpec};
use crate::graph::{normalize_spectral, GraphSignal};
use crate::io::fmt_f64;
use crate::linalg;

/// Ratios used by [`measured_rate`].
const RATE_WINDOW: usize = 10;
/// Errors below this fraction of the initial error are round-off.
const RATE_FLOOR: f64 = 1e-12;

/// Asymptotic contraction factor of an error sequence: the geometric mean
/// of the last few ratios `eₜ₊₁ / eₜ` taken while `eₜ` is above round-off.
/// Zero when the sequence reaches its limit at once.
pub fn measured_rate(errors: &[f64]) -> f64 {
    let Some(&e0) = errors.first() else {
        return 0.0;
    };
    let ratios: Vec<f64> = errors
        .windows(2)
        .take_while(|w| w[0] > RATE_FLOOR * e0 && w[1] > RATE_FLOOR * e0)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return 0.0;
    }
    let tail = &ratios[ratios.len().saturating_sub(RATE_WINDOW)..];
    (tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp()
}

/// Tikhonov denoising `x* = (I + μ S)⁻¹ z` on the unit-norm shift: the
/// classical ARMA recursion, edge-variant ARMA designs for each `δ` and the
/// truncations of a constrained edge-variant FIR fit.
///
/// Rows: per-iteration `nse` against `x*`, the measured contraction `rate`
/// (iteration 0), and `steady_nse` of the limit.
pub fn exp_tikhonov(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if !(cfg.mu_tik >= 0.0) {
        return Err(Error::InvalidParameter("mu_tik must be nonnegative".into()));
    }
    let graph = cfg.graph.build(cfg.seed)?;
    let s = normalize_spectral(&cfg.shift_for::<f64>(&graph)?)?;
    let n = s.n();
    let sm = s.matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    let target = linalg::inverse(&(&eye + sm * cfg.mu_tik))
        .ok_or_else(|| Error::Degenerate("I + μS is singular".into()))?;

    let mut rng = signal_rng(cfg.seed);
    let g = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
    let smooth = linalg::solve(&(&eye + sm * 10.0), &DMatrix::from_column_slice(n, 1, g.as_slice()))
        .ok_or_else(|| Error::Degenerate("smoothing system is singular".into()))?
        .column(0)
        .into_owned();
    let sigma = cfg.noise_var.sqrt();
    let z = smooth + DVector::<f64>::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    let x_star = &target * &z;
    let zsig = GraphSignal::new(z.clone());

    let mut table = ResultTable::default();
    table.graph_stats(&graph, cfg.seed);
    table.meta("shift", format!("unit-norm {}", cfg.shift));
    table.meta("mu", cfg.mu_tik);
    table.meta("noise_var", cfg.noise_var);
    let mut gaps = GapTracker::default();
    let den = x_star.norm_squared().max(f64::MIN_POSITIVE);
    let rel = |y: &DVector<f64>| (y - &x_star).norm_squared() / den;
    let opts = ArmaOptions {
        tol: 0.0,
        max_iter: cfg.iterations,
    };

    let mut arma = |name: &str, spec: FilterSpec<f64>, table: &mut ResultTable| -> Result<()> {
        let (phi0, phi1) = crate::distsim::arma_matrices(&spec, &s)?;
        let limit = spec.dense_matrix(&s)? * &z;
        let mut traj = arma_iterates(phi1.matrix(), &(phi0.matrix() * &z), opts)?;
        while traj.len() < cfg.iterations + 1 {
            traj.push(traj[traj.len() - 1].clone());
        }
        for (t, y) in traj.iter().enumerate() {
            table.push(name, t, "nse", rel(y));
        }
        let errors: Vec<f64> = traj.iter().map(|y| (y - &limit).norm()).collect();
        table.push(name, 0, "rate", measured_rate(&errors));
        table.push(name, cfg.iterations, "steady_nse", rel(&limit));
        gaps.check(&graph, &s, &spec, &zsig)
    };

    arma(
        "classical-arma1",
        FilterSpec::ClassicalArma1 {
            psi: -cfg.mu_tik,
            phi: 1.0,
        },
        &mut table,
    )?;
    for &delta in &cfg.deltas {
        let report = design_ev_arma1(&s, &target, delta)?;
        let name = format!("ev-arma1-delta{delta}");
        if let Some(f) = &report.feasibility {
            table.push(&name, 0, "feedback_norm", f.achieved);
        }
        arma(&name, report.fitted, &mut table)?;
    }

    let cev = design_cev_ls(&s, &target, cfg.cev_order, CevOptions::default())?.fitted;
    for k in 1..=cfg.cev_order {
        let y = cev.truncated(k)?.dense_matrix(&s)? * &z;
        table.push("cev", k, "nse", rel(&y));
    }
    table.push("cev", cfg.cev_order, "steady_nse", rel(&(cev.dense_matrix(&s)? * &z)));
    gaps.check(&graph, &s, &cev, &zsig)?;
    gaps.record(&mut table);
    table.meta("spectral_norm", fmt_f64(linalg::spectral_norm(sm)));
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset("tikhonov").unwrap();
        cfg.graph.n = 16;
        cfg.cev_order = 4;
        cfg
    }

    #[test]
    fn rate_of_geometric_sequence() {
        let e: Vec<f64> = (0..50).map(|t| 0.5f64.powi(t)).collect();
        assert!((measured_rate(&e) - 0.5).abs() < 1e-12);
        assert_eq!(measured_rate(&[1.0, 0.0, 0.0]), 0.0);
        assert_eq!(measured_rate(&[]), 0.0);
    }

    #[test]
    fn zero_regularization_is_immediate() {
        let mut cfg = small();
        cfg.mu_tik = 0.0;
        cfg.iterations = 5;
        let t = exp_tikhonov(&cfg).unwrap();
        assert_eq!(t.value("classical-arma1", 1, "nse").unwrap(), 0.0);
        assert_eq!(t.value("classical-arma1", 0, "rate").unwrap(), 0.0);
    }

    #[test]
    fn classical_rate_matches_mu_and_designs_respect_delta() {
        let t = exp_tikhonov(&small()).unwrap();
        let r = t.value("classical-arma1", 0, "rate").unwrap();
        assert!((r - 0.8).abs() <= 1e-3, "rate {r}");
        for d in [0.6, 0.7, 0.8] {
            let name = format!("ev-arma1-delta{d}");
            assert!(t.value(&name, 0, "rate").unwrap() <= d + 1e-6);
            assert!(t.value(&name, 0, "feedback_norm").unwrap() <= d);
        }
        assert_eq!(t.series("classical-arma1", "nse").len(), 201);
        assert_eq!(t.series("cev", "nse").len(), 4);
        let gap: f64 = t.metadata["max_sim_gap"].parse().unwrap();
        assert!(gap <= 1e-9, "gap {gap}");
    }
}
