use nalgebra::DMatrix;

use super::{
    random_signal, signal_rng, spec_nse, target_exponential_kernel, target_ideal_lowpass,
    ExperimentConfig, FirFitter, GapTracker, ResultTable,
};
use crate::error::{Error, Result};
use crate::filters::{FilterFamily, FilterSpec};
use crate::graph::{eigendecompose, Graph, ShiftOperator};

pub(crate) const RESPONSE_FAMILIES: [FilterFamily; 4] = [
    FilterFamily::Classical,
    FilterFamily::NodeVariant,
    FilterFamily::ConstrainedEv,
    FilterFamily::Siev,
];

/// NSE of every family and order against a prescribed frequency response
/// `U diag(h̃) U⁻¹`.
pub fn exp_response_approx(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let graph = cfg.graph.build(cfg.seed)?;
    let s = cfg.shift_for::<f64>(&graph)?;
    let dec = eigendecompose(&s)?;
    let h = match cfg.target.as_str() {
        "exp" => target_exponential_kernel(dec.eigvals(), cfg.gamma, cfg.mu),
        "lowpass" => target_ideal_lowpass(dec.eigvals(), cfg.lambda_c),
        other => return Err(Error::InvalidParameter(format!("unknown response target '{other}'"))),
    };
    let target = dec.synthesize_diagonal(&h);

    let mut table = ResultTable::default();
    table.graph_stats(&graph, cfg.seed);
    table.meta("shift", cfg.shift);
    table.meta("target", &cfg.target);
    table.meta("gamma", cfg.gamma);
    table.meta("mu", cfg.mu);
    table.meta("lambda_c", cfg.lambda_c);
    let families = cfg.families_or(&RESPONSE_FAMILIES);
    sweep(&graph, &s, &target, &families, &cfg.orders, cfg.seed, &mut table)?;
    Ok(table)
}

/// One `nse` row per (family, order), in the order requested.
pub(crate) fn sweep(
    graph: &Graph,
    s: &ShiftOperator<f64>,
    target: &DMatrix<f64>,
    families: &[FilterFamily],
    orders: &[usize],
    seed: u64,
    table: &mut ResultTable,
) -> Result<()> {
    let fitter = FirFitter::new(s, families, seed)?;
    let mut rng = signal_rng(seed);
    let x = random_signal::<f64>(s.n(), &mut rng);
    let mut gaps = GapTracker::default();
    for &family in families {
        let mut prev: Option<(usize, FilterSpec<f64>)> = None;
        for &k in orders {
            let warm = prev.as_ref().filter(|(pk, _)| pk + 1 == k).map(|(_, f)| f);
            let f = fitter.fit(family, target, k, warm)?;
            table.push(family.name(), k, "nse", spec_nse(s, target, &f)?);
            gaps.check(graph, s, &f, &x)?;
            prev = Some((k, f));
        }
    }
    gaps.record(table);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ShiftKind;

    fn small(n: usize, orders: Vec<usize>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.graph.n = n;
        cfg.orders = orders;
        cfg
    }

    #[test]
    fn classical_interpolates_at_full_order() {
        let mut cfg = small(8, vec![7]);
        cfg.graph.generator = "path".into();
        cfg.families = Some(vec![FilterFamily::Classical]);
        let t = exp_response_approx(&cfg).unwrap();
        assert!(t.value("classical", 7, "nse").unwrap() <= 1e-8);
    }

    #[test]
    fn curves_nonincreasing_and_cev_beats_classical() {
        let cfg = small(24, (1..=5).collect());
        let t = exp_response_approx(&cfg).unwrap();
        assert_eq!(t.rows.len(), 4 * 5);
        for fam in ["classical", "nv", "cev", "siev"] {
            let curve = t.series(fam, "nse");
            for w in curve.windows(2) {
                assert!(w[1].1 <= w[0].1 + 1e-12, "{fam}: {curve:?}");
            }
        }
        for k in 1..=5 {
            let cev = t.value("cev", k, "nse").unwrap();
            assert!(cev <= t.value("classical", k, "nse").unwrap() + 1e-12);
            assert!(cev <= t.value("nv", k, "nse").unwrap() + 1e-12);
        }
        let gap: f64 = t.metadata["max_sim_gap"].parse().unwrap();
        assert!(gap <= 1e-9);
    }

    #[test]
    fn lowpass_target_and_custom_shift_kind() {
        let mut cfg = small(16, vec![2, 3]);
        cfg.target = "lowpass".into();
        cfg.shift = ShiftKind::NormalizedLaplacian;
        cfg.families = Some(vec![FilterFamily::Classical, FilterFamily::Sicev]);
        let t = exp_response_approx(&cfg).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t.rows.iter().all(|r| r.value >= 0.0));
        cfg.target = "bandstop".into();
        assert!(exp_response_approx(&cfg).is_err());
    }

    #[test]
    fn reruns_are_identical() {
        let cfg = small(16, vec![1, 2]);
        let a = exp_response_approx(&cfg).unwrap().to_csv();
        let b = exp_response_approx(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
    }
}
