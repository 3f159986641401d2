use nalgebra::DMatrix;

use super::response::{sweep, RESPONSE_FAMILIES};
use super::{ExperimentConfig, ResultTable};
use crate::error::{Error, Result};
use crate::graph::ShiftKind;

/// Approximating the averaging operator `(1/N) 1 1ᵀ`.
pub fn exp_consensus(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if !matches!(cfg.shift, ShiftKind::Laplacian | ShiftKind::NormalizedLaplacian) {
        return Err(Error::InvalidParameter("consensus needs a Laplacian shift".into()));
    }
    let graph = cfg.graph.build(cfg.seed)?;
    let s = cfg.shift_for::<f64>(&graph)?;
    let n = s.n();
    let target = DMatrix::from_element(n, n, 1.0 / n as f64);

    let mut table = ResultTable::default();
    table.graph_stats(&graph, cfg.seed);
    table.meta("shift", cfg.shift);
    let families = cfg.families_or(&RESPONSE_FAMILIES);
    sweep(&graph, &s, &target, &families, &cfg.orders, cfg.seed, &mut table)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterFamily;

    fn on(generator: &str, n: usize, orders: Vec<usize>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.graph.generator = generator.into();
        cfg.graph.n = n;
        cfg.orders = orders;
        cfg
    }

    #[test]
    fn complete_graph_averages_in_one_step() {
        let mut cfg = on("complete", 7, vec![1]);
        cfg.families = Some(vec![FilterFamily::Classical]);
        let t = exp_consensus(&cfg).unwrap();
        assert!(t.value("classical", 1, "nse").unwrap() <= 1e-10);
    }

    #[test]
    fn star_graph_averages_in_two_steps() {
        let mut cfg = on("star", 5, vec![2]);
        cfg.families = Some(vec![FilterFamily::Classical]);
        let t = exp_consensus(&cfg).unwrap();
        assert!(t.value("classical", 2, "nse").unwrap() <= 1e-10);
    }

    #[test]
    fn one_row_per_family_and_order() {
        let cfg = on("community", 16, (1..=6).collect());
        let t = exp_consensus(&cfg).unwrap();
        assert_eq!(t.rows.len(), 6 * RESPONSE_FAMILIES.len());
        for k in 1..=6 {
            assert!(t.value("cev", k, "nse").unwrap() <= t.value("classical", k, "nse").unwrap() + 1e-12);
        }
    }

    #[test]
    fn adjacency_shift_is_rejected() {
        let mut cfg = on("ring", 6, vec![1]);
        cfg.shift = ShiftKind::Adjacency;
        assert!(exp_consensus(&cfg).is_err());
    }
}
