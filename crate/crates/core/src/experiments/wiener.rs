use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::response::sweep;
use super::{signal_rng, ExperimentConfig, ResultTable};
use crate::error::{Error, Result};
use crate::filters::FilterFamily;
use crate::graph::eigendecompose;
use crate::io::read_observations_csv;
use crate::linalg;

const WIENER_FAMILIES: [FilterFamily; 3] = [
    FilterFamily::Classical,
    FilterFamily::NodeVariant,
    FilterFamily::ConstrainedEv,
];

/// `Σₓ (Σₓ + Σₙ)⁻¹`.
pub fn wiener_target(sigma_x: &DMatrix<f64>, sigma_n: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma_x.shape() != sigma_n.shape() || !sigma_x.is_square() {
        return Err(Error::dim(sigma_x.nrows(), sigma_n.nrows()));
    }
    let sum = sigma_x + sigma_n;
    // (Σₓ + Σₙ)⁻ᵀ Σₓᵀ, transposed.
    let t = linalg::solve(&sum.transpose(), &sigma_x.transpose())
        .ok_or_else(|| Error::Degenerate("Σx + Σn is singular".into()))?;
    Ok(t.transpose())
}

/// `G Gᵀ / r + diag(d)` with `r = ⌈N/8⌉` Gaussian factors and `dᵢ ∈ [0.1, 0.5)`.
pub fn synthetic_covariance(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = signal_rng(seed.wrapping_add(1));
    let r = n.div_ceil(8).max(1);
    let g = DMatrix::<f64>::from_fn(n, r, |_, _| rng.sample(StandardNormal));
    let mut c = &g * g.transpose() / r as f64;
    for i in 0..n {
        c[(i, i)] += 0.1 + 0.4 * rng.random::<f64>();
    }
    c
}

/// Unbiased sample covariance of observations stored one sample per row.
pub fn sample_covariance(obs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = obs.nrows();
    if m < 2 {
        return Err(Error::InvalidParameter("need at least two observations".into()));
    }
    let mean = obs.row_mean();
    let mut centered = obs.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    Ok(centered.transpose() * centered / (m - 1) as f64)
}

/// Wiener denoising operator fitted by every family, plus the
/// diagonal-projection baseline `U diag(U⁻¹ H̃ U) U⁻¹` (reported at order 0).
pub fn exp_wiener(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let graph = cfg.graph.build(cfg.seed)?;
    let s = cfg.shift_for::<f64>(&graph)?;
    let n = s.n();
    let sigma_x = match &cfg.data_csv {
        Some(path) => {
            let obs = read_observations_csv(&std::fs::read_to_string(path)?)?;
            if obs.ncols() != n {
                return Err(Error::dim(n, obs.ncols()));
            }
            sample_covariance(&obs)?
        }
        None => synthetic_covariance(n, cfg.seed),
    };
    let sigma_n = DMatrix::<f64>::identity(n, n) * cfg.noise_var;
    let target = wiener_target(&sigma_x, &sigma_n)?;

    let mut table = ResultTable::default();
    table.graph_stats(&graph, cfg.seed);
    table.meta("shift", cfg.shift);
    table.meta("noise_var", cfg.noise_var);
    table.meta("covariance", if cfg.data_csv.is_some() { "sample" } else { "synthetic" });
    let dec = eigendecompose(&s)?;
    let projected = dec.synthesize_diagonal(&dec.modal_projection(&target));
    table.push("diag-projection", 0, "nse", crate::design::nse(&target, &projected)?);
    let families = cfg.families_or(&WIENER_FAMILIES);
    sweep(&graph, &s, &target, &families, &cfg.orders, cfg.seed, &mut table)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_classical_matrix_ls, design_cev_ls, CevOptions};
    use crate::graph::{build_shift, generators, ShiftKind};

    #[test]
    fn shift_invariant_covariance_is_a_polynomial() {
        let s = build_shift::<f64>(&generators::path(6).unwrap(), ShiftKind::Laplacian).unwrap();
        let dec = eigendecompose(&s).unwrap();
        let sx = dec.synthesize_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.5, 1.0, 0.5, 0.2]));
        let sn = DMatrix::identity(6, 6) * 0.3;
        let target = wiener_target(&sx, &sn).unwrap();
        let r = design_classical_matrix_ls(&s, &target, 5).unwrap();
        assert!(r.nse <= 1e-8);
    }

    #[test]
    fn vanishing_noise_gives_identity() {
        let mut cfg = ExperimentConfig::preset("wiener").unwrap();
        cfg.graph.n = 16;
        cfg.noise_var = 0.0;
        cfg.orders = vec![1, 2];
        let t = exp_wiener(&cfg).unwrap();
        for r in t.rows.iter().filter(|r| r.k_or_iter >= 1) {
            assert!(r.value <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn cev_beats_classical_on_generic_covariance() {
        let s = build_shift::<f64>(
            &generators::random_community_graph(32, Default::default(), 3).unwrap(),
            ShiftKind::Laplacian,
        )
        .unwrap();
        let sx = synthetic_covariance(32, 3);
        let target = wiener_target(&sx, &(DMatrix::identity(32, 32) * 0.1)).unwrap();
        let cev = design_cev_ls(&s, &target, 5, CevOptions::default()).unwrap();
        let cl = design_classical_matrix_ls(&s, &target, 5).unwrap();
        assert!(cev.nse <= cl.nse);
    }

    #[test]
    fn table_has_baseline_and_sweep() {
        let mut cfg = ExperimentConfig::preset("wiener").unwrap();
        cfg.graph.n = 16;
        cfg.orders = vec![1, 2, 3];
        let t = exp_wiener(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1 + 3 * 3);
        assert!(t.value("diag-projection", 0, "nse").is_some());
    }

    #[test]
    fn singular_sum_is_an_error() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!(matches!(wiener_target(&z, &z), Err(Error::Degenerate(_))));
    }

    #[test]
    fn sample_covariance_of_two_points() {
        let obs = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let c = sample_covariance(&obs).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn observations_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let mut text = String::from("n0,n1,n2,n3,n4,n5\n");
        for t in 0..20 {
            let row: Vec<String> = (0..6).map(|i| format!("{}", ((t * 7 + i * 3) % 11) as f64)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        std::fs::write(&path, text).unwrap();
        let mut cfg = ExperimentConfig::preset("wiener").unwrap();
        cfg.graph.generator = "ring".into();
        cfg.graph.n = 6;
        cfg.orders = vec![1];
        cfg.data_csv = Some(path);
        let t = exp_wiener(&cfg).unwrap();
        assert_eq!(t.metadata["covariance"], "sample");
    }
}
