use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{
    random_signal, signal_rng, spec_nse, ExperimentConfig, ExperimentOutput, FirFitter, GapTracker,
    ResultTable,
};
use crate::error::{Error, Result};
use crate::filters::{FilterFamily, FilterSpec};
use crate::io::fmt_f64;

/// One output beampattern: `|hᵀ a(θ)|` in dB over a grid of angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Beampattern {
    /// `dense` for the matched filter itself, else the fitted family.
    pub family: String,
    pub steering_deg: f64,
    pub angles_deg: Vec<f64>,
    pub db: Vec<f64>,
}

impl Beampattern {
    pub fn file_name(&self) -> String {
        format!("beampattern_{}_{}.csv", self.family, self.steering_deg)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_deg,dB\n");
        for (a, d) in self.angles_deg.iter().zip(&self.db) {
            let _ = writeln!(out, "{},{}", fmt_f64(*a), fmt_f64(*d));
        }
        out
    }
}

/// `A[i, q] = exp(j κ (cos θ_q xᵢ + sin θ_q yᵢ))`.
pub fn steering_matrix(points: &[[f64; 2]], angles_deg: &[f64], kappa: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(points.len(), angles_deg.len(), |i, q| {
        let t = angles_deg[q].to_radians();
        let [x, y] = points[i];
        Complex64::from_polar(1.0, kappa * (t.cos() * x + t.sin() * y))
    })
}

/// `N` angles `θ_q = −180° + 360° (q + 1) / N` covering (−180°, 180°].
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|q| -180.0 + 360.0 * (q + 1) as f64 / n as f64).collect()
}

fn to_db(v: f64) -> f64 {
    20.0 * v.max(1e-300).log10()
}

/// `|row · a(θ)|` in dB for each angle.
fn pattern(row: &DVector<Complex64>, points: &[[f64; 2]], angles: &[f64], kappa: f64) -> Vec<f64> {
    let a = steering_matrix(points, angles, kappa);
    (0..angles.len())
        .map(|p| to_db(row.iter().zip(a.column(p).iter()).map(|(h, s)| h * s).sum::<Complex64>().norm()))
        .collect()
}

/// Matched-filter beamforming `Wᴴ` over the complex field.
pub fn exp_beamforming(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let graph = cfg.graph.build(cfg.seed)?;
    let points = graph
        .coordinates()
        .ok_or_else(|| Error::InvalidParameter("beamforming needs a graph with node positions".into()))?
        .to_vec();
    let s = cfg.shift_for::<Complex64>(&graph)?;
    let n = s.n();
    let kappa = 2.0 * PI / cfg.wavelength;
    let grid = angle_grid(n);
    let a = steering_matrix(&points, &grid, kappa);
    let w = a.map(|v| v / (n as f64).sqrt());
    let target = w.adjoint();

    let mut table = ResultTable::default();
    table.graph_stats(&graph, cfg.seed);
    table.meta("shift", cfg.shift);
    table.meta("wavelength", cfg.wavelength);
    table.meta("field", "complex");

    let families = cfg.families_or(&[FilterFamily::ConstrainedEv, FilterFamily::NodeVariant]);
    let fitter = FirFitter::new(&s, &families, cfg.seed)?;
    let mut rng = signal_rng(cfg.seed);
    let x = random_signal::<Complex64>(n, &mut rng);
    let mut gaps = GapTracker::default();
    let top = cfg.max_order();
    let mut fitted: Vec<(FilterFamily, DMatrix<Complex64>)> = Vec::new();
    for &family in &families {
        let mut prev: Option<(usize, FilterSpec<Complex64>)> = None;
        for &k in &cfg.orders {
            let warm = prev.as_ref().filter(|(pk, _)| pk + 1 == k).map(|(_, f)| f);
            let f = fitter.fit(family, &target, k, warm)?;
            table.push(family.name(), k, "nse", spec_nse(&s, &target, &f)?);
            gaps.check(&graph, &s, &f, &x)?;
            if k == top {
                fitted.push((family, f.dense_matrix(&s)?));
            }
            prev = Some((k, f));
        }
    }
    gaps.record(&mut table);

    let pts = cfg.pattern_points;
    let sweep: Vec<f64> = (0..pts).map(|p| -180.0 + 360.0 * p as f64 / (pts - 1) as f64).collect();
    let mut beampatterns = Vec::new();
    for &theta in &cfg.steering {
        let q = grid
            .iter()
            .enumerate()
            .min_by(|x, y| angle_dist(*x.1, theta).total_cmp(&angle_dist(*y.1, theta)))
            .map(|(q, _)| q)
            .unwrap_or(0);
        let metric = format!("steer_db_{theta}");
        let rows = std::iter::once(("dense".to_string(), target.row(q).transpose()))
            .chain(fitted.iter().map(|(f, h)| (f.name().to_string(), h.row(q).transpose())));
        for (family, row) in rows {
            table.push(&family, top, &metric, pattern(&row, &points, &[grid[q]], kappa)[0]);
            beampatterns.push(Beampattern {
                family,
                steering_deg: theta,
                angles_deg: sweep.clone(),
                db: pattern(&row, &points, &sweep, kappa),
            });
        }
    }
    Ok(ExperimentOutput { table, beampatterns })
}

fn angle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset("beamforming").unwrap();
        cfg.graph.n = 20;
        cfg.graph.k = 6;
        cfg.orders = vec![2, 3];
        cfg.pattern_points = 73;
        cfg
    }

    #[test]
    fn grid_contains_broadside_and_endfire() {
        let g = angle_grid(40);
        assert!(g.contains(&0.0) && g.contains(&90.0) && g.contains(&180.0));
        assert!(g.iter().all(|&t| t > -180.0 && t <= 180.0));
    }

    #[test]
    fn dense_pattern_matches_closed_form() {
        let pts = [[0.0, 0.0], [0.3, 1.1], [2.0, -0.7], [1.4, 3.3]];
        let kappa = 2.0 * PI;
        let a0 = steering_matrix(&pts, &[30.0], kappa).column(0).into_owned();
        let row = a0.map(|v| v.conj() / 2.0);
        let angles: Vec<f64> = (0..37).map(|p| -180.0 + 10.0 * p as f64).collect();
        let got = pattern(&row, &pts, &angles, kappa);
        let a = steering_matrix(&pts, &angles, kappa);
        for (p, g) in got.iter().enumerate() {
            let want = to_db(a0.dotc(&a.column(p)).norm() / 2.0);
            assert!((g - want).abs() <= 1e-12, "{g} vs {want}");
        }
    }

    #[test]
    fn cev_dominates_nv_and_emits_patterns() {
        let out = exp_beamforming(&small()).unwrap();
        for k in [2, 3] {
            let cev = out.table.value("cev", k, "nse").unwrap();
            assert!(cev <= out.table.value("nv", k, "nse").unwrap() + 1e-12);
        }
        assert_eq!(out.beampatterns.len(), 2 * 3);
        let bp = &out.beampatterns[0];
        assert_eq!(bp.angles_deg.len(), 73);
        assert!(bp.to_csv().starts_with("angle_deg,dB\n"));
        // The matched filter peaks at √N in the steering direction.
        let peak = out.table.value("dense", 3, "steer_db_0").unwrap();
        assert!((peak - to_db(20f64.sqrt())).abs() < 1e-9);
        let gap: f64 = out.table.metadata["max_sim_gap"].parse().unwrap();
        assert!(gap <= 1e-9);
    }

    #[test]
    fn needs_positions() {
        let mut cfg = small();
        cfg.graph.generator = "ring".into();
        assert!(exp_beamforming(&cfg).is_err());
    }
}
