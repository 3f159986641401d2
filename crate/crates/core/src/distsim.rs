//! Round-synchronous message passing.
//!
//! Every node holds only its own rows of the filter coefficients and its
//! own signal value. In each round a node broadcasts one scalar to its
//! out-neighbors and then combines what arrived in its inbox. Summation
//! runs over ascending sender ids, so traces are bit-reproducible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::filters::{ArmaOptions, DivergenceMonitor, FilterSpec, SupportedMatrix};
use crate::graph::{Graph, GraphSignal, ShiftOperator};
use crate::linalg;

/// Local state of one node.
#[derive(Debug, Clone)]
pub struct NodeState<T: Scalar> {
    pub id: usize,
    /// Nodes this one receives from, ascending.
    pub neighbors: Vec<usize>,
    /// Current shifted value `x_i^{(k)}`.
    pub shift: T,
    /// Output accumulator `y_i^{(k)}`.
    pub acc: T,
    /// ARMA state `y_{t,i}`.
    pub arma: T,
    /// Cached ARMA input term `(Φ₀ x)_i`.
    pub input: T,
    /// `(sender, value)` pairs of the current round, ascending by sender.
    pub inbox: Vec<(usize, T)>,
}

/// A message from a node outside the receiver's neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub round: usize,
    pub node: usize,
    pub sender: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub messages: usize,
    /// Largest change of any node's state in this round.
    pub max_delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub rounds: usize,
    pub messages_per_round: Vec<usize>,
    pub total_scalars_sent: usize,
    pub violations: Vec<Violation>,
    pub records: Vec<RoundRecord>,
}

impl SimulationTrace {
    /// One JSON object per round.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn push(&mut self, messages: usize, max_delta: f64) {
        self.rounds += 1;
        self.messages_per_round.push(messages);
        self.total_scalars_sent += messages;
        self.records.push(RoundRecord {
            round: self.rounds,
            messages,
            max_delta,
        });
    }
}

/// Row `i` of a coefficient matrix as held by node `i`: sender ids
/// (ascending, self included) and weights.
#[derive(Debug, Clone)]
struct LocalRow<T: Scalar> {
    cols: Vec<usize>,
    weights: Vec<T>,
}

/// Splits `m` into per-node rows, rejecting any weight on a non-neighbor.
fn distribute<T: Scalar>(m: &DMatrix<T>, neighbors: &[Vec<usize>]) -> Result<Vec<LocalRow<T>>> {
    let n = neighbors.len();
    if m.shape() != (n, n) {
        return Err(Error::dim(n, m.nrows()));
    }
    (0..n)
        .map(|i| {
            let mut cols = Vec::new();
            let mut weights = Vec::new();
            for j in 0..n {
                let w = m[(i, j)];
                if w == T::zero() {
                    continue;
                }
                if j != i && neighbors[i].binary_search(&j).is_err() {
                    return Err(Error::LocalityViolation {
                        node: i,
                        source_node: j,
                    });
                }
                cols.push(j);
                weights.push(w);
            }
            Ok(LocalRow { cols, weights })
        })
        .collect()
}

fn distribute_diag<T: Scalar>(v: &DVector<T>) -> Vec<LocalRow<T>> {
    (0..v.len())
        .map(|i| LocalRow {
            cols: vec![i],
            weights: vec![v[i]],
        })
        .collect()
}

struct Network<T: Scalar> {
    nodes: Vec<NodeState<T>>,
    trace: SimulationTrace,
}

impl<T: Scalar> Network<T> {
    fn new(graph: &Graph, x: &GraphSignal<T>) -> Result<Self> {
        x.check_len(graph.n())?;
        let lists = graph.neighbor_lists();
        let nodes = lists
            .into_iter()
            .enumerate()
            .map(|(id, mut neighbors)| {
                neighbors.retain(|&j| j != id);
                NodeState {
                    id,
                    neighbors,
                    shift: x.values()[id],
                    acc: T::zero(),
                    arma: T::zero(),
                    input: T::zero(),
                    inbox: Vec::new(),
                }
            })
            .collect();
        Ok(Network {
            nodes,
            trace: SimulationTrace::default(),
        })
    }

    fn neighbors(&self) -> Vec<Vec<usize>> {
        self.nodes.iter().map(|n| n.neighbors.clone()).collect()
    }

    /// Every node broadcasts `value(node)`; returns the message count.
    fn exchange(&mut self, value: impl Fn(&NodeState<T>) -> T) -> usize {
        let sent: Vec<T> = self.nodes.iter().map(&value).collect();
        let round = self.trace.rounds + 1;
        let mut messages = 0;
        for i in 0..self.nodes.len() {
            let inbox: Vec<(usize, T)> = self.nodes[i].neighbors.iter().map(|&j| (j, sent[j])).collect();
            messages += inbox.len();
            for &(j, _) in &inbox {
                if self.nodes[i].neighbors.binary_search(&j).is_err() {
                    self.trace.violations.push(Violation {
                        round,
                        node: i,
                        sender: j,
                    });
                }
            }
            self.nodes[i].inbox = inbox;
        }
        messages
    }

    /// `Σⱼ wⱼ vⱼ` over the row, reading `vⱼ` from the inbox or from `own`.
    fn combine(&mut self, i: usize, row: &LocalRow<T>, own: T) -> T {
        let round = self.trace.rounds + 1;
        let node = &self.nodes[i];
        let mut acc = T::zero();
        let mut missing = Vec::new();
        for (&j, &w) in row.cols.iter().zip(&row.weights) {
            let v = if j == i {
                own
            } else {
                match node.inbox.binary_search_by_key(&j, |&(s, _)| s) {
                    Ok(k) => node.inbox[k].1,
                    Err(_) => {
                        missing.push(j);
                        continue;
                    }
                }
            };
            acc += w * v;
        }
        for j in missing {
            self.trace.violations.push(Violation {
                round,
                node: i,
                sender: j,
            });
        }
        acc
    }

    fn finish(self) -> Result<SimulationTrace> {
        if let Some(v) = self.trace.violations.first() {
            return Err(Error::LocalityViolation {
                node: v.node,
                source_node: v.sender,
            });
        }
        Ok(self.trace)
    }
}

/// Per-round update of the FIR programs. Each round reads the shifted value
/// `z^{(k−1)}` of every neighbor once.
enum FirProgram<T: Scalar> {
    /// `z ← S z`, `y += φₖ ∘ z` (taps as diagonal rows; classical taps are
    /// replicated).
    Polynomial {
        shift: Vec<LocalRow<T>>,
        taps: Vec<Vec<LocalRow<T>>>,
    },
    /// `z ← Φₖ z`, `y += z`.
    EdgeVariant { mats: Vec<Vec<LocalRow<T>>> },
    /// `y += Φₖ z`, `z ← S z`.
    Constrained {
        shift: Vec<LocalRow<T>>,
        mats: Vec<Vec<LocalRow<T>>>,
    },
}

/// Runs any FIR filter (classical, NV, EV, CEV, SIEV, SICEV) on `graph`
/// with one exchange per shift.
pub fn simulate_fir<T: Scalar>(
    graph: &Graph,
    s: &ShiftOperator<T>,
    f: &FilterSpec<T>,
    x: &GraphSignal<T>,
) -> Result<(GraphSignal<T>, SimulationTrace)> {
    if f.family().is_arma() {
        return Err(Error::UnsupportedKind {
            kind: f.family().to_string(),
            reason: "use simulate_arma for recursive filters".into(),
        });
    }
    f.validate(s)?;
    let mut net = Network::new(graph, x)?;
    let nbrs = net.neighbors();
    let n = graph.n();
    let ex = f.to_explicit()?;
    let offset = ex.offset.as_ref().map(|o| distribute(o.matrix(), &nbrs)).transpose()?;
    let shift_rows = || distribute(s.matrix(), &nbrs);
    let program = match &ex.spec {
        FilterSpec::ClassicalFir { taps } => FirProgram::Polynomial {
            shift: shift_rows()?,
            taps: taps
                .iter()
                .map(|&t| distribute_diag(&DVector::from_element(n, t)))
                .collect(),
        },
        FilterSpec::NodeVariantFir { taps } => FirProgram::Polynomial {
            shift: shift_rows()?,
            taps: taps.iter().map(distribute_diag).collect(),
        },
        FilterSpec::EdgeVariantFir { mats } => FirProgram::EdgeVariant {
            mats: mats.iter().map(|m| distribute(m.matrix(), &nbrs)).collect::<Result<_>>()?,
        },
        FilterSpec::ConstrainedEv { mats } => FirProgram::Constrained {
            shift: shift_rows()?,
            mats: mats.iter().map(|m| distribute(m.matrix(), &nbrs)).collect::<Result<_>>()?,
        },
        _ => unreachable!("explicit FIR forms only"),
    };

    let mut y = vec![T::zero(); n];
    // The offset term reads neighbor values of x, which is what every
    // program sends in its first round.
    let mut pending = offset;
    let mut apply_offset = |net: &mut Network<T>, y: &mut [T]| {
        if let Some(off) = pending.take() {
            for i in 0..n {
                let own = net.nodes[i].shift;
                y[i] += net.combine(i, &off[i], own);
            }
        }
    };
    match &program {
        FirProgram::Polynomial { shift, taps } => {
            for i in 0..n {
                let own = net.nodes[i].shift;
                y[i] = net.combine(i, &taps[0][i], own);
            }
            for tap in &taps[1..] {
                let msgs = net.exchange(|node| node.shift);
                apply_offset(&mut net, &mut y);
                let mut delta = 0.0f64;
                for i in 0..n {
                    let own = net.nodes[i].shift;
                    let z = net.combine(i, &shift[i], own);
                    net.nodes[i].shift = z;
                    let add = net.combine(i, &tap[i], z);
                    delta = delta.max(add.modulus());
                    y[i] += add;
                }
                net.trace.push(msgs, delta);
            }
        }
        FirProgram::EdgeVariant { mats } => {
            for m in mats {
                let msgs = net.exchange(|node| node.shift);
                apply_offset(&mut net, &mut y);
                let mut delta = 0.0f64;
                for i in 0..n {
                    let own = net.nodes[i].shift;
                    let z = net.combine(i, &m[i], own);
                    net.nodes[i].shift = z;
                    delta = delta.max(z.modulus());
                    y[i] += z;
                }
                net.trace.push(msgs, delta);
            }
        }
        FirProgram::Constrained { shift, mats } => {
            for (k, m) in mats.iter().enumerate() {
                let msgs = net.exchange(|node| node.shift);
                apply_offset(&mut net, &mut y);
                let mut delta = 0.0f64;
                let last = k + 1 == mats.len();
                for i in 0..n {
                    let own = net.nodes[i].shift;
                    let add = net.combine(i, &m[i], own);
                    delta = delta.max(add.modulus());
                    y[i] += add;
                    if !last {
                        net.nodes[i].shift = net.combine(i, &shift[i], own);
                    }
                }
                net.trace.push(msgs, delta);
            }
        }
    }
    if let Some(off) = pending {
        // No shift rounds: exchange x just for the offset.
        let msgs = net.exchange(|node| node.shift);
        for i in 0..n {
            let own = net.nodes[i].shift;
            y[i] += net.combine(i, &off[i], own);
        }
        net.trace.push(msgs, 0.0);
    }
    for (i, node) in net.nodes.iter_mut().enumerate() {
        node.acc = y[i];
    }
    let trace = net.finish()?;
    Ok((GraphSignal::from_vec(y), trace))
}

/// Runs `y_t = Φ₁ y_{t−1} + Φ₀ x` from `y₀ = 0` with local exchanges.
///
/// Round one exchanges `x` and caches `(Φ₀ x)_i` at every node; later rounds
/// exchange only `y`. Returns every iterate including `y₀`.
pub fn simulate_arma<T: Scalar>(
    graph: &Graph,
    phi0: &SupportedMatrix<T>,
    phi1: &SupportedMatrix<T>,
    x: &GraphSignal<T>,
    opts: ArmaOptions,
) -> Result<(Vec<GraphSignal<T>>, SimulationTrace)> {
    let mut net = Network::new(graph, x)?;
    let nbrs = net.neighbors();
    let p0 = distribute(phi0.matrix(), &nbrs)?;
    let p1 = distribute(phi1.matrix(), &nbrs)?;
    let n = graph.n();
    let mut traj = vec![GraphSignal::zeros(n)];
    let mut monitor = DivergenceMonitor::default();
    for t in 1..=opts.max_iter.max(1) {
        let msgs = if t == 1 {
            let m = net.exchange(|node| node.shift);
            for (i, row) in p0.iter().enumerate() {
                let own = net.nodes[i].shift;
                net.nodes[i].input = net.combine(i, row, own);
            }
            m
        } else {
            net.exchange(|node| node.arma)
        };
        let mut next = vec![T::zero(); n];
        for (i, v) in next.iter_mut().enumerate() {
            let own = net.nodes[i].arma;
            let fb = if t == 1 { T::zero() } else { net.combine(i, &p1[i], own) };
            *v = fb + net.nodes[i].input;
        }
        let mut inc_sq = 0.0;
        let mut norm_sq = 0.0;
        let mut delta = 0.0f64;
        for (node, &v) in net.nodes.iter_mut().zip(&next) {
            let d = (v - node.arma).modulus();
            inc_sq += d * d;
            norm_sq += v.modulus_squared();
            delta = delta.max(d);
            node.arma = v;
        }
        net.trace.push(msgs, delta);
        let (inc, norm) = (inc_sq.sqrt(), norm_sq.sqrt());
        monitor.observe(inc, norm, t)?;
        traj.push(GraphSignal::from_vec(next));
        if inc <= opts.tol * norm || inc == 0.0 {
            break;
        }
    }
    let trace = net.finish()?;
    Ok((traj, trace))
}

/// Runs any filter family; ARMA filters report their final iterate.
pub fn simulate<T: Scalar>(
    graph: &Graph,
    s: &ShiftOperator<T>,
    f: &FilterSpec<T>,
    x: &GraphSignal<T>,
    opts: ArmaOptions,
) -> Result<(GraphSignal<T>, SimulationTrace)> {
    if !f.family().is_arma() {
        return simulate_fir(graph, s, f, x);
    }
    f.validate(s)?;
    let (phi0, phi1) = arma_matrices(f, s)?;
    let (mut traj, trace) = simulate_arma(graph, &phi0, &phi1, x, opts)?;
    let y = traj.pop().expect("trajectory holds y0");
    Ok((y, trace))
}

/// `(Φ₀, Φ₁)` of an ARMA spec.
pub fn arma_matrices<T: Scalar>(
    f: &FilterSpec<T>,
    s: &ShiftOperator<T>,
) -> Result<(SupportedMatrix<T>, SupportedMatrix<T>)> {
    let n = s.n();
    match f.to_explicit()?.spec {
        FilterSpec::ClassicalArma1 { psi, phi } => {
            let supp = crate::graph::support_pattern(s);
            Ok((
                SupportedMatrix::from_diagonal(&DVector::from_element(n, phi)),
                SupportedMatrix::new(s.matrix() * psi, &supp)?,
            ))
        }
        FilterSpec::EvArma1 { phi0, phi1 } => Ok((phi0, phi1)),
        other => Err(Error::UnsupportedKind {
            kind: other.family().to_string(),
            reason: "not a recursive filter".into(),
        }),
    }
}

/// Relative gap `‖a − b‖ / ‖b‖` (absolute when `b = 0`).
pub fn relative_gap<T: Scalar>(a: &DVector<T>, b: &DVector<T>) -> f64 {
    let d = linalg::vec_norm(&(a - b));
    let r = linalg::vec_norm(b);
    if r > 0.0 {
        d / r
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{arma_iterates, random_filter, FilterFamily};
    use crate::graph::{build_shift, generators, normalize_spectral, ShiftKind};
    use crate::nullspace::{ShiftInvariantBasis, DEFAULT_RANK_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, rng: &mut ChaCha8Rng) -> GraphSignal<f64> {
        GraphSignal::new(DVector::from_fn(n, |_, _| f64::sample(rng)))
    }

    #[test]
    fn order_zero_classical_sends_nothing() {
        let g = generators::ring(5).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap();
        let x = GraphSignal::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let (y, tr) = simulate_fir(&g, &s, &FilterSpec::ClassicalFir { taps: vec![2.0] }, &x).unwrap();
        assert_eq!(tr.total_scalars_sent, 0);
        assert_eq!(y.values(), &(x.values() * 2.0));
    }

    #[test]
    fn ring_message_count() {
        let g = generators::ring(6).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Adjacency).unwrap();
        let x = GraphSignal::from_vec(vec![1.0; 6]);
        let f = FilterSpec::ClassicalFir {
            taps: vec![1.0, 0.5, 0.25],
        };
        let (_, tr) = simulate_fir(&g, &s, &f, &x).unwrap();
        assert_eq!(tr.total_scalars_sent, 24);
        assert_eq!(tr.messages_per_round, vec![12, 12]);
        assert!(tr.violations.is_empty());
    }

    #[test]
    fn all_fir_families_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = generators::random_community_graph(
            32,
            generators::CommunityParams {
                clusters: 2,
                p_in: 0.4,
                p_out: 0.05,
            },
            1,
        )
        .unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap();
        let ctx = ShiftInvariantBasis::new(&s, DEFAULT_RANK_TOL).unwrap();
        for fam in FilterFamily::ALL.into_iter().filter(|f| !f.is_arma()) {
            let f = random_filter(fam, &s, Some(&ctx), 3, &mut rng).unwrap();
            let x = random_signal(32, &mut rng);
            let (y, tr) = simulate_fir(&g, &s, &f, &x).unwrap();
            let dense = f.dense_matrix(&s).unwrap() * x.values();
            assert!(relative_gap(y.values(), &dense) <= 1e-9, "{fam}");
            assert!(tr.violations.is_empty());
            assert_eq!(tr.total_scalars_sent, g.directed_link_count() * 3, "{fam}");
        }
    }

    #[test]
    fn non_local_weight_is_rejected() {
        let g = generators::path(4).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap();
        // A shift that is not local to the graph used for the simulation.
        let other = generators::complete(4).unwrap();
        let s_bad = build_shift::<f64>(&other, ShiftKind::Laplacian).unwrap();
        let f = FilterSpec::ClassicalFir { taps: vec![0.0, 1.0] };
        let x = GraphSignal::from_vec(vec![1.0; 4]);
        assert!(matches!(
            simulate_fir(&g, &s_bad, &f, &x),
            Err(Error::LocalityViolation { .. })
        ));
        assert!(simulate_fir(&g, &s, &f, &x).is_ok());
    }

    #[test]
    fn arma_without_feedback_converges_in_one_round() {
        let g = generators::ring(6).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Adjacency).unwrap();
        let supp = crate::graph::support_pattern(&s);
        let phi0 = SupportedMatrix::new(s.matrix() * 0.3 + DMatrix::identity(6, 6), &supp).unwrap();
        let x = GraphSignal::from_vec(vec![1.0, -1.0, 2.0, 0.0, 0.5, 3.0]);
        let (traj, _) = simulate_arma(&g, &phi0, &SupportedMatrix::zeros(6), &x, ArmaOptions::default()).unwrap();
        let want = phi0.matrix() * x.values();
        assert!(relative_gap(traj[1].values(), &want) < 1e-15);
        assert!(relative_gap(traj.last().unwrap().values(), &want) < 1e-15);
    }

    #[test]
    fn arma_trajectory_matches_dense_recursion() {
        let g = generators::grid(3, 3).unwrap();
        let s = normalize_spectral(&build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap()).unwrap();
        let f = FilterSpec::ClassicalArma1 { psi: -0.6, phi: 1.5 };
        let (phi0, phi1) = arma_matrices(&f, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_signal(9, &mut rng);
        let (traj, tr) = simulate_arma(&g, &phi0, &phi1, &x, ArmaOptions::default()).unwrap();
        let dense = arma_iterates(phi1.matrix(), &(phi0.matrix() * x.values()), ArmaOptions::default()).unwrap();
        assert_eq!(traj.len(), dense.len());
        for (a, b) in traj.iter().zip(&dense) {
            assert!((a.values() - b).amax() <= 1e-12);
        }
        assert!(tr.messages_per_round.iter().all(|&m| m == g.directed_link_count()));
    }

    #[test]
    fn divergent_feedback_is_reported() {
        let g = generators::ring(5).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Adjacency).unwrap();
        let supp = crate::graph::support_pattern(&s);
        let phi1 = SupportedMatrix::new(s.matrix() * 0.9, &supp).unwrap();
        let x = GraphSignal::from_vec(vec![1.0; 5]);
        let r = simulate_arma(&g, &SupportedMatrix::identity(5), &phi1, &x, ArmaOptions::default());
        assert!(matches!(r, Err(Error::Divergent(_))));
    }

    #[test]
    fn traces_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = generators::random_knn_graph(20, 4, 1.0, 4).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap();
        let f = random_filter(FilterFamily::ConstrainedEv, &s, None, 4, &mut rng).unwrap();
        let x = random_signal(20, &mut rng);
        let a = simulate_fir(&g, &s, &f, &x).unwrap();
        let b = simulate_fir(&g, &s, &f, &x).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_json_lines().unwrap(), b.1.to_json_lines().unwrap());
    }
}
