//! Hierarchical merging of mixture components by `P_mc`.
//!
//! Starting from one cluster per component, the pair whose union removes the
//! most misclassification probability is merged until `P_mc` falls to a
//! threshold. Pairwise reductions are estimated once; after merging `i` and
//! `j` the reduction against any other cluster `k` is
//! `Delta(i+j, k) = Delta(i, k) + Delta(j, k)`, so the loop never revisits the
//! data and its cost does not depend on the sample size.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::data::{ClusterConfiguration, DataMatrix, McEstimate, MergeStep, MergeTrace, MixtureModel};
use crate::error::{Error, Result};
use crate::io::{self, NewickMerge};
use crate::pmc::{self, DeltaMatrix, PmcSettings, Posterior, Rule};

/// Final bookkept `P_mc` of a complete run must be this close to zero.
pub const BOOKKEEPING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhmResult {
    pub trace: MergeTrace,
    pub config: ClusterConfiguration,
    pub cluster_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    delta: f64,
    i: usize,
    j: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Largest delta first; among equal values the smallest (i, j).
    fn cmp(&self, other: &Self) -> Ordering {
        self.delta
            .total_cmp(&other.delta)
            .then_with(|| (other.i, other.j).cmp(&(self.i, self.j)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs the merge loop on singleton clusters of `model`.
///
/// `tau = 0` merges down to a single cluster.
pub fn phm_run(model: &MixtureModel, tau: f64, settings: &PmcSettings) -> Result<PhmResult> {
    check_tau(tau)?;
    if settings.rule != Rule::Randomized {
        return Err(Error::Unsupported("merging is defined for the randomized rule only".into()));
    }
    let delta = pmc::delta_matrix(model, &ClusterConfiguration::singletons(model.kappa()), settings)?;
    merge_from_delta(&delta, model.weights(), tau)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("threshold tau must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

/// The merge loop on a precomputed singleton reduction matrix.
pub fn merge_from_delta(delta: &DeltaMatrix, weights: &[f64], tau: f64) -> Result<PhmResult> {
    check_tau(tau)?;
    let kappa = delta.k();
    if weights.len() != kappa {
        return Err(Error::invalid(format!(
            "{} weights for a {kappa} x {kappa} reduction matrix",
            weights.len()
        )));
    }
    let nodes = 2 * kappa - 1;
    let mut d = vec![vec![0.0; nodes]; nodes];
    let mut heap = BinaryHeap::new();
    for i in 0..kappa {
        for j in i + 1..kappa {
            d[i][j] = delta.get(i, j);
            d[j][i] = d[i][j];
            heap.push(Candidate { delta: d[i][j], i, j });
        }
    }
    let mut active: Vec<bool> = (0..nodes).map(|n| n < kappa).collect();
    let mut members: Vec<BTreeSet<usize>> = (0..nodes)
        .map(|n| if n < kappa { BTreeSet::from([n]) } else { BTreeSet::new() })
        .collect();

    let initial = delta.estimate;
    let mut pmc = initial.value;
    let mut k = kappa;
    let mut steps = Vec::new();
    while k > 1 && (tau == 0.0 || pmc > tau) {
        let Candidate { delta: dij, i, j } = loop {
            let c = heap.pop().expect("an active pair remains while K > 1");
            if active[c.i] && active[c.j] {
                break c;
            }
        };
        let new = kappa + steps.len();
        active[i] = false;
        active[j] = false;
        for other in 0..new {
            if active[other] {
                let v = d[i][other] + d[j][other];
                d[new][other] = v;
                d[other][new] = v;
                heap.push(Candidate { delta: v, i: other, j: new });
            }
        }
        active[new] = true;
        let merged: BTreeSet<usize> = members[i].union(&members[j]).copied().collect();
        members[new] = merged.clone();
        let before = pmc;
        pmc = before - dij;
        steps.push(MergeStep {
            cluster_pair: (i, j),
            delta_pmc: dij,
            pmc_before: before,
            pmc_after: pmc,
            new_cluster_members: merged,
        });
        k -= 1;
    }
    if k == 1 && pmc.abs() > BOOKKEEPING_TOL {
        log::warn!("complete merge leaves bookkept P_mc {pmc:e}; expected 0");
    }

    let mut assignment = vec![0; kappa];
    for (label, node) in (0..nodes).filter(|&n| active[n]).enumerate() {
        for &c in &members[node] {
            assignment[c] = label;
        }
    }
    let config = ClusterConfiguration::from_groups(&assignment)?;
    let cluster_weights = config.cluster_weights(weights);
    Ok(PhmResult {
        trace: MergeTrace {
            kappa,
            initial_pmc: initial,
            steps,
            final_k: k,
        },
        config,
        cluster_weights,
    })
}

/// Replays a trace against the current-cluster reduction matrix, returning
/// the first step whose pair was not a maximum (none if every step was).
pub fn first_non_greedy_step(delta: &DeltaMatrix, trace: &MergeTrace) -> Option<usize> {
    let kappa = trace.kappa;
    let nodes = 2 * kappa - 1;
    let mut d = vec![vec![0.0; nodes]; nodes];
    for i in 0..kappa {
        for j in 0..kappa {
            d[i][j] = delta.get(i, j);
        }
    }
    let mut active: Vec<bool> = (0..nodes).map(|n| n < kappa).collect();
    for (t, step) in trace.steps.iter().enumerate() {
        let (i, j) = step.cluster_pair;
        let mut best = f64::NEG_INFINITY;
        for a in 0..nodes {
            for b in a + 1..nodes {
                if active[a] && active[b] {
                    best = best.max(d[a][b]);
                }
            }
        }
        if !(active[i] && active[j]) || d[i][j] < best {
            return Some(t);
        }
        let new = kappa + t;
        active[i] = false;
        active[j] = false;
        for o in 0..new {
            if active[o] {
                d[new][o] = d[i][o] + d[j][o];
                d[o][new] = d[new][o];
            }
        }
        active[new] = true;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramNode {
    /// Node id `kappa + t` for merge `t`.
    pub id: usize,
    pub left: usize,
    pub right: usize,
    /// `log10(initial P_mc / P_mc before this merge)`.
    pub height: f64,
    pub delta_pmc: f64,
    pub members: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhmDendrogram {
    pub kappa: usize,
    pub initial_pmc: f64,
    pub nodes: Vec<DendrogramNode>,
}

/// Dendrogram of a complete merge trace. A merge made when the bookkept
/// `P_mc` is no longer positive keeps the height of the previous merge.
pub fn build_dendrogram(trace: &MergeTrace) -> Result<PhmDendrogram> {
    if !trace.is_complete() || trace.steps.len() + 1 != trace.kappa {
        return Err(Error::invalid("dendrogram requires complete merge"));
    }
    let p0 = trace.initial_pmc.value;
    let mut last = 0.0;
    let nodes = trace
        .steps
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let height = if s.pmc_before > 0.0 && p0 > 0.0 {
                (p0 / s.pmc_before).log10().max(last)
            } else {
                last
            };
            last = height;
            DendrogramNode {
                id: trace.kappa + t,
                left: s.cluster_pair.0,
                right: s.cluster_pair.1,
                height,
                delta_pmc: s.delta_pmc,
                members: s.new_cluster_members.clone(),
            }
        })
        .collect();
    Ok(PhmDendrogram {
        kappa: trace.kappa,
        initial_pmc: p0,
        nodes,
    })
}

impl PhmDendrogram {
    /// Newick text; leaves are `C0..`, internal nodes are labeled with their
    /// `P_mc` reduction.
    pub fn to_newick(&self) -> String {
        let merges: Vec<NewickMerge> = self
            .nodes
            .iter()
            .map(|n| NewickMerge {
                left: n.left,
                right: n.right,
                height: n.height,
            })
            .collect();
        io::newick(
            self.kappa,
            &merges,
            |i| format!("C{i}"),
            |t| Some(format!("{:.4}", self.nodes[t].delta_pmc)),
        )
    }

    pub fn heights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.height).collect()
    }
}

/// Hard labels for data: each row goes to the cluster with the largest
/// posterior (lowest index on ties). Labels are cluster indices of `config`.
pub fn assign_points(model: &MixtureModel, config: &ClusterConfiguration, x: &DataMatrix) -> Result<Vec<usize>> {
    if x.cols() != model.dim() {
        return Err(Error::invalid(format!(
            "data has {} columns, model has dimension {}",
            x.cols(),
            model.dim()
        )));
    }
    let post = Posterior::new(model, config)?;
    let mut ws = post.workspace();
    let mut pi = vec![0.0; config.k()];
    Ok(x
        .iter_rows()
        .map(|r| {
            post.eval(r, &mut ws, &mut pi);
            let mut best = 0;
            for (k, v) in pi.iter().enumerate() {
                if *v > pi[best] {
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Zero-variance estimate used when building traces by hand.
pub fn exact_estimate(value: f64) -> McEstimate {
    McEstimate {
        value,
        std_error: 0.0,
        m_samples: 0,
        seed: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GaussianComponent;
    use approx::assert_relative_eq;

    fn matrix(values: Vec<Vec<f64>>) -> DeltaMatrix {
        let estimate = exact_estimate(pmc::upper_sum(&values));
        DeltaMatrix {
            values,
            m_samples: 0,
            seed: 0,
            estimate,
        }
    }

    fn trace_with(initial: f64, afters: &[f64]) -> MergeTrace {
        let mut before = initial;
        let kappa = afters.len() + 1;
        let steps = afters
            .iter()
            .enumerate()
            .map(|(t, &after)| {
                let s = MergeStep {
                    cluster_pair: (if t == 0 { 0 } else { kappa + t - 1 }, t + 1),
                    delta_pmc: before - after,
                    pmc_before: before,
                    pmc_after: after,
                    new_cluster_members: (0..=t + 1).collect(),
                };
                before = after;
                s
            })
            .collect();
        MergeTrace {
            kappa,
            initial_pmc: exact_estimate(initial),
            steps,
            final_k: 1,
        }
    }

    #[test]
    fn merges_largest_reduction_first() {
        let d = matrix(vec![
            vec![0.0, 0.01, 0.05],
            vec![0.01, 0.0, 0.02],
            vec![0.05, 0.02, 0.0],
        ]);
        let r = merge_from_delta(&d, &[0.2, 0.3, 0.5], 0.0).unwrap();
        let s = &r.trace.steps;
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].cluster_pair, (0, 2));
        assert_relative_eq!(s[0].delta_pmc, 0.05);
        // (1, node 3) carries 0.01 + 0.02
        assert_eq!(s[1].cluster_pair, (1, 3));
        assert_relative_eq!(s[1].delta_pmc, 0.03, epsilon = 1e-15);
        assert!(r.trace.final_pmc().abs() < BOOKKEEPING_TOL);
        assert_eq!(first_non_greedy_step(&d, &r.trace), None);
    }

    #[test]
    fn ties_prefer_smallest_pair() {
        let d = matrix(vec![
            vec![0.0, 0.0, 0.02, 0.02],
            vec![0.0, 0.0, 0.02, 0.0],
            vec![0.02, 0.02, 0.0, 0.0],
            vec![0.02, 0.0, 0.0, 0.0],
        ]);
        let r = merge_from_delta(&d, &[0.25; 4], 0.0).unwrap();
        assert_eq!(r.trace.steps[0].cluster_pair, (0, 2));
    }

    #[test]
    fn threshold_stops_early() {
        let d = matrix(vec![
            vec![0.0, 0.09, 0.001],
            vec![0.09, 0.0, 0.003],
            vec![0.001, 0.003, 0.0],
        ]);
        let r = merge_from_delta(&d, &[0.4, 0.4, 0.2], 0.01).unwrap();
        assert_eq!(r.trace.final_k, 2);
        assert_eq!(r.config.assignment(), &[0, 0, 1]);
        assert_relative_eq!(r.cluster_weights[0], 0.8);
        // tau above the initial value: nothing to do
        let r = merge_from_delta(&d, &[0.4, 0.4, 0.2], 0.5).unwrap();
        assert!(r.trace.steps.is_empty());
        assert_eq!(r.config.k(), 3);
    }

    #[test]
    fn rejects_bad_tau() {
        let d = matrix(vec![vec![0.0, 0.1], vec![0.1, 0.0]]);
        assert!(merge_from_delta(&d, &[0.5, 0.5], -0.1).is_err());
        assert!(merge_from_delta(&d, &[0.5, 0.5], 1.5).is_err());
    }

    #[test]
    fn dendrogram_heights() {
        let t = trace_with(0.14, &[0.02, 0.0]);
        let dg = build_dendrogram(&t).unwrap();
        assert_eq!(dg.nodes[0].height, 0.0);
        assert_relative_eq!(dg.nodes[1].height, 7f64.log10(), epsilon = 1e-12);
        assert_relative_eq!(dg.nodes[1].height, 0.845, epsilon = 5e-4);
    }

    #[test]
    fn dendrogram_labels_are_reductions() {
        let t = trace_with(0.1437, &[0.063, 0.021, 0.0]);
        let dg = build_dendrogram(&t).unwrap();
        assert_relative_eq!(dg.nodes[0].delta_pmc, 0.0807, epsilon = 1e-12);
        assert_relative_eq!(dg.nodes[1].delta_pmc, 0.042, epsilon = 1e-12);
        let total: f64 = dg.nodes.iter().map(|n| n.delta_pmc).sum();
        assert_relative_eq!(total, 0.1437, epsilon = 1e-12);
        let nw = dg.to_newick();
        assert!(nw.contains("0.0807") && nw.ends_with(';'), "{nw}");
    }

    #[test]
    fn incomplete_trace_has_no_dendrogram() {
        let mut t = trace_with(0.14, &[0.02, 0.0]);
        t.steps.pop();
        t.final_k = 2;
        let err = build_dendrogram(&t).unwrap_err();
        assert!(err.to_string().contains("dendrogram requires complete merge"));
    }

    #[test]
    fn full_run_on_model() {
        let unit = |m: f64| GaussianComponent::new(vec![m], vec![1.0]).unwrap();
        let model = MixtureModel::new(vec![0.25; 4], vec![unit(0.0), unit(0.5), unit(8.0), unit(8.7)]).unwrap();
        let r = phm_run(&model, 0.0, &PmcSettings::with_seed(3)).unwrap();
        assert_eq!(r.trace.steps.len(), 3);
        assert!(r.trace.final_pmc().abs() < BOOKKEEPING_TOL);
        let first: BTreeSet<usize> = r.trace.steps[0].new_cluster_members.clone();
        let second: BTreeSet<usize> = r.trace.steps[1].new_cluster_members.clone();
        let pairs = [BTreeSet::from([0, 1]), BTreeSet::from([2, 3])];
        assert!(pairs.contains(&first) && pairs.contains(&second));

        let r = phm_run(&model, 0.01, &PmcSettings::with_seed(3)).unwrap();
        assert_eq!(r.config.k(), 2);
        let x = DataMatrix::new(4, 1, vec![-1.0, 0.3, 8.1, 9.5]).unwrap();
        assert_eq!(assign_points(&model, &r.config, &x).unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn optimal_rule_is_rejected() {
        let unit = |m: f64| GaussianComponent::new(vec![m], vec![1.0]).unwrap();
        let model = MixtureModel::new(vec![0.5, 0.5], vec![unit(0.0), unit(1.0)]).unwrap();
        let s = PmcSettings {
            rule: Rule::Optimal,
            ..PmcSettings::default()
        };
        assert_eq!(phm_run(&model, 0.0, &s).unwrap_err().kind(), "unsupported");
    }
}
