//! Agglomerative clustering with Ward linkage on squared Euclidean distances.
//!
//! Uses the nearest-neighbor chain algorithm with the Lance-Williams update
//!
//! ```text
//! d(k, i+j) = ((n_i + n_k) d(k,i) + (n_j + n_k) d(k,j) - n_k d(i,j)) / (n_i + n_j + n_k)
//! ```
//!
//! applied to squared distances, so a merge height equals twice the increase
//! in total within-cluster sum of squares. Runs in O(n^2) time and memory.

use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Partition};
use crate::error::{Error, Result};
use crate::io::{self, NewickMerge};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HclustMerge {
    /// Node ids: observations are `0..n`, merge `t` creates node `n + t`.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HclustTree {
    pub n: usize,
    /// `n - 1` merges with non-decreasing heights.
    pub merges: Vec<HclustMerge>,
}

struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.n * i - i * (i + 1) / 2 + j - i - 1
    }
    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }
    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }
}

pub fn fit_hclust(x: &DataMatrix) -> Result<HclustTree> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid("hierarchical clustering needs at least two observations"));
    }
    let mut dist = Condensed {
        n,
        d: Vec::with_capacity(n * (n - 1) / 2),
    };
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            dist.d.push(d);
        }
    }

    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::with_capacity(n);

    for _ in 0..n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("two clusters remain"));
        }
        let (a, b) = loop {
            let a = *chain.last().expect("chain non-empty");
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            // nearest active neighbor; ties prefer the previous chain element
            let mut best = prev.map_or((usize::MAX, f64::INFINITY), |p| (p, dist.get(a, p)));
            for c in 0..n {
                if c == a || !active[c] {
                    continue;
                }
                let d = dist.get(a, c);
                if d < best.1 {
                    best = (c, d);
                }
            }
            let b = best.0;
            if Some(b) == prev {
                chain.pop();
                chain.pop();
                break (a, b);
            }
            chain.push(b);
        };

        let dab = dist.get(a, b);
        let (na, nb) = (size[a] as f64, size[b] as f64);
        // merged cluster lives in slot `keep`
        let (keep, gone) = if a < b { (a, b) } else { (b, a) };
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((na + nk) * dist.get(k, a) + (nb + nk) * dist.get(k, b) - nk * dab) / (na + nb + nk);
            dist.set(k, keep, v);
        }
        active[gone] = false;
        size[keep] += size[gone];
        raw.push((keep, gone, dab));
    }

    // NN-chain emits merges out of order; Ward is reducible, so a stable sort
    // by height gives a valid agglomeration order.
    raw.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut dsu = Dsu::new(n);
    let mut node = (0..n).collect::<Vec<_>>();
    let mut sizes = vec![1usize; n];
    let merges = raw
        .iter()
        .enumerate()
        .map(|(t, &(a, b, h))| {
            let (ra, rb) = (dsu.find(a), dsu.find(b));
            let (l, r) = (node[ra].min(node[rb]), node[ra].max(node[rb]));
            let s = sizes[ra] + sizes[rb];
            dsu.parent[rb] = ra;
            node[ra] = n + t;
            sizes[ra] = s;
            HclustMerge {
                left: l,
                right: r,
                height: h,
                size: s,
            }
        })
        .collect();
    Ok(HclustTree { n, merges })
}

/// Groups induced by the first `n - K` merges, labeled by first appearance.
pub fn cut_tree(tree: &HclustTree, k: usize) -> Result<Partition> {
    let n = tree.n;
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot cut {n} observations into {k} groups")));
    }
    // members of every node, built by replaying the merges
    let mut dsu = Dsu::new(2 * n - 1);
    for (t, m) in tree.merges.iter().take(n - k).enumerate() {
        dsu.parent[m.left] = n + t;
        dsu.parent[m.right] = n + t;
    }
    let roots: Vec<usize> = (0..n).map(|i| dsu.find(i)).collect();
    Ok(Partition::from_labels(&roots))
}

impl HclustTree {
    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// Newick with observation indices as leaf names.
    pub fn to_newick(&self) -> String {
        let merges: Vec<NewickMerge> = self
            .merges
            .iter()
            .map(|m| NewickMerge {
                left: m.left,
                right: m.right,
                height: m.height,
            })
            .collect();
        io::newick(self.n, &merges, |i| i.to_string(), |_| None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn line(xs: &[f64]) -> DataMatrix {
        DataMatrix::new(xs.len(), 1, xs.to_vec()).unwrap()
    }

    /// Primitive O(n^3) Ward: merge the pair whose union least increases the
    /// within-cluster sum of squares.
    fn brute_ward(x: &DataMatrix) -> Vec<f64> {
        let mut groups: Vec<Vec<usize>> = (0..x.rows()).map(|i| vec![i]).collect();
        let sse = |g: &[usize]| {
            let p = x.cols();
            let mut m = vec![0.0; p];
            for &i in g {
                for j in 0..p {
                    m[j] += x.row(i)[j] / g.len() as f64;
                }
            }
            g.iter()
                .map(|&i| (0..p).map(|j| (x.row(i)[j] - m[j]).powi(2)).sum::<f64>())
                .sum::<f64>()
        };
        let mut heights = Vec::new();
        while groups.len() > 1 {
            let mut best = (0, 0, f64::INFINITY);
            for a in 0..groups.len() {
                for b in a + 1..groups.len() {
                    let mut u = groups[a].clone();
                    u.extend(&groups[b]);
                    let inc = sse(&u) - sse(&groups[a]) - sse(&groups[b]);
                    if inc < best.2 {
                        best = (a, b, inc);
                    }
                }
            }
            let g = groups.remove(best.1);
            groups[best.0].extend(g);
            heights.push(2.0 * best.2);
        }
        heights
    }

    #[test]
    fn closest_points_merge_first() {
        // Ward costs of the three pairs: 0.01, 100, 98.01 (squared distances).
        let t = fit_hclust(&line(&[0.0, 0.1, 10.0])).unwrap();
        assert_eq!((t.merges[0].left, t.merges[0].right), (0, 1));
        assert_relative_eq!(t.merges[0].height, 0.01, epsilon = 1e-12);
        // second merge: 2 * (1*2/3) * (10 - 0.05)^2
        assert_relative_eq!(t.merges[1].height, 2.0 * 2.0 / 3.0 * 9.95f64.powi(2), epsilon = 1e-9);
    }

    #[test]
    fn cuts_at_extremes() {
        let t = fit_hclust(&line(&[3.0, 1.0, 4.0, 1.5, 9.0])).unwrap();
        assert_eq!(cut_tree(&t, 5).unwrap().k(), 5);
        assert_eq!(cut_tree(&t, 1).unwrap().labels(), &[0, 0, 0, 0, 0]);
        assert!(cut_tree(&t, 6).is_err());
        assert!(cut_tree(&t, 0).is_err());
    }

    #[test]
    fn matches_brute_force_heights() {
        let mut rng = crate::rng::stream(4, "t", 0);
        let v: Vec<f64> = (0..60).map(|_| rng.random::<f64>() * 10.0).collect();
        let x = DataMatrix::new(30, 2, v).unwrap();
        let t = fit_hclust(&x).unwrap();
        for (a, b) in t.heights().iter().zip(brute_ward(&x)) {
            assert_relative_eq!(*a, b, epsilon = 1e-8, max_relative = 1e-9);
        }
        for w in t.heights().windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert_eq!(t.merges.last().unwrap().size, 30);
    }

    #[test]
    fn two_groups_split_cleanly() {
        let x = line(&[0.0, 0.2, 0.1, 5.0, 5.3, 5.1]);
        let p = cut_tree(&fit_hclust(&x).unwrap(), 2).unwrap();
        assert_eq!(p.labels(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn newick_lists_all_leaves() {
        let t = fit_hclust(&line(&[0.0, 0.1, 10.0])).unwrap();
        let s = t.to_newick();
        assert!(s.ends_with(';'));
        assert!(s.starts_with("(2:"), "{s}");
        for leaf in ["0:", "1:", "2:"] {
            assert!(s.contains(leaf));
        }
    }
}
