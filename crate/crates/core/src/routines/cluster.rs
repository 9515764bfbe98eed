use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `|A ∩ B| / |A ∪ B|`, with two empty sets defined as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Pairwise Jaccard similarities.
pub fn jaccard_matrix<T: Ord + Sync>(sets: &[BTreeSet<T>]) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    (0..sets.len())
        .into_par_iter()
        .map(|i| sets.iter().map(|b| jaccard(&sets[i], b)).collect())
        .collect()
}

/// One merge in scipy linkage convention: leaves are `0..n`, the cluster
/// created by merge `k` is `n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    /// Sorted by non-decreasing height.
    pub merges: Vec<Merge>,
}

fn check_square_symmetric(m: &[Vec<f64>]) -> Result<()> {
    let n = m.len();
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(Error::invalid(format!("matrix row {i} has {} entries, expected {n}", row.len())));
        }
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-9 || m[i][j].is_nan() {
                return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Complete-linkage clustering of a similarity matrix with distance
/// `1 - similarity`, by the nearest-neighbour-chain algorithm. Ties between
/// candidate neighbours go to the lowest index.
pub fn agglomerative_cluster(similarity: &[Vec<f64>]) -> Result<Dendrogram> {
    check_square_symmetric(similarity)?;
    let dist: Vec<Vec<f64>> = similarity
        .iter()
        .map(|row| row.iter().map(|s| 1.0 - s).collect())
        .collect();
    complete_linkage(dist)
}

/// Complete linkage on a distance matrix.
pub fn complete_linkage(mut d: Vec<Vec<f64>>) -> Result<Dendrogram> {
    check_square_symmetric(&d)?;
    let n = d.len();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    // Merges between slots; the merged cluster keeps the smaller slot.
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    for _ in 1..n {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("two active clusters"));
        }
        let (a, b) = loop {
            let a = *chain.last().unwrap();
            let prev = (chain.len() >= 2).then(|| chain[chain.len() - 2]);
            let mut best: Option<usize> = prev;
            for j in (0..n).filter(|&j| active[j] && j != a) {
                match best {
                    Some(bj) if d[a][j] >= d[a][bj] => {}
                    _ => best = Some(j),
                }
            }
            let b = best.expect("another active cluster");
            if Some(b) == prev {
                break (a, b);
            }
            chain.push(b);
        };
        chain.pop();
        chain.pop();
        let (keep, drop) = (a.min(b), a.max(b));
        raw.push((keep, drop, d[a][b]));
        for k in 0..n {
            if active[k] && k != keep && k != drop {
                let v = d[keep][k].max(d[drop][k]);
                d[keep][k] = v;
                d[k][keep] = v;
            }
        }
        active[drop] = false;
        size[keep] += size[drop];
    }

    // Reorder by height and relabel slots to scipy cluster ids.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&x, &y| raw[x].2.total_cmp(&raw[y].2).then(x.cmp(&y)));
    let mut label: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut merges = Vec::with_capacity(raw.len());
    for (k, &i) in order.iter().enumerate() {
        let (s, t, h) = raw[i];
        let (la, lb) = (label[s], label[t]);
        let sz = sizes[s] + sizes[t];
        merges.push(Merge {
            a: la.min(lb),
            b: la.max(lb),
            height: h,
            size: sz,
        });
        label[s] = n + k;
        sizes[s] = sz;
    }
    Ok(Dendrogram { n, merges })
}

impl Dendrogram {
    pub fn max_height(&self) -> f64 {
        self.merges.last().map_or(0.0, |m| m.height)
    }

    /// Flat clusters after applying every merge with height at most
    /// `fraction * max_height`. Labels are numbered by first member.
    pub fn cut(&self, fraction: f64) -> Vec<usize> {
        let limit = fraction * self.max_height();
        let mut parent: Vec<usize> = (0..self.n + self.merges.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (k, m) in self.merges.iter().enumerate() {
            if m.height <= limit + 1e-12 {
                let id = self.n + k;
                let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
                parent[ra] = id;
                parent[rb] = id;
            }
        }
        let mut ids = std::collections::HashMap::new();
        (0..self.n)
            .map(|i| {
                let r = find(&mut parent, i);
                let next = ids.len();
                *ids.entry(r).or_insert(next)
            })
            .collect()
    }
}

/// Mean silhouette: for each unit, `(out - in) / max(out, in)` where `in` is
/// the mean distance to the rest of its cluster and `out` the mean distance to
/// every unit outside it. Units alone in their cluster score 0.
pub fn silhouette(labels: &[usize], dist: &[Vec<f64>]) -> Result<f64> {
    check_square_symmetric(dist)?;
    let n = labels.len();
    if dist.len() != n {
        return Err(Error::invalid("labels and distance matrix differ in size"));
    }
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    if clusters.len() < 2 {
        return Err(Error::invalid("silhouette needs at least two clusters"));
    }
    let mut total = 0.0;
    for i in 0..n {
        let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0usize, 0.0, 0usize);
        for j in (0..n).filter(|&j| j != i) {
            if labels[j] == labels[i] {
                sin += dist[i][j];
                nin += 1;
            } else {
                sout += dist[i][j];
                nout += 1;
            }
        }
        if nin == 0 {
            continue;
        }
        let (din, dout) = (sin / nin as f64, sout / nout as f64);
        let m = din.max(dout);
        if m > 0.0 {
            total += (dout - din) / m;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard(&set(&["ab", "bc"]), &set(&["ab", "bc"])), 1.0);
        assert_eq!(jaccard(&set(&["ab"]), &set(&["cd"])), 0.0);
        assert!((jaccard(&set(&["ab", "bc"]), &set(&["ab", "cd"])) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
    }

    fn blobs() -> Vec<Vec<f64>> {
        let g = [0, 0, 1, 1];
        (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.0 } else if g[i] == g[j] { 0.01 } else { 1.0 }).collect())
            .collect()
    }

    #[test]
    fn identical_users_merge_first() {
        let sim = vec![vec![1.0, 1.0, 0.2], vec![1.0, 1.0, 0.3], vec![0.2, 0.3, 1.0]];
        let d = agglomerative_cluster(&sim).unwrap();
        assert_eq!(d.merges[0], Merge { a: 0, b: 1, height: 0.0, size: 2 });
        assert_eq!(d.merges[1], Merge { a: 2, b: 3, height: 0.8, size: 3 });
    }

    #[test]
    fn two_blobs() {
        let d = complete_linkage(blobs()).unwrap();
        assert_eq!(d.cut(0.5), vec![0, 0, 1, 1]);
        assert_eq!(d.cut(1.0), vec![0, 0, 0, 0]);
        assert_eq!(d.max_height(), 1.0);
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(agglomerative_cluster(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
    }

    #[test]
    fn silhouette_cases() {
        let s = silhouette(&[0, 0, 1, 1], &blobs()).unwrap();
        assert!((s - 0.99).abs() < 1e-12);
        let flat: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 0.0 } else { 0.5 }).collect()).collect();
        assert_eq!(silhouette(&[0, 0, 1, 1], &flat).unwrap(), 0.0);
        assert!(silhouette(&[0, 0, 0, 0], &flat).is_err());
        // Unit 3 is alone and contributes 0.
        let s = silhouette(&[0, 0, 0, 1], &blobs()).unwrap();
        assert!(s < 1.0);
    }
}
