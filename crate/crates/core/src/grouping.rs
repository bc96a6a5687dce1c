//! Partitioning a dataset into homogeneous groups.
//!
//! Two modes: a fixed number of clusters found by k-means, or fixed-size
//! groups built by repeatedly sampling a pivot and taking its k′−1 nearest
//! remaining neighbours.

use rand::Rng as _;

use crate::dataset::{Dataset, GroupStats, Record};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_MAX_KMEANS_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupingMode {
    /// k clusters via k-means.
    ByClusterCount(usize),
    /// Groups of k′ records around random pivots.
    ByGroupSize(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupingConfig {
    pub mode: GroupingMode,
    pub seed: u64,
    pub max_kmeans_iterations: usize,
}

impl GroupingConfig {
    pub fn by_cluster_count(k: usize, seed: u64) -> Self {
        GroupingConfig {
            mode: GroupingMode::ByClusterCount(k),
            seed,
            max_kmeans_iterations: DEFAULT_MAX_KMEANS_ITERATIONS,
        }
    }

    pub fn by_group_size(k_prime: usize, seed: u64) -> Self {
        GroupingConfig {
            mode: GroupingMode::ByGroupSize(k_prime),
            seed,
            max_kmeans_iterations: DEFAULT_MAX_KMEANS_ITERATIONS,
        }
    }

    /// Checks the mode guard against a dataset of `m` records.
    pub fn validate(&self, m: usize) -> Result<()> {
        match self.mode {
            GroupingMode::ByGroupSize(kp) if kp < 2 => Err(Error::InvalidGroupSize(kp)),
            GroupingMode::ByClusterCount(k) if k == 0 || k > m => {
                Err(Error::InvalidClusterCount { k, records: m })
            }
            _ if self.max_kmeans_iterations == 0 => Err(Error::InvalidConfig(
                "max_kmeans_iterations must be positive".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A group of record indices with its running sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    /// Indices into the source dataset, in formation order (pivot first for
    /// size-based groups).
    pub members: Vec<usize>,
    pub stats: GroupStats,
}

impl Group {
    fn from_members(d: &Dataset, members: Vec<usize>) -> Self {
        let stats = GroupStats::from_values(
            d.n_attributes(),
            members.iter().map(|&i| d.records()[i].values.as_slice()),
        );
        Group { members, stats }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// Groups in processing order.
    pub groups: Vec<Group>,
    /// `assignment[i]` is the group index of record `i`.
    pub assignment: Vec<usize>,
}

impl Grouping {
    fn from_groups(d: &Dataset, members: Vec<Vec<usize>>) -> Self {
        let mut assignment = vec![usize::MAX; d.len()];
        for (g, ms) in members.iter().enumerate() {
            for &i in ms {
                assignment[i] = g;
            }
        }
        let groups = members
            .into_iter()
            .map(|ms| Group::from_members(d, ms))
            .collect();
        Grouping { groups, assignment }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Group::len).collect()
    }
}

/// Euclidean distance over the numeric attributes.
pub fn pairwise_distance(a: &Record, b: &Record) -> Result<f64> {
    if a.arity() != b.arity() {
        return Err(Error::ArityMismatch {
            left: a.arity(),
            right: b.arity(),
        });
    }
    Ok(squared_distance(&a.values, &b.values).sqrt())
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs the grouping selected by `cfg`.
pub fn group(d: &Dataset, cfg: &GroupingConfig) -> Result<Grouping> {
    match cfg.mode {
        GroupingMode::ByGroupSize(kp) => group_by_size(d, kp, cfg.seed),
        GroupingMode::ByClusterCount(k) => {
            group_by_kmeans(d, k, cfg.seed, cfg.max_kmeans_iterations)
        }
    }
}

/// Fixed-size grouping around uniformly sampled pivots.
///
/// Neighbour ties are broken by lowest record index. The last group holds
/// the `m mod k′` leftovers when `k′` does not divide `m`.
pub fn group_by_size(d: &Dataset, k_prime: usize, seed: u64) -> Result<Grouping> {
    if k_prime < 2 {
        return Err(Error::InvalidGroupSize(k_prime));
    }
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = seed::rng(seed, "group-by-size", 0);
    let recs = d.records();
    // Kept sorted by index so that tie-breaking is by record index.
    let mut remaining: Vec<usize> = (0..d.len()).collect();
    let mut groups = Vec::with_capacity(d.len().div_ceil(k_prime));
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(d.len());

    while !remaining.is_empty() {
        let pivot = remaining[rng.random_range(0..remaining.len())];
        let members = if remaining.len() <= k_prime {
            let mut ms = vec![pivot];
            ms.extend(remaining.iter().copied().filter(|&i| i != pivot));
            ms
        } else {
            let pv = &recs[pivot].values;
            scratch.clear();
            scratch.extend(
                remaining
                    .iter()
                    .filter(|&&i| i != pivot)
                    .map(|&i| (squared_distance(pv, &recs[i].values), i)),
            );
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            let take = k_prime - 1;
            scratch.select_nth_unstable_by(take - 1, cmp);
            let mut nearest = scratch[..take].to_vec();
            nearest.sort_unstable_by(cmp);
            let mut ms = Vec::with_capacity(k_prime);
            ms.push(pivot);
            ms.extend(nearest.into_iter().map(|(_, i)| i));
            ms
        };
        let mut taken = members.clone();
        taken.sort_unstable();
        remaining.retain(|i| taken.binary_search(i).is_err());
        groups.push(members);
    }
    Ok(Grouping::from_groups(d, groups))
}

/// Result of a k-means run, exposed for inspection and testing.
#[derive(Debug, Clone)]
pub struct KMeansTrace {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's algorithm with distance-weighted (k-means++) seeding.
pub fn kmeans(d: &Dataset, k: usize, seed: u64, max_iter: usize) -> Result<KMeansTrace> {
    let m = d.len();
    if k == 0 || k > m {
        return Err(Error::InvalidClusterCount { k, records: m });
    }
    let n = d.n_attributes();
    let recs = d.records();
    let mut rng = seed::rng(seed, "kmeans-init", 0);

    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; m];
    let first = rng.random_range(0..m);
    chosen[first] = true;
    centroids.push(recs[first].values.clone());
    let mut nearest: Vec<f64> = recs
        .iter()
        .map(|r| squared_distance(&r.values, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| (0..m).rev().find(|&i| nearest[i] > 0.0).unwrap())
        } else {
            // every point coincides with a centroid: take unchosen records in order
            (0..m).find(|&i| !chosen[i]).unwrap()
        };
        chosen[next] = true;
        centroids.push(recs[next].values.clone());
        let c = centroids.last().unwrap();
        for (slot, r) in nearest.iter_mut().zip(recs) {
            *slot = slot.min(squared_distance(&r.values, c));
        }
    }

    let mut assignment = vec![usize::MAX; m];
    let mut objective = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, r) in recs.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let dist = squared_distance(&r.values, c);
                if dist < best_d {
                    best_d = dist;
                    best = j;
                }
            }
            wcss += best_d;
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        objective.push(wcss);
        iterations += 1;
        if !changed || iterations >= max_iter {
            break;
        }
        let mut sums = vec![vec![0.0; n]; k];
        let mut counts = vec![0usize; k];
        for (r, &a) in recs.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(&r.values) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    Ok(KMeansTrace {
        assignment,
        centroids,
        objective,
        iterations,
    })
}

/// k-means grouping. Empty clusters are dropped, so the result may hold
/// fewer than `k` groups; groups are ordered by cluster index.
pub fn group_by_kmeans(d: &Dataset, k: usize, seed: u64, max_iter: usize) -> Result<Grouping> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let trace = kmeans(d, k, seed, max_iter.max(1))?;
    let mut members = vec![Vec::new(); k];
    for (i, &c) in trace.assignment.iter().enumerate() {
        members[c].push(i);
    }
    members.retain(|g| !g.is_empty());
    Ok(Grouping::from_groups(d, members))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(rows: &[[f64; 2]]) -> Dataset {
        Dataset::from_records(rows.iter().map(|r| Record::new(r.to_vec())).collect()).unwrap()
    }

    fn two_pairs() -> Dataset {
        ds(&[[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
    }

    fn sorted_groups(g: &Grouping) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = g
            .groups
            .iter()
            .map(|g| {
                let mut m = g.members.clone();
                m.sort_unstable();
                m
            })
            .collect();
        out.sort();
        out
    }

    // Brute-force oracle: for each possible first pivot, the pivot's nearest
    // neighbour plus the leftover pair.
    fn oracle_pairs(d: &Dataset, first_pivot: usize) -> Vec<Vec<usize>> {
        let recs = d.records();
        let nn = (0..d.len())
            .filter(|&j| j != first_pivot)
            .min_by(|&a, &b| {
                let da = pairwise_distance(&recs[first_pivot], &recs[a]).unwrap();
                let db = pairwise_distance(&recs[first_pivot], &recs[b]).unwrap();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .unwrap();
        let mut first = vec![first_pivot, nn];
        first.sort_unstable();
        let rest: Vec<usize> = (0..d.len()).filter(|i| !first.contains(i)).collect();
        let mut out = vec![first, rest];
        out.sort();
        out
    }

    #[test]
    fn size_groups_match_nearest_pair_oracle() {
        let d = two_pairs();
        for p in 0..4 {
            assert_eq!(oracle_pairs(&d, p), vec![vec![0, 1], vec![2, 3]]);
        }
        for seed in 0..32 {
            let g = group_by_size(&d, 2, seed).unwrap();
            assert_eq!(sorted_groups(&g), vec![vec![0, 1], vec![2, 3]]);
        }
    }

    #[test]
    fn remainder_and_single_pass() {
        let d = ds(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]]);
        let g = group_by_size(&d, 2, 1).unwrap();
        assert_eq!(g.sizes(), vec![2, 2, 1]);
        let g = group_by_size(&d, 5, 1).unwrap();
        assert_eq!(g.groups.len(), 1);
        assert_eq!(sorted_groups(&g), vec![vec![0, 1, 2, 3, 4]]);
        assert!(matches!(group_by_size(&d, 1, 0), Err(Error::InvalidGroupSize(1))));
    }

    fn wcss(d: &Dataset, groups: &[Vec<usize>]) -> f64 {
        let n = d.n_attributes();
        groups
            .iter()
            .map(|g| {
                let mut c = vec![0.0; n];
                for &i in g {
                    for (ca, v) in c.iter_mut().zip(&d.records()[i].values) {
                        *ca += v / g.len() as f64;
                    }
                }
                g.iter()
                    .map(|&i| squared_distance(&d.records()[i].values, &c))
                    .sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn kmeans_matches_brute_force_two_partition() {
        let d = two_pairs();
        // enumerate every 2-partition of 4 points
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 3) {
            let a: Vec<usize> = (0..4).filter(|i| i < &3 && mask & (1 << i) != 0).collect();
            let b: Vec<usize> = (0..4).filter(|i| !a.contains(i)).collect();
            best = best.min(wcss(&d, &[a, b]));
        }
        for seed in 0..16 {
            let g = group_by_kmeans(&d, 2, seed, 100).unwrap();
            let groups = sorted_groups(&g);
            assert_eq!(groups, vec![vec![0, 1], vec![2, 3]]);
            assert!((wcss(&d, &groups) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_degenerate_k() {
        let d = two_pairs();
        let g = group_by_kmeans(&d, 4, 3, 100).unwrap();
        assert_eq!(g.sizes(), vec![1, 1, 1, 1]);
        assert_eq!(*kmeans(&d, 4, 3, 100).unwrap().objective.last().unwrap(), 0.0);
        let g = group_by_kmeans(&d, 1, 3, 100).unwrap();
        assert_eq!(sorted_groups(&g), vec![vec![0, 1, 2, 3]]);
        assert!(matches!(
            group_by_kmeans(&d, 5, 0, 100),
            Err(Error::InvalidClusterCount { k: 5, records: 4 })
        ));
        assert!(group_by_kmeans(&d, 0, 0, 100).is_err());
    }

    #[test]
    fn distance_basics() {
        let a = Record::new(vec![0.0, 0.0]);
        let b = Record::new(vec![3.0, 4.0]);
        assert_eq!(pairwise_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(pairwise_distance(&b, &b).unwrap(), 0.0);
        assert!(pairwise_distance(&a, &Record::new(vec![1.0])).is_err());
    }

    fn dataset_strategy() -> impl Strategy<Value = Dataset> {
        (1usize..4, 1usize..60).prop_flat_map(|(n, m)| {
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), m).prop_map(|rows| {
                Dataset::from_records(rows.into_iter().map(Record::new).collect()).unwrap()
            })
        })
    }

    fn assert_partition(g: &Grouping, m: usize) {
        let mut seen = vec![false; m];
        for (gi, grp) in g.groups.iter().enumerate() {
            for &i in &grp.members {
                assert!(!seen[i], "record {i} in two groups");
                seen[i] = true;
                assert_eq!(g.assignment[i], gi);
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    proptest! {
        #[test]
        fn size_grouping_partitions(d in dataset_strategy(), kp in 2usize..8, seed in any::<u64>()) {
            let g = group_by_size(&d, kp, seed).unwrap();
            assert_partition(&g, d.len());
            let sizes = g.sizes();
            let (last, full) = sizes.split_last().unwrap();
            prop_assert!(full.iter().all(|&s| s == kp));
            prop_assert!(*last >= 1 && *last <= kp);
            prop_assert_eq!(g.clone(), group_by_size(&d, kp, seed).unwrap());
        }

        #[test]
        fn size_grouping_homogeneity(d in dataset_strategy(), kp in 2usize..6, seed in any::<u64>()) {
            // Replay formation: every member of a group is no farther from the
            // pivot than any record still unassigned at formation time.
            let g = group_by_size(&d, kp, seed).unwrap();
            let recs = d.records();
            for (gi, grp) in g.groups.iter().enumerate() {
                let pivot = &recs[grp.members[0]];
                let worst = grp.members.iter()
                    .map(|&i| pairwise_distance(pivot, &recs[i]).unwrap())
                    .fold(0.0, f64::max);
                for later in &g.groups[gi + 1..] {
                    for &j in &later.members {
                        prop_assert!(worst <= pairwise_distance(pivot, &recs[j]).unwrap());
                    }
                }
            }
        }

        #[test]
        fn kmeans_partitions_and_is_monotone(d in dataset_strategy(), k in 1usize..6, seed in any::<u64>()) {
            prop_assume!(k <= d.len());
            let g = group_by_kmeans(&d, k, seed, 100).unwrap();
            assert_partition(&g, d.len());
            prop_assert!(g.groups.len() <= k);
            prop_assert_eq!(g.clone(), group_by_kmeans(&d, k, seed, 100).unwrap());
            let t = kmeans(&d, k, seed, 100).unwrap();
            for w in t.objective.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
