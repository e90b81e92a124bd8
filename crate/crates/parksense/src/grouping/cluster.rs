//! Correlation clustering over a pairwise affinity matrix: exact search for
//! small member sets, greedy agglomeration plus single-element local search
//! beyond that.

/// Member counts up to this size are solved exactly by partition enumeration.
pub const EXACT_LIMIT: usize = 12;

/// Objective of a partition: sum of within-cluster affinities over ordered
/// pairs, i.e. each unordered pair counts twice.
pub fn partition_objective(weights: &[Vec<f64>], groups: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    for group in groups {
        for (a, &i) in group.iter().enumerate() {
            for &j in group.iter().skip(a + 1) {
                total += 2.0 * weights[i][j];
            }
        }
    }
    total
}

/// Maximizes the correlation-clustering objective. Groups come out with
/// ascending members and are ordered by their smallest member.
pub fn solve(weights: &[Vec<f64>]) -> (Vec<Vec<usize>>, f64) {
    let n = weights.len();
    if n == 0 {
        return (vec![], 0.0);
    }
    let (groups, objective) = if n <= EXACT_LIMIT {
        exact_search(weights)
    } else {
        greedy_then_local(weights)
    };
    (canonicalize(groups), objective)
}

/// Greedy agglomeration followed by local search; exposed so the exact
/// solver can serve as its oracle in tests.
pub fn greedy_with_local_search(weights: &[Vec<f64>]) -> (Vec<Vec<usize>>, f64) {
    let (groups, objective) = greedy_then_local(weights);
    (canonicalize(groups), objective)
}

/// Greedy agglomeration polished by local search, restarted from a few
/// deterministic seeds; exchange moves and merge passes pull the search out
/// of the shallow local optima single moves cannot leave.
fn greedy_then_local(weights: &[Vec<f64>]) -> (Vec<Vec<usize>>, f64) {
    let n = weights.len();
    let starts: Vec<Vec<Vec<usize>>> = vec![
        greedy_merge(weights).0,
        (0..n).map(|i| vec![i]).collect(),
        positive_components(weights),
        descending_edge_merge(weights),
    ];
    let mut best: (Vec<Vec<usize>>, f64) = (vec![], f64::NEG_INFINITY);
    for start in starts {
        let mut groups = start;
        loop {
            let (polished, _) = local_search(weights, groups);
            let (merged, changed) = merge_pass(weights, polished);
            groups = merged;
            if !changed {
                break;
            }
        }
        let objective = partition_objective(weights, &groups);
        if objective > best.1 {
            best = (groups, objective);
        }
    }
    best
}

/// Connected components of the positive-affinity graph; an over-merged
/// start the local search then carves up.
fn positive_components(weights: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = weights.len();
    let mut component = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if component[i] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut stack = vec![i];
        let mut members = Vec::new();
        component[i] = id;
        while let Some(v) = stack.pop() {
            members.push(v);
            for u in 0..n {
                if component[u] == usize::MAX && weights[v][u] > 0.0 {
                    component[u] = id;
                    stack.push(u);
                }
            }
        }
        clusters.push(members);
    }
    clusters
}

/// Kruskal-style start: walk positive edges by descending weight and merge
/// the endpoints' clusters whenever the merge gain is positive.
fn descending_edge_merge(weights: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = weights.len();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if weights[i][j] > 0.0 {
                edges.push((i, j));
            }
        }
    }
    edges.sort_by(|&(a, b), &(c, d)| weights[c][d].total_cmp(&weights[a][b]).then((a, b).cmp(&(c, d))));
    let mut cluster_of: Vec<usize> = (0..n).collect();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for (i, j) in edges {
        let (a, b) = (cluster_of[i], cluster_of[j]);
        if a == b {
            continue;
        }
        let gain: f64 = clusters[a]
            .iter()
            .flat_map(|&x| clusters[b].iter().map(move |&y| 2.0 * weights[x][y]))
            .sum();
        if gain > 0.0 {
            let moved = std::mem::take(&mut clusters[b]);
            for &m in &moved {
                cluster_of[m] = a;
            }
            clusters[a].extend(moved);
        }
    }
    clusters.retain(|c| !c.is_empty());
    clusters
}

/// One round of positive-gain cluster merges over an existing partition.
fn merge_pass(weights: &[Vec<f64>], mut clusters: Vec<Vec<usize>>) -> (Vec<Vec<usize>>, bool) {
    let mut changed = false;
    loop {
        let mut best_gain = 1e-12;
        let mut best_pair: Option<(usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let gain: f64 = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| 2.0 * weights[i][j]))
                    .sum();
                if gain > best_gain {
                    best_gain = gain;
                    best_pair = Some((a, b));
                }
            }
        }
        match best_pair {
            Some((a, b)) => {
                let merged = clusters.remove(b);
                clusters[a].extend(merged);
                changed = true;
            }
            None => return (clusters, changed),
        }
    }
}

/// Branch-and-bound over set partitions in restricted-growth order. The
/// bound adds every still-open pair's positive contribution.
fn exact_search(weights: &[Vec<f64>]) -> (Vec<Vec<usize>>, f64) {
    let n = weights.len();
    // suffix_gain[k]: max extra objective from pairs whose later element >= k
    let mut suffix_gain = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let mut gain = suffix_gain[k + 1];
        for i in 0..k {
            gain += (2.0 * weights[i][k]).max(0.0);
        }
        suffix_gain[k] = gain;
    }

    struct Search<'a> {
        weights: &'a [Vec<f64>],
        suffix_gain: &'a [f64],
        clusters: Vec<Vec<usize>>,
        best_objective: f64,
        best: Vec<Vec<usize>>,
    }

    impl Search<'_> {
        fn recurse(&mut self, element: usize, partial: f64) {
            if partial + self.suffix_gain[element] <= self.best_objective && !self.best.is_empty()
            {
                return;
            }
            if element == self.weights.len() {
                if partial > self.best_objective || self.best.is_empty() {
                    self.best_objective = partial;
                    self.best = self.clusters.clone();
                }
                return;
            }
            for c in 0..self.clusters.len() {
                let join_gain: f64 = self.clusters[c]
                    .iter()
                    .map(|&m| 2.0 * self.weights[m][element])
                    .sum();
                self.clusters[c].push(element);
                self.recurse(element + 1, partial + join_gain);
                self.clusters[c].pop();
            }
            self.clusters.push(vec![element]);
            self.recurse(element + 1, partial);
            self.clusters.pop();
        }
    }

    let mut search = Search {
        weights,
        suffix_gain: &suffix_gain,
        clusters: Vec::new(),
        best_objective: f64::NEG_INFINITY,
        best: Vec::new(),
    };
    search.recurse(0, 0.0);
    (search.best, search.best_objective)
}

/// Merges the cluster pair with the largest positive linkage until no merge
/// helps. Ties break on the lowest cluster indices for determinism.
fn greedy_merge(weights: &[Vec<f64>]) -> (Vec<Vec<usize>>, f64) {
    let n = weights.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut objective = 0.0;
    loop {
        let mut best_gain = 0.0;
        let mut best_pair: Option<(usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let gain: f64 = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| 2.0 * weights[i][j]))
                    .sum();
                if gain > best_gain {
                    best_gain = gain;
                    best_pair = Some((a, b));
                }
            }
        }
        match best_pair {
            Some((a, b)) => {
                let merged = clusters.remove(b);
                clusters[a].extend(merged);
                objective += best_gain;
            }
            None => return (clusters, objective),
        }
    }
}

/// Moves single elements between clusters (or out to a new singleton) while
/// any move improves the objective.
fn local_search(
    weights: &[Vec<f64>],
    mut clusters: Vec<Vec<usize>>,
) -> (Vec<Vec<usize>>, f64) {
    loop {
        let mut best_gain = 1e-12; // strict improvement, guards float drift
        let mut best_move: Option<(usize, usize, Option<usize>)> = None;
        for (from, cluster) in clusters.iter().enumerate() {
            for (pos, &element) in cluster.iter().enumerate() {
                let leave_loss: f64 = cluster
                    .iter()
                    .filter(|&&m| m != element)
                    .map(|&m| 2.0 * weights[m][element])
                    .sum();
                // move to an existing cluster
                for (to, target) in clusters.iter().enumerate() {
                    if to == from {
                        continue;
                    }
                    let join_gain: f64 =
                        target.iter().map(|&m| 2.0 * weights[m][element]).sum();
                    let gain = join_gain - leave_loss;
                    if gain > best_gain {
                        best_gain = gain;
                        best_move = Some((from, pos, Some(to)));
                    }
                }
                // move out to a fresh singleton
                if cluster.len() > 1 && -leave_loss > best_gain {
                    best_gain = -leave_loss;
                    best_move = Some((from, pos, None));
                }
            }
        }
        let Some((from, pos, to)) = best_move else {
            // no single move helps; try exchanging two elements across
            // clusters before giving up
            if swap_pass(weights, &mut clusters) {
                continue;
            }
            break;
        };
        let element = clusters[from].remove(pos);
        match to {
            Some(to) => clusters[to].push(element),
            None => clusters.push(vec![element]),
        }
        clusters.retain(|c| !c.is_empty());
    }
    let objective = partition_objective(weights, &clusters);
    (clusters, objective)
}

/// Applies the best positive two-element exchange between clusters, if any.
fn swap_pass(weights: &[Vec<f64>], clusters: &mut [Vec<usize>]) -> bool {
    let linkage = |element: usize, cluster: &[usize], skip: usize| -> f64 {
        cluster
            .iter()
            .filter(|&&m| m != element && m != skip)
            .map(|&m| 2.0 * weights[m][element])
            .sum()
    };
    let mut best_gain = 1e-12;
    let mut best: Option<(usize, usize, usize, usize)> = None;
    for a in 0..clusters.len() {
        for b in (a + 1)..clusters.len() {
            for (pa, &i) in clusters[a].iter().enumerate() {
                for (pb, &j) in clusters[b].iter().enumerate() {
                    let gain = linkage(i, &clusters[b], j) + linkage(j, &clusters[a], i)
                        - linkage(i, &clusters[a], usize::MAX)
                        - linkage(j, &clusters[b], usize::MAX);
                    if gain > best_gain {
                        best_gain = gain;
                        best = Some((a, pa, b, pb));
                    }
                }
            }
        }
    }
    if let Some((a, pa, b, pb)) = best {
        let i = clusters[a][pa];
        clusters[a][pa] = clusters[b][pb];
        clusters[b][pb] = i;
        true
    } else {
        false
    }
}

/// True when no single-element relocation (or split to a singleton) can
/// improve the objective.
pub fn is_locally_optimal(weights: &[Vec<f64>], groups: &[Vec<usize>]) -> bool {
    for (from, cluster) in groups.iter().enumerate() {
        for &element in cluster {
            let leave_loss: f64 = cluster
                .iter()
                .filter(|&&m| m != element)
                .map(|&m| 2.0 * weights[m][element])
                .sum();
            if -leave_loss > 1e-9 && cluster.len() > 1 {
                return false;
            }
            for (to, target) in groups.iter().enumerate() {
                if to == from {
                    continue;
                }
                let join_gain: f64 = target.iter().map(|&m| 2.0 * weights[m][element]).sum();
                if join_gain - leave_loss > 1e-9 {
                    return false;
                }
            }
        }
    }
    true
}

fn canonicalize(mut groups: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for g in groups.iter_mut() {
        g.sort_unstable();
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by_key(|g| g[0]);
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn symmetric_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.gen_range(-1.0..1.0);
                w[i][j] = v;
                w[j][i] = v;
            }
        }
        w
    }

    /// Independent oracle: enumerate every set partition by restricted
    /// growth strings, no pruning, no shared code with the solver.
    pub(crate) fn enumerate_best(weights: &[Vec<f64>]) -> f64 {
        let n = weights.len();
        if n == 0 {
            return 0.0;
        }
        let mut labels = vec![0usize; n];
        let mut best = f64::NEG_INFINITY;
        loop {
            let k = labels.iter().max().unwrap() + 1;
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &l) in labels.iter().enumerate() {
                groups[l].push(i);
            }
            best = best.max(partition_objective(weights, &groups));
            // next restricted growth string
            let mut i = n;
            loop {
                if i == 1 {
                    return best;
                }
                i -= 1;
                let max_prefix = labels[..i].iter().max().copied().unwrap_or(0);
                if labels[i] <= max_prefix {
                    labels[i] += 1;
                    for l in labels.iter_mut().skip(i + 1) {
                        *l = 0;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn two_cliques_of_four() {
        // two 2-cliques of weight +1, cross weights -1
        let mut w = vec![vec![0.0; 4]; 4];
        for (i, j, v) in [
            (0, 1, 1.0),
            (2, 3, 1.0),
            (0, 2, -1.0),
            (0, 3, -1.0),
            (1, 2, -1.0),
            (1, 3, -1.0),
        ] {
            w[i][j] = v;
            w[j][i] = v;
        }
        let (groups, objective) = solve(&w);
        assert_eq!(groups, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(objective, 4.0);
        assert_eq!(enumerate_best(&w), 4.0);
    }

    #[test]
    fn all_negative_gives_singletons() {
        let mut w = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    w[i][j] = -0.5;
                }
            }
        }
        let (groups, objective) = solve(&w);
        assert_eq!(groups.len(), 5);
        assert_eq!(objective, 0.0);
    }

    #[test]
    fn exact_matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..60 {
            let n = rng.gen_range(1..=8);
            let w = symmetric_weights(n, &mut rng);
            let (groups, objective) = solve(&w);
            let oracle = enumerate_best(&w);
            assert!(
                (objective - oracle).abs() < 1e-9,
                "solver {objective} vs oracle {oracle} on {w:?}"
            );
            assert!((partition_objective(&w, &groups) - objective).abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_reaches_ninety_percent_of_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let n = rng.gen_range(2..=12);
            let w = symmetric_weights(n, &mut rng);
            let (_, exact_obj) = solve(&w);
            let (greedy_groups, greedy_obj) = greedy_with_local_search(&w);
            assert!(is_locally_optimal(&w, &greedy_groups));
            if exact_obj > 0.0 {
                assert!(
                    greedy_obj >= 0.9 * exact_obj - 1e-9,
                    "greedy {greedy_obj} below 90% of exact {exact_obj}"
                );
            } else {
                assert!(greedy_obj >= exact_obj - 1e-9);
            }
        }
    }

    #[test]
    fn objective_never_below_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let n = rng.gen_range(1..=14); // covers both solver paths
            let w = symmetric_weights(n, &mut rng);
            let (groups, objective) = solve(&w);
            assert!(objective >= -1e-12);
            assert!(is_locally_optimal(&w, &groups));
            // partition validity: disjoint cover
            let mut seen: Vec<usize> = groups.iter().flatten().copied().collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }
}
