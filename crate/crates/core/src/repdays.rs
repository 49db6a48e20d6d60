//! Representative days: reduces hourly annual series (demand, wind, solar
//! per node) to weighted representative days via agglomerative hierarchical
//! clustering, then derives the scenario/period structure the planning model
//! consumes.
//!
//! Pipeline: normalize each series (demand by its annual maximum, VRE by
//! installed capacity), concatenate per-day feature vectors over every
//! (node, kind) pair without weighting, cluster the 365 days with Ward
//! linkage on Euclidean distance, pick per-(node, kind) medoid days as
//! representatives, and average the representative day's hours over equal
//! blocks to obtain per-period demand curves and availability factors.
//! Cluster weights (member count / 365) become scenario probabilities.

use crate::model::DemandCurve;
use serde::{Deserialize, Serialize};

pub const HOURS_PER_YEAR: usize = 8760;
pub const DAYS_PER_YEAR: usize = 365;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeriesKind {
    Demand,
    Wind,
    Solar,
}

impl SeriesKind {
    pub fn parse(text: &str) -> Option<SeriesKind> {
        match text {
            "demand" => Some(SeriesKind::Demand),
            "wind" => Some(SeriesKind::Wind),
            "solar" => Some(SeriesKind::Solar),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SeriesKind::Demand => "demand",
            SeriesKind::Wind => "wind",
            SeriesKind::Solar => "solar",
        }
    }

    fn is_vre(&self) -> bool {
        !matches!(self, SeriesKind::Demand)
    }
}

/// One year of hourly values for a node and series kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    pub node: String,
    pub kind: SeriesKind,
    pub values: Vec<f64>,
    /// Normalization basis: the annual maximum for demand (derived if
    /// absent), installed capacity for VRE (must be provided).
    pub basis: Option<f64>,
    pub normalized: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RepdaysError {
    #[error("{node}/{kind}: series has {found} hours; expected 8760 (or 8784 for leap years)")]
    WrongLength {
        node: String,
        kind: &'static str,
        found: usize,
    },
    #[error("{node}/{kind}: normalization basis must be strictly positive (got {basis})")]
    BadBasis {
        node: String,
        kind: &'static str,
        basis: f64,
    },
    #[error("{node}/{kind}: VRE series needs an installed-capacity basis")]
    MissingBasis { node: String, kind: &'static str },
    #[error("{node}/{kind}: normalized value {value} at hour {hour} outside [0, 1]")]
    OutOfRange {
        node: String,
        kind: &'static str,
        value: f64,
        hour: usize,
    },
    #[error("cluster count {k} outside [1, {max}]")]
    BadClusterCount { k: usize, max: usize },
    #[error("cluster count {k} exceeds the {distinct} distinct day profiles")]
    TooFewDistinctDays { k: usize, distinct: usize },
    #[error("missing series for node {node}, kind {kind}")]
    MissingSeries { node: String, kind: &'static str },
    #[error("periods per day must divide 24 (got {0})")]
    IndivisibleBlocks(usize),
    #[error("reference demand curves cover {found} nodes, need {expected}")]
    WrongReferenceCount { expected: usize, found: usize },
    #[error("{node}: representative demand level is {level} in period {period}; cannot scale the demand curve")]
    NonPositiveDemandLevel {
        node: String,
        period: usize,
        level: f64,
    },
}

/// Divides by the normalization basis. Demand derives its basis from the
/// annual maximum when absent; VRE requires installed capacity. Idempotent.
pub fn normalize_series(raw: &HourlySeries) -> Result<HourlySeries, RepdaysError> {
    if raw.normalized {
        return Ok(raw.clone());
    }
    let mut values = raw.values.clone();
    if values.len() == HOURS_PER_YEAR + 24 {
        values.truncate(HOURS_PER_YEAR); // leap day dropped
    }
    if values.len() != HOURS_PER_YEAR {
        return Err(RepdaysError::WrongLength {
            node: raw.node.clone(),
            kind: raw.kind.name(),
            found: values.len(),
        });
    }
    let basis = match (raw.kind.is_vre(), raw.basis) {
        (_, Some(b)) => b,
        (false, None) => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        (true, None) => {
            return Err(RepdaysError::MissingBasis {
                node: raw.node.clone(),
                kind: raw.kind.name(),
            })
        }
    };
    if !(basis > 0.0) {
        return Err(RepdaysError::BadBasis {
            node: raw.node.clone(),
            kind: raw.kind.name(),
            basis,
        });
    }
    for (hour, v) in values.iter_mut().enumerate() {
        *v /= basis;
        if !(0.0..=1.0).contains(v) {
            return Err(RepdaysError::OutOfRange {
                node: raw.node.clone(),
                kind: raw.kind.name(),
                value: *v,
                hour: hour + 1,
            });
        }
    }
    Ok(HourlySeries {
        node: raw.node.clone(),
        kind: raw.kind,
        values,
        basis: Some(basis),
        normalized: true,
    })
}

/// A normalized series collection with a fixed (node, kind) ordering:
/// nodes in first-seen order, kinds in demand/wind/solar order.
#[derive(Debug, Clone)]
pub struct SeriesSet {
    pub nodes: Vec<String>,
    pub kinds: Vec<SeriesKind>,
    series: Vec<HourlySeries>, // [node][kind] flattened
}

impl SeriesSet {
    /// Normalizes and arranges the series; every (node, kind) combination
    /// over the observed nodes and kinds must be present.
    pub fn new(raw: &[HourlySeries]) -> Result<SeriesSet, RepdaysError> {
        let mut nodes: Vec<String> = Vec::new();
        let mut kinds: Vec<SeriesKind> = Vec::new();
        for s in raw {
            if !nodes.contains(&s.node) {
                nodes.push(s.node.clone());
            }
            if !kinds.contains(&s.kind) {
                kinds.push(s.kind);
            }
        }
        kinds.sort();
        let mut series = Vec::with_capacity(nodes.len() * kinds.len());
        for node in &nodes {
            for kind in &kinds {
                let found = raw
                    .iter()
                    .find(|s| &s.node == node && s.kind == *kind)
                    .ok_or_else(|| RepdaysError::MissingSeries {
                        node: node.clone(),
                        kind: kind.name(),
                    })?;
                series.push(normalize_series(found)?);
            }
        }
        Ok(SeriesSet {
            nodes,
            kinds,
            series,
        })
    }

    pub fn series(&self, node: usize, kind: usize) -> &HourlySeries {
        &self.series[node * self.kinds.len() + kind]
    }

    /// Day-feature matrix: 365 rows, 24 * nodes * kinds columns,
    /// concatenated unweighted in (node, kind, hour) order.
    pub fn day_features(&self) -> Vec<Vec<f64>> {
        let d = 24 * self.series.len();
        let mut rows = Vec::with_capacity(DAYS_PER_YEAR);
        for day in 0..DAYS_PER_YEAR {
            let mut row = Vec::with_capacity(d);
            for s in &self.series {
                row.extend_from_slice(&s.values[day * 24..(day + 1) * 24]);
            }
            rows.push(row);
        }
        rows
    }
}

/// Result of clustering the 365 days into k groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster label per day, labels 0..k ordered by smallest member day.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    /// member count / 365 per cluster.
    pub weights: Vec<f64>,
}

impl ClusterResult {
    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(d, _)| d)
            .collect()
    }
}

/// Agglomerative clustering with Ward linkage on Euclidean distance, cut at
/// k clusters. Deterministic: merge ties go to the smallest index pair.
pub fn cluster_days(features: &[Vec<f64>], k: usize) -> Result<ClusterResult, RepdaysError> {
    let n = features.len();
    if k < 1 || k > n {
        return Err(RepdaysError::BadClusterCount { k, max: n });
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for row in features {
        if !distinct.iter().any(|r| *r == row) {
            distinct.push(row);
        }
    }
    if k > distinct.len() {
        return Err(RepdaysError::TooFewDistinctDays {
            k,
            distinct: distinct.len(),
        });
    }

    // squared Euclidean distances; Lance-Williams Ward updates
    let mut dist = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = features[i]
                .iter()
                .zip(&features[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist[i * n + j] = d2;
            dist[j * n + i] = d2;
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut size: Vec<usize> = vec![1; n];
    // cluster id = smallest member index; labels updated on merge
    let mut labels: Vec<usize> = (0..n).collect();
    let mut remaining = n;
    while remaining > k {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                // Ward merge cost between clusters i, j given squared
                // distance state
                let cost = dist[i * n + j];
                if cost < best.0 {
                    best = (cost, i, j);
                }
            }
        }
        let (_, a, b) = best;
        // merge b into a (a < b keeps the smallest-index id)
        for label in labels.iter_mut() {
            if *label == b {
                *label = a;
            }
        }
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for w in 0..n {
            if !active[w] || w == a || w == b {
                continue;
            }
            let nw = size[w] as f64;
            let updated = ((na + nw) * dist[a * n + w] + (nb + nw) * dist[b * n + w]
                - nw * dist[a * n + b])
                / (na + nb + nw);
            dist[a * n + w] = updated;
            dist[w * n + a] = updated;
        }
        size[a] += size[b];
        active[b] = false;
        remaining -= 1;
    }

    // relabel clusters 0..k by smallest member day
    let mut ids: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    ids.sort_unstable();
    let mut sizes = vec![0usize; ids.len()];
    let mut final_labels = vec![0usize; n];
    for (day, &label) in labels.iter().enumerate() {
        let c = ids.binary_search(&label).expect("live cluster id");
        final_labels[day] = c;
        sizes[c] += 1;
    }
    let weights = sizes.iter().map(|&s| s as f64 / n as f64).collect();
    Ok(ClusterResult {
        labels: final_labels,
        sizes,
        weights,
    })
}

/// Representative day per (cluster, node, kind).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Representatives {
    pub num_nodes: usize,
    pub num_kinds: usize,
    /// Day index per (cluster, node, kind), flattened.
    pub day: Vec<usize>,
}

impl Representatives {
    pub fn day_for(&self, cluster: usize, node: usize, kind: usize) -> usize {
        self.day[(cluster * self.num_nodes + node) * self.num_kinds + kind]
    }
}

/// For each cluster and (node, kind), the medoid member day: the one
/// minimizing the summed Euclidean distance to the other members within
/// that series' 24-dimensional subspace. Ties go to the smallest day index.
pub fn select_representatives(result: &ClusterResult, set: &SeriesSet) -> Representatives {
    let num_nodes = set.nodes.len();
    let num_kinds = set.kinds.len();
    let mut day = Vec::with_capacity(result.num_clusters() * num_nodes * num_kinds);
    for cluster in 0..result.num_clusters() {
        let members = result.members(cluster);
        for node in 0..num_nodes {
            for kind in 0..num_kinds {
                let series = set.series(node, kind);
                let day_slice =
                    |d: usize| -> &[f64] { &series.values[d * 24..(d + 1) * 24] };
                let mut best = (f64::INFINITY, usize::MAX);
                for &candidate in &members {
                    let mut total = 0.0;
                    for &other in &members {
                        let d2: f64 = day_slice(candidate)
                            .iter()
                            .zip(day_slice(other))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        total += d2.sqrt();
                    }
                    if total < best.0 {
                        best = (total, candidate);
                    }
                }
                day.push(best.1);
            }
        }
    }
    Representatives {
        num_nodes,
        num_kinds,
        day,
    }
}

/// Reference inverse-demand curve at a node: the intercept is kept, the
/// slope is divided by the block's normalized demand level, preserving the
/// reference price at the correspondingly scaled quantity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReferenceCurve {
    pub intercept: f64,
    pub slope: f64,
}

/// Scenario/period structure derived from a clustering, ready to assemble
/// into the planning model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioData {
    /// (name, probability) per scenario, one per cluster.
    pub scenarios: Vec<(String, f64)>,
    /// Period durations in hours (uniform blocks).
    pub period_hours: Vec<f64>,
    /// Demand curves per (scenario, period, node), flattened.
    pub demand: Vec<DemandCurve>,
    /// Availability factors per (VRE kind, scenario, period, node),
    /// flattened; kinds in the set's order, demand excluded.
    pub availability: Vec<f64>,
    pub vre_kinds: Vec<SeriesKind>,
}

/// Averages each representative day over `periods_per_day` equal blocks.
/// `hours_scale` stretches block durations to the modeled horizon (1 keeps
/// the literal 24-hour day).
pub fn build_scenarios(
    result: &ClusterResult,
    reps: &Representatives,
    set: &SeriesSet,
    periods_per_day: usize,
    references: &[ReferenceCurve],
    hours_scale: f64,
) -> Result<ScenarioData, RepdaysError> {
    if periods_per_day == 0 || 24 % periods_per_day != 0 {
        return Err(RepdaysError::IndivisibleBlocks(periods_per_day));
    }
    if references.len() != set.nodes.len() {
        return Err(RepdaysError::WrongReferenceCount {
            expected: set.nodes.len(),
            found: references.len(),
        });
    }
    let block = 24 / periods_per_day;
    let num_nodes = set.nodes.len();
    let demand_kind = set
        .kinds
        .iter()
        .position(|k| *k == SeriesKind::Demand);
    let vre_kind_indices: Vec<usize> = set
        .kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| k.is_vre())
        .map(|(i, _)| i)
        .collect();

    let block_mean = |node: usize, kind: usize, day: usize, t: usize| -> f64 {
        let series = set.series(node, kind);
        let start = day * 24 + t * block;
        series.values[start..start + block].iter().sum::<f64>() / block as f64
    };

    let num_clusters = result.num_clusters();
    let mut demand = Vec::with_capacity(num_clusters * periods_per_day * num_nodes);
    let mut availability =
        Vec::with_capacity(vre_kind_indices.len() * num_clusters * periods_per_day * num_nodes);
    for s in 0..num_clusters {
        for t in 0..periods_per_day {
            for node in 0..num_nodes {
                let curve = match demand_kind {
                    Some(kind) => {
                        let day = reps.day_for(s, node, kind);
                        let level = block_mean(node, kind, day, t);
                        if !(level > 0.0) {
                            return Err(RepdaysError::NonPositiveDemandLevel {
                                node: set.nodes[node].clone(),
                                period: t,
                                level,
                            });
                        }
                        DemandCurve {
                            intercept: references[node].intercept,
                            slope: references[node].slope / level,
                        }
                    }
                    None => DemandCurve {
                        intercept: references[node].intercept,
                        slope: references[node].slope,
                    },
                };
                demand.push(curve);
            }
        }
    }
    for &kind in &vre_kind_indices {
        for s in 0..num_clusters {
            for t in 0..periods_per_day {
                for node in 0..num_nodes {
                    let day = reps.day_for(s, node, kind);
                    availability.push(block_mean(node, kind, day, t));
                }
            }
        }
    }

    Ok(ScenarioData {
        scenarios: (0..num_clusters)
            .map(|c| (format!("cluster{}", c + 1), result.weights[c]))
            .collect(),
        period_hours: vec![block as f64 * hours_scale; periods_per_day],
        demand,
        availability,
        vre_kinds: vre_kind_indices
            .iter()
            .map(|&i| set.kinds[i])
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(node: &str, kind: SeriesKind, values: Vec<f64>, basis: Option<f64>) -> HourlySeries {
        HourlySeries {
            node: node.into(),
            kind,
            values,
            basis,
            normalized: false,
        }
    }

    fn flat_year(value: f64) -> Vec<f64> {
        vec![value; HOURS_PER_YEAR]
    }

    #[test]
    fn demand_normalizes_by_annual_maximum() {
        let mut values = flat_year(400.0);
        values[100] = 1000.0;
        let raw = series("n1", SeriesKind::Demand, values, None);
        let norm = normalize_series(&raw).unwrap();
        assert_eq!(norm.values[100], 1.0);
        assert_eq!(norm.values[0], 0.4);
        assert_eq!(norm.basis, Some(1000.0));
    }

    #[test]
    fn vre_normalizes_by_capacity_and_never_reaches_one() {
        let mut values = flat_year(100.0);
        values[5] = 450.0;
        let raw = series("n1", SeriesKind::Wind, values, Some(500.0));
        let norm = normalize_series(&raw).unwrap();
        assert!(norm.values.iter().all(|&v| v <= 0.9));
        assert!(norm.values.iter().all(|&v| v < 1.0));
    }

    #[test]
    fn normalization_is_idempotent() {
        let raw = series("n1", SeriesKind::Demand, flat_year(5.0), None);
        let once = normalize_series(&raw).unwrap();
        let twice = normalize_series(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn zero_basis_is_an_error() {
        let raw = series("n1", SeriesKind::Wind, flat_year(0.0), Some(0.0));
        assert!(matches!(
            normalize_series(&raw),
            Err(RepdaysError::BadBasis { .. })
        ));
        let raw = series("n1", SeriesKind::Wind, flat_year(0.0), None);
        assert!(matches!(
            normalize_series(&raw),
            Err(RepdaysError::MissingBasis { .. })
        ));
    }

    #[test]
    fn identical_days_collapse_to_one_cluster() {
        let features = vec![vec![0.5; 24]; DAYS_PER_YEAR];
        let result = cluster_days(&features, 1).unwrap();
        assert_eq!(result.num_clusters(), 1);
        assert_eq!(result.weights, vec![1.0]);
        // and requesting more clusters than distinct rows fails
        assert!(matches!(
            cluster_days(&features, 2),
            Err(RepdaysError::TooFewDistinctDays { .. })
        ));
    }

    #[test]
    fn singleton_clusters_at_k_365() {
        let features: Vec<Vec<f64>> = (0..DAYS_PER_YEAR).map(|d| vec![d as f64]).collect();
        let result = cluster_days(&features, DAYS_PER_YEAR).unwrap();
        assert_eq!(result.num_clusters(), DAYS_PER_YEAR);
        for w in &result.weights {
            assert!((w - 1.0 / 365.0).abs() < 1e-15);
        }
    }

    #[test]
    fn planted_clusters_recover_membership_counts() {
        // three well-separated day shapes with 145/117/103 members
        let mut features = Vec::with_capacity(DAYS_PER_YEAR);
        let counts = [145usize, 117, 103];
        let centers = [0.1, 0.5, 0.9];
        let mut day = 0usize;
        for (count, center) in counts.iter().zip(&centers) {
            for _ in 0..*count {
                // small deterministic jitter, well within separation
                let jitter = 0.01 * ((day * 37 % 11) as f64 / 11.0 - 0.5);
                features.push(vec![center + jitter; 24]);
                day += 1;
            }
        }
        let result = cluster_days(&features, 3).unwrap();
        let mut sizes = result.sizes.clone();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![103, 117, 145]);
        let total: f64 = result.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_equivariance_on_tie_free_data() {
        let features: Vec<Vec<f64>> = (0..DAYS_PER_YEAR)
            .map(|d| vec![(d as f64 * 0.618).sin(), (d as f64 * 0.377).cos()])
            .collect();
        let result = cluster_days(&features, 4).unwrap();
        // reverse the day order
        let reversed: Vec<Vec<f64>> = features.iter().rev().cloned().collect();
        let result_rev = cluster_days(&reversed, 4).unwrap();
        // same partition: compare co-membership of a few day pairs
        for (a, b) in [(0usize, 1usize), (10, 300), (42, 43), (100, 250)] {
            let together = result.labels[a] == result.labels[b];
            let together_rev =
                result_rev.labels[DAYS_PER_YEAR - 1 - a] == result_rev.labels[DAYS_PER_YEAR - 1 - b];
            assert_eq!(together, together_rev);
        }
    }

    fn tiny_set(values_by_day: &[(f64, f64)]) -> SeriesSet {
        // one node, demand + wind; each day constant at the given levels
        let mut demand = Vec::new();
        let mut wind = Vec::new();
        for day in 0..DAYS_PER_YEAR {
            let (d, w) = values_by_day[day % values_by_day.len()];
            demand.extend(std::iter::repeat(d).take(24));
            wind.extend(std::iter::repeat(w).take(24));
        }
        SeriesSet::new(&[
            series("n1", SeriesKind::Demand, demand, None),
            series("n1", SeriesKind::Wind, wind, Some(2.0)),
        ])
        .unwrap()
    }

    #[test]
    fn singleton_cluster_represents_itself() {
        let set = tiny_set(&[(1.0, 0.5)]);
        // force day 0 into its own cluster by making it unique
        let mut features = set.day_features();
        features[0] = vec![9.0; features[0].len()];
        let result = cluster_days(&features, 2).unwrap();
        let reps = select_representatives(&result, &set);
        let lone_cluster = result.labels[0];
        assert_eq!(result.sizes[lone_cluster], 1);
        for kind in 0..2 {
            assert_eq!(reps.day_for(lone_cluster, 0, kind), 0);
        }
    }

    #[test]
    fn day_equal_to_cluster_mean_is_selected() {
        // symmetric cluster: m - delta, m, m + delta; the middle day is the
        // 1-median in every subspace
        let mut demand = Vec::new();
        for day in 0..DAYS_PER_YEAR {
            let level = match day % 3 {
                0 => 0.4,
                1 => 0.5,
                _ => 0.6,
            };
            demand.extend(std::iter::repeat(level).take(24));
        }
        let set = SeriesSet::new(&[series("n1", SeriesKind::Demand, demand, Some(1.0))]).unwrap();
        let features = set.day_features();
        let result = cluster_days(&features, 1).unwrap();
        let reps = select_representatives(&result, &set);
        let rep = reps.day_for(0, 0, 0);
        // a 0.5-day; the smallest-index one is day 1
        assert_eq!(rep, 1);
    }

    #[test]
    fn representatives_are_independent_across_nodes() {
        let mut demand1 = Vec::new();
        let mut demand2 = Vec::new();
        for day in 0..DAYS_PER_YEAR {
            demand1.extend(std::iter::repeat(0.3 + 0.001 * (day % 7) as f64).take(24));
            demand2.extend(std::iter::repeat(0.8 - 0.002 * (day % 5) as f64).take(24));
        }
        let set = SeriesSet::new(&[
            series("n1", SeriesKind::Demand, demand1.clone(), Some(1.0)),
            series("n2", SeriesKind::Demand, demand2.clone(), Some(1.0)),
        ])
        .unwrap();
        let result = cluster_days(&set.day_features(), 3).unwrap();
        let reps = select_representatives(&result, &set);
        // permute node 2's series: node 1 representatives must not move
        let mut demand2_permuted = demand2.clone();
        demand2_permuted.rotate_left(24 * 50);
        let set_permuted = SeriesSet::new(&[
            series("n1", SeriesKind::Demand, demand1, Some(1.0)),
            series("n2", SeriesKind::Demand, demand2_permuted, Some(1.0)),
        ])
        .unwrap();
        let reps_permuted = select_representatives(&result, &set_permuted);
        for cluster in 0..result.num_clusters() {
            assert_eq!(
                reps.day_for(cluster, 0, 0),
                reps_permuted.day_for(cluster, 0, 0)
            );
        }
    }

    #[test]
    fn four_blocks_of_six_hours() {
        let set = tiny_set(&[(1.0, 0.5)]);
        let result = cluster_days(&set.day_features(), 1).unwrap();
        let reps = select_representatives(&result, &set);
        let refs = [ReferenceCurve {
            intercept: 100.0,
            slope: 0.01,
        }];
        let data = build_scenarios(&result, &reps, &set, 4, &refs, 1.0).unwrap();
        assert_eq!(data.period_hours, vec![6.0; 4]);
        assert_eq!(data.scenarios.len(), 1);
        assert!((data.scenarios[0].1 - 1.0).abs() < 1e-12);
        // constant series: every period value equals the constant
        for curve in &data.demand {
            assert!((curve.intercept - 100.0).abs() < 1e-12);
            assert!((curve.slope - 0.01).abs() < 1e-12); // level is 1.0
        }
        for a in &data.availability {
            assert!((a - 0.25).abs() < 1e-12); // 0.5 / basis 2.0
        }
    }

    #[test]
    fn hourly_identity_at_24_periods() {
        let mut demand = Vec::new();
        for day in 0..DAYS_PER_YEAR {
            for h in 0..24 {
                demand.push(0.2 + 0.01 * ((day + h) % 13) as f64);
            }
        }
        let set = SeriesSet::new(&[series("n1", SeriesKind::Demand, demand.clone(), Some(1.0))])
            .unwrap();
        let result = cluster_days(&set.day_features(), 2).unwrap();
        let reps = select_representatives(&result, &set);
        let refs = [ReferenceCurve {
            intercept: 50.0,
            slope: 0.02,
        }];
        let data = build_scenarios(&result, &reps, &set, 24, &refs, 1.0).unwrap();
        for s in 0..2 {
            let day = reps.day_for(s, 0, 0);
            for t in 0..24 {
                let level = demand[day * 24 + t];
                let curve = data.demand[(s * 24 + t) * 1];
                assert!((curve.slope - 0.02 / level).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indivisible_blocks_are_rejected() {
        let set = tiny_set(&[(1.0, 0.5)]);
        let result = cluster_days(&set.day_features(), 1).unwrap();
        let reps = select_representatives(&result, &set);
        let refs = [ReferenceCurve {
            intercept: 1.0,
            slope: 1.0,
        }];
        assert!(matches!(
            build_scenarios(&result, &reps, &set, 5, &refs, 1.0),
            Err(RepdaysError::IndivisibleBlocks(5))
        ));
    }

    #[test]
    fn aggregation_conserves_energy() {
        let mut wind = Vec::new();
        for day in 0..DAYS_PER_YEAR {
            for h in 0..24 {
                wind.push(0.1 + 0.003 * ((day * 24 + h) % 29) as f64);
            }
        }
        let set = SeriesSet::new(&[
            series("n1", SeriesKind::Demand, flat_year(0.5), Some(1.0)),
            series("n1", SeriesKind::Wind, wind.clone(), Some(1.0)),
        ])
        .unwrap();
        let result = cluster_days(&set.day_features(), 3).unwrap();
        let reps = select_representatives(&result, &set);
        let refs = [ReferenceCurve {
            intercept: 1.0,
            slope: 1.0,
        }];
        let data = build_scenarios(&result, &reps, &set, 4, &refs, 1.0).unwrap();
        for s in 0..3 {
            let day = reps.day_for(s, 0, 1);
            let daily_total: f64 = wind[day * 24..(day + 1) * 24].iter().sum();
            let mut aggregated = 0.0;
            for t in 0..4 {
                let a = data.availability[(s * 4 + t) * 1];
                aggregated += a * 6.0;
            }
            assert!(
                (aggregated - daily_total).abs() < 1e-9,
                "cluster {s}: {aggregated} vs {daily_total}"
            );
        }
    }
}
