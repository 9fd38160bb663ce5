//! Pareto dominance, non-dominated filtering, crowding distance, the bounded
//! leader archive and the 2-D hypervolume.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimisation dominance: `u` is no worse in every coordinate and differs
/// from `v` somewhere.
pub fn dominates(u: &[f64], v: &[f64]) -> Result<bool> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "objective vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(dominates_unchecked(u, v))
}

#[inline]
pub(crate) fn dominates_unchecked(u: &[f64], v: &[f64]) -> bool {
    let mut strictly = false;
    for (a, b) in u.iter().zip(v) {
        if a > b {
            return false;
        }
        if a < b {
            strictly = true;
        }
    }
    strictly
}

/// Indices (ascending) of the points no other point dominates.
pub fn pareto_filter(points: &[Vec<f64>]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::Empty("pareto filter of no points"));
    }
    let m = points[0].len();
    if points.iter().any(|p| p.len() != m) {
        return Err(Error::Dimension("objective vectors of differing length".into()));
    }
    Ok((0..points.len())
        .filter(|&i| !points.iter().any(|q| dominates_unchecked(q, &points[i])))
        .collect())
}

/// NSGA-II crowding distance of each point within the set; boundary points
/// of every objective get `+inf`.
pub fn crowding_distance(points: &[&[f64]]) -> Vec<f64> {
    let n = points.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = points[0].len();
    let mut dist = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        order.sort_by(|&a, &b| points[a][k].total_cmp(&points[b][k]).then(a.cmp(&b)));
        let lo = points[order[0]][k];
        let hi = points[order[n - 1]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if dist[i].is_finite() {
                dist[i] += (points[order[w + 1]][k] - points[order[w - 1]][k]) / span;
            }
        }
    }
    dist
}

/// Exact hypervolume of a bi-objective set with respect to `reference`.
pub fn hypervolume(front: &[Vec<f64>], reference: [f64; 2]) -> Result<f64> {
    for p in front {
        if p.len() != 2 {
            return Err(Error::Dimension("hypervolume is implemented for two objectives".into()));
        }
        if p[0] > reference[0] || p[1] > reference[1] || !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::Data(format!(
                "point ({}, {}) lies outside the reference box ({}, {})",
                p[0], p[1], reference[0], reference[1]
            )));
        }
    }
    let mut sorted: Vec<&Vec<f64>> = front.iter().collect();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut best = reference[1];
    let mut volume = 0.0;
    for p in sorted {
        if p[1] < best {
            volume += (reference[0] - p[0]) * (best - p[1]);
            best = p[1];
        }
    }
    Ok(volume)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry<M> {
    pub position: Vec<f64>,
    pub objectives: Vec<f64>,
    pub meta: M,
}

/// Bounded repository of mutually non-dominated solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive<M> {
    capacity: usize,
    entries: Vec<ArchiveEntry<M>>,
}

impl<M: Clone> ParetoArchive<M> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("archive capacity must be positive".into()));
        }
        Ok(ParetoArchive {
            capacity,
            entries: Vec::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[ArchiveEntry<M>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ArchiveEntry<M>> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.objectives.clone()).collect()
    }

    pub fn crowding(&self) -> Vec<f64> {
        let pts: Vec<&[f64]> = self.entries.iter().map(|e| e.objectives.as_slice()).collect();
        crowding_distance(&pts)
    }

    /// Merge candidates in order: a candidate enters unless a member
    /// dominates it or already has identical objectives, and evicts the
    /// members it dominates. Candidates with non-finite objectives are
    /// skipped. Overflow is then resolved by repeatedly dropping the entry
    /// with the smallest crowding distance (the later one on ties).
    pub fn update<I>(&mut self, candidates: I)
    where
        I: IntoIterator<Item = ArchiveEntry<M>>,
    {
        for cand in candidates {
            if cand.objectives.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let rejected = self.entries.iter().any(|e| {
                e.objectives == cand.objectives || dominates_unchecked(&e.objectives, &cand.objectives)
            });
            if rejected {
                continue;
            }
            self.entries
                .retain(|e| !dominates_unchecked(&cand.objectives, &e.objectives));
            self.entries.push(cand);
        }
        self.truncate();
    }

    fn truncate(&mut self) {
        while self.entries.len() > self.capacity {
            let dist = self.crowding();
            let mut worst = 0;
            for (i, d) in dist.iter().enumerate() {
                if *d <= dist[worst] {
                    worst = i;
                }
            }
            self.entries.remove(worst);
        }
    }

    /// Roulette choice weighted by crowding distance; boundary entries weigh
    /// twice the largest finite distance.
    pub fn select_leader<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&ArchiveEntry<M>> {
        if self.entries.is_empty() {
            return Err(Error::Empty("leader selection from an empty archive"));
        }
        let weights = leader_weights(&self.crowding());
        let total: f64 = weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if r < *w {
                return Ok(&self.entries[i]);
            }
            r -= w;
        }
        Ok(self.entries.last().expect("non-empty"))
    }
}

fn leader_weights(dist: &[f64]) -> Vec<f64> {
    let max_finite = dist
        .iter()
        .filter(|d| d.is_finite())
        .fold(0.0_f64, |m, &d| m.max(d));
    let weights: Vec<f64> = dist
        .iter()
        .map(|&d| if d.is_finite() { d } else { 2.0 * max_finite })
        .collect();
    if weights.iter().sum::<f64>() > 0.0 {
        weights
    } else {
        vec![1.0; dist.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(obj: &[f64]) -> ArchiveEntry<()> {
        ArchiveEntry {
            position: obj.to_vec(),
            objectives: obj.to_vec(),
            meta: (),
        }
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[0.1, 0.3], &[0.2, 0.3]).unwrap());
        assert!(!dominates(&[0.1, 0.5], &[0.2, 0.3]).unwrap());
        assert!(!dominates(&[0.2, 0.3], &[0.1, 0.5]).unwrap());
        assert!(!dominates(&[0.4, 0.4], &[0.4, 0.4]).unwrap());
        assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn filter_examples() {
        assert_eq!(pareto_filter(&[vec![1.0, 1.0]]).unwrap(), vec![0]);
        let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pareto_filter(&pts).unwrap(), vec![0, 1]);
        assert!(pareto_filter(&[]).is_err());
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume(&[vec![0.0, 0.0]], [1.0, 1.0]).unwrap(), 1.0);
        let front = vec![vec![0.0, 0.5], vec![0.5, 0.0]];
        assert!((hypervolume(&front, [1.0, 1.0]).unwrap() - 0.75).abs() < 1e-15);
        let mut with_dominated = front.clone();
        with_dominated.push(vec![0.6, 0.6]);
        assert_eq!(
            hypervolume(&with_dominated, [1.0, 1.0]).unwrap(),
            hypervolume(&front, [1.0, 1.0]).unwrap()
        );
        assert!(hypervolume(&[vec![1.5, 0.0]], [1.0, 1.0]).is_err());
        assert_eq!(hypervolume(&[], [1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn crowding_boundaries_are_infinite() {
        let pts = [[0.0, 1.0], [0.2, 0.7], [0.5, 0.5], [1.0, 0.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let d = crowding_distance(&refs);
        assert!(d[0].is_infinite() && d[3].is_infinite());
        // (0.5 - 0.0)/1 + (1.0 - 0.5)/1
        assert!((d[1] - 1.0).abs() < 1e-15);
        assert!((d[2] - (0.8 + 0.7)).abs() < 1e-15);
    }

    #[test]
    fn dominating_insert_clears_members() {
        let mut a = ParetoArchive::new(10).unwrap();
        a.update([entry(&[1.0, 3.0]), entry(&[2.0, 2.0]), entry(&[3.0, 1.0])]);
        assert_eq!(a.len(), 3);
        a.update([entry(&[0.5, 0.5])]);
        assert_eq!(a.objectives(), vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn dominated_insert_is_ignored() {
        let mut a = ParetoArchive::new(10).unwrap();
        a.update([entry(&[1.0, 3.0]), entry(&[3.0, 1.0])]);
        let before = a.clone();
        a.update([entry(&[3.0, 3.0]), entry(&[1.0, 3.0])]);
        assert_eq!(a, before);
    }

    #[test]
    fn duplicates_keep_first() {
        let mut a = ParetoArchive::new(10).unwrap();
        let mut first = entry(&[1.0, 2.0]);
        first.position = vec![42.0];
        a.update([first, entry(&[1.0, 2.0])]);
        assert_eq!(a.len(), 1);
        assert_eq!(a.entries()[0].position, vec![42.0]);
    }

    #[test]
    fn non_finite_candidates_skipped() {
        let mut a = ParetoArchive::new(4).unwrap();
        a.update([entry(&[f64::INFINITY, 0.0]), entry(&[f64::NAN, 1.0])]);
        assert!(a.is_empty());
    }

    #[test]
    fn capacity_enforced_keeping_extremes() {
        let mut a = ParetoArchive::new(3).unwrap();
        let pts: Vec<_> = (0..=10).map(|i| entry(&[i as f64 / 10.0, 1.0 - i as f64 / 10.0])).collect();
        a.update(pts);
        assert_eq!(a.len(), 3);
        let objs = a.objectives();
        assert!(objs.contains(&vec![0.0, 1.0]));
        assert!(objs.contains(&vec![1.0, 0.0]));
    }

    #[test]
    fn leader_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let empty: ParetoArchive<()> = ParetoArchive::new(3).unwrap();
        assert!(empty.select_leader(&mut rng).is_err());

        let mut single = ParetoArchive::new(3).unwrap();
        single.update([entry(&[0.3, 0.3])]);
        for _ in 0..10 {
            assert_eq!(single.select_leader(&mut rng).unwrap().objectives, vec![0.3, 0.3]);
        }

        let mut two = ParetoArchive::new(3).unwrap();
        two.update([entry(&[0.0, 1.0]), entry(&[1.0, 0.0])]);
        let mut counts = [0usize; 2];
        for _ in 0..1000 {
            let e = two.select_leader(&mut rng).unwrap();
            counts[if e.objectives[0] == 0.0 { 0 } else { 1 }] += 1;
        }
        assert!(counts[0] > 0 && counts[1] > 0, "{counts:?}");
    }

    #[test]
    fn leader_weights_prefer_sparse_regions() {
        let w = leader_weights(&[f64::INFINITY, 0.2, 0.6, f64::INFINITY]);
        assert_eq!(w, vec![1.2, 0.2, 0.6, 1.2]);
        assert_eq!(leader_weights(&[0.0, 0.0, 0.0]), vec![1.0; 3]);
        assert_eq!(leader_weights(&[f64::INFINITY; 2]), vec![1.0; 2]);
    }
}
