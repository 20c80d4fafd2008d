use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HybridError;
use crate::cluster::PlacementPlan;

const LOAD_EPS: f64 = 1e-9;
const REPAIR_ROUNDS: usize = 10_000;

/// Bounds and step sizes of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSpace {
    pub max_per_cell: u32,
    pub max_per_node: u32,
    pub min_quota: f64,
    /// When set, quotas live on the grid `step, 2·step, …, ≤ 1` and mutate
    /// by one grid step.
    pub quota_step: Option<f64>,
    pub evolve_priority: bool,
    /// Standard deviation of Gaussian steps on continuous genes.
    pub sigma: f64,
}

impl Default for GeneSpace {
    fn default() -> Self {
        Self { max_per_cell: 4, max_per_node: 16, min_quota: 0.01, quota_step: None, evolve_priority: true, sigma: 0.05 }
    }
}

impl GeneSpace {
    pub fn quota_levels(&self) -> Option<Vec<f64>> {
        self.quota_step.map(|s| {
            let n = (1.0 / s + 1e-9).floor() as usize;
            (1..=n).map(|i| i as f64 * s).collect()
        })
    }

    pub fn lowest_quota(&self) -> f64 {
        self.quota_step.unwrap_or(self.min_quota)
    }

    pub fn snap_quota(&self, q: f64) -> f64 {
        let q = if q.is_finite() { q } else { self.lowest_quota() };
        match self.quota_step {
            Some(s) => {
                let top = (1.0 / s + 1e-9).floor();
                (q / s).round().clamp(1.0, top) * s
            }
            None => q.clamp(self.min_quota, 1.0),
        }
    }
}

/// Instance counts per (service, node) plus per-service quota and priority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub services: usize,
    pub nodes: usize,
    /// Service-major `[service][node]`.
    pub counts: Vec<u32>,
    pub quota: Vec<f64>,
    pub priority: Vec<f64>,
}

impl Chromosome {
    pub fn from_plan(plan: &PlacementPlan) -> Self {
        Self {
            services: plan.services,
            nodes: plan.nodes,
            counts: plan.counts.clone(),
            quota: plan.quota.clone(),
            priority: plan.priority.clone(),
        }
    }

    pub fn to_plan(&self) -> PlacementPlan {
        PlacementPlan {
            services: self.services,
            nodes: self.nodes,
            counts: self.counts.clone(),
            quota: self.quota.clone(),
            priority: self.priority.clone(),
        }
    }

    /// Uniformly random genes, then repaired.
    pub fn random<R: Rng + ?Sized>(
        services: usize,
        nodes: usize,
        space: &GeneSpace,
        rng: &mut R,
    ) -> Result<Self, HybridError> {
        let counts = (0..services * nodes).map(|_| rng.random_range(0..=space.max_per_cell)).collect();
        let quota = (0..services).map(|_| space.snap_quota(rng.random_range(space.lowest_quota()..=1.0))).collect();
        let priority = (0..services).map(|_| if space.evolve_priority { rng.random_range(0.0..=1.0) } else { 0.5 }).collect();
        let mut c = Self { services, nodes, counts, quota, priority };
        c.repair(space)?;
        Ok(c)
    }

    #[inline]
    pub fn count(&self, s: usize, j: usize) -> u32 {
        self.counts[s * self.nodes + j]
    }

    #[inline]
    pub fn count_mut(&mut self, s: usize, j: usize) -> &mut u32 {
        &mut self.counts[s * self.nodes + j]
    }

    pub fn service_total(&self, s: usize) -> u32 {
        (0..self.nodes).map(|j| self.count(s, j)).sum()
    }

    pub fn node_instances(&self, j: usize) -> u32 {
        (0..self.services).map(|s| self.count(s, j)).sum()
    }

    /// Quota committed on node `j`.
    pub fn node_load(&self, j: usize) -> f64 {
        (0..self.services).map(|s| self.count(s, j) as f64 * self.quota[s]).sum()
    }

    /// Number of genes the variation operators act on.
    pub fn gene_count(&self, space: &GeneSpace) -> usize {
        self.counts.len() + self.services + if space.evolve_priority { self.services } else { 0 }
    }

    pub fn is_valid(&self, space: &GeneSpace) -> bool {
        self.counts.len() == self.services * self.nodes
            && self.quota.len() == self.services
            && self.priority.len() == self.services
            && (0..self.services).all(|s| self.service_total(s) >= 1)
            && (0..self.nodes).all(|j| self.node_load(j) <= 1.0 + LOAD_EPS && self.node_instances(j) <= space.max_per_node)
            && self.counts.iter().all(|&c| c <= space.max_per_cell)
            && self.quota.iter().all(|&q| q >= space.lowest_quota() - LOAD_EPS && q <= 1.0)
            && self.priority.iter().all(|&p| (0.0..=1.0).contains(&p))
    }

    /// L1 distance over all genes.
    pub fn distance(&self, o: &Self) -> f64 {
        let c: f64 = self.counts.iter().zip(&o.counts).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum();
        let q: f64 = self.quota.iter().zip(&o.quota).map(|(a, b)| (a - b).abs()).sum();
        let p: f64 = self.priority.iter().zip(&o.priority).map(|(a, b)| (a - b).abs()).sum();
        c + q + p
    }

    /// Bit-exact identity used for memoizing evaluations.
    pub fn key(&self) -> Vec<u64> {
        let mut k: Vec<u64> = self.counts.iter().map(|&c| c as u64).collect();
        k.extend(self.quota.iter().map(|q| q.to_bits()));
        k.extend(self.priority.iter().map(|p| p.to_bits()));
        k
    }

    fn remove_from_node(&mut self, j: usize) -> bool {
        let victim = (0..self.services)
            .filter(|&s| self.count(s, j) > 0 && self.service_total(s) > 1)
            .max_by(|&a, &b| self.count(a, j).cmp(&self.count(b, j)).then(b.cmp(&a)));
        match victim {
            Some(s) => {
                *self.count_mut(s, j) -= 1;
                true
            }
            None => false,
        }
    }

    /// Makes the chromosome satisfy the invariants with small edits: caps
    /// counts, restores a missing service, clamps or snaps continuous genes
    /// and lowers quota (then instances) on over-committed nodes.
    pub fn repair(&mut self, space: &GeneSpace) -> Result<(), HybridError> {
        let (k, n) = (self.services, self.nodes);
        if self.counts.len() != k * n || self.quota.len() != k || self.priority.len() != k || k == 0 || n == 0 {
            return Err(HybridError::Infeasible("chromosome shape does not match services × nodes".into()));
        }
        for c in &mut self.counts {
            *c = (*c).min(space.max_per_cell);
        }
        for q in &mut self.quota {
            *q = space.snap_quota(*q);
        }
        for p in &mut self.priority {
            *p = if p.is_finite() { p.clamp(0.0, 1.0) } else { 0.5 };
        }
        for j in 0..n {
            while self.node_instances(j) > space.max_per_node {
                if !self.remove_from_node(j) {
                    return Err(HybridError::Infeasible(format!("node {j} exceeds the instance cap")));
                }
            }
        }
        for s in 0..k {
            if self.service_total(s) == 0 {
                let dst = (0..n)
                    .filter(|&j| self.node_instances(j) < space.max_per_node)
                    .min_by(|&a, &b| self.node_load(a).total_cmp(&self.node_load(b)).then(a.cmp(&b)))
                    .ok_or_else(|| HybridError::Infeasible(format!("no room for service {s}")))?;
                *self.count_mut(s, dst) = 1;
            }
        }
        let levels = space.quota_levels();
        for _ in 0..REPAIR_ROUNDS {
            let Some(j) = (0..n)
                .filter(|&j| self.node_load(j) > 1.0 + LOAD_EPS)
                .max_by(|&a, &b| self.node_load(a).total_cmp(&self.node_load(b)))
            else {
                return Ok(());
            };
            let lowered = match &levels {
                Some(lv) => {
                    let s = (0..k)
                        .filter(|&s| self.count(s, j) > 0 && self.quota[s] > lv[0] + LOAD_EPS)
                        .max_by(|&a, &b| {
                            (self.count(a, j) as f64 * self.quota[a])
                                .total_cmp(&(self.count(b, j) as f64 * self.quota[b]))
                                .then(b.cmp(&a))
                        });
                    match s {
                        Some(s) => {
                            let i = lv.iter().position(|&l| (l - self.quota[s]).abs() < 1e-9).unwrap_or(1);
                            self.quota[s] = lv[i.saturating_sub(1)];
                            true
                        }
                        None => false,
                    }
                }
                None => {
                    let f = 1.0 / self.node_load(j);
                    let mut changed = false;
                    for s in 0..k {
                        if self.count(s, j) > 0 {
                            let q = (self.quota[s] * f).max(space.min_quota);
                            changed |= q < self.quota[s];
                            self.quota[s] = q;
                        }
                    }
                    changed
                }
            };
            if !lowered && !self.remove_from_node(j) {
                return Err(HybridError::Infeasible(format!("node {j} cannot be brought under its capacity")));
            }
        }
        Err(HybridError::Infeasible("repair did not converge".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn repair_restores_invariants() {
        let space = GeneSpace::default();
        let mut c = Chromosome {
            services: 2,
            nodes: 2,
            counts: vec![9, 3, 0, 0],
            quota: vec![0.6, f64::NAN],
            priority: vec![2.0, -1.0],
        };
        c.repair(&space).unwrap();
        assert!(c.is_valid(&space), "{c:?}");
        assert!(c.service_total(1) >= 1);
    }

    #[test]
    fn grid_repair_keeps_quota_on_grid() {
        let space = GeneSpace { quota_step: Some(0.25), max_per_cell: 2, evolve_priority: false, ..Default::default() };
        for seed in 0..50 {
            let c = Chromosome::random(2, 2, &space, &mut rng_for(seed, 0, 0)).unwrap();
            assert!(c.is_valid(&space));
            for q in &c.quota {
                assert!(((q / 0.25) - (q / 0.25).round()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn plan_round_trip() {
        let c = Chromosome { services: 1, nodes: 2, counts: vec![1, 2], quota: vec![0.2], priority: vec![0.4] };
        assert_eq!(Chromosome::from_plan(&c.to_plan()), c);
    }
}
