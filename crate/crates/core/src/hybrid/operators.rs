use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Chromosome, Evaluator, GeneSpace, HybridError};

/// Adaptive crossover and mutation probabilities from the goodness `f′`
/// of the individual(s) involved (higher is better). The ratio
/// `(f′ − f_avg)/(f_max − f_avg)` is clamped at 0 from below.
pub fn adaptive_rates(f_prime: f64, f_avg: f64, f_max: f64) -> Result<(f64, f64), HybridError> {
    if !(f_max >= f_avg) {
        return Err(HybridError::Argument(format!("f_max {f_max} below f_avg {f_avg}")));
    }
    if f_max == f_avg {
        return Ok((0.9, 0.1));
    }
    let r = ((f_prime - f_avg) / (f_max - f_avg)).clamp(0.0, 1.0);
    Ok((0.9 - 0.6 * r, 0.1 - 0.07 * r))
}

/// Index of the lowest fitness among `size` uniform draws (with
/// replacement); the earlier draw wins ties.
pub fn tournament_select<R: Rng + ?Sized>(fitness: &[f64], size: usize, rng: &mut R) -> Result<usize, HybridError> {
    if fitness.is_empty() {
        return Err(HybridError::Argument("tournament on an empty population".into()));
    }
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size.max(1) {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] < fitness[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Uniform crossover with probability `pc`; children are repaired.
pub fn crossover<R: Rng + ?Sized>(
    a: &Chromosome,
    b: &Chromosome,
    pc: f64,
    space: &GeneSpace,
    rng: &mut R,
) -> Result<(Chromosome, Chromosome), HybridError> {
    let (mut c1, mut c2) = (a.clone(), b.clone());
    if rng.random::<f64>() < pc {
        for i in 0..a.counts.len() {
            if rng.random_bool(0.5) {
                std::mem::swap(&mut c1.counts[i], &mut c2.counts[i]);
            }
        }
        for s in 0..a.services {
            if rng.random_bool(0.5) {
                std::mem::swap(&mut c1.quota[s], &mut c2.quota[s]);
            }
            if space.evolve_priority && rng.random_bool(0.5) {
                std::mem::swap(&mut c1.priority[s], &mut c2.priority[s]);
            }
        }
    }
    c1.repair(space)?;
    c2.repair(space)?;
    Ok((c1, c2))
}

/// Each gene changes with probability `pm`: counts by ±1 (toward the
/// feasible side at a bound), quota and priority by a Gaussian step or one
/// grid step. The result is repaired.
pub fn mutate<R: Rng + ?Sized>(x: &Chromosome, pm: f64, space: &GeneSpace, rng: &mut R) -> Result<Chromosome, HybridError> {
    let mut c = x.clone();
    let normal = Normal::new(0.0, space.sigma.max(0.0)).map_err(|e| HybridError::Argument(e.to_string()))?;
    for i in 0..c.counts.len() {
        if rng.random::<f64>() < pm {
            let up = rng.random_bool(0.5);
            let v = c.counts[i];
            c.counts[i] = if (up && v < space.max_per_cell) || v == 0 { v + 1 } else { v - 1 };
        }
    }
    for s in 0..c.services {
        if rng.random::<f64>() < pm {
            c.quota[s] = match space.quota_step {
                Some(step) => c.quota[s] + if rng.random_bool(0.5) { step } else { -step },
                None => c.quota[s] + normal.sample(rng),
            };
            c.quota[s] = space.snap_quota(c.quota[s]);
        }
        if space.evolve_priority && rng.random::<f64>() < pm {
            c.priority[s] = (c.priority[s] + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
    c.repair(space)?;
    Ok(c)
}

/// Indices of the `k` lowest fitnesses; ties keep insertion order.
pub fn select_top_k(fitness: &[f64], k: usize) -> Result<Vec<usize>, HybridError> {
    if k > fitness.len() {
        return Err(HybridError::Argument(format!("k = {k} exceeds population {}", fitness.len())));
    }
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    idx.truncate(k);
    Ok(idx)
}

/// `a` dominates `b` when it is no worse everywhere and better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Pareto fronts of minimization objectives, each in ascending index order.
pub fn non_dominated_sort(objs: &[[f64; 3]]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(&objs[i], &objs[j]) {
                dominates_list[i].push(j);
            } else if i != j && dominates(&objs[j], &objs[i]) {
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    fronts
}

/// Shrinks the population by 25% when the best fitness improved by less
/// than 0.1% over the last five generations, grows it by 25% above 5%.
pub fn adapt_population_size(best_history: &[f64], n: usize, n_min: usize, n_max: usize) -> usize {
    if best_history.len() < 6 {
        return n.clamp(n_min, n_max);
    }
    let prev = best_history[best_history.len() - 6];
    let cur = best_history[best_history.len() - 1];
    let gain = if prev.is_finite() && cur.is_finite() { (prev - cur) / prev.abs().max(1e-12) } else { 1.0 };
    let next = if gain < 0.001 {
        (n as f64 * 0.75).round() as usize
    } else if gain > 0.05 {
        (n as f64 * 1.25).round() as usize
    } else {
        n
    };
    next.clamp(n_min, n_max)
}

/// Single-gene neighbors in a fixed order: each count ±1, each quota ±1
/// step, then each priority ±1 step. Neighbors are repaired; ones that
/// repair back to `x` or fail are dropped.
pub fn neighbors(x: &Chromosome, space: &GeneSpace) -> Vec<Chromosome> {
    let step = space.quota_step.unwrap_or(space.sigma.max(1e-3));
    let mut out = Vec::new();
    let mut push = |mut c: Chromosome| {
        if c.repair(space).is_ok() && c != *x && !out.contains(&c) {
            out.push(c);
        }
    };
    for i in 0..x.counts.len() {
        for d in [1i64, -1] {
            let v = x.counts[i] as i64 + d;
            if v >= 0 && v <= space.max_per_cell as i64 {
                let mut c = x.clone();
                c.counts[i] = v as u32;
                push(c);
            }
        }
    }
    for s in 0..x.services {
        for d in [step, -step] {
            let mut c = x.clone();
            c.quota[s] = space.snap_quota(x.quota[s] + d);
            push(c);
        }
    }
    if space.evolve_priority {
        for s in 0..x.services {
            for d in [space.sigma, -space.sigma] {
                let mut c = x.clone();
                c.priority[s] = (x.priority[s] + d).clamp(0.0, 1.0);
                push(c);
            }
        }
    }
    out
}

/// First-improvement hill climbing with at most `budget` evaluations.
/// Returns the best chromosome found, its fitness and evaluations used.
pub fn local_search<E: Evaluator + ?Sized>(
    x: &Chromosome,
    fitness_x: f64,
    budget: usize,
    space: &GeneSpace,
    eval: &mut E,
) -> (Chromosome, f64, usize) {
    let (mut best, mut best_f) = (x.clone(), fitness_x);
    let mut used = 0;
    'outer: while used < budget {
        for c in neighbors(&best, space) {
            if used >= budget {
                break 'outer;
            }
            used += 1;
            let f = eval.evaluate(&c).fitness;
            if f < best_f {
                best = c;
                best_f = f;
                continue 'outer;
            }
        }
        break;
    }
    (best, best_f, used)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_examples() {
        assert_eq!(adaptive_rates(1.0, 0.0, 1.0).unwrap(), (0.9 - 0.6, 0.1 - 0.07));
        let (pc, pm) = adaptive_rates(1.0, 0.0, 1.0).unwrap();
        assert!((pc - 0.3).abs() < 1e-15 && (pm - 0.03).abs() < 1e-15);
        assert_eq!(adaptive_rates(0.0, 0.0, 1.0).unwrap(), (0.9, 0.1));
        let (pc, pm) = adaptive_rates(0.5, 0.0, 1.0).unwrap();
        assert!((pc - 0.6).abs() < 1e-15 && (pm - 0.065).abs() < 1e-15);
        assert_eq!(adaptive_rates(-3.0, 0.0, 1.0).unwrap(), (0.9, 0.1));
        assert_eq!(adaptive_rates(0.4, 0.4, 0.4).unwrap(), (0.9, 0.1));
        assert!(adaptive_rates(0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn population_size_rules() {
        let flat = [1.0; 6];
        assert_eq!(adapt_population_size(&flat, 40, 20, 60), 30);
        assert_eq!(adapt_population_size(&flat, 20, 20, 60), 20);
        let fast = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5];
        assert_eq!(adapt_population_size(&fast, 40, 20, 60), 50);
        let mid = [1.0, 1.0, 1.0, 1.0, 1.0, 0.98];
        assert_eq!(adapt_population_size(&mid, 40, 20, 60), 40);
    }

    #[test]
    fn fronts_of_small_sets() {
        assert_eq!(non_dominated_sort(&[[1.0, 2.0, 3.0]]), vec![vec![0]]);
        assert_eq!(non_dominated_sort(&[[1.0, 2.0, 0.0], [2.0, 1.0, 0.0]]), vec![vec![0, 1]]);
        assert_eq!(non_dominated_sort(&[[2.0, 2.0, 2.0], [1.0, 1.0, 1.0]]), vec![vec![1], vec![0]]);
    }

    #[test]
    fn top_k_is_stable() {
        assert_eq!(select_top_k(&[3.0, 1.0, 1.0, 0.5], 3).unwrap(), vec![3, 1, 2]);
        assert!(select_top_k(&[1.0], 2).is_err());
    }
}
