use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    adapt_population_size, adaptive_rates, crossover, local_search, mutate, non_dominated_sort, select_top_k,
    tournament_select, Chromosome, Evaluation, Evaluator, GeneSpace, HybridError, RefineStats, Refiner,
};
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub population: usize,
    pub population_min: usize,
    pub population_max: usize,
    pub elite: usize,
    pub max_iter: usize,
    pub tournament: usize,
    pub local_search_budget: usize,
    /// Extra mutation attempts for offspring that duplicate a member.
    pub duplicate_retries: usize,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub seed: u64,
    pub space: GeneSpace,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            population: 40,
            population_min: 20,
            population_max: 60,
            elite: 4,
            max_iter: 50,
            tournament: 2,
            local_search_budget: 16,
            duplicate_retries: 8,
            convergence_tol: 1e-4,
            convergence_window: 10,
            seed: 0,
            space: GeneSpace::default(),
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<(), HybridError> {
        let bad = |m: &str| Err(HybridError::Config(m.into()));
        if self.elite == 0 || self.elite > self.population_min {
            return bad("elite must be in [1, population_min]");
        }
        if !(self.population_min <= self.population && self.population <= self.population_max) {
            return bad("population must lie in [population_min, population_max]");
        }
        if self.max_iter == 0 || self.tournament == 0 {
            return bad("max_iter and tournament must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub pc_mean: f64,
    pub pm_mean: f64,
    pub population: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridResult {
    pub best: Chromosome,
    pub best_evaluation: Evaluation,
    pub trace: Vec<GenerationStats>,
    /// Every `(P_c, P_m)` pair drawn during the run.
    pub rates: Vec<(f64, f64)>,
    pub refine: RefineStats,
    pub converged: bool,
}

fn finite_stats(fit: &[f64]) -> (f64, f64) {
    let f: Vec<f64> = fit.iter().copied().filter(|v| v.is_finite()).collect();
    if f.is_empty() {
        return (f64::INFINITY, f64::INFINITY);
    }
    (f.iter().sum::<f64>() / f.len() as f64, f.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Rates for a lower-is-better fitness: goodness is `−fitness`, so the
/// best individual gets the smallest rates.
fn rates_for(f: f64, mean: f64, min: f64) -> (f64, f64) {
    if !(f.is_finite() && mean.is_finite()) {
        return (0.9, 0.1);
    }
    adaptive_rates(-f, -mean, -min).unwrap_or((0.9, 0.1))
}

/// Elite members: fronts are taken in order until at least `k` candidates
/// are pooled, then the `k` lowest fitnesses among them are kept.
fn choose_elite(evals: &[Evaluation], k: usize) -> Result<Vec<usize>, HybridError> {
    let objs: Vec<[f64; 3]> = evals
        .iter()
        .map(|e| if e.fitness.is_finite() { e.objectives.as_min_triple() } else { [f64::INFINITY; 3] })
        .collect();
    let mut pool = Vec::new();
    for front in non_dominated_sort(&objs) {
        pool.extend(front);
        if pool.len() >= k {
            break;
        }
    }
    pool.sort_unstable();
    let fit: Vec<f64> = pool.iter().map(|&i| evals[i].fitness).collect();
    Ok(select_top_k(&fit, k)?.into_iter().map(|i| pool[i]).collect())
}

/// Evolves placements from `initial`: evaluate, adapt rates, keep an elite,
/// refine it with the policy (when given) and local search, breed the rest
/// of the population, until convergence or `max_iter` generations.
pub fn hybrid_scheduling<E: Evaluator + ?Sized, T: Scalar>(
    initial: &Chromosome,
    config: &HybridConfig,
    eval: &mut E,
    mut refiner: Option<&mut Refiner<T>>,
) -> Result<HybridResult, HybridError> {
    config.validate()?;
    let space = &config.space;
    let (k_svc, n_nodes) = (initial.services, initial.nodes);
    let mut rng = rng_for(config.seed, stream::GA, 0);
    let mut pop = Vec::with_capacity(config.population);
    let mut first = initial.clone();
    if first.repair(space).is_ok() {
        pop.push(first);
    }
    while pop.len() < config.population {
        let mut made = None;
        for _ in 0..100 {
            if let Ok(c) = Chromosome::random(k_svc, n_nodes, space, &mut rng) {
                made = Some(c);
                break;
            }
        }
        pop.push(made.ok_or_else(|| HybridError::Config("no feasible chromosome after 100 repair attempts".into()))?);
    }
    let mut evals: Vec<Evaluation> = pop.iter().map(|c| eval.evaluate(c)).collect();
    let b0 = (0..pop.len()).min_by(|&a, &b| evals[a].fitness.total_cmp(&evals[b].fitness)).expect("non-empty");
    let (mut best, mut best_eval) = (pop[b0].clone(), evals[b0].clone());

    let mut n = config.population;
    let mut trace = Vec::new();
    let mut rates = Vec::new();
    let mut history = Vec::new();
    let mut refine_total = RefineStats::default();
    let mut converged = false;
    for g in 0..config.max_iter {
        let mut rng = rng_for(config.seed, stream::GA, g as u64 + 1);
        let fit: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
        let (mean, min) = finite_stats(&fit);

        let mut elite: Vec<(Chromosome, Evaluation)> =
            choose_elite(&evals, config.elite)?.into_iter().map(|i| (pop[i].clone(), evals[i].clone())).collect();
        if let Some(r) = refiner.as_deref_mut() {
            let st = r.refine(&mut elite, eval, space)?;
            refine_total.transitions += st.transitions;
            refine_total.discarded += st.discarded;
            refine_total.replaced += st.replaced;
        }
        if config.local_search_budget > 0 {
            let (c, f, _) = local_search(&elite[0].0, elite[0].1.fitness, config.local_search_budget, space, eval);
            if f < elite[0].1.fitness {
                elite[0].1 = eval.evaluate(&c);
                elite[0].0 = c;
            }
        }

        let mut offspring = Vec::with_capacity(n);
        let (mut pc_sum, mut pm_sum, mut pairs) = (0.0, 0.0, 0usize);
        while offspring.len() < n - config.elite {
            let a = tournament_select(&fit, config.tournament, &mut rng)?;
            let b = tournament_select(&fit, config.tournament, &mut rng)?;
            let (pc, _) = rates_for(fit[a].min(fit[b]), mean, min);
            let (c1, c2) = crossover(&pop[a], &pop[b], pc, space, &mut rng)?;
            let (_, pm1) = rates_for(fit[a], mean, min);
            let (_, pm2) = rates_for(fit[b], mean, min);
            for (child, pm) in [(c1, pm1), (c2, pm2)] {
                if offspring.len() >= n - config.elite {
                    break;
                }
                let mut m = mutate(&child, pm, space, &mut rng)?;
                // Re-mutate clones of existing members a bounded number of
                // times to keep the population diverse.
                for _ in 0..config.duplicate_retries {
                    let dup = elite.iter().any(|(e, _)| *e == m) || offspring.contains(&m);
                    if !dup {
                        break;
                    }
                    m = mutate(&m, pm, space, &mut rng)?;
                }
                offspring.push(m);
            }
            rates.push((pc, pm1));
            rates.push((pc, pm2));
            pc_sum += pc;
            pm_sum += 0.5 * (pm1 + pm2);
            pairs += 1;
        }

        let off_evals: Vec<Evaluation> = offspring.iter().map(|c| eval.evaluate(c)).collect();
        pop = elite.iter().map(|(c, _)| c.clone()).chain(offspring).collect();
        evals = elite.into_iter().map(|(_, e)| e).chain(off_evals).collect();
        for (c, e) in pop.iter().zip(&evals) {
            if e.fitness < best_eval.fitness {
                best = c.clone();
                best_eval = e.clone();
            }
        }
        let (pop_mean, _) = finite_stats(&evals.iter().map(|e| e.fitness).collect::<Vec<_>>());
        trace.push(GenerationStats {
            generation: g,
            best_fitness: best_eval.fitness,
            mean_fitness: pop_mean,
            pc_mean: if pairs > 0 { pc_sum / pairs as f64 } else { f64::NAN },
            pm_mean: if pairs > 0 { pm_sum / pairs as f64 } else { f64::NAN },
            population: pop.len(),
        });
        history.push(best_eval.fitness);
        if history.len() > config.convergence_window {
            let then = history[history.len() - 1 - config.convergence_window];
            if then - best_eval.fitness < config.convergence_tol {
                converged = true;
                break;
            }
        }
        let next = adapt_population_size(&history, n, config.population_min, config.population_max);
        if next < pop.len() {
            let keep = select_top_k(&evals.iter().map(|e| e.fitness).collect::<Vec<_>>(), next)?;
            pop = keep.iter().map(|&i| pop[i].clone()).collect();
            evals = keep.iter().map(|&i| evals[i].clone()).collect();
        }
        n = next;
    }
    Ok(HybridResult { best, best_evaluation: best_eval, trace, rates, refine: refine_total, converged })
}

pub fn write_generation_csv<W: Write>(trace: &[GenerationStats], out: W) -> Result<(), HybridError> {
    let mut w = csv::Writer::from_writer(out);
    for s in trace {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
