use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use tradesim_core::cluster::{write_trace_csv, Cluster};
use tradesim_core::drl::{train_scheduler, write_curve_csv, ClusterEnv, DrlError, Env, PolicyConfig, PolicyNet};
use tradesim_core::experiment::{run_experiment, tidal_burst_day, training_days, write_decisions_csv};
use tradesim_core::lstm::{
    read_dataset_csv, split_series, write_dataset_csv, write_loss_curve_csv, LoadPredictor, PredictorReport,
};
use tradesim_core::metrics::{compare_runs, write_comparison_csv, RunSummary};
use tradesim_core::nn::Checkpoint;
use tradesim_core::rng::{rng_for, stream};
use tradesim_core::workload::{MarketTick, WorkloadGenerator, WorkloadScenario};

use crate::config::{
    require_file, resolve_scenario, resolve_topology, CompareConfig, GenerateConfig, SimulateConfig, TrainDrlConfig,
    TrainPredictorConfig,
};
use crate::Failure;

/// Prints `cfg` and stores it as `config.json` under `out`.
fn echo<T: Serialize>(cfg: &T, out: &Path) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    println!("{text}");
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), format!("{text}\n"))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

pub fn generate(cfg: GenerateConfig) -> Result<(), Failure> {
    if cfg.days == 0 {
        return Err(Failure::config("days must be >= 1"));
    }
    let scenarios: Vec<WorkloadScenario> = if cfg.days > 1 {
        if cfg.scenario != "tidal-burst" {
            return Err(Failure::config("days > 1 is only supported for the tidal-burst preset"));
        }
        training_days(cfg.seed, 0, cfg.days)
    } else if cfg.scenario == "tidal-burst" {
        vec![tidal_burst_day(cfg.seed, 0, 3.0)]
    } else {
        vec![resolve_scenario(&cfg.scenario, cfg.seed)?]
    };
    echo(&cfg, &cfg.out)?;

    let mut market: Vec<MarketTick> = Vec::new();
    let mut requests = if cfg.requests { Some(create(&cfg.out.join("requests.csv"))?) } else { None };
    if let Some(w) = requests.as_mut() {
        writeln!(w, "day,tick,service_id,work_units,payload_bytes")?;
    }
    let mut total = 0u64;
    let mut buf = Vec::new();
    for sc in scenarios {
        let day = sc.clock.start_day;
        let g = WorkloadGenerator::new(sc).map_err(|e| Failure::config(e.to_string()))?;
        for t in 0..g.scenario().horizon {
            buf.clear();
            g.generate_into(t, &mut buf).map_err(Failure::runtime)?;
            total += buf.len() as u64;
            if let Some(w) = requests.as_mut() {
                for r in &buf {
                    writeln!(w, "{day},{t},{},{},{}", r.service_id, r.work_units, r.payload_bytes)?;
                }
            }
            market.push(g.market_tick(t).map_err(Failure::runtime)?);
        }
    }
    if let Some(mut w) = requests {
        w.flush()?;
    }
    write_dataset_csv(&market, create(&cfg.out.join("market.csv"))?)?;
    eprintln!("generated {total} requests over {} ticks", market.len());
    Ok(())
}

pub fn simulate(cfg: SimulateConfig) -> Result<(), Failure> {
    require_file("predictor", &cfg.predictor)?;
    require_file("policy", &cfg.policy)?;
    if cfg.seeds.is_empty() {
        return Err(Failure::config("seeds: at least one seed is required"));
    }
    cfg.run.validate()?;
    let topology = resolve_topology(&cfg.topology)?;
    for &seed in &cfg.seeds {
        resolve_scenario(&cfg.scenario, seed)?;
    }
    let predictor = match &cfg.predictor {
        Some(p) => Some(LoadPredictor::<f64>::from_checkpoint(&load_checkpoint(p)?)?),
        None => None,
    };
    let policy = match &cfg.policy {
        Some(p) => Some(PolicyNet::<f64>::from_checkpoint(&load_checkpoint(p)?)?),
        None => None,
    };
    echo(&cfg, &cfg.out)?;

    for &seed in &cfg.seeds {
        let scenario = resolve_scenario(&cfg.scenario, seed)?;
        let mut run = cfg.run.clone();
        run.seed = seed;
        let out = run_experiment(&topology, &scenario, &run, predictor.as_ref(), policy.clone())?;
        let s = &out.summary;
        if run.record_trace {
            write_trace_csv(&out.trace, create(&cfg.out.join(format!("trace-seed{seed}.csv")))?)
                .map_err(Failure::runtime)?;
        }
        write_decisions_csv(&out.decisions, create(&cfg.out.join(format!("decisions-seed{seed}.csv")))?)?;
        fs::write(cfg.out.join(format!("summary-seed{seed}.json")), format!("{}\n", s.to_json()))?;
        eprintln!(
            "seed {seed}: {} p95 {:.1} ms, mean {:.1} ms, {:.0} TPS, fitness {:.4}, first scale-up {}",
            s.scheduler,
            s.p95_ms,
            s.latency_mean_ms,
            s.achieved_tps,
            s.fitness,
            s.first_scale_up_tick.map_or("none".into(), |t| t.to_string())
        );
    }
    Ok(())
}

pub fn train_predictor(cfg: TrainPredictorConfig) -> Result<(), Failure> {
    if cfg.datasets.is_empty() {
        return Err(Failure::config("datasets: at least one dataset CSV is required"));
    }
    for d in &cfg.datasets {
        require_file("datasets", &Some(d.clone()))?;
    }
    cfg.predictor.validate()?;
    echo(&cfg, &cfg.out)?;
    let mut series = Vec::new();
    for d in &cfg.datasets {
        let rows = read_dataset_csv(File::open(d)?).map_err(|e| Failure::config(format!("{}: {e}", d.display())))?;
        series.extend(split_series(&rows));
    }
    let (p, report): (LoadPredictor<f32>, PredictorReport) = LoadPredictor::fit(&series, cfg.predictor.clone())?;
    p.to_checkpoint().save(&cfg.out.join("predictor.json")).map_err(Failure::runtime)?;
    write_loss_curve_csv(&report.train.curve, create(&cfg.out.join("predictor-curve.csv"))?)?;
    fs::write(
        cfg.out.join("predictor-report.json"),
        format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")),
    )?;
    eprintln!(
        "trained on {} samples; validation accuracy {:.3} over {} samples, band coverage {:.3}",
        report.train_samples,
        report.validation_accuracy.fraction,
        report.validation_samples,
        report.band_coverage
    );
    Ok(())
}

pub fn train_drl(mut cfg: TrainDrlConfig) -> Result<(), Failure> {
    cfg.env.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.train.validate()?;
    let topology = resolve_topology(&cfg.topology)?;
    let scenario = resolve_scenario(&cfg.scenario, cfg.seed)?;
    let cluster = Cluster::new(topology).map_err(|e| Failure::config(e.to_string()))?;
    let generator = WorkloadGenerator::new(scenario).map_err(|e| Failure::config(e.to_string()))?;
    let mut env = ClusterEnv::new(cluster, generator, cfg.env.clone())?;
    echo(&cfg, &cfg.out)?;

    let pc = PolicyConfig { hidden: cfg.hidden.clone(), ..PolicyConfig::new(env.state_dim(), env.layout()) };
    let mut policy = PolicyNet::<f64>::new(pc);
    policy.init(&mut rng_for(cfg.seed, stream::POLICY, 0));
    match train_scheduler(&mut policy, &mut env, &cfg.train) {
        Ok(curve) => {
            policy.to_checkpoint().save(&cfg.out.join("policy.json")).map_err(Failure::runtime)?;
            write_curve_csv(&curve, create(&cfg.out.join("drl-curve.csv"))?)?;
            if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
                eprintln!("mean reward {:.4} -> {:.4} over {} episodes", first.mean_reward, last.mean_reward, curve.len());
            }
            Ok(())
        }
        Err(DrlError::Divergence { episode, loss, snapshot }) => {
            snapshot.save(&cfg.out.join("divergence-snapshot.json")).map_err(Failure::runtime)?;
            Err(Failure::Divergence(format!("episode {episode}, loss {loss}; snapshot written")))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn compare(cfg: CompareConfig) -> Result<(), Failure> {
    let read = |p: &Path| -> Result<RunSummary, Failure> {
        let text = fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
        RunSummary::from_json(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))
    };
    let baseline = read(&cfg.baseline)?;
    let candidate = read(&cfg.candidate)?;
    let rows = compare_runs(&baseline, &candidate).map_err(|e| Failure::config(e.to_string()))?;
    echo(&cfg, &cfg.out)?;
    write_comparison_csv(&rows, create(&cfg.out.join("comparison.csv"))?).map_err(Failure::runtime)?;
    for r in &rows {
        let imp = r.improvement_pct.map_or("n/a".into(), |v| format!("{v:+.1}%"));
        eprintln!("{:<18} {:>14.3} {:>14.3} {:>9}", r.metric, r.baseline, r.candidate, imp);
    }
    Ok(())
}
