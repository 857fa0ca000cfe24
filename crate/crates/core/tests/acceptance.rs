//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or exceeds its time limit.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlevo::chromosome::{ChromosomeValues, DENSENET121_BLOCKS};
use tlevo::config::RunConfigFile;
use tlevo::fitness::{LookupEntry, DEFAULT_EPOCHS};
use tlevo::ga::plateau_reached;
use tlevo::metrics::chi_square_1_upper_tail;
use tlevo::{
    auc, map_to_architecture, mcnemar, run, Chromosome, ContingencyTable, EvaluatorError, FitnessEvaluator,
    FnEvaluator, GaConfig, GeneDomains, LayerRange, LookupTable, ScoredLabels, Search, StopReason, SyntheticLandscape,
    TrainerBridge,
};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

const PLATEAU_DELTA: f64 = 9.5259e-5;

fn ga_defaults() -> Result<String, String> {
    let c = GaConfig::default();
    ensure!(c.population_size == 10, "population_size {}", c.population_size);
    ensure!(c.mutation_rate == 0.10, "mutation_rate {}", c.mutation_rate);
    ensure!(c.tournament_draws == 2, "tournament_draws {}", c.tournament_draws);
    ensure!(c.max_generations == 10, "max_generations {}", c.max_generations);
    ensure!(c.plateau_epsilon == 0.001, "plateau_epsilon {}", c.plateau_epsilon);
    ensure!(c.epochs == DEFAULT_EPOCHS && DEFAULT_EPOCHS == 5, "epochs {}", c.epochs);
    ensure!(
        c.domains == GeneDomains::default(),
        "domains differ from the default box"
    );
    ensure!(c.domains.box_size() == 59_508, "box size {}", c.domains.box_size());
    ensure!(
        RunConfigFile::default().ga_config() == c,
        "config-file defaults differ from engine defaults"
    );

    let ev = FnEvaluator::new(|_, _| Ok(0.37));
    let r = run(
        GaConfig {
            max_generations: 1,
            ..GaConfig::with_seed(0)
        },
        &ev,
    )
    .map_err(|e| e.to_string())?;
    let g = &r.generations[0];
    ensure!(g.population.len() == 10, "population of {}", g.population.len());
    ensure!(
        g.population.iter().all(|e| e.fitness == -0.37),
        "fitness is not the negated loss"
    );

    let ev = FnEvaluator::new(|_, _| Ok(0.5));
    let r = run(GaConfig::with_seed(0), &ev).map_err(|e| e.to_string())?;
    ensure!(
        r.stop_reason == StopReason::Plateau && r.generations.len() == 2,
        "constant loss did not plateau"
    );
    let landscape = SyntheticLandscape::reference().with_noise(1.0, 3);
    let r = run(GaConfig::with_seed(0), &landscape).map_err(|e| e.to_string())?;
    ensure!(r.generations.len() <= 10, "{} generations", r.generations.len());
    Ok("pop 10, mutation 0.10, tournament 2, fitness = -loss, cap 10, epsilon 0.001".into())
}

fn two_gene_table(domains: &GeneDomains) -> Result<LookupTable, String> {
    // included 2 adds 10 * delta, so each member changes the average by delta;
    // dropout 0.2 adds 0.1, so each member changes it by 0.01
    let mut entries = Vec::new();
    for inc in [1u32, 2] {
        for dropout in [0.1, 0.2] {
            let loss = 0.3 + if inc == 2 { 10.0 * PLATEAU_DELTA } else { 0.0 } + if dropout == 0.2 { 0.1 } else { 0.0 };
            let values = ChromosomeValues {
                included_layers: inc,
                frozen_layers: 0,
                learning_rate: 0.1,
                dropout,
            };
            entries.push(LookupEntry::new(values, loss));
        }
    }
    LookupTable::from_entries(domains.clone(), &entries).map_err(|e| e.to_string())
}

fn plateau_semantics() -> Result<String, String> {
    // trace level: eight large moves, then the observed delta
    let mut avgs = vec![-0.9];
    for i in 0..8 {
        avgs.push(avgs[i] + 0.05);
    }
    avgs.push(avgs[8] + PLATEAU_DELTA);
    let stop = (1..avgs.len()).find(|&i| plateau_reached(avgs[i - 1], avgs[i], 0.001));
    ensure!(stop == Some(9), "trace stopped at {stop:?}");

    // run level: scripted lookup evaluator
    let domains = GeneDomains::new(LayerRange::new(1, 2), LayerRange::new(0, 0), vec![0.1], vec![0.1, 0.2])
        .map_err(|e| e.to_string())?;
    let table = two_gene_table(&domains)?;
    let cfg = |seed| GaConfig {
        domains: domains.clone(),
        ..GaConfig::with_seed(seed)
    };
    let mut late = None;
    for seed in 0..1000u64 {
        let r = run(cfg(seed), &table).map_err(|e| e.to_string())?;
        let n = r.generations.len();
        if r.stop_reason != StopReason::Plateau || n != 10 {
            continue;
        }
        let d = (r.generations[n - 1].avg_fitness - r.generations[n - 2].avg_fitness).abs();
        if (d - PLATEAU_DELTA).abs() < 1e-12 {
            late = Some((seed, r));
            break;
        }
    }
    let (seed, r) = late.ok_or("no seed in 0..1000 plateaus at generation 9 with the observed delta")?;
    for w in r.generations[..9].windows(2) {
        let d = (w[1].avg_fitness - w[0].avg_fitness).abs();
        ensure!(d >= 0.001, "generation {} already plateaued ({d})", w[1].index);
    }
    // control: an epsilon below the delta runs on to the cap
    let r2 = run(
        GaConfig {
            plateau_epsilon: 9.0e-5,
            ..cfg(seed)
        },
        &table,
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        r2.stop_reason == StopReason::GenerationCap,
        "control stopped with {:?}",
        r2.stop_reason
    );
    Ok(format!(
        "trace and lookup run (seed {seed}) stop at generation 9 on |delta avg| = 9.5259e-5"
    ))
}

fn search_effectiveness() -> Result<String, String> {
    let landscape = SyntheticLandscape::reference();
    let losses = common::enumerated_losses(&landscape);
    ensure!(losses.len() == 59_508, "enumerated {} points", losses.len());
    let n = losses.len();
    let top1 = losses[n / 100];
    let median = (losses[n / 2 - 1] + losses[n / 2]) / 2.0;
    let mut in_top = 0;
    let mut beat_median = 0;
    for seed in 0..20u64 {
        let r = run(GaConfig::with_seed(seed), &landscape).map_err(|e| e.to_string())?;
        ensure!(
            r.generations.len() <= 10,
            "seed {seed} ran {} generations",
            r.generations.len()
        );
        ensure!(r.stop_reason != StopReason::EvaluatorFailure, "seed {seed} failed");
        let loss = -r.best.ok_or("no best")?.fitness;
        in_top += usize::from(loss <= top1);
        beat_median += usize::from(loss < median);
    }
    ensure!(
        in_top >= 15,
        "only {in_top}/20 runs reached the top 1% (loss <= {top1})"
    );
    ensure!(beat_median == 20, "only {beat_median}/20 runs beat the median {median}");
    Ok(format!(
        "{in_top}/20 in top 1% (loss <= {top1:.4}), {beat_median}/20 beat median {median:.4} over 59,508 points"
    ))
}

fn cache_soundness() -> Result<String, String> {
    let d = GeneDomains::default();
    let landscape = SyntheticLandscape::reference();
    let mut total_calls = 0;
    for seed in 0..100u64 {
        let calls = Mutex::new(Vec::new());
        let ev = FnEvaluator::new(|plan, _| {
            let c = plan.to_chromosome(&d)?;
            calls.lock().unwrap().push(c.canonical_key());
            Ok(landscape.loss(&c))
        });
        let r = run(GaConfig::with_seed(seed), &ev).map_err(|e| e.to_string())?;
        let calls = calls.into_inner().unwrap();
        let distinct: BTreeSet<_> = calls.iter().collect();
        ensure!(calls.len() == distinct.len(), "seed {seed}: a key was evaluated twice");
        ensure!(
            r.total_evaluator_calls() == calls.len(),
            "seed {seed}: call count mismatch"
        );
        let seen: BTreeSet<_> = r
            .generations
            .iter()
            .flat_map(|g| g.population.iter())
            .map(|e| e.chromosome.canonical_key())
            .collect();
        ensure!(
            seen.len() == calls.len(),
            "seed {seed}: {} keys seen, {} calls",
            seen.len(),
            calls.len()
        );
        total_calls += calls.len();

        // injected duplicates
        let calls = Mutex::new(0usize);
        let ev = FnEvaluator::new(|plan, _| {
            *calls.lock().unwrap() += 1;
            Ok(landscape.loss(&plan.to_chromosome(&d)?))
        });
        let mut rng = tlevo::ga::search_rng(seed);
        let x = tlevo::sample_chromosome(&d, &mut rng);
        let y = tlevo::sample_chromosome(&d, &mut rng);
        let pop = vec![x, y, x, x, y, x, y, y, x, x];
        let distinct = if x == y { 1 } else { 2 };
        let r = Search::new(GaConfig {
            max_generations: 1,
            ..GaConfig::with_seed(seed)
        })
        .and_then(|s| s.with_initial_population(pop))
        .map_err(|e| e.to_string())?
        .run(&ev);
        let g = &r.generations[0];
        ensure!(
            *calls.lock().unwrap() == distinct,
            "seed {seed}: duplicates re-evaluated"
        );
        ensure!(
            g.cache_hits == 10 - distinct,
            "seed {seed}: {} cache hits",
            g.cache_hits
        );
    }
    Ok(format!(
        "100 seeds, {total_calls} calls, all distinct; duplicates always hit the cache"
    ))
}

fn determinism() -> Result<String, String> {
    let dirs: Vec<_> = (0..3)
        .map(|_| tempfile::tempdir().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    for (dir, seed) in dirs.iter().zip(["77", "77", "78"]) {
        let out = Command::new(env!("CARGO_BIN_EXE_tlevo"))
            .args(["search", "--seed", seed, "--output-dir"])
            .arg(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.success(), "search exited with {}", out.status);
    }
    let read = |i: usize, f: &str| fs::read(dirs[i].path().join(f)).map_err(|e| e.to_string());
    for f in ["generations.csv", "manifest.json"] {
        ensure!(read(0, f)? == read(1, f)?, "{f} differs between identical runs");
    }
    ensure!(
        read(0, "manifest.json")? != read(2, "manifest.json")?,
        "seed has no effect"
    );
    Ok("generations.csv and manifest.json byte-identical across runs".into())
}

fn auc_correctness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = rng.gen_range(2..=50);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        // half the instances use a coarse grid so ties are common
        let scores: Vec<f64> = if i % 2 == 0 {
            (0..n).map(|_| f64::from(rng.gen_range(0..6)) / 5.0).collect()
        } else {
            (0..n).map(|_| rng.gen::<f64>()).collect()
        };
        let got = auc(&ScoredLabels::new(labels.clone(), scores.clone()).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let (num, den) = common::brute_force_auc(&labels, &scores);
        let err = (got - num as f64 / den as f64).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-12, "instance {i}: {got} vs {num}/{den}");
    }
    Ok(format!("1000 instances, max |error| {worst:e}"))
}

fn mcnemar_correctness() -> Result<String, String> {
    // chi-square(1) upper tail from scipy.stats.chi2.sf
    let tail = [
        (0.1, 0.7518296340458492),
        (0.5, 0.47950012218695337),
        (1.0, 0.31731050786291115),
        (2.0, 0.15729920705028105),
        (3.841458820694124, 0.04999999999999989),
        (4.05, 0.04417134490844271),
        (6.635, 0.009999419574042536),
        (10.0, 0.001565402258002549),
        (15.0, 0.00010751117672950066),
        (25.0, 5.733031437583875e-07),
    ];
    for (x, p) in tail {
        let got = chi_square_1_upper_tail(x);
        ensure!((got - p).abs() <= 1e-6, "sf({x}) = {got}, expected {p}");
    }
    let cases = [
        (1, 1, 0.5, 0.47950012218695337),
        (5, 15, 4.05, 0.04417134490844271),
        (10, 3, 2.769230769230769, 0.0960923294556734),
        (40, 60, 3.61, 0.05743311963200335),
        (0, 20, 18.05, 2.1517864378120177e-05),
        (100, 140, 6.3375, 0.01182113783662232),
        (0, 1, 0.0, 1.0),
        (2, 0, 0.5, 0.47950012218695337),
    ];
    for (b, c, stat, p) in cases {
        let r = mcnemar(&ContingencyTable { a: 7, b, c, d: 3 });
        let (s, pv) = (r.statistic.ok_or("not computable")?, r.p_value.ok_or("not computable")?);
        ensure!(
            (s - stat).abs() <= 1e-6 && (pv - p).abs() <= 1e-6,
            "b={b} c={c}: {s}, {pv}"
        );
    }
    let r = mcnemar(&ContingencyTable {
        a: 40,
        b: 1,
        c: 1,
        d: 2,
    });
    let p = r.p_value.ok_or("b=c=1 not computable")?;
    ensure!((p - 0.4795).abs() <= 5e-5, "b=c=1 gives p = {p}");
    let r = mcnemar(&ContingencyTable {
        a: 40,
        b: 0,
        c: 0,
        d: 2,
    });
    ensure!(!r.computable() && r.p_value.is_none(), "b+c=0 reported as computable");
    Ok(format!(
        "{} tail points and {} tables within 1e-6; b=c=1 p = {p:.6}; b+c=0 not computable",
        tail.len(),
        cases.len()
    ))
}

fn architecture_mapping() -> Result<String, String> {
    let d = GeneDomains::default();
    for inc in 1..=58u32 {
        // independent prefix-greedy fill
        let mut remaining = inc;
        let mut blocks = Vec::new();
        for &cap in &DENSENET121_BLOCKS {
            if remaining == 0 {
                break;
            }
            let take = remaining.min(cap);
            blocks.push(take);
            remaining -= take;
        }
        let se = match inc {
            0..=6 => 0,
            7..=18 => 1,
            19..=42 => 2,
            _ => 3,
        };
        let c = Chromosome::new(&d, inc, 0, 0.1, 0.1).map_err(|e| e.to_string())?;
        let plan = map_to_architecture(&c);
        ensure!(
            plan.block_layer_counts == blocks,
            "{inc}: blocks {:?}",
            plan.block_layer_counts
        );
        ensure!(plan.se_layer_count == se, "{inc}: {} SE layers", plan.se_layer_count);
    }
    let best = Chromosome::new(&d, 57, 2, 0.1, 0.1).map_err(|e| e.to_string())?;
    let plan = map_to_architecture(&best);
    ensure!(
        plan.block_layer_counts == [6, 12, 24, 15],
        "(57, 2) blocks {:?}",
        plan.block_layer_counts
    );
    ensure!(
        plan.se_layer_count == 3 && plan.frozen_prefix == 2,
        "(57, 2) plan {plan:?}"
    );
    ensure!(
        plan.learning_rate == 0.1 && plan.dropout == 0.1,
        "(57, 2) plan {plan:?}"
    );
    Ok("58 fills prefix-greedy, SE thresholds 6/18/42; (57, 2, 0.1, 0.1) -> [6, 12, 24, 15] + 3 SE".into())
}

fn bridge_robustness() -> Result<String, String> {
    let d = GeneDomains::default();
    let plan = map_to_architecture(&Chromosome::new(&d, 57, 2, 0.1, 0.1).map_err(|e| e.to_string())?);
    let bridge = |script, ms, retries| {
        TrainerBridge::new(common::stub_bridge(script, Duration::from_millis(ms), retries)).map_err(|e| e.to_string())
    };

    let loss = bridge("echo_trainer.sh", 5000, 0)?.evaluate(&plan, 5);
    ensure!(loss == Ok(0.42), "echo: {loss:?}");
    let loss = bridge("malformed_once_trainer.sh", 5000, 1)?.evaluate(&plan, 5);
    ensure!(loss == Ok(0.37), "malformed-once with a retry: {loss:?}");
    let loss = bridge("hang_trainer.sh", 500, 1)?.evaluate(&plan, 5);
    ensure!(loss == Err(EvaluatorError::Timeout { attempts: 2 }), "hang: {loss:?}");

    let r = run(GaConfig::with_seed(0), &bridge("hang_trainer.sh", 500, 0)?).map_err(|e| e.to_string())?;
    ensure!(
        r.stop_reason == StopReason::EvaluatorFailure,
        "hang run stopped with {:?}",
        r.stop_reason
    );
    ensure!(
        r.failure.as_ref().map(|f| &f.error) == Some(&EvaluatorError::Timeout { attempts: 1 }),
        "hang run failure {:?}",
        r.failure
    );

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = serde_json::json!({
        "evaluator": {
            "kind": "bridge",
            "command": ["sh", common::fixture("hang_trainer.sh")],
            "request_timeout_secs": 0.5,
            "max_retries": 0
        }
    });
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, cfg.to_string()).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_tlevo"))
        .args(["search", "--config"])
        .arg(&cfg_path)
        .arg("--output-dir")
        .arg(dir.path().join("run"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.code() == Some(2), "CLI exit code {:?}", out.status.code());
    Ok("echo ok, malformed-once retried, hang timed out; run and CLI report EvaluatorFailure (exit 2)".into())
}

fn main() {
    let criteria: [(&str, Duration, Check); 9] = [
        ("GA defaults", Duration::from_secs(1), ga_defaults),
        ("plateau semantics", Duration::from_secs(1), plateau_semantics),
        ("search effectiveness", Duration::from_secs(5), search_effectiveness),
        ("cache soundness", Duration::from_secs(10), cache_soundness),
        ("determinism", Duration::from_secs(5), determinism),
        ("AUC correctness", Duration::from_secs(5), auc_correctness),
        ("McNemar correctness", Duration::from_secs(1), mcnemar_correctness),
        ("architecture mapping", Duration::from_secs(1), architecture_mapping),
        ("trainer-bridge robustness", Duration::from_secs(30), bridge_robustness),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(e) => {
                failed += 1;
                ("FAIL", e)
            }
        };
        println!("{tag} {}. {name} [{elapsed:.2?} / {limit:?}]: {detail}", i + 1);
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
