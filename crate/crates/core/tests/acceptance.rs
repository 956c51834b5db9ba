//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wal_core::cli::{run_experiment, AblationAxis};
use wal_core::config::RunConfig;
use wal_core::corpus::{generate_corpus, load_corpus, save_corpus, ClipRecord, CorpusSpec, Tag};
use wal_core::eval::bidirectional_retrieval;
use wal_core::linalg::sigmoid;
use wal_core::model::{
    attention_weights, load_checkpoint, sample_gate, save_checkpoint, AttentionKind, InputMode, ModelParams,
    ModelShape, SamplerKind,
};
use wal_core::training::{metrics_csv_header, metrics_csv_row, train, EpochMetrics, TrainConfig};

const SEEDS: u64 = 5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2}")).collect();
    format!("[{}]", parts.join(", "))
}

fn random_baseline() -> Verdict {
    let train = TrainConfig::default();
    let (mut v_map, mut s_map, mut rec5) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..20 {
        let spec = CorpusSpec {
            seed,
            ..CorpusSpec::default()
        };
        let test = generate_corpus(&spec).unwrap().test;
        let shape = ModelShape {
            d_in: spec.d,
            d_emb: train.d_emb,
            d_att: train.d_att_resolved(),
            attention: train.attention_kind,
            input_mode: train.input_mode,
            bvf_count: train.bvf_count,
        };
        let params = ModelParams::init(&shape, &mut ChaCha8Rng::seed_from_u64(1000 + seed)).unwrap();
        let r = bidirectional_retrieval(&params, &test).unwrap();
        v_map.push(r.video_search.map);
        s_map.push(r.sentence_search.map);
        rec5.push(0.5 * (r.video_search.rec5 + r.sentence_search.rec5));
    }
    let (vm, sm, r5) = (mean(&v_map), mean(&s_map), mean(&rec5));

    // one relevant item among 100 uniformly shuffled candidates
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 100_000;
    let mc = (0..trials)
        .map(|_| {
            let own: f64 = rng.random();
            let ahead = (0..99).filter(|_| rng.random::<f64>() > own).count();
            1.0 / (ahead + 1) as f64
        })
        .sum::<f64>()
        / trials as f64;
    let harmonic = (1..=100).map(|k| 1.0 / k as f64).sum::<f64>() / 100.0;

    let band = |x: f64, lo: f64, hi: f64| (lo..=hi).contains(&x);
    verdict(
        band(vm, 3.5, 7.5) && band(sm, 3.5, 7.5) && band(r5, 2.0, 9.0) && (mc - harmonic).abs() <= 0.002,
        format!(
            "20 seeds: mAP s->v {vm:.2}, v->s {sm:.2}, Rec@5 {r5:.2}; Monte-Carlo {mc:.5} vs H100/100 {harmonic:.5}"
        ),
    )
}

fn gradient_oracle() -> Verdict {
    let cases = common::oracle_cases();
    let mut coords = 0;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for case in &cases {
        let r = common::check_case(case);
        coords += r.coordinates;
        worst = worst.max(r.max_abs_err);
        failures.extend(r.failures);
    }
    let first = failures.first().cloned().unwrap_or_default();
    verdict(
        cases.len() >= 50 && failures.is_empty(),
        format!(
            "{} configurations, {coords} coordinates, {} mismatches, max abs error {worst:.2e} {first}",
            cases.len(),
            failures.len()
        ),
    )
}

fn gate_distribution() -> Verdict {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for f in [-2.0, 0.0, 1.0] {
        for tau in [0.5, 1.0] {
            let ones = (0..n)
                .filter(|_| sample_gate(f, tau, SamplerKind::GumbelHard, &mut rng).unwrap().z == 1)
                .count();
            let p = sigmoid(f);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let z = (ones as f64 / n as f64 - p).abs() / se;
            worst = worst.max(z);
            pass &= z <= 3.0;
        }
    }
    verdict(
        pass,
        format!("6 settings x 1e5 draws, worst deviation {worst:.2} standard errors"),
    )
}

/// Every training run the trend criteria need, on the default corpus.
struct Runs {
    /// Default configuration per training seed.
    full: Vec<(Vec<EpochMetrics>, f64)>,
    gate_off: Vec<f64>,
    mean_pool: Vec<f64>,
    bvf16: Vec<f64>,
    bvf64: Vec<f64>,
    soft: Vec<f64>,
    triplet: Vec<f64>,
}

fn run_all(train: &[ClipRecord], test: &[ClipRecord]) -> Runs {
    let run = |f: &dyn Fn(&mut RunConfig), seed: u64| {
        let mut cfg = RunConfig {
            seed,
            ..RunConfig::default()
        };
        f(&mut cfg);
        let (out, report) = run_experiment(&cfg, train, test).unwrap();
        (out.history, report.mean_map())
    };
    let sweep = |f: &dyn Fn(&mut RunConfig)| (0..SEEDS).map(|s| run(f, s).1).collect::<Vec<_>>();
    Runs {
        full: (0..SEEDS).map(|s| run(&|_| {}, s)).collect(),
        gate_off: sweep(&|c| c.gate_enabled = false),
        mean_pool: sweep(&|c| {
            c.gate_enabled = false;
            c.attention_kind = AttentionKind::Mean;
        }),
        bvf16: sweep(&|c| {
            AblationAxis::BvfCount.apply(c, "16").unwrap();
        }),
        bvf64: sweep(&|c| {
            AblationAxis::BvfCount.apply(c, "64").unwrap();
        }),
        soft: sweep(&|c| c.sampler_kind = SamplerKind::SoftmaxSoft),
        triplet: sweep(&|c| c.loss_kind = wal_core::training::LossKind::Triplet),
    }
}

fn curriculum_trend(history: &[EpochMetrics], freeze_epochs: usize) -> Verdict {
    let z0: Vec<f64> = history.iter().map(|m| 100.0 * m.z0_fraction).collect();
    let first_joint = z0[freeze_epochs];
    let last = *z0.last().unwrap();
    let ma: Vec<f64> = z0.windows(3).map(mean).collect();
    let worst_drop = ma.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    verdict(
        last > first_joint && worst_drop <= 2.0,
        format!("z0% first joint epoch {first_joint:.1}, final {last:.1}, largest 3-epoch moving-average drop {worst_drop:.2}"),
    )
}

fn noise_separation(runs: &Runs) -> Verdict {
    let gaps: Vec<f64> = runs
        .full
        .iter()
        .map(|(h, _)| {
            let m = h.last().unwrap();
            100.0 * (m.z1_rate(Tag::Noise).unwrap() - m.z1_rate(Tag::Clean).unwrap())
        })
        .collect();
    let g = mean(&gaps);
    verdict(
        g >= 10.0,
        format!(
            "final-epoch gate-out noise minus clean: mean {g:.2} points, per seed {}",
            fmt(&gaps)
        ),
    )
}

fn ordering(runs: &Runs) -> Verdict {
    let adv: Vec<f64> = runs.full.iter().map(|r| r.1).collect();
    let every = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x > y);
    let pass = every(&adv, &runs.gate_off) && every(&runs.gate_off, &runs.mean_pool);
    verdict(
        pass,
        format!(
            "mean mAP WAL-att-adv {:.2} > WAL-att {:.2} > WAL {:.2}; per seed {} / {} / {}",
            mean(&adv),
            mean(&runs.gate_off),
            mean(&runs.mean_pool),
            fmt(&adv),
            fmt(&runs.gate_off),
            fmt(&runs.mean_pool)
        ),
    )
}

fn ablation_bands(runs: &Runs) -> Verdict {
    let base: Vec<f64> = runs.full.iter().map(|r| r.1).collect();
    let (b4, b16, b64) = (mean(&base), mean(&runs.bvf16), mean(&runs.bvf64));
    let spread = b4.max(b16).max(b64) - b4.min(b16).min(b64);
    let (hard, soft, off) = (b4, mean(&runs.soft), mean(&runs.gate_off));
    let trip = mean(&runs.triplet);
    let bvf_ok = spread <= 2.0;
    let sampler_ok = hard > soft && soft > off;
    let triplet_ok = (trip - b4).abs() <= 2.0;
    let mark = |ok: bool| if ok { "ok" } else { "out of band" };
    verdict(
        bvf_ok && sampler_ok && triplet_ok,
        format!(
            "BVF 4/16/64 {b4:.2}/{b16:.2}/{b64:.2} spread {spread:.2} ({}); gumbel {hard:.2} > soft {soft:.2} > off {off:.2} ({}); triplet {trip:.2} vs bce {b4:.2} ({})",
            mark(bvf_ok),
            mark(sampler_ok),
            mark(triplet_ok)
        ),
    )
}

fn determinism_and_round_trips() -> Verdict {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("n_train", "200"),
        ("n_test", "20"),
        ("freeze_epochs", "2"),
        ("joint_epochs", "2"),
        ("d_emb", "16"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let corpus = generate_corpus(&cfg.corpus_spec()).unwrap();
    let csv = |h: &[EpochMetrics]| {
        let mut s = format!("{}\n", metrics_csv_header());
        for m in h {
            s.push_str(&metrics_csv_row(m));
            s.push('\n');
        }
        s
    };
    let a = train(&cfg.train_config(), &corpus.train).unwrap();
    let b = train(&cfg.train_config(), &corpus.train).unwrap();
    let same_metrics = csv(&a.history) == csv(&b.history);

    let dir = tempfile::tempdir().unwrap();
    let cpath = dir.path().join("train.jsonl");
    save_corpus(&corpus.train, cfg.d, &cpath).unwrap();
    let corpus_exact = load_corpus(&cpath).unwrap().records == corpus.train;
    let ppath = dir.path().join("checkpoint.json");
    save_checkpoint(&a.params, &ppath).unwrap();
    let ckpt_exact = load_checkpoint(&ppath).unwrap() == a.params;

    let cases = 10_000;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let kinds = prop_oneof![
        Just(AttentionKind::Mean),
        Just(AttentionKind::Dot),
        Just(AttentionKind::Multiplicative),
        Just(AttentionKind::Additive),
    ];
    let strategy = (
        kinds,
        any::<u64>(),
        prop::collection::vec(-3.0f64..3.0, 6),
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 6), 1..12),
    );
    let attention = runner.run(&strategy, |(kind, seed, s, h)| {
        let shape = ModelShape {
            d_in: 6,
            d_emb: 6,
            d_att: 4,
            attention: kind,
            input_mode: InputMode::Residual,
            bvf_count: 1,
        };
        let p = ModelParams::init(&shape, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let alpha = attention_weights(&p.attention, &s, &h).unwrap();
        prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        Ok(())
    });

    verdict(
        same_metrics && corpus_exact && ckpt_exact && attention.is_ok(),
        format!(
            "metrics CSV identical {same_metrics}, corpus exact {corpus_exact}, checkpoint exact {ckpt_exact}, attention sums over {cases} cases {}",
            if attention.is_ok() { "ok" } else { "violated" }
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} {tag} {name}: {} ({:.1}s)",
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if !v.pass {
            failed += 1;
        }
    };

    let t = Instant::now();
    report(1, "random baseline", t, random_baseline());
    let t = Instant::now();
    report(2, "gradient oracle", t, gradient_oracle());
    let t = Instant::now();
    report(3, "gate distribution", t, gate_distribution());

    let t = Instant::now();
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    let runs = run_all(&corpus.train, &corpus.test);
    let freeze = TrainConfig::default().freeze_epochs;
    report(4, "curriculum trend", t, curriculum_trend(&runs.full[0].0, freeze));
    report(5, "noise separation", t, noise_separation(&runs));
    report(6, "ordering", t, ordering(&runs));
    report(7, "ablation bands", t, ablation_bands(&runs));

    let t = Instant::now();
    report(8, "determinism and round trips", t, determinism_and_round_trips());

    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
