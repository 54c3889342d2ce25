//! End-to-end acceptance suite. Runs every criterion in order, prints one
//! PASS/FAIL line each and exits non-zero if any fails.
//!
//! `cargo test --release -p codemix-rnnt --test acceptance`

use std::path::Path;
use std::time::{Duration, Instant};

use codemix_rnnt::analysis::{fit_gmm, weight_population};
use codemix_rnnt::cli::{cmd_eval, ModelSource, RunConfig};
use codemix_rnnt::corpus::{
    build_combined, build_symbol_table, default_graphemes, make_dataset, save_dataset, CombinedTable, Condition,
    CorpusConfig, Dataset, Lang, Split, Synthesizer, Utterance, Word,
};
use codemix_rnnt::decoder::{
    beam_search, beam_search_grid, greedy_decode, rows, stream_decode, DecodeOptions, DEFAULT_MAX_SYMBOLS,
};
use codemix_rnnt::loss::{brute_force_nll, transducer_nll};
use codemix_rnnt::model::{
    Architecture, AttentionConfig, InferenceOptions, LookAhead, Model, ModelConfig, ModelSizes, PosteriorGrid,
    Weighting,
};
use codemix_rnnt::numerics::{log_softmax_in_place, ParamRng};
use codemix_rnnt::trainer::{
    evaluate, load_checkpoint, model_config_for, model_grad_check, run_curriculum, save_checkpoint, train_vanilla,
    wer, werr, Checkpoint, ModelRecognizer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Trained {
    seed: u64,
    attn: Checkpoint,
    vanilla: Checkpoint,
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_grid(rng: &mut ChaCha8Rng, frames: usize, positions: usize, symbols: usize) -> PosteriorGrid {
    let mut data: Vec<f64> = (0..frames * positions * symbols).map(|_| rng.gen_range(-3.0..3.0)).collect();
    for row in data.chunks_mut(symbols) {
        log_softmax_in_place(row);
    }
    PosteriorGrid::new(frames, positions, symbols, symbols - 1, data).expect("grid shape")
}

fn loss_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let frames = rng.gen_range(1..=4);
        let u = rng.gen_range(0..=3);
        let symbols = rng.gen_range(2..=5);
        let labels: Vec<usize> = (0..u).map(|_| rng.gen_range(0..symbols - 1)).collect();
        let grid = random_grid(&mut rng, frames, u + 1, symbols);
        let a = transducer_nll(&grid, &labels).map_err(err)?;
        let b = brute_force_nll(&grid, &labels).map_err(err)?;
        worst = worst.max((a - b).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-8 && elapsed < Duration::from_secs(10),
        format!("200 grids, max |lattice - enumeration| = {worst:.1e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn tiny_table(graphemes: usize) -> CombinedTable {
    let a = build_symbol_table(default_graphemes(Lang::A, graphemes), Lang::A).expect("table A");
    let b = build_symbol_table(default_graphemes(Lang::B, graphemes), Lang::B).expect("table B");
    build_combined(a, b).expect("combined")
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let archs = [Architecture::Vanilla, Architecture::MultiSoftmax, Architecture::MultiSoftmaxAttn];
    let (mut worst, mut probes) = (0.0f64, 0);
    for i in 0..20 {
        let table = tiny_table(rng.gen_range(1..=3));
        let input_dim = rng.gen_range(2..=4);
        let sizes = ModelSizes {
            encoder_layers: rng.gen_range(1..=2),
            encoder_hidden: rng.gen_range(2..=4),
            prediction_layers: 1,
            prediction_hidden: rng.gen_range(2..=4),
            joint_hidden: rng.gen_range(2..=4),
            attention: AttentionConfig {
                key_dim: rng.gen_range(2..=3),
                ffn_hidden: rng.gen_range(2..=3),
                look_ahead: LookAhead::Frames(rng.gen_range(0..=2)),
            },
        };
        let frames = rng.gen_range(2..=5);
        let symbols: Vec<usize> = (0..table.len()).filter(|&k| k != table.blank()).collect();
        let labels: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| symbols[rng.gen_range(0..symbols.len())]).collect();
        let utt = Utterance {
            id: format!("g{i}"),
            condition: Condition::Mixed,
            seed: i,
            words: vec![Word {
                text: String::new(),
                lang: Lang::A,
            }],
            labels,
            features: ParamRng::new(100 + i).uniform(&[frames, input_dim], 1.0),
        };
        let arch = archs[i as usize % 3];
        let model = Model::new(ModelConfig::new(arch, input_dim, &sizes, table), 200 + i).map_err(err)?;
        let g = model_grad_check(&model, &utt, 6, 1e-5).map_err(err)?;
        worst = worst.max(g.worst());
        probes += g.probes;
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-4 && elapsed < Duration::from_secs(120),
        format!(
            "20 models, {probes} probed scalars, max pairwise relative error {worst:.1e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn normalization() -> Outcome {
    let cfg = CorpusConfig::default();
    let synth = Synthesizer::new(cfg.clone()).map_err(err)?;
    let sizes = ModelSizes {
        encoder_hidden: 16,
        prediction_hidden: 16,
        joint_hidden: 16,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for arch in [Architecture::Vanilla, Architecture::MultiSoftmax, Architecture::MultiSoftmaxAttn] {
        let model = Model::new(
            ModelConfig::new(arch, cfg.stack * cfg.raw_dim, &sizes, synth.table().clone()),
            7,
        )
        .map_err(err)?;
        for i in 0..100u64 {
            let cond = Condition::ALL[i as usize % 3];
            let utt = synth.synth_utterance(cond, 1000 + i, format!("n{i}")).map_err(err)?;
            let (grid, _) = model.posterior_grid(&utt).map_err(err)?;
            worst = worst.max(grid.max_normalization_error());
        }
    }
    check(worst < 1e-6, format!("3 architectures x 100 utterances, max |sum p - 1| = {worst:.1e}"))
}

fn lookahead_causality(model: &Model, ds: &Dataset) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut checked = 0;
    for la in [0usize, 3, 10] {
        let inf = model
            .inference(InferenceOptions {
                look_ahead: Some(LookAhead::Frames(la)),
                weighting: Weighting::Model,
            })
            .map_err(err)?;
        for utt in ds.test_mixed.iter().take(10) {
            let (_, base) = inf.frames(&utt.features).map_err(err)?;
            let base = base.ok_or("no attention weights")?;
            let n = utt.num_frames();
            for t in 0..n {
                if t + la + 1 >= n {
                    continue;
                }
                let mut x = utt.features.clone();
                let cols = x.cols();
                for v in &mut x.data_mut()[(t + la + 1) * cols..] {
                    *v += rng.gen_range(-5.0..5.0);
                }
                let (_, pert) = inf.frames(&x).map_err(err)?;
                let pert = pert.ok_or("no attention weights")?;
                if pert.weights[t] != base.weights[t] {
                    return Err(format!("L={la}: w[{t}] of {} moved after perturbing frames > t+L", utt.id));
                }
                checked += 1;
            }
        }
    }
    let utts: Vec<&Utterance> = ds.test_a.iter().chain(&ds.test_b).chain(&ds.test_mixed).step_by(2).take(100).collect();
    let mut words = 0;
    for (i, utt) in utts.iter().enumerate() {
        let la = [0usize, 3, 10][i % 3];
        let opts = DecodeOptions {
            inference: InferenceOptions {
                look_ahead: Some(LookAhead::Frames(la)),
                weighting: Weighting::Model,
            },
            ..Default::default()
        };
        let offline = beam_search(model, &utt.features, &opts).map_err(err)?;
        let (streamed, _) = stream_decode(model, rows(&utt.features), &opts).map_err(err)?;
        if offline.best().labels != streamed.best().labels {
            return Err(format!("{} (L={la}): streaming and offline transcripts differ", utt.id));
        }
        words += offline.best().labels.len();
    }
    check(
        utts.len() == 100,
        format!(
            "{checked} perturbed frames left w[t] bit-identical; {} utterances ({words} labels) stream == offline",
            utts.len()
        ),
    )
}

fn decoder_contracts(model: &Model, ds: &Dataset) -> Outcome {
    let narrow = DecodeOptions {
        beam_width: 1,
        ..Default::default()
    };
    let utts: Vec<&Utterance> = ds.test_a.iter().chain(&ds.test_b).chain(&ds.test_mixed).step_by(3).take(50).collect();
    for u in &utts {
        let b = beam_search(model, &u.features, &narrow).map_err(err)?;
        let g = greedy_decode(model, &u.features, &narrow).map_err(err)?;
        if b.best().labels != g.best().labels {
            return Err(format!("{}: width-1 beam differs from greedy", u.id));
        }
    }

    let table = &ds.table;
    let labels = [
        table.to_combined(Lang::A, table.table(Lang::A).word_start(0)),
        table.to_combined(Lang::A, table.table(Lang::A).grapheme(1)),
        table.to_combined(Lang::B, table.table(Lang::B).word_start(2)),
        table.to_combined(Lang::B, table.table(Lang::B).grapheme(3)),
    ];
    let (k, blank) = (table.len(), table.blank());
    let grid = PosteriorGrid::from_probs(2 * labels.len(), labels.len() + 1, k, blank, |t, u, s| {
        let target = if u < labels.len() && t == 2 * u { labels[u] } else { blank };
        if s == target {
            0.9
        } else {
            0.1 / (k - 1) as f64
        }
    })
    .map_err(err)?;
    let best = &beam_search_grid(&grid, 4, DEFAULT_MAX_SYMBOLS).map_err(err)?[0];
    let langs: Vec<Option<Lang>> = best.labels.iter().map(|&l| table.lang_of(l)).collect();
    if !(langs.contains(&Some(Lang::A)) && langs.contains(&Some(Lang::B))) {
        return Err(format!("switch grid decoded to {:?}", best.labels));
    }

    let forced = DecodeOptions {
        inference: InferenceOptions {
            look_ahead: None,
            weighting: Weighting::Fixed(1.0, 0.0),
        },
        ..Default::default()
    };
    let mut emitted = 0;
    for u in ds.test_mixed.iter().take(20) {
        let d = beam_search(model, &u.features, &forced).map_err(err)?;
        for h in &d.hypotheses {
            if h.labels.iter().any(|&l| table.lang_of(l) != Some(Lang::A)) {
                return Err(format!("{}: forced (1, 0) emitted a B symbol", u.id));
            }
        }
        emitted += d.best().labels.len();
    }
    check(
        emitted > 0,
        format!(
            "width 1 == greedy on {} utterances; switch grid -> {:?}; forced (1,0) gave {emitted} A-only labels",
            utts.len(),
            langs.iter().map(|l| l.map(|l| l.to_string()).unwrap_or_default()).collect::<Vec<_>>()
        ),
    )
}

fn train_seed(ds: &Dataset, cfg: &RunConfig) -> Result<Trained, String> {
    let stages: Vec<_> = cfg.stages.iter().map(|p| p.to_stage_config(cfg.seed)).collect();
    let mut outs = run_curriculum(ds, &cfg.model, &stages, None, &mut |_, _, _| {}).map_err(err)?;
    let attn = outs.pop().ok_or("no stages")?.checkpoint;
    let mc = model_config_for(ds, Architecture::Vanilla, &cfg.model);
    let vanilla = train_vanilla(ds, mc, &cfg.baseline_config(), &mut |_, _| {}).map_err(err)?.checkpoint;
    Ok(Trained {
        seed: cfg.seed,
        attn,
        vanilla,
    })
}

fn split_wers(model: &Model, ds: &Dataset, label: &str) -> Result<[f64; 3], String> {
    let report = evaluate(
        &ModelRecognizer {
            model,
            options: DecodeOptions::default(),
        },
        ds,
        label,
    )
    .map_err(err)?;
    let w = |s| report.wer(s).unwrap_or(f64::NAN);
    Ok([w(Split::TestA), w(Split::TestB), w(Split::TestMixed)])
}

fn toy_learning(ds: &Dataset, trained: &[Trained], elapsed: Duration) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = elapsed <= Duration::from_secs(15 * 60);
    let mut trend = 0;
    for t in trained {
        let [a, b, m] = split_wers(&t.attn.model, ds, "attn")?;
        let [_, _, vm] = split_wers(&t.vanilla.model, ds, "vanilla")?;
        ok &= a <= 0.05 && b <= 0.05 && m <= 0.15;
        trend += usize::from(m <= vm);
        lines.push(format!(
            "seed {}: A {:.1}% B {:.1}% mixed {:.1}% (vanilla mixed {:.1}%)",
            t.seed,
            100.0 * a,
            100.0 * b,
            100.0 * m,
            100.0 * vm
        ));
    }
    check(
        ok,
        format!(
            "{}; trend attn <= vanilla on mixed for {trend}/3 seeds; training {:.0}s",
            lines.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

fn attention_lid(ds: &Dataset, trained: &[Trained]) -> Outcome {
    let opts = DecodeOptions::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for t in trained {
        let m = &t.attn.model;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let wa = mean(&weight_population(m, &ds.test_a, &opts).map_err(err)?);
        let wb = 1.0 - mean(&weight_population(m, &ds.test_b, &opts).map_err(err)?);
        let mixed = weight_population(m, &ds.test_mixed, &opts).map_err(err)?;
        let fit = fit_gmm(&mixed, 2).map_err(err)?;
        let (lo, hi) = (fit.components[0].mean, fit.components[1].mean);
        ok &= wa >= 0.8 && wb >= 0.8 && lo < 0.3 && hi > 0.7;
        lines.push(format!(
            "seed {}: mean w_A|A {wa:.3}, mean w_B|B {wb:.3}, mixed GMM means {lo:.3} / {hi:.3}",
            t.seed
        ));
    }
    check(ok, lines.join("; "))
}

fn metric_sanity() -> Outcome {
    let r = |a: &[&str], b: &[&str]| wer(a, b).map(|c| (c.rate(), c.substitutions, c.deletions));
    let ok = r(&["a", "b"], &["a", "b"]).map_err(err)?.0 == 0.0
        && r(&["a", "b", "c"], &["a", "x", "c"]).map_err(err)? == (1.0 / 3.0, 1, 0)
        && r(&["a", "b"], &[]).map_err(err)? == (1.0, 0, 2)
        && wer::<&str>(&[], &["a"]).is_err();
    let w = 100.0 * werr(17.37, 15.05).map_err(err)?;
    check(ok && (w - 13.3).abs() <= 0.1, format!("WER unit cases hold; WERR(17.37, 15.05) = {w:.2}%"))
}

fn snapshot(dir: &Path) -> Result<Vec<(std::ffi::OsString, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let entry = entry.map_err(err)?;
        files.push((entry.file_name(), std::fs::read(entry.path()).map_err(err)?));
    }
    files.sort();
    Ok(files)
}

fn persistence(ds: &Dataset, trained: &Trained, base_cfg: &RunConfig) -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    save_checkpoint(&trained.attn, &p1).map_err(err)?;
    let back = load_checkpoint(&p1).map_err(err)?;
    save_checkpoint(&back, &p2).map_err(err)?;
    let identical = std::fs::read(&p1).map_err(err)? == std::fs::read(&p2).map_err(err)?;
    if !identical || back != trained.attn {
        return Err("checkpoint bytes changed across save -> load -> save".into());
    }

    let mut small = ds.clone();
    small.train.truncate(1);
    let data = dir.path().join("data");
    save_dataset(&small, &data).map_err(err)?;
    let cfg = RunConfig {
        dataset_dir: data,
        output_dir: dir.path().join("out"),
        seed: trained.seed,
        ..base_cfg.clone()
    };
    let eval_dir = cfg.output_dir.join("eval");
    let sweep = [LookAhead::Frames(10), LookAhead::Infinite];
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        cmd_eval(&cfg, &ModelSource::Checkpoint(p1.clone()), &sweep, None, None).map_err(err)?;
        snapshots.push(snapshot(&eval_dir)?);
    }
    if snapshots[0] != snapshots[1] {
        return Err("eval artifacts differ between reruns".into());
    }
    let files = snapshots[0].len();
    check(
        files >= 5,
        format!("checkpoint round trip byte-identical; {files} eval artifacts byte-identical across reruns"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, outcome: Outcome| {
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("[{tag}] {name}: {detail}");
        results.push((name, outcome));
    };

    report("loss-oracle equivalence", loss_oracle());
    report("gradient correctness", gradient_correctness());
    report("normalization invariant", normalization());
    report("metric and report sanity", metric_sanity());

    let base = RunConfig::default();
    let ds = make_dataset(&base.corpus).expect("default corpus");
    let start = Instant::now();
    let trained: Vec<Trained> = match [1u64, 2, 3]
        .into_iter()
        .map(|seed| {
            train_seed(
                &ds,
                &RunConfig {
                    seed,
                    ..base.clone()
                },
            )
        })
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(t) => t,
        Err(e) => {
            for name in [
                "toy-task learning",
                "attention as language identifier",
                "look-ahead causality",
                "decoder contracts",
                "persistence",
            ] {
                report(name, Err(format!("training failed: {e}")));
            }
            std::process::exit(1);
        }
    };
    let elapsed = start.elapsed();
    report("toy-task learning", toy_learning(&ds, &trained, elapsed));
    report("attention as language identifier", attention_lid(&ds, &trained));
    report("look-ahead causality", lookahead_causality(&trained[0].attn.model, &ds));
    report("decoder contracts", decoder_contracts(&trained[0].attn.model, &ds));
    report("persistence", persistence(&ds, &trained[0], &base));

    let failed = results.iter().filter(|(_, o)| o.is_err()).count();
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
