//! Attention weights as a language detector: per-frame trajectories, EMA
//! smoothing, and two-component Gaussian mixtures over weight populations.
//!
//! `cargo run --release --example attention_analysis [-- STAGE3_CHECKPOINT]`
//! Without a checkpoint a small model is trained first (the corpus must
//! match the one the checkpoint was trained on: default config).

use codemix_rnnt::analysis::{fit_gmm, smooth_trajectory, trajectory, weight_population};
use codemix_rnnt::corpus::{make_dataset, Condition, CorpusConfig, Dataset, Split, SplitSizes};
use codemix_rnnt::decoder::DecodeOptions;
use codemix_rnnt::model::{Model, ModelSizes};
use codemix_rnnt::trainer::{default_stages, load_checkpoint, run_curriculum};

fn quick_model(ds: &Dataset) -> codemix_rnnt::Result<Model> {
    let sizes = ModelSizes {
        encoder_layers: 1,
        encoder_hidden: 32,
        prediction_hidden: 32,
        joint_hidden: 32,
        ..Default::default()
    };
    let mut outs = run_curriculum(ds, &sizes, &default_stages(900, 2), None, &mut |_, _, _| {})?;
    Ok(outs.pop().expect("three stages").checkpoint.model)
}

fn main() -> codemix_rnnt::Result<()> {
    let ckpt = std::env::args().nth(1);
    let mut config = CorpusConfig::default();
    if ckpt.is_none() {
        config.splits = SplitSizes {
            train: 1000,
            test_a: 20,
            test_b: 20,
            test_mixed: 20,
        };
    }
    let ds = make_dataset(&config)?;
    let model = match ckpt {
        Some(p) => load_checkpoint(p.as_ref())?.model,
        None => quick_model(&ds)?,
    };
    let opts = DecodeOptions::default();

    let utt = &ds.split(Split::TestMixed)[0];
    let report = trajectory(&model, utt, &opts)?;
    let smooth = smooth_trajectory(&report.trajectory, 0.3)?;
    println!("{}: frame  w_A   smoothed  word", utt.id);
    for (t, (raw, s)) in report.trajectory.w_a().zip(smooth.w_a()).enumerate() {
        let word = report.word_at(t).map(|w| format!("{}:{}", w.lang, w.text)).unwrap_or_default();
        println!("  {t:>3}  {raw:.3}  {s:.3}     {word}");
    }

    for (cond, split) in [
        (Condition::MonoA, Split::TestA),
        (Condition::MonoB, Split::TestB),
        (Condition::Mixed, Split::TestMixed),
    ] {
        let pop = weight_population(&model, ds.split(split), &opts)?;
        let mean = pop.iter().sum::<f64>() / pop.len() as f64;
        let fit = fit_gmm(&pop, 2)?;
        let comps: Vec<String> = fit
            .components
            .iter()
            .map(|c| format!("N({:.2}, {:.3}) x {:.2}", c.mean, c.variance, c.weight))
            .collect();
        println!("{:<7} {:>5} frames  mean w_A {mean:.3}  GMM {}", cond.name(), pop.len(), comps.join(" + "));
    }
    Ok(())
}
