//! The three-stage curriculum on a small corpus, with evaluation after each
//! stage and a vanilla baseline trained for the same number of steps.
//!
//! `cargo run --release --example train_curriculum [-- OUT_DIR]`

use codemix_rnnt::corpus::{make_dataset, CorpusConfig, Split, SplitSizes};
use codemix_rnnt::decoder::DecodeOptions;
use codemix_rnnt::model::{Architecture, ModelSizes};
use codemix_rnnt::trainer::{
    default_stages, evaluate, model_config_for, run_curriculum, save_checkpoint, train_vanilla, ModelRecognizer,
};

fn main() -> codemix_rnnt::Result<()> {
    let ds = make_dataset(&CorpusConfig {
        splits: SplitSizes {
            train: 2000,
            test_a: 30,
            test_b: 30,
            test_mixed: 30,
        },
        ..Default::default()
    })?;
    let sizes = ModelSizes::default();
    let stages = default_stages(1500, 1);
    let outcomes = run_curriculum(&ds, &sizes, &stages, None, &mut |stage, step, loss| {
        if (step + 1) % 200 == 0 {
            println!("stage {stage} step {:>4} loss {loss:.3}", step + 1);
        }
    })?;
    let opts = DecodeOptions::default();
    let wers = |report: &codemix_rnnt::trainer::EvalReport| {
        Split::TESTS
            .iter()
            .map(|&s| format!("{} {:5.1}%", s.name(), 100.0 * report.wer(s).unwrap_or(f64::NAN)))
            .collect::<Vec<_>>()
            .join("  ")
    };
    for out in &outcomes {
        let m = &out.checkpoint.model;
        let report = evaluate(&ModelRecognizer { model: m, options: opts }, &ds, m.architecture().name())?;
        println!("after stage {:?} ({}): {}", out.checkpoint.provenance.stage, m.architecture().name(), wers(&report));
    }

    let mut baseline_cfg = stages[1].clone();
    baseline_cfg.steps = stages.iter().map(|s| s.steps).sum();
    let vanilla = train_vanilla(&ds, model_config_for(&ds, Architecture::Vanilla, &sizes), &baseline_cfg, &mut |_, _| {})?;
    let v = &vanilla.checkpoint.model;
    let report = evaluate(&ModelRecognizer { model: v, options: opts }, &ds, "vanilla")?;
    println!("vanilla, {} steps: {}", baseline_cfg.steps, wers(&report));

    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::PathBuf::from(dir);
        std::fs::create_dir_all(&dir).expect("output directory");
        for out in &outcomes {
            let stage = out.checkpoint.provenance.stage.unwrap_or(0);
            save_checkpoint(&out.checkpoint, &dir.join(format!("stage{stage}.ckpt")))?;
        }
        save_checkpoint(&vanilla.checkpoint, &dir.join("vanilla.ckpt"))?;
        println!("checkpoints written to {}", dir.display());
    }
    Ok(())
}
