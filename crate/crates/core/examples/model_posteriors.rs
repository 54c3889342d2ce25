//! Builds the three architectures on one utterance and inspects the
//! combined posterior grid and the attention weights.

use codemix_rnnt::corpus::{Condition, CorpusConfig, Synthesizer};
use codemix_rnnt::model::{Architecture, InferenceOptions, Model, ModelConfig, ModelSizes, Weighting};

fn main() -> codemix_rnnt::Result<()> {
    let synth = Synthesizer::new(CorpusConfig::default())?;
    let utt = synth.synth_utterance(Condition::Mixed, 42, "demo")?;
    let sizes = ModelSizes {
        encoder_hidden: 16,
        prediction_hidden: 16,
        joint_hidden: 16,
        ..Default::default()
    };
    for arch in [Architecture::Vanilla, Architecture::MultiSoftmax, Architecture::MultiSoftmaxAttn] {
        let config = ModelConfig::new(arch, utt.features.cols(), &sizes, synth.table().clone());
        let model = Model::new(config, 1)?;
        let (grid, weights) = model.posterior_grid(&utt)?;
        println!(
            "{:<18} {:>6} params  grid {}x{}x{}  max |sum p - 1| = {:.1e}",
            arch.name(),
            model.params.num_scalars(),
            grid.frames(),
            grid.positions(),
            grid.symbols(),
            grid.max_normalization_error()
        );
        if let Some(w) = weights {
            let first: Vec<String> = w.w_a().take(5).map(|x| format!("{x:.3}")).collect();
            println!("  untrained w_A, first frames: {}", first.join(" "));
        }
    }

    // Forcing the weights to (1, 0) leaves only language A and the blank.
    let config = ModelConfig::new(Architecture::MultiSoftmaxAttn, utt.features.cols(), &sizes, synth.table().clone());
    let model = Model::new(config, 1)?;
    let inf = model.inference(InferenceOptions {
        look_ahead: None,
        weighting: Weighting::Fixed(1.0, 0.0),
    })?;
    let (frames, _) = inf.frames(&utt.features)?;
    let lp = inf.log_probs(&frames[0], &inf.pred_start()?);
    let b_range = model.config.table.segment(codemix_rnnt::corpus::Lang::B);
    println!("forced (1, 0): B symbols all -inf = {}", lp[b_range].iter().all(|x| *x == f64::NEG_INFINITY));
    Ok(())
}
