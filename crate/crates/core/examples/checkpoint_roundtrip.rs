//! Saves a model checkpoint, reloads it and checks the bytes match.

use codemix_rnnt::corpus::{CorpusConfig, Synthesizer};
use codemix_rnnt::model::{Architecture, Model, ModelConfig, ModelSizes};
use codemix_rnnt::trainer::{load_checkpoint, load_checkpoint_as, save_checkpoint, Checkpoint, TrainingProvenance};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = Synthesizer::new(CorpusConfig::default())?;
    let cfg = CorpusConfig::default();
    let config = ModelConfig::new(
        Architecture::MultiSoftmaxAttn,
        cfg.stack * cfg.raw_dim,
        &ModelSizes::default(),
        synth.table().clone(),
    );
    let ckpt = Checkpoint {
        model: Model::new(config, 5)?,
        provenance: TrainingProvenance {
            stage: Some(3),
            step: 0,
            seed: 5,
        },
    };
    let dir = std::env::temp_dir().join(format!("codemix-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let (first, second) = (dir.join("a.ckpt"), dir.join("b.ckpt"));
    save_checkpoint(&ckpt, &first)?;
    save_checkpoint(&load_checkpoint(&first)?, &second)?;
    let (x, y) = (std::fs::read(&first)?, std::fs::read(&second)?);
    println!("{} tensors, {} bytes, identical after reload: {}", ckpt.model.params.len(), x.len(), x == y);
    match load_checkpoint_as(&first, Architecture::Vanilla) {
        Err(e) => println!("loading as vanilla fails: {e}"),
        Ok(_) => unreachable!("architecture check"),
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
