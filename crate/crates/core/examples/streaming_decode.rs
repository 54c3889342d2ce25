//! Frame-by-frame decoding with a bounded attention look-ahead, compared
//! with offline beam search.
//!
//! `cargo run --release --example streaming_decode [-- CHECKPOINT]`

use codemix_rnnt::corpus::{Condition, CorpusConfig, Synthesizer};
use codemix_rnnt::decoder::{beam_search, transcript, DecodeOptions, StreamDecoder};
use codemix_rnnt::model::{Architecture, InferenceOptions, LookAhead, Model, ModelConfig, ModelSizes};
use codemix_rnnt::trainer::load_checkpoint;

fn main() -> codemix_rnnt::Result<()> {
    let synth = Synthesizer::new(CorpusConfig::default())?;
    let utt = synth.synth_utterance(Condition::Mixed, 9, "stream-demo")?;
    let model = match std::env::args().nth(1) {
        Some(path) => load_checkpoint(path.as_ref())?.model,
        None => {
            let config = ModelConfig::new(
                Architecture::MultiSoftmaxAttn,
                utt.features.cols(),
                &ModelSizes::default(),
                synth.table().clone(),
            );
            Model::new(config, 3)?
        }
    };
    let table = &model.config.table;
    let opts = DecodeOptions {
        inference: InferenceOptions {
            look_ahead: Some(LookAhead::Frames(3)),
            ..Default::default()
        },
        ..Default::default()
    };

    let mut stream = StreamDecoder::new(&model, &opts)?;
    for t in 0..utt.num_frames() {
        let partial = stream.push(utt.features.row_slice(t))?;
        println!(
            "received {:>2}, decoded {:>2}: {:?}",
            stream.received(),
            stream.decoded(),
            transcript(table, &partial)
        );
    }
    let streamed = stream.finish()?;
    let offline = beam_search(&model, &utt.features, &opts)?;
    println!("final   : {:?}", transcript(table, streamed.best()));
    println!("offline : {:?}", transcript(table, offline.best()));
    println!("identical: {}", streamed == offline);
    Ok(())
}
