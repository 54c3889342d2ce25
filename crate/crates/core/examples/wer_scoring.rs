//! Word error rates, relative reductions and the reference-alignment oracle.

use codemix_rnnt::corpus::{make_dataset, CorpusConfig, SplitSizes};
use codemix_rnnt::trainer::{evaluate, wer, werr, OracleRecognizer};

fn main() -> codemix_rnnt::Result<()> {
    let counts = wer(&["the", "cat", "sat", "down"], &["the", "bat", "sat"])?;
    println!(
        "S={} I={} D={} over {} words -> WER {:.3}",
        counts.substitutions,
        counts.insertions,
        counts.deletions,
        counts.reference_words,
        counts.rate()
    );
    println!("WERR 17.37 -> 15.05: {:.2}%", 100.0 * werr(17.37, 15.05)?);

    let ds = make_dataset(&CorpusConfig {
        splits: SplitSizes {
            train: 1,
            test_a: 10,
            test_b: 10,
            test_mixed: 10,
        },
        ..Default::default()
    })?;
    let oracle = OracleRecognizer {
        table: ds.table.clone(),
        beam_width: 4,
        max_symbols: 5,
    };
    print!("{}", evaluate(&oracle, &ds, "oracle")?.to_csv()?);
    Ok(())
}
