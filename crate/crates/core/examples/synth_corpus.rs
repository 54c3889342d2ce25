//! Generates a small bilingual corpus and prints a few utterances.
//!
//! `cargo run --example synth_corpus [-- OUT_DIR]`

use codemix_rnnt::corpus::{load_dataset, make_dataset, save_dataset, CorpusConfig, Split, SplitSizes};

fn main() -> codemix_rnnt::Result<()> {
    let config = CorpusConfig {
        splits: SplitSizes {
            train: 20,
            test_a: 3,
            test_b: 3,
            test_mixed: 3,
        },
        ..Default::default()
    };
    let ds = make_dataset(&config)?;
    println!("combined table: {} symbols, blank at {}", ds.table.len(), ds.table.blank());
    for split in Split::TESTS {
        let u = &ds.split(split)[0];
        let words: Vec<String> = u.words.iter().map(|w| format!("{}:{}", w.lang, w.text)).collect();
        println!(
            "{:<18} {:>3} frames x {:>2} dims  {:>2} labels  {}",
            u.id,
            u.num_frames(),
            u.features.cols(),
            u.labels.len(),
            words.join(" ")
        );
    }
    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::PathBuf::from(dir);
        save_dataset(&ds, &dir)?;
        assert_eq!(load_dataset(&dir)?, ds);
        println!("saved to {} and reloaded", dir.display());
    }
    Ok(())
}
