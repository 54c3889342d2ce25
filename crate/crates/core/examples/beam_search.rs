//! Beam search and greedy decoding over a hand-built posterior grid that
//! switches language halfway through.

use codemix_rnnt::corpus::{build_combined, build_symbol_table, default_graphemes, Lang};
use codemix_rnnt::decoder::{beam_search_grid, greedy_decode_grid, transcript, DEFAULT_MAX_SYMBOLS};
use codemix_rnnt::model::PosteriorGrid;

fn main() -> codemix_rnnt::Result<()> {
    let a = build_symbol_table(default_graphemes(Lang::A, 4), Lang::A)?;
    let b = build_symbol_table(default_graphemes(Lang::B, 4), Lang::B)?;
    let table = build_combined(a, b)?;
    // "B_a0 a1" in language A, then "B_b2 b3" in language B.
    let labels = vec![
        table.to_combined(Lang::A, table.table(Lang::A).word_start(0)),
        table.to_combined(Lang::A, table.table(Lang::A).grapheme(1)),
        table.to_combined(Lang::B, table.table(Lang::B).word_start(2)),
        table.to_combined(Lang::B, table.table(Lang::B).grapheme(3)),
    ];
    let (k, blank) = (table.len(), table.blank());
    let frames = 2 * labels.len();
    // Label u is emitted at frame 2u; every other node favours blank.
    let grid = PosteriorGrid::from_probs(frames, labels.len() + 1, k, blank, |t, u, s| {
        let target = if u < labels.len() && t == 2 * u { labels[u] } else { blank };
        if s == target {
            0.9
        } else {
            0.1 / (k - 1) as f64
        }
    })?;

    let greedy = greedy_decode_grid(&grid, DEFAULT_MAX_SYMBOLS)?;
    println!("greedy: {:?} (score {:.4})", transcript(&table, &greedy), greedy.score);
    for (rank, h) in beam_search_grid(&grid, 4, DEFAULT_MAX_SYMBOLS)?.iter().enumerate() {
        let langs: Vec<String> = table.detokenize(&h.labels).iter().map(|w| w.lang.to_string()).collect();
        println!(
            "beam #{rank}: {:?} langs {:?} score {:.4}",
            transcript(&table, h),
            langs,
            h.score
        );
    }
    Ok(())
}
