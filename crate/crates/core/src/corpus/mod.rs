//! Synthetic bilingual corpus: symbol tables, utterance synthesis, feature
//! stacking and dataset persistence.

mod dataset;
mod features;
mod symbols;
mod synth;

pub use dataset::{
    load_dataset, make_dataset, save_dataset, split_file, utterance_seed, Dataset, Split,
    DATASET_FORMAT_VERSION, MANIFEST_FILE,
};
pub use features::stack_subsample;
pub use symbols::{
    build_combined, build_symbol_table, default_graphemes, CombinedSymbol, CombinedTable, Lang,
    SymbolKind, SymbolTable, Word, BLANK, NOISE, WORD_START_PREFIX,
};
pub use synth::{Condition, CorpusConfig, SplitSizes, Synthesizer, TrainMix, Utterance};
