use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{edit_counts, werr, ErrorCounts};
use crate::corpus::{CombinedTable, Dataset, Lang, Split, Utterance, Word};
use crate::decoder::{beam_search, beam_search_grid, DecodeOptions};
use crate::error::{Error, Result};
use crate::model::{Model, PosteriorGrid};

/// Anything that turns an utterance into words.
pub trait Recognizer: Sync {
    fn recognize(&self, utt: &Utterance) -> Result<Vec<Word>>;
}

/// Beam search with a trained model.
pub struct ModelRecognizer<'m> {
    pub model: &'m Model,
    pub options: DecodeOptions,
}

impl Recognizer for ModelRecognizer<'_> {
    fn recognize(&self, utt: &Utterance) -> Result<Vec<Word>> {
        let d = beam_search(self.model, &utt.features, &self.options)?;
        Ok(self.model.config.table.detokenize(&d.best().labels))
    }
}

/// A stand-in model whose grid puts almost all mass on the reference
/// alignment, decoded with the regular beam search.
pub struct OracleRecognizer {
    pub table: CombinedTable,
    pub beam_width: usize,
    pub max_symbols: usize,
}

impl OracleRecognizer {
    pub fn grid(&self, utt: &Utterance) -> Result<PosteriorGrid> {
        let (k, blank) = (self.table.len(), self.table.blank());
        let labels = &utt.labels;
        let eps = 1e-3;
        PosteriorGrid::from_probs(utt.num_frames(), labels.len() + 1, k, blank, |_, u, s| {
            let target = labels.get(u).copied().unwrap_or(blank);
            if s == target {
                1.0 - eps
            } else {
                eps / (k - 1) as f64
            }
        })
    }
}

impl Recognizer for OracleRecognizer {
    fn recognize(&self, utt: &Utterance) -> Result<Vec<Word>> {
        let hyps = beam_search_grid(&self.grid(utt)?, self.beam_width, self.max_symbols)?;
        Ok(self.table.detokenize(&hyps[0].labels))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: String,
    pub utterances: usize,
    pub wer: f64,
    pub counts: ErrorCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageReport {
    pub lang: Lang,
    pub wer: f64,
    pub counts: ErrorCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WerrEntry {
    pub split: String,
    pub base_wer: f64,
    pub wer: f64,
    /// `None` when the baseline WER is zero.
    pub werr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub splits: Vec<SplitReport>,
    /// WER of each language's words within the code-mixed test split.
    pub mixed_by_language: Vec<LanguageReport>,
    pub werr: Option<Vec<WerrEntry>>,
}

impl EvalReport {
    pub fn split(&self, split: Split) -> Option<&SplitReport> {
        self.splits.iter().find(|s| s.split == split.name())
    }

    pub fn wer(&self, split: Split) -> Option<f64> {
        self.split(split).map(|s| s.wer)
    }

    /// Fills the WERR columns against a baseline report.
    pub fn compare(&mut self, base: &EvalReport) -> Result<()> {
        let mut out = Vec::new();
        for s in &self.splits {
            let b = base
                .splits
                .iter()
                .find(|b| b.split == s.split)
                .ok_or_else(|| Error::Data(format!("baseline report has no {} split", s.split)))?;
            out.push(WerrEntry {
                split: s.split.clone(),
                base_wer: b.wer,
                wer: s.wer,
                werr: werr(b.wer, s.wer).ok(),
            });
        }
        self.werr = Some(out);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per split: `label, split, utterances, reference_words,
    /// substitutions, insertions, deletions, wer[, base_wer, werr]`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "label",
            "split",
            "utterances",
            "reference_words",
            "substitutions",
            "insertions",
            "deletions",
            "wer",
        ];
        if self.werr.is_some() {
            header.extend(["base_wer", "werr"]);
        }
        w.write_record(&header)?;
        for s in &self.splits {
            let c = &s.counts;
            let mut row = vec![
                self.label.clone(),
                s.split.clone(),
                s.utterances.to_string(),
                c.reference_words.to_string(),
                c.substitutions.to_string(),
                c.insertions.to_string(),
                c.deletions.to_string(),
                s.wer.to_string(),
            ];
            if let Some(entries) = &self.werr {
                let e = entries.iter().find(|e| e.split == s.split);
                row.push(e.map(|e| e.base_wer.to_string()).unwrap_or_default());
                row.push(e.and_then(|e| e.werr).map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()?).map_err(|e| Error::io(&csv, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn words_of(words: &[Word], lang: Option<Lang>) -> Vec<&str> {
    words
        .iter()
        .filter(|w| lang.is_none_or(|l| w.lang == l))
        .map(|w| w.text.as_str())
        .collect()
}

/// Recognizes every test utterance and aggregates corpus-level WER per split.
pub fn evaluate(recognizer: &dyn Recognizer, dataset: &Dataset, label: &str) -> Result<EvalReport> {
    let mut splits = Vec::new();
    let mut by_lang = [ErrorCounts::default(); 2];
    for split in Split::TESTS {
        let utts = dataset.split(split);
        let hyps: Vec<Vec<Word>> = utts.par_iter().map(|u| recognizer.recognize(u)).collect::<Result<_>>()?;
        let mut counts = ErrorCounts::default();
        for (u, h) in utts.iter().zip(&hyps) {
            counts.add(&edit_counts(&words_of(&u.words, None), &words_of(h, None)));
            if split == Split::TestMixed {
                for lang in Lang::BOTH {
                    let c = edit_counts(&words_of(&u.words, Some(lang)), &words_of(h, Some(lang)));
                    by_lang[lang.index()].add(&c);
                }
            }
        }
        splits.push(SplitReport {
            split: split.name().to_string(),
            utterances: utts.len(),
            wer: counts.rate(),
            counts,
        });
    }
    let mixed_by_language = Lang::BOTH
        .into_iter()
        .map(|lang| LanguageReport {
            lang,
            wer: by_lang[lang.index()].rate(),
            counts: by_lang[lang.index()],
        })
        .collect();
    Ok(EvalReport {
        label: label.to_string(),
        splits,
        mixed_by_language,
        werr: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_dataset, CorpusConfig, SplitSizes};

    fn dataset() -> Dataset {
        let cfg = CorpusConfig {
            splits: SplitSizes {
                train: 3,
                test_a: 4,
                test_b: 4,
                test_mixed: 6,
            },
            ..Default::default()
        };
        make_dataset(&cfg).unwrap()
    }

    #[test]
    fn oracle_scores_zero() {
        let ds = dataset();
        let oracle = OracleRecognizer {
            table: ds.table.clone(),
            beam_width: 4,
            max_symbols: 5,
        };
        let r = evaluate(&oracle, &ds, "oracle").unwrap();
        for s in &r.splits {
            assert_eq!(s.wer, 0.0, "{}", s.split);
            assert!(s.counts.reference_words > 0);
        }
        assert!(r.mixed_by_language.iter().all(|l| l.wer == 0.0 && l.counts.reference_words > 0));
    }

    struct Silent;
    impl Recognizer for Silent {
        fn recognize(&self, _: &Utterance) -> Result<Vec<Word>> {
            Ok(Vec::new())
        }
    }

    #[test]
    fn silence_deletes_everything_and_werr_against_self_is_zero() {
        let ds = dataset();
        let mut r = evaluate(&Silent, &ds, "silent").unwrap();
        assert!(r.splits.iter().all(|s| s.wer == 1.0 && s.counts.deletions == s.counts.reference_words));
        let base = r.clone();
        r.compare(&base).unwrap();
        assert!(r.werr.as_ref().unwrap().iter().all(|e| e.werr == Some(0.0)));
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 4);
        let back: EvalReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
