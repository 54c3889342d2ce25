use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::symbols::{CombinedTable, Lang, Word};
use super::synth::{Condition, CorpusConfig, Synthesizer, Utterance};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Tensor};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "test_A")]
    TestA,
    #[serde(rename = "test_B")]
    TestB,
    #[serde(rename = "test_mixed")]
    TestMixed,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::TestA, Split::TestB, Split::TestMixed];
    pub const TESTS: [Split; 3] = [Split::TestA, Split::TestB, Split::TestMixed];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestA => "test_A",
            Split::TestB => "test_B",
            Split::TestMixed => "test_mixed",
        }
    }

    pub fn parse(name: &str) -> Result<Split> {
        Split::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown split {name:?}")))
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::TestA => 2,
            Split::TestB => 3,
            Split::TestMixed => 4,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::parse(s)
    }
}

/// Generated corpus with one training and three test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: CorpusConfig,
    pub table: CombinedTable,
    pub train: Vec<Utterance>,
    pub test_a: Vec<Utterance>,
    pub test_b: Vec<Utterance>,
    pub test_mixed: Vec<Utterance>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Utterance] {
        match split {
            Split::Train => &self.train,
            Split::TestA => &self.test_a,
            Split::TestB => &self.test_b,
            Split::TestMixed => &self.test_mixed,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &Utterance> {
        Split::ALL.into_iter().flat_map(move |s| self.split(s).iter())
    }

    pub fn find(&self, id: &str) -> Option<&Utterance> {
        self.all().find(|u| u.id == id)
    }
}

fn train_conditions(config: &CorpusConfig) -> Vec<Condition> {
    let n = config.splits.train;
    let n_a = ((config.train_mix.mono_a * n as f64).round() as usize).min(n);
    let n_b = ((config.train_mix.mono_b * n as f64).round() as usize).min(n - n_a);
    let quota = [
        (Condition::MonoA, n_a),
        (Condition::MonoB, n_b),
        (Condition::Mixed, n - n_a - n_b),
    ];
    // interleave so that any prefix of the split keeps the proportions
    let mut used = [0usize; 3];
    (0..n)
        .map(|_| {
            let slot = (0..3)
                .filter(|&k| used[k] < quota[k].1)
                .min_by(|&x, &y| {
                    let key = |k: usize| (used[k] as f64 + 0.5) / quota[k].1 as f64;
                    key(x).total_cmp(&key(y))
                })
                .expect("quota covers the split");
            used[slot] += 1;
            quota[slot].0
        })
        .collect()
}

/// Per-utterance seed; distinct splits and indices draw from distinct streams.
pub fn utterance_seed(root: u64, split: Split, index: usize) -> u64 {
    derive_seed(derive_seed(root, split.stream()), index as u64)
}

pub fn make_dataset(config: &CorpusConfig) -> Result<Dataset> {
    config.validate()?;
    let synth = Synthesizer::new(config.clone())?;
    let gen = |split: Split, conds: Vec<Condition>| -> Result<Vec<Utterance>> {
        conds
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let seed = utterance_seed(config.seed, split, i);
                synth.synth_utterance(c, seed, format!("{}-{i:05}", split.name()))
            })
            .collect()
    };
    let s = &config.splits;
    Ok(Dataset {
        config: config.clone(),
        table: synth.table().clone(),
        train: gen(Split::Train, train_conditions(config))?,
        test_a: gen(Split::TestA, vec![Condition::MonoA; s.test_a])?,
        test_b: gen(Split::TestB, vec![Condition::MonoB; s.test_b])?,
        test_mixed: gen(Split::TestMixed, vec![Condition::Mixed; s.test_mixed])?,
    })
}

/// JSON-lines record for one utterance.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceRecord {
    id: String,
    condition: Condition,
    seed: u64,
    transcript: Vec<String>,
    languages: Vec<Lang>,
    labels: Vec<usize>,
    features: Vec<Vec<f64>>,
}

impl From<&Utterance> for UtteranceRecord {
    fn from(u: &Utterance) -> Self {
        UtteranceRecord {
            id: u.id.clone(),
            condition: u.condition,
            seed: u.seed,
            transcript: u.transcript(),
            languages: u.words.iter().map(|w| w.lang).collect(),
            labels: u.labels.clone(),
            features: (0..u.features.rows()).map(|i| u.features.row_slice(i).to_vec()).collect(),
        }
    }
}

impl UtteranceRecord {
    fn into_utterance(self, table: &CombinedTable) -> Result<Utterance> {
        if self.transcript.len() != self.languages.len() {
            return Err(Error::Data(format!("{}: transcript/language length mismatch", self.id)));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= table.blank()) {
            return Err(Error::Data(format!("{}: label {bad} is blank or out of range", self.id)));
        }
        if self.features.is_empty() {
            return Err(Error::Data(format!("{}: no feature frames", self.id)));
        }
        let features = Tensor::from_rows(&self.features)
            .map_err(|e| Error::Data(format!("{}: {e}", self.id)))?;
        let words = self
            .transcript
            .into_iter()
            .zip(self.languages)
            .map(|(text, lang)| Word { text, lang })
            .collect();
        Ok(Utterance {
            id: self.id,
            condition: self.condition,
            seed: self.seed,
            words,
            labels: self.labels,
            features,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitEntry {
    split: Split,
    file: String,
    count: usize,
    seeds: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    config: CorpusConfig,
    table: CombinedTable,
    splits: Vec<SplitEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn split_file(split: Split) -> String {
    format!("{}.jsonl", split.name())
}

/// Writes one JSON-lines file per split plus `manifest.json`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for split in Split::ALL {
        let utts = dataset.split(split);
        let path = dir.join(split_file(split));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for u in utts {
            serde_json::to_writer(&mut w, &UtteranceRecord::from(u))?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        entries.push(SplitEntry {
            split,
            file: split_file(split),
            count: utts.len(),
            seeds: utts.iter().map(|u| u.seed).collect(),
        });
    }
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        config: dataset.config.clone(),
        table: dataset.table.clone(),
        splits: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "dataset format version {} (expected {DATASET_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let mut splits: [Vec<Utterance>; 4] = Default::default();
    for entry in &manifest.splits {
        let path = dir.join(&entry.file);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut utts = Vec::with_capacity(entry.count);
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: UtteranceRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
            utts.push(rec.into_utterance(&manifest.table)?);
        }
        if utts.len() != entry.count {
            return Err(Error::Data(format!(
                "{}: {} utterances, manifest says {}",
                path.display(),
                utts.len(),
                entry.count
            )));
        }
        let slot = Split::ALL.iter().position(|&s| s == entry.split).unwrap();
        splits[slot] = utts;
    }
    let [train, test_a, test_b, test_mixed] = splits;
    Ok(Dataset {
        config: manifest.config,
        table: manifest.table,
        train,
        test_a,
        test_b,
        test_mixed,
    })
}
