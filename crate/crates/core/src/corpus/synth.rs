use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::stack_subsample;
use super::symbols::{build_combined, build_symbol_table, default_graphemes, CombinedTable, Lang, Word};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Tensor};

/// Which test condition an utterance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "mono_A")]
    MonoA,
    #[serde(rename = "mono_B")]
    MonoB,
    #[serde(rename = "mixed")]
    Mixed,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::MonoA, Condition::MonoB, Condition::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Condition::MonoA => "mono_A",
            Condition::MonoB => "mono_B",
            Condition::Mixed => "mixed",
        }
    }

    pub fn mono(lang: Lang) -> Self {
        match lang {
            Lang::A => Condition::MonoA,
            Lang::B => Condition::MonoB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSizes {
    pub train: usize,
    pub test_a: usize,
    pub test_b: usize,
    pub test_mixed: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 5000,
            test_a: 100,
            test_b: 100,
            test_mixed: 100,
        }
    }
}

/// Proportions of the three conditions inside the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainMix {
    pub mono_a: f64,
    pub mono_b: f64,
    pub mixed: f64,
}

impl Default for TrainMix {
    fn default() -> Self {
        Self {
            mono_a: 0.35,
            mono_b: 0.35,
            mixed: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub graphemes_a: usize,
    pub graphemes_b: usize,
    pub raw_dim: usize,
    pub frames_per_grapheme: usize,
    /// Raw-frame count per grapheme varies uniformly by up to this much.
    pub frame_jitter: usize,
    /// Noise-only raw frames between words and after the last word.
    pub gap_frames: usize,
    pub noise_std: f64,
    /// Inclusive `[min, max]`.
    pub words_per_utterance: (usize, usize),
    /// Inclusive `[min, max]`.
    pub graphemes_per_word: (usize, usize),
    pub switch_prob: f64,
    pub stack: usize,
    pub skip: usize,
    pub splits: SplitSizes,
    pub train_mix: TrainMix,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            graphemes_a: 10,
            graphemes_b: 10,
            raw_dim: 8,
            frames_per_grapheme: 3,
            frame_jitter: 1,
            gap_frames: 3,
            noise_std: 0.1,
            words_per_utterance: (2, 5),
            graphemes_per_word: (2, 4),
            switch_prob: 0.5,
            stack: 3,
            skip: 3,
            splits: SplitSizes::default(),
            train_mix: TrainMix::default(),
            seed: 1,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let counts = [
            ("graphemes_a", self.graphemes_a),
            ("graphemes_b", self.graphemes_b),
            ("raw_dim", self.raw_dim),
            ("frames_per_grapheme", self.frames_per_grapheme),
            ("stack", self.stack),
            ("skip", self.skip),
            ("words_per_utterance.min", self.words_per_utterance.0),
            ("graphemes_per_word.min", self.graphemes_per_word.0),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.frame_jitter >= self.frames_per_grapheme {
            return bad("frame_jitter must be smaller than frames_per_grapheme".into());
        }
        if self.words_per_utterance.0 > self.words_per_utterance.1
            || self.graphemes_per_word.0 > self.graphemes_per_word.1
        {
            return bad("ranges must satisfy min <= max".into());
        }
        if self.words_per_utterance.1 < 2 {
            return bad("code-mixed utterances need at least two words".into());
        }
        if self.graphemes_per_word.1 > 1 && (self.graphemes_a < 2 || self.graphemes_b < 2) {
            return bad("multi-grapheme words need at least two graphemes per language".into());
        }
        if !(0.0..=1.0).contains(&self.switch_prob) {
            return bad(format!("switch_prob {} outside [0, 1]", self.switch_prob));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std {} must be finite and >= 0", self.noise_std));
        }
        let m = &self.train_mix;
        for p in [m.mono_a, m.mono_b, m.mixed] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("train_mix proportion {p} outside [0, 1]"));
            }
        }
        if (m.mono_a + m.mono_b + m.mixed - 1.0).abs() > 1e-9 {
            return bad("train_mix proportions must sum to 1".into());
        }
        let s = &self.splits;
        if s.test_a == 0 || s.test_b == 0 || s.test_mixed == 0 {
            return bad("every test condition needs at least one utterance".into());
        }
        Ok(())
    }
}

/// One synthetic utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub condition: Condition,
    pub seed: u64,
    pub words: Vec<Word>,
    /// Combined-table indices; never blank.
    pub labels: Vec<usize>,
    /// Stacked, subsampled frames (`T x stack*raw_dim`).
    pub features: Tensor,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn transcript(&self) -> Vec<String> {
        self.words.iter().map(|w| w.text.clone()).collect()
    }
}

/// Generator state shared by all utterances of one config: the symbol
/// tables and each grapheme's fixed embedding.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    config: CorpusConfig,
    table: CombinedTable,
    embeddings: [Vec<Vec<f64>>; 2],
}

impl Synthesizer {
    pub fn new(config: CorpusConfig) -> Result<Self> {
        config.validate()?;
        let a = build_symbol_table(default_graphemes(Lang::A, config.graphemes_a), Lang::A)?;
        let b = build_symbol_table(default_graphemes(Lang::B, config.graphemes_b), Lang::B)?;
        let table = build_combined(a, b)?;
        let embed = |lang: Lang, count: usize| -> Vec<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xE0 + lang.index() as u64));
            (0..count)
                .map(|_| (0..config.raw_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect()
        };
        let embeddings = [embed(Lang::A, config.graphemes_a), embed(Lang::B, config.graphemes_b)];
        Ok(Self {
            config,
            table,
            embeddings,
        })
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn table(&self) -> &CombinedTable {
        &self.table
    }

    pub fn embedding(&self, lang: Lang, grapheme: usize) -> &[f64] {
        &self.embeddings[lang.index()][grapheme]
    }

    fn word_langs(&self, condition: Condition, rng: &mut ChaCha8Rng) -> Vec<Lang> {
        let (lo, hi) = self.config.words_per_utterance;
        let lo = if condition == Condition::Mixed { lo.max(2) } else { lo };
        let n = rng.gen_range(lo..=hi);
        match condition {
            Condition::MonoA => vec![Lang::A; n],
            Condition::MonoB => vec![Lang::B; n],
            Condition::Mixed => {
                let mut cur = if rng.gen_bool(0.5) { Lang::A } else { Lang::B };
                let mut langs = Vec::with_capacity(n);
                for i in 0..n {
                    if i > 0 && rng.gen_bool(self.config.switch_prob) {
                        cur = cur.other();
                    }
                    langs.push(cur);
                }
                if langs.iter().all(|&l| l == langs[0]) {
                    let last = langs.len() - 1;
                    langs[last] = langs[0].other();
                }
                langs
            }
        }
    }

    /// Generates one utterance; a pure function of `(config, condition, seed)`.
    pub fn synth_utterance(&self, condition: Condition, seed: u64, id: impl Into<String>) -> Result<Utterance> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let langs = self.word_langs(condition, &mut rng);

        let mut raw: Vec<f64> = Vec::new();
        let mut words = Vec::with_capacity(langs.len());
        let mut labels = Vec::new();
        let d0 = cfg.raw_dim;
        let mut push_frame = |rng: &mut ChaCha8Rng, base: Option<&[f64]>| {
            for j in 0..d0 {
                let noise = if cfg.noise_std > 0.0 {
                    let z: f64 = StandardNormal.sample(rng);
                    cfg.noise_std * z
                } else {
                    0.0
                };
                raw.push(base.map_or(0.0, |b| b[j]) + noise);
            }
        };

        for (w, &lang) in langs.iter().enumerate() {
            if w > 0 {
                for _ in 0..cfg.gap_frames {
                    push_frame(&mut rng, None);
                }
            }
            let table = self.table.table(lang);
            let count = table.graphemes().len();
            let len = rng.gen_range(cfg.graphemes_per_word.0..=cfg.graphemes_per_word.1);
            let mut text = String::new();
            let mut prev: Option<usize> = None;
            for pos in 0..len {
                // adjacent repeats would be acoustically indistinguishable
                let g = loop {
                    let g = rng.gen_range(0..count);
                    if Some(g) != prev || count == 1 {
                        break g;
                    }
                };
                prev = Some(g);
                text.push_str(&table.graphemes()[g]);
                let local = if pos == 0 { table.word_start(g) } else { table.grapheme(g) };
                labels.push(self.table.to_combined(lang, local));

                let jitter = cfg.frame_jitter as i64;
                let offset = if jitter > 0 { rng.gen_range(-jitter..=jitter) } else { 0 };
                let frames = (cfg.frames_per_grapheme as i64 + offset).max(1) as usize;
                let emb = self.embeddings[lang.index()][g].clone();
                for _ in 0..frames {
                    push_frame(&mut rng, Some(&emb));
                }
            }
            words.push(Word { text, lang });
        }
        for _ in 0..cfg.gap_frames {
            push_frame(&mut rng, None);
        }

        let t0 = raw.len() / d0;
        let raw = Tensor::matrix(t0, d0, raw)?;
        let features = stack_subsample(&raw, cfg.stack, cfg.skip)?;
        Ok(Utterance {
            id: id.into(),
            condition,
            seed,
            words,
            labels,
            features,
        })
    }

    /// Raw (un-stacked) frames of an utterance, regenerated from its seed.
    pub fn raw_frames(&self, condition: Condition, seed: u64) -> Result<Tensor> {
        let mut cfg = self.config.clone();
        cfg.stack = 1;
        cfg.skip = 1;
        let unstacked = Synthesizer {
            config: cfg,
            table: self.table.clone(),
            embeddings: self.embeddings.clone(),
        };
        Ok(unstacked.synth_utterance(condition, seed, "")?.features)
    }
}
