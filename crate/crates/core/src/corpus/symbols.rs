use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the two languages. Each language owns a disjoint script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lang {
    A,
    B,
}

impl Lang {
    pub const BOTH: [Lang; 2] = [Lang::A, Lang::B];

    pub fn index(self) -> usize {
        match self {
            Lang::A => 0,
            Lang::B => 1,
        }
    }

    pub fn other(self) -> Lang {
        match self {
            Lang::A => Lang::B,
            Lang::B => Lang::A,
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lang::A => "A",
            Lang::B => "B",
        })
    }
}

pub const BLANK: &str = "<blank>";
pub const NOISE: &str = "<noise>";
pub const WORD_START_PREFIX: &str = "B_";

/// What a per-language table entry stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Grapheme(usize),
    /// Word-initial variant of a grapheme.
    WordStart(usize),
    Blank,
    Noise,
}

/// Per-language symbol inventory: graphemes, their `B_` word-start variants,
/// blank and noise, densely indexed in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableSpec", into = "TableSpec")]
pub struct SymbolTable {
    lang: Lang,
    graphemes: Vec<String>,
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TableSpec {
    language: Lang,
    graphemes: Vec<String>,
}

impl TryFrom<TableSpec> for SymbolTable {
    type Error = Error;

    fn try_from(spec: TableSpec) -> Result<Self> {
        build_symbol_table(spec.graphemes, spec.language)
    }
}

impl From<SymbolTable> for TableSpec {
    fn from(t: SymbolTable) -> Self {
        TableSpec {
            language: t.lang,
            graphemes: t.graphemes,
        }
    }
}

pub fn build_symbol_table(graphemes: Vec<String>, lang: Lang) -> Result<SymbolTable> {
    if graphemes.is_empty() {
        return Err(Error::Invalid(format!("language {lang} has no graphemes")));
    }
    let mut seen = HashSet::new();
    for g in &graphemes {
        if g.is_empty() || g == BLANK || g == NOISE || g.starts_with(WORD_START_PREFIX) {
            return Err(Error::Invalid(format!("reserved grapheme name {g:?}")));
        }
        if !seen.insert(g.as_str()) {
            return Err(Error::Invalid(format!("duplicate grapheme {g:?} in language {lang}")));
        }
    }
    let mut entries = graphemes.clone();
    entries.extend(graphemes.iter().map(|g| format!("{WORD_START_PREFIX}{g}")));
    entries.push(BLANK.to_string());
    entries.push(NOISE.to_string());
    let index = entries.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
    Ok(SymbolTable {
        lang,
        graphemes,
        entries,
        index,
    })
}

impl SymbolTable {
    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn graphemes(&self) -> &[String] {
        &self.graphemes
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn index_of(&self, entry: &str) -> Option<usize> {
        self.index.get(entry).copied()
    }

    pub fn grapheme(&self, g: usize) -> usize {
        g
    }

    pub fn word_start(&self, g: usize) -> usize {
        self.graphemes.len() + g
    }

    pub fn blank(&self) -> usize {
        2 * self.graphemes.len()
    }

    pub fn noise(&self) -> usize {
        2 * self.graphemes.len() + 1
    }

    pub fn kind(&self, idx: usize) -> SymbolKind {
        let n = self.graphemes.len();
        match idx {
            i if i < n => SymbolKind::Grapheme(i),
            i if i < 2 * n => SymbolKind::WordStart(i - n),
            i if i == 2 * n => SymbolKind::Blank,
            _ => SymbolKind::Noise,
        }
    }

    /// Local indices of every entry except blank, in table order.
    pub fn non_blank(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| i != self.blank()).collect()
    }
}

/// Both languages in one index space: A's non-blank entries, then B's
/// non-blank entries, then a single shared blank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CombinedSpec", into = "CombinedSpec")]
pub struct CombinedTable {
    a: SymbolTable,
    b: SymbolTable,
}

#[derive(Serialize, Deserialize)]
struct CombinedSpec {
    a: SymbolTable,
    b: SymbolTable,
}

impl TryFrom<CombinedSpec> for CombinedTable {
    type Error = Error;

    fn try_from(spec: CombinedSpec) -> Result<Self> {
        build_combined(spec.a, spec.b)
    }
}

impl From<CombinedTable> for CombinedSpec {
    fn from(t: CombinedTable) -> Self {
        CombinedSpec { a: t.a, b: t.b }
    }
}

/// A combined index resolved to its language and local index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinedSymbol {
    Blank,
    Symbol(Lang, usize),
}

/// A decoded word with the language of its script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub lang: Lang,
}

pub fn build_combined(a: SymbolTable, b: SymbolTable) -> Result<CombinedTable> {
    if a.lang == b.lang {
        return Err(Error::Invalid("combined table needs two different languages".into()));
    }
    let (a, b) = if a.lang == Lang::A { (a, b) } else { (b, a) };
    let a_set: HashSet<&String> = a.graphemes.iter().collect();
    if let Some(g) = b.graphemes.iter().find(|g| a_set.contains(g)) {
        return Err(Error::Invalid(format!("grapheme {g:?} appears in both languages")));
    }
    Ok(CombinedTable { a, b })
}

impl CombinedTable {
    pub fn table(&self, lang: Lang) -> &SymbolTable {
        match lang {
            Lang::A => &self.a,
            Lang::B => &self.b,
        }
    }

    pub fn len(&self) -> usize {
        self.a.len() + self.b.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn blank(&self) -> usize {
        self.len() - 1
    }

    fn offset(&self, lang: Lang) -> usize {
        match lang {
            Lang::A => 0,
            Lang::B => self.a.len() - 1,
        }
    }

    /// Combined index range of a language's non-blank symbols.
    pub fn segment(&self, lang: Lang) -> std::ops::Range<usize> {
        let start = self.offset(lang);
        start..start + self.table(lang).len() - 1
    }

    pub fn to_combined(&self, lang: Lang, local: usize) -> usize {
        let t = self.table(lang);
        let blank = t.blank();
        match local.cmp(&blank) {
            std::cmp::Ordering::Less => self.offset(lang) + local,
            std::cmp::Ordering::Equal => self.blank(),
            std::cmp::Ordering::Greater => self.offset(lang) + local - 1,
        }
    }

    pub fn from_combined(&self, idx: usize) -> Result<CombinedSymbol> {
        if idx == self.blank() {
            return Ok(CombinedSymbol::Blank);
        }
        for lang in Lang::BOTH {
            let seg = self.segment(lang);
            if seg.contains(&idx) {
                let pos = idx - seg.start;
                let blank = self.table(lang).blank();
                let local = if pos < blank { pos } else { pos + 1 };
                return Ok(CombinedSymbol::Symbol(lang, local));
            }
        }
        Err(Error::Invalid(format!("combined index {idx} out of range {}", self.len())))
    }

    pub fn lang_of(&self, idx: usize) -> Option<Lang> {
        match self.from_combined(idx) {
            Ok(CombinedSymbol::Symbol(lang, _)) => Some(lang),
            _ => None,
        }
    }

    pub fn entry(&self, idx: usize) -> Result<&str> {
        Ok(match self.from_combined(idx)? {
            CombinedSymbol::Blank => BLANK,
            CombinedSymbol::Symbol(lang, local) => &self.table(lang).entries()[local],
        })
    }

    /// Combined indices of one language's symbols in local-table order,
    /// with the shared blank standing in for the language's own blank.
    pub fn lang_to_combined(&self, lang: Lang) -> Vec<usize> {
        (0..self.table(lang).len()).map(|l| self.to_combined(lang, l)).collect()
    }

    /// Splits a label sequence into words at word-start symbols. Noise and
    /// blank symbols are dropped; a word takes the language of its first
    /// grapheme.
    pub fn detokenize(&self, labels: &[usize]) -> Vec<Word> {
        let mut words: Vec<Word> = Vec::new();
        for &idx in labels {
            let Ok(CombinedSymbol::Symbol(lang, local)) = self.from_combined(idx) else {
                continue;
            };
            let table = self.table(lang);
            match table.kind(local) {
                SymbolKind::WordStart(g) => words.push(Word {
                    text: table.graphemes()[g].clone(),
                    lang,
                }),
                SymbolKind::Grapheme(g) => match words.last_mut() {
                    Some(w) => w.text.push_str(&table.graphemes()[g]),
                    None => words.push(Word {
                        text: table.graphemes()[g].clone(),
                        lang,
                    }),
                },
                SymbolKind::Blank | SymbolKind::Noise => {}
            }
        }
        words
    }
}

/// Default grapheme inventories: Latin letters for A, Devanagari consonants
/// for B, falling back to numbered names past the end of each script.
pub fn default_graphemes(lang: Lang, count: usize) -> Vec<String> {
    (0..count)
        .map(|i| match lang {
            Lang::A if i < 26 => char::from(b'a' + i as u8).to_string(),
            Lang::B if i < 37 => char::from_u32(0x0915 + i as u32).unwrap().to_string(),
            _ => format!("[{lang}{i}]"),
        })
        .collect()
}
