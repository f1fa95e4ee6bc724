use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{KwsError, Result};

const VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];
const CONSONANTS: [&str; 24] = [
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH", "T", "TH", "V", "W",
    "Y", "Z", "ZH",
];

/// Maps phoneme symbols to ids `1..=len`; id 0 is reserved for padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl PhonemeInventory {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i + 1).is_some() {
                return Err(KwsError::invalid(format!("duplicate phoneme `{s}`")));
            }
        }
        Ok(Self { symbols, index })
    }

    /// ARPAbet with lexical stress on vowels: 15 x 3 + 24 = 69 symbols.
    pub fn arpabet() -> Self {
        let mut symbols = Vec::with_capacity(69);
        for v in VOWELS {
            for stress in 0..3 {
                symbols.push(format!("{v}{stress}"));
            }
        }
        symbols.extend(CONSONANTS.iter().map(|c| c.to_string()));
        Self::new(symbols).expect("built-in inventory has unique symbols")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        id.checked_sub(1).and_then(|i| self.symbols.get(i)).map(String::as_str)
    }

    /// Encodes whitespace-separated symbols, e.g. `"HH AH0 L OW1"`.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let ids: Vec<usize> = text
            .split_whitespace()
            .map(|s| {
                self.id(s)
                    .ok_or_else(|| KwsError::invalid(format!("unknown phoneme `{s}`")))
            })
            .collect::<Result<_>>()?;
        if ids.is_empty() {
            return Err(KwsError::invalid("empty phoneme sequence"));
        }
        Ok(ids)
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        ids.iter()
            .map(|&id| {
                self.symbol(id).ok_or(KwsError::OutOfVocabulary {
                    id,
                    max: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.join(" "))
    }
}

/// Word-to-pronunciation table read from `WORD PH1 PH2 ...` lines.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<usize>>,
}

impl Lexicon {
    pub fn parse(text: &str, inventory: &PhonemeInventory, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(";;;") || line.starts_with('#') {
                continue;
            }
            let (word, pron) = line.split_once(char::is_whitespace).ok_or_else(|| KwsError::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: "expected a word followed by phonemes".into(),
            })?;
            let ids = inventory.encode(pron).map_err(|e| KwsError::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            entries.entry(word.to_lowercase()).or_insert(ids);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path, inventory: &PhonemeInventory) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        Self::parse(&text, inventory, &path.display().to_string())
    }

    pub fn insert(&mut self, word: &str, ids: Vec<usize>) {
        self.entries.insert(word.to_lowercase(), ids);
    }

    pub fn get(&self, word: &str) -> Option<&[usize]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<usize>)> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arpabet_has_69_symbols() {
        let inv = PhonemeInventory::arpabet();
        assert_eq!(inv.len(), 69);
        assert_eq!(inv.id("AA0"), Some(1));
        assert_eq!(inv.id("ZH"), Some(69));
        assert_eq!(inv.symbol(0), None);
        let ids = inv.encode("HH AH0 L OW1").unwrap();
        assert_eq!(inv.decode(&ids).unwrap(), "HH AH0 L OW1");
        assert!(inv.encode("QQ").is_err());
        assert!(matches!(inv.decode(&[70]), Err(KwsError::OutOfVocabulary { id: 70, .. })));
    }

    #[test]
    fn lexicon_reports_line_numbers() {
        let inv = PhonemeInventory::arpabet();
        let lex = Lexicon::parse(";;; comment\nHELLO HH AH0 L OW1\n", &inv, "lex.txt").unwrap();
        assert_eq!(lex.get("hello").unwrap().len(), 4);
        let err = Lexicon::parse("A AH0\nB XX\n", &inv, "lex.txt").unwrap_err();
        assert!(err.to_string().starts_with("lex.txt:2:"), "{err}");
    }
}
