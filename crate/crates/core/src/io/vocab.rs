use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token table with a bijective token/id mapping; ids 0..3 are the reserved
/// `<pad>`, `<bos>`, `<eos>`, `<unk>` tokens, always first.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from content tokens (reserved tokens are prepended).
    pub fn from_content_tokens(content: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(content);
        let mut ids = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::contract(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(Error::Vocab {
                index: id as usize,
                size: self.tokens.len(),
            })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Encodes as `<bos> tokens… <eos>`, mapping unknown words to `<unk>`.
    /// The id sequence is capped at `t_max` entries, so at most `t_max - 2`
    /// content tokens survive.
    pub fn encode(&self, tokens: &[String], t_max: usize) -> Result<Vec<u32>> {
        if t_max < 2 {
            return Err(Error::contract("t_max must be at least 2"));
        }
        let keep = tokens.len().min(t_max - 2);
        let mut ids = Vec::with_capacity(keep + 2);
        ids.push(BOS);
        for t in &tokens[..keep] {
            ids.push(self.id_or_unk(t));
        }
        ids.push(EOS);
        Ok(ids)
    }

    /// Decodes ids to a sentence, stopping at the first `<eos>` and dropping
    /// all reserved tokens.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut words = Vec::new();
        for &id in ids {
            if id == EOS {
                break;
            }
            if id <= UNK {
                continue;
            }
            if let Ok(tok) = self.token(id) {
                words.push(tok.to_string());
            }
        }
        words.join(" ")
    }

    /// Plain-text format: one token per line, line number = id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path.as_ref(), out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        let lines: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        if lines.len() < RESERVED.len() {
            return Err(Error::contract("vocabulary file missing reserved tokens"));
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if lines[i] != *r {
                return Err(Error::contract(format!(
                    "vocabulary line {i} is {:?}, expected {r:?}",
                    lines[i]
                )));
            }
        }
        Self::from_content_tokens(lines[RESERVED.len()..].iter().cloned())
    }
}

/// Lowercases, splits on Unicode whitespace, and strips trailing
/// `.`/`,`/`!`/`?` from each word; emptied words are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .map(|w| w.trim_end_matches(['.', ',', '!', '?']).to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Builds a vocabulary from caption corpora: words with corpus frequency
/// `>= min_count`, ordered by (frequency desc, token asc) after the reserved
/// tokens.
pub fn build_vocab<'a>(captions: impl IntoIterator<Item = &'a str>, min_count: usize) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::contract("min_count must be at least 1"));
    }
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen_any = false;
    for caption in captions {
        seen_any = true;
        for tok in tokenize(caption) {
            *freq.entry(tok).or_insert(0) += 1;
        }
    }
    if !seen_any {
        return Err(Error::contract("empty caption corpus"));
    }
    let mut kept: Vec<(String, usize)> = freq.into_iter().filter(|(_, c)| *c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_content_tokens(kept.into_iter().map(|(t, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_vocab_orders_deterministically() {
        let v = build_vocab(["a dog", "a cat"], 1).unwrap();
        let toks: Vec<&str> = v.tokens().iter().map(|s| s.as_str()).collect();
        assert_eq!(toks, ["<pad>", "<bos>", "<eos>", "<unk>", "a", "cat", "dog"]);
    }

    #[test]
    fn min_count_filters() {
        let v = build_vocab(["a dog", "a cat"], 2).unwrap();
        let toks: Vec<&str> = v.tokens().iter().map(|s| s.as_str()).collect();
        assert_eq!(toks, ["<pad>", "<bos>", "<eos>", "<unk>", "a"]);
    }

    #[test]
    fn empty_corpus_is_a_contract_error() {
        assert!(build_vocab(std::iter::empty::<&str>(), 1).is_err());
    }

    #[test]
    fn encode_wraps_with_bos_eos() {
        let v = build_vocab(["a dog"], 1).unwrap();
        let ids = v.encode(&tokenize("a dog"), 50).unwrap();
        assert_eq!(ids[0], BOS);
        assert_eq!(*ids.last().unwrap(), EOS);
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn out_of_vocab_maps_to_unk() {
        let v = build_vocab(["a dog"], 1).unwrap();
        let ids = v.encode(&tokenize("a zebra"), 50).unwrap();
        assert_eq!(ids[2], UNK);
    }

    #[test]
    fn decode_encode_round_trip() {
        let v = build_vocab(["a dog runs fast", "a cat sleeps"], 1).unwrap();
        let s = "a dog sleeps";
        let ids = v.encode(&tokenize(s), 50).unwrap();
        assert_eq!(v.decode(&ids), s);
    }

    #[test]
    fn encode_truncates_to_t_max() {
        let v = build_vocab(["a b c d e"], 1).unwrap();
        let ids = v.encode(&tokenize("a b c d e"), 4).unwrap();
        assert_eq!(ids.len(), 4);
        assert_eq!(*ids.last().unwrap(), EOS);
    }

    #[test]
    fn tokenizer_strips_terminal_punctuation() {
        assert_eq!(tokenize("A dog. Runs, fast!?"), ["a", "dog", "runs", "fast"]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = build_vocab(["a dog runs"], 1).unwrap();
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(v.tokens(), back.tokens());
    }
}
