//! Fixed closed vocabulary and tokenized captions.
//!
//! The vocabulary is versioned: checkpoints record the version they were
//! trained against, and loading rejects a mismatch.

use crate::{Error, Result};

pub type TokenId = u16;

/// Current vocabulary version.
pub const VOCAB_VERSION: u32 = 1;

/// Maximum caption length including BOS/EOS.
pub const MAX_CAPTION_LEN: usize = 16;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;

const WORDS: &[&str] = &[
    "<pad>", "<bos>", "<eos>", // specials
    "a", "an", "the", "is", "of", "and", "picture", "image", "photo", // function words
    "red", "green", "blue", "yellow", // colors
    "circle", "square", "triangle", // shapes
    "circles", "squares", "triangles", // plural shapes
    "two", "three", // counts
    "small", "little", "large", "big", // sizes
];

/// The fixed word list shared by the grammar, the captioner, and the
/// n-gram metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: &'static [&'static str],
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::v1()
    }
}

impl Vocabulary {
    pub fn v1() -> Self {
        debug_assert!(WORDS.len() <= 64);
        Self { words: WORDS }
    }

    pub fn version(&self) -> u32 {
        VOCAB_VERSION
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn word(&self, id: TokenId) -> &'static str {
        self.words[id as usize]
    }

    pub fn id_of(&self, word: &str) -> Result<TokenId> {
        self.words
            .iter()
            .position(|&w| w == word)
            .map(|p| p as TokenId)
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    /// Tokenize a whitespace-separated sentence and wrap it in BOS/EOS.
    pub fn encode(&self, text: &str) -> Result<Caption> {
        let mut ids = vec![BOS];
        for word in text.split_whitespace() {
            ids.push(self.id_of(word)?);
        }
        ids.push(EOS);
        Caption::from_ids(self, ids)
    }
}

/// A tokenized sentence: surface tokens plus vocabulary indices, always
/// bracketed by BOS/EOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Caption {
    tokens: Vec<String>,
    ids: Vec<TokenId>,
}

impl Caption {
    pub fn from_ids(vocab: &Vocabulary, ids: Vec<TokenId>) -> Result<Self> {
        if ids.len() > MAX_CAPTION_LEN {
            return Err(Error::Parse {
                caption: format!("{ids:?}"),
                reason: format!("length {} exceeds {MAX_CAPTION_LEN}", ids.len()),
            });
        }
        if ids.first() != Some(&BOS) || ids.last() != Some(&EOS) {
            return Err(Error::Parse {
                caption: format!("{ids:?}"),
                reason: "caption must start with BOS and end with EOS".into(),
            });
        }
        for &id in &ids {
            if id as usize >= vocab.len() {
                return Err(Error::Parse {
                    caption: format!("{ids:?}"),
                    reason: format!("token id {id} outside vocabulary"),
                });
            }
        }
        let tokens = ids.iter().map(|&id| vocab.word(id).to_string()).collect();
        Ok(Self { tokens, ids })
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Token ids with BOS/EOS/PAD stripped — what the n-gram metrics score.
    pub fn content_ids(&self) -> Vec<TokenId> {
        self.ids.iter().copied().filter(|&id| id != BOS && id != EOS && id != PAD).collect()
    }

    /// Surface sentence without the BOS/EOS markers.
    pub fn text(&self) -> String {
        let mut words = Vec::with_capacity(self.tokens.len());
        for (&id, tok) in self.ids.iter().zip(&self.tokens) {
            if !matches!(id, BOS | EOS | PAD) {
                words.push(tok.as_str());
            }
        }
        words.join(" ")
    }
}
