//! Annotated books, questions, and character-mention normalization.

mod load;
mod normalize;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use load::{
    book_to_jsonl, load_book, load_books_dir, load_questions, parse_book, write_book, write_questions, RosterLookup,
};
pub use normalize::{
    is_character_token, normalize_mentions, normalize_question, normalize_sentence, NormalizedBook,
};
pub(crate) use normalize::collapse;

/// Canonical character identifier, serialized as `@charN`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CharacterId(String);

impl CharacterId {
    pub const PREFIX: &'static str = "@char";

    pub fn new(n: u64) -> Self {
        CharacterId(format!("{}{n}", Self::PREFIX))
    }

    /// Parses the canonical `@charN` form.
    pub fn parse(s: &str) -> Option<Self> {
        let digits = s.strip_prefix(Self::PREFIX)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        Some(CharacterId(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CharacterId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        CharacterId::parse(&s).ok_or_else(|| format!("invalid character id {s:?} (expected @charN)"))
    }
}

impl From<CharacterId> for String {
    fn from(c: CharacterId) -> String {
        c.0
    }
}

impl fmt::Display for CharacterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One parsed token. `head` is the governor's index within the sentence, or
/// -1 for the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    #[serde(default)]
    pub lemma: Option<String>,
    pub pos: String,
    pub head: i64,
    pub deprel: String,
    #[serde(default)]
    pub char: Option<CharacterId>,
}

impl Token {
    pub fn head_index(&self) -> Option<usize> {
        usize::try_from(self.head).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Indices of the dependents of `head`, in surface order.
    pub fn children(&self, head: usize) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.head_index() == Some(head))
            .map(|(i, _)| i)
    }

    /// All tokens dominated by `root`, including it, in surface order.
    pub fn subtree(&self, root: usize) -> Vec<usize> {
        let mut keep = vec![false; self.tokens.len()];
        keep[root] = true;
        // Trees are validated acyclic, so a fixed point is reached in at most
        // depth-many passes.
        let mut changed = true;
        while changed {
            changed = false;
            for (i, t) in self.tokens.iter().enumerate() {
                if !keep[i] && t.head_index().is_some_and(|h| keep[h]) {
                    keep[i] = true;
                    changed = true;
                }
            }
        }
        (0..self.tokens.len()).filter(|&i| keep[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterEntry {
    pub id: CharacterId,
    pub name: String,
    pub aliases: Vec<String>,
    pub mention_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedBook {
    pub book_id: String,
    pub sentences: Vec<Sentence>,
    pub roster: Vec<CharacterEntry>,
}

impl AnnotatedBook {
    pub fn character(&self, id: &CharacterId) -> Option<&CharacterEntry> {
        self.roster.iter().find(|c| &c.id == id)
    }

    pub fn roster_ids(&self) -> Vec<CharacterId> {
        self.roster.iter().map(|c| c.id.clone()).collect()
    }

    /// Checks every structural invariant of the book.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.sentences.is_empty() {
            return Err(ValidationError::Empty);
        }
        let mut ids = HashSet::new();
        for c in &self.roster {
            if !ids.insert(&c.id) {
                return Err(ValidationError::DuplicateCharacter { id: c.id.clone() });
            }
            if !c.aliases.iter().any(|a| a == &c.name) {
                return Err(ValidationError::NameNotAlias { id: c.id.clone(), name: c.name.clone() });
            }
        }

        let mut counts = vec![0u64; self.roster.len()];
        for (expected, s) in self.sentences.iter().enumerate() {
            if s.index != expected {
                return Err(ValidationError::NonContiguous { expected, found: s.index });
            }
            validate_tree(s)?;
            for (ti, t) in s.tokens.iter().enumerate() {
                if let Some(id) = &t.char {
                    match self.roster.iter().position(|c| &c.id == id) {
                        Some(pos) => counts[pos] += 1,
                        None => {
                            return Err(ValidationError::UnknownCharacter {
                                sentence: s.index,
                                token: ti,
                                id: id.clone(),
                            })
                        }
                    }
                }
            }
        }

        for (c, &counted) in self.roster.iter().zip(&counts) {
            if c.mention_count != counted {
                return Err(ValidationError::MentionCount {
                    id: c.id.clone(),
                    declared: c.mention_count,
                    counted,
                });
            }
        }
        Ok(())
    }
}

fn validate_tree(s: &Sentence) -> Result<(), ValidationError> {
    let n = s.tokens.len();
    let sentence = s.index;
    let mut roots = 0;
    for (i, t) in s.tokens.iter().enumerate() {
        if t.deprel.is_empty() {
            return Err(ValidationError::EmptyDeprel { sentence, token: i });
        }
        match t.head {
            -1 => roots += 1,
            h if h < -1 || h >= n as i64 => {
                return Err(ValidationError::HeadOutOfRange { sentence, token: i, head: t.head })
            }
            h if h as usize == i => return Err(ValidationError::SelfLoop { sentence, token: i }),
            _ => {}
        }
    }
    if roots != 1 {
        return Err(ValidationError::RootCount { sentence, roots });
    }
    for start in 0..n {
        let mut seen = vec![false; n];
        let mut cur = start;
        while let Some(h) = s.tokens[cur].head_index() {
            if seen[cur] {
                return Err(ValidationError::Cycle { sentence, token: start });
            }
            seen[cur] = true;
            cur = h;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub question_id: String,
    pub book_id: String,
    pub tokens: Vec<String>,
    pub gold: Vec<CharacterId>,
}

/// Token sequence with every character mention collapsed to its `@charN` id
/// and all other tokens lowercased.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct NormalizedText {
    pub tokens: Vec<String>,
}

impl NormalizedText {
    pub fn new(tokens: Vec<String>) -> Self {
        NormalizedText { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Character ids in order of occurrence, repeats included.
    pub fn character_ids(&self) -> impl Iterator<Item = CharacterId> + '_ {
        self.tokens.iter().filter_map(|t| CharacterId::parse(t))
    }

    pub fn mentions(&self, id: &CharacterId) -> bool {
        self.tokens.iter().any(|t| t == id.as_str())
    }

    /// Re-applies normalization, treating `@charN` tokens as mentions.
    pub fn renormalize(&self) -> NormalizedText {
        normalize::collapse(self.tokens.iter().map(|t| (t.as_str(), CharacterId::parse(t))))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("sentence {sentence}: token {token} has head {head} outside the sentence")]
    HeadOutOfRange { sentence: usize, token: usize, head: i64 },
    #[error("sentence {sentence}: token {token} is its own head")]
    SelfLoop { sentence: usize, token: usize },
    #[error("sentence {sentence}: token {token} has an empty dependency label")]
    EmptyDeprel { sentence: usize, token: usize },
    #[error("sentence {sentence}: expected exactly one root, found {roots}")]
    RootCount { sentence: usize, roots: usize },
    #[error("sentence {sentence}: head links from token {token} form a cycle")]
    Cycle { sentence: usize, token: usize },
    #[error("sentence {sentence}: token {token} refers to unknown character {id}")]
    UnknownCharacter { sentence: usize, token: usize, id: CharacterId },
    #[error("sentence indices not contiguous: expected {expected}, found {found}")]
    NonContiguous { expected: usize, found: usize },
    #[error("character {id}: roster declares {declared} mentions but {counted} tokens carry it")]
    MentionCount { id: CharacterId, declared: u64, counted: u64 },
    #[error("character {id}: name {name:?} is not among its aliases")]
    NameNotAlias { id: CharacterId, name: String },
    #[error("character {id} listed twice in the roster")]
    DuplicateCharacter { id: CharacterId },
    #[error("book has no sentences")]
    Empty,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: book {book_id}: {source}")]
    Invalid {
        path: String,
        book_id: String,
        #[source]
        source: ValidationError,
    },
    #[error("question {question_id}: unknown book {book_id}")]
    UnknownBook { question_id: String, book_id: String },
    #[error("question {question_id}: gold character {id} is not in the roster of {book_id}")]
    UnknownGold { question_id: String, book_id: String, id: CharacterId },
    #[error("question {question_id}: {problem}")]
    BadQuestion { question_id: String, problem: &'static str },
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn character_id_parsing() {
        assert!(CharacterId::parse("@char0").is_some());
        assert!(CharacterId::parse("@char12").is_some());
        assert!(CharacterId::parse("@char").is_none());
        assert!(CharacterId::parse("@charX").is_none());
        assert!(CharacterId::parse("char1").is_none());
        assert_eq!(CharacterId::new(4).as_str(), "@char4");
    }

    #[test]
    fn toy_book_is_valid() {
        toy_book().validate().unwrap();
    }

    #[test]
    fn head_out_of_range_names_sentence() {
        let mut b = toy_book();
        b.sentences[1].tokens[0].head = 99;
        let err = b.validate().unwrap_err();
        assert!(matches!(err, ValidationError::HeadOutOfRange { sentence: 1, token: 0, head: 99 }));
        assert!(err.to_string().contains("sentence 1"));
    }

    #[test]
    fn cycle_and_root_errors() {
        let mut b = toy_book();
        // smiled -> Potter -> smiled, no root left
        b.sentences[0].tokens[2].head = 1;
        assert!(matches!(b.validate(), Err(ValidationError::RootCount { sentence: 0, roots: 0 })));

        let mut b = toy_book();
        // Harry -> Potter -> Harry while smiled stays root
        b.sentences[0].tokens[1].head = 0;
        assert!(matches!(b.validate(), Err(ValidationError::Cycle { sentence: 0, .. })));

        let mut b = toy_book();
        b.sentences[0].tokens[3].head = 3;
        assert!(matches!(b.validate(), Err(ValidationError::SelfLoop { .. })));
    }

    #[test]
    fn mention_count_recount() {
        let mut b = toy_book();
        // Recount by char id: 2 tokens in sentence 0, 1 in sentence 1.
        let counted: usize = b
            .sentences
            .iter()
            .flat_map(|s| &s.tokens)
            .filter(|t| t.char.as_ref().map(|c| c.as_str()) == Some("@char1"))
            .count();
        assert_eq!(counted, 3);
        b.roster[0].mention_count = 4;
        assert!(matches!(
            b.validate(),
            Err(ValidationError::MentionCount { declared: 4, counted: 3, .. })
        ));
    }

    #[test]
    fn unknown_character_and_index_gaps() {
        let mut b = toy_book();
        b.sentences[1].tokens[0].char = CharacterId::parse("@char9");
        assert!(matches!(b.validate(), Err(ValidationError::UnknownCharacter { .. })));

        let mut b = toy_book();
        b.sentences[1].index = 2;
        assert!(matches!(b.validate(), Err(ValidationError::NonContiguous { expected: 1, found: 2 })));
    }

    #[test]
    fn subtree_and_children() {
        let b = toy_book();
        let s = &b.sentences[0];
        assert_eq!(s.children(2).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(s.subtree(1), vec![0, 1]);
        assert_eq!(s.subtree(2), vec![0, 1, 2, 3]);
    }
}
