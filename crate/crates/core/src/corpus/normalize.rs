use serde::{Deserialize, Serialize};

use super::{AnnotatedBook, CharacterEntry, CharacterId, NormalizedText, QaExample, Sentence};

pub fn is_character_token(token: &str) -> bool {
    CharacterId::parse(token).is_some()
}

/// Collapses each maximal run of tokens sharing one character id into a
/// single id token and lowercases everything else.
pub(crate) fn collapse<'a>(tokens: impl IntoIterator<Item = (&'a str, Option<CharacterId>)>) -> NormalizedText {
    let mut out: Vec<String> = Vec::new();
    let mut prev: Option<CharacterId> = None;
    for (text, ch) in tokens {
        match ch {
            Some(id) => {
                if prev.as_ref() != Some(&id) {
                    out.push(id.as_str().to_string());
                }
                prev = Some(id);
            }
            None => {
                out.push(text.to_lowercase());
                prev = None;
            }
        }
    }
    NormalizedText::new(out)
}

pub fn normalize_sentence(sentence: &Sentence) -> NormalizedText {
    collapse(sentence.tokens.iter().map(|t| (t.text.as_str(), t.char.clone())))
}

/// Normalized text of every sentence, in book order.
pub fn normalize_mentions(book: &AnnotatedBook) -> Vec<NormalizedText> {
    book.sentences.iter().map(normalize_sentence).collect()
}

/// Replaces roster alias occurrences in a question with character ids.
///
/// Scans left to right; at each position the alias covering the most tokens
/// wins, with ties going to the earlier roster entry. Matching is
/// case-insensitive over whitespace-split alias tokens.
pub fn normalize_question(q: &QaExample, roster: &[CharacterEntry]) -> NormalizedText {
    let lowered: Vec<String> = q.tokens.iter().map(|t| t.to_lowercase()).collect();
    let aliases: Vec<(Vec<String>, &CharacterId)> = roster
        .iter()
        .flat_map(|c| {
            c.aliases
                .iter()
                .map(move |a| (a.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>(), &c.id))
        })
        .filter(|(toks, _)| !toks.is_empty())
        .collect();

    let mut out = Vec::with_capacity(lowered.len());
    let mut i = 0;
    while i < lowered.len() {
        let mut best: Option<(usize, &CharacterId)> = None;
        for (toks, id) in &aliases {
            let n = toks.len();
            if i + n <= lowered.len()
                && lowered[i..i + n] == toks[..]
                && best.is_none_or(|(len, _)| n > len)
            {
                best = Some((n, id));
            }
        }
        match best {
            Some((n, id)) => {
                out.push(id.as_str().to_string());
                i += n;
            }
            None => {
                out.push(lowered[i].clone());
                i += 1;
            }
        }
    }
    NormalizedText::new(out)
}

/// A book reduced to what retrieval, embedding and answering need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBook {
    pub book_id: String,
    pub sentences: Vec<NormalizedText>,
    pub roster: Vec<CharacterId>,
}

impl NormalizedBook {
    pub fn from_book(book: &AnnotatedBook) -> Self {
        NormalizedBook {
            book_id: book.book_id.clone(),
            sentences: normalize_mentions(book),
            roster: book.roster_ids(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::*;
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn span_collapse_and_pronouns() {
        let book = toy_book();
        let norm = normalize_mentions(&book);
        assert_eq!(norm[0].tokens, toks(&["@char1", "smiled", "."]));
        assert_eq!(norm[1].tokens, toks(&["@char1", "ran", "."]));
    }

    #[test]
    fn idempotent_on_toy() {
        for s in normalize_mentions(&toy_book()) {
            assert_eq!(s.renormalize(), s);
        }
    }

    fn question(tokens: &[&str]) -> QaExample {
        QaExample {
            question_id: "q".into(),
            book_id: "b".into(),
            tokens: toks(tokens),
            gold: vec![CharacterId::new(2)],
        }
    }

    #[test]
    fn question_alias_replacement() {
        let roster = vec![entry("@char1", "Valancourt", 0), entry("@char2", "Emily", 0)];
        let q = question(&["Who", "helps", "Emily", "escape", "?"]);
        assert_eq!(normalize_question(&q, &roster).tokens, toks(&["who", "helps", "@char2", "escape", "?"]));
    }

    #[test]
    fn longest_alias_wins() {
        let mut emily = entry("@char2", "Emily St. Aubert", 0);
        emily.aliases = vec!["Emily".into(), "Emily St. Aubert".into()];
        let st = entry("@char5", "St. Aubert", 0);
        let roster = vec![st, emily];
        let q = question(&["Who", "loves", "Emily", "St.", "Aubert", "?"]);
        assert_eq!(normalize_question(&q, &roster).tokens, toks(&["who", "loves", "@char2", "?"]));
    }

    #[test]
    fn alias_ties_follow_roster_order() {
        let roster = vec![entry("@char7", "Montoni", 0), entry("@char8", "Montoni", 0)];
        let q = question(&["Who", "is", "montoni", "?"]);
        assert_eq!(normalize_question(&q, &roster).tokens[2], "@char7");
    }

    #[test]
    fn no_alias_only_lowercases() {
        let roster = vec![entry("@char1", "Annette", 0)];
        let q = question(&["Who", "owns", "the", "Castle", "?"]);
        assert_eq!(normalize_question(&q, &roster).tokens, toks(&["who", "owns", "the", "castle", "?"]));
    }

    fn raw_sentence() -> impl Strategy<Value = Vec<(String, Option<u8>)>> {
        prop::collection::vec(("[A-Za-z]{1,6}", prop::option::of(0u8..3)), 0..30)
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(raw in raw_sentence()) {
            let norm = collapse(raw.iter().map(|(t, c)| (t.as_str(), c.map(|c| CharacterId::new(c as u64)))));
            prop_assert_eq!(norm.renormalize(), norm);
        }

        #[test]
        fn mention_spans_are_conserved(raw in raw_sentence()) {
            let norm = collapse(raw.iter().map(|(t, c)| (t.as_str(), c.map(|c| CharacterId::new(c as u64)))));
            for c in 0u8..3 {
                let spans = (0..raw.len())
                    .filter(|&i| raw[i].1 == Some(c) && (i == 0 || raw[i - 1].1 != Some(c)))
                    .count();
                let id = CharacterId::new(c as u64);
                let emitted = norm.tokens.iter().filter(|t| *t == id.as_str()).count();
                prop_assert_eq!(spans, emitted);
            }
        }
    }
}
