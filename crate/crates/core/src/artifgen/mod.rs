//! Artificial "Who" questions cut out of dependency trees.
//!
//! A site is a verb with a character-bearing subject (active voice), object
//! (active voice), or passive subject. The tree is pruned around the verb and
//! the character is replaced with "Who". The 20 sentences ending at the
//! source become the question's context.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{collapse, AnnotatedBook, CharacterId, CorpusError, QaExample, Sentence, Token};
use crate::par;

/// Sentences of context per question, counting the source sentence.
pub const CONTEXT_SENTENCES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    ActiveAgent,
    ActivePatient,
    PassivePatient,
}

impl SiteKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SiteKind::ActiveAgent => "active_agent",
            SiteKind::ActivePatient => "active_patient",
            SiteKind::PassivePatient => "passive_patient",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionSite {
    pub sentence: usize,
    pub verb: usize,
    pub kind: SiteKind,
    pub answer: CharacterId,
    /// Tokens of the argument subtree that carry the answer id.
    pub span: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rejection {
    TooShort,
    AnswerLeak,
    NoLemma,
    NoSubject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtificialQaExample {
    pub question_id: String,
    pub book_id: String,
    pub tokens: Vec<String>,
    pub gold: Vec<CharacterId>,
    pub source_sentence: usize,
    pub context: Vec<usize>,
}

impl ArtificialQaExample {
    pub fn to_qa_example(&self) -> QaExample {
        QaExample {
            question_id: self.question_id.clone(),
            book_id: self.book_id.clone(),
            tokens: self.tokens.clone(),
            gold: self.gold.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub book_id: String,
    pub sentences: usize,
    pub sites: usize,
    pub accepted: usize,
    pub too_short: usize,
    pub answer_leak: usize,
    pub no_lemma: usize,
    pub no_subject: usize,
}

pub fn is_verb(t: &Token) -> bool {
    t.pos.starts_with("VB")
}

fn is_prep(t: &Token) -> bool {
    // "agent" is the by-phrase label some parsers give passives
    matches!(t.deprel.as_str(), "prep" | "agent")
}

fn first_child<'a>(s: &'a Sentence, head: usize, rel: &'a str) -> impl Iterator<Item = usize> + 'a {
    s.children(head).filter(move |&c| s.tokens[c].deprel == rel)
}

fn has_child(s: &Sentence, head: usize, rel: &str) -> bool {
    first_child(s, head, rel).next().is_some()
}

/// Span of `arg`'s subtree carrying `arg`'s character id.
fn answer_span(s: &Sentence, arg: usize, id: &CharacterId) -> Vec<usize> {
    s.subtree(arg).into_iter().filter(|&i| s.tokens[i].char.as_ref() == Some(id)).collect()
}

/// Every extraction site of one sentence, by verb then kind.
pub fn find_sites(s: &Sentence) -> Vec<ExtractionSite> {
    let mut out = Vec::new();
    for (v, tok) in s.tokens.iter().enumerate() {
        if !is_verb(tok) {
            continue;
        }
        let passive = has_child(s, v, "auxpass");
        let roles: &[(&str, SiteKind)] = if passive {
            &[("nsubjpass", SiteKind::PassivePatient)]
        } else {
            &[("nsubj", SiteKind::ActiveAgent), ("dobj", SiteKind::ActivePatient)]
        };
        for &(rel, kind) in roles {
            let arg = first_child(s, v, rel).find(|&c| s.tokens[c].char.is_some());
            if let Some(arg) = arg {
                let answer = s.tokens[arg].char.clone().expect("filtered above");
                out.push(ExtractionSite { sentence: s.index, verb: v, kind, span: answer_span(s, arg, &answer), answer });
            }
        }
    }
    out
}

/// First-level prepositions of `head` with their object heads.
fn preps_with_objects(s: &Sentence, head: usize, keep: &mut [bool]) {
    for p in s.children(head).filter(|&c| is_prep(&s.tokens[c])) {
        keep[p] = true;
        for o in first_child(s, p, "pobj") {
            keep[o] = true;
        }
    }
}

fn render(s: &Sentence, kept: impl IntoIterator<Item = usize>) -> Vec<String> {
    collapse(kept.into_iter().map(|i| (s.tokens[i].text.as_str(), s.tokens[i].char.clone()))).tokens
}

/// Question tokens for `site`, or why it was dropped.
pub fn prune_to_question(s: &Sentence, site: &ExtractionSite) -> Result<Vec<String>, Rejection> {
    let v = site.verb;
    let body = match site.kind {
        SiteKind::ActiveAgent | SiteKind::PassivePatient => {
            let mut keep = vec![false; s.tokens.len()];
            keep[v] = true;
            for c in s.children(v) {
                if matches!(s.tokens[c].deprel.as_str(), "aux" | "auxpass" | "neg") {
                    keep[c] = true;
                }
            }
            preps_with_objects(s, v, &mut keep);
            for d in first_child(s, v, "dobj") {
                keep[d] = true;
                for det in first_child(s, d, "det") {
                    keep[det] = true;
                }
                preps_with_objects(s, d, &mut keep);
            }
            for &i in &site.span {
                keep[i] = false;
            }
            render(s, (0..s.tokens.len()).filter(|&i| keep[i]))
        }
        SiteKind::ActivePatient => {
            let subj = first_child(s, v, "nsubj").next().ok_or(Rejection::NoSubject)?;
            let lemma = s.tokens[v].lemma.as_deref().filter(|l| !l.is_empty()).ok_or(Rejection::NoLemma)?;
            let mut out = vec!["did".to_string()];
            out.extend(render(s, s.subtree(subj)));
            out.extend(render(s, first_child(s, v, "neg")));
            out.push(lemma.to_lowercase());
            let mut keep = vec![false; s.tokens.len()];
            preps_with_objects(s, v, &mut keep);
            out.extend(render(s, (0..s.tokens.len()).filter(|&i| keep[i])));
            out
        }
    };
    if body.len() < 2 {
        return Err(Rejection::TooShort);
    }
    if body.iter().any(|t| t == site.answer.as_str()) {
        return Err(Rejection::AnswerLeak);
    }
    let mut q = Vec::with_capacity(body.len() + 2);
    q.push("Who".to_string());
    q.extend(body);
    q.push("?".to_string());
    Ok(q)
}

/// Sentence indices `[max(0, i-19), i]`.
pub fn context_indices(i: usize) -> Vec<usize> {
    (i.saturating_sub(CONTEXT_SENTENCES - 1)..=i).collect()
}

fn generate_book(book: &AnnotatedBook) -> (Vec<ArtificialQaExample>, GenerationStats) {
    let mut stats = GenerationStats { book_id: book.book_id.clone(), sentences: book.sentences.len(), ..Default::default() };
    let mut out = Vec::new();
    for s in &book.sentences {
        for site in find_sites(s) {
            stats.sites += 1;
            match prune_to_question(s, &site) {
                Ok(tokens) => {
                    stats.accepted += 1;
                    out.push(ArtificialQaExample {
                        question_id: format!("{}:art:{}:{}:{}", book.book_id, s.index, site.verb, site.kind.as_str()),
                        book_id: book.book_id.clone(),
                        tokens,
                        gold: vec![site.answer],
                        source_sentence: s.index,
                        context: context_indices(s.index),
                    });
                }
                Err(Rejection::TooShort) => stats.too_short += 1,
                Err(Rejection::AnswerLeak) => stats.answer_leak += 1,
                Err(Rejection::NoLemma) => stats.no_lemma += 1,
                Err(Rejection::NoSubject) => stats.no_subject += 1,
            }
        }
    }
    (out, stats)
}

/// All accepted questions in (book, sentence, verb, kind) order.
pub fn generate_dataset(books: &[AnnotatedBook]) -> (Vec<ArtificialQaExample>, Vec<GenerationStats>) {
    let per_book = par::map(books, generate_book);
    let mut examples = Vec::new();
    let mut stats = Vec::with_capacity(per_book.len());
    for (ex, st) in per_book {
        examples.extend(ex);
        stats.push(st);
    }
    (examples, stats)
}

pub fn write_jsonl(path: &Path, examples: &[ArtificialQaExample]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads a file written by [`write_jsonl`].
pub fn read_jsonl(path: &Path) -> Result<Vec<ArtificialQaExample>, CorpusError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: origin.clone(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CorpusError::Parse { path: origin.clone(), line: i + 1, message: e.to_string() }))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::fixtures::{entry, tok};
    use crate::corpus::normalize_sentence;

    fn sent(tokens: Vec<Token>) -> Sentence {
        Sentence { index: 0, tokens }
    }

    pub fn marriat() -> Sentence {
        let mut had = tok("had", "VBD", -1, "root", None);
        had.lemma = Some("have".into());
        sent(vec![
            tok("Marriat", "NNP", 1, "nsubj", Some("@char1")),
            had,
            tok("a", "DT", 3, "det", None),
            tok("gift", "NN", 1, "dobj", None),
            tok("for", "IN", 3, "prep", None),
            tok("the", "DT", 6, "det", None),
            tok("invention", "NN", 4, "pobj", None),
            tok("of", "IN", 6, "prep", None),
            tok("stories", "NNS", 7, "pobj", None),
            tok(".", ".", 1, "punct", None),
        ])
    }

    pub fn hermione() -> Sentence {
        let mut attacked = tok("attacked", "VBN", -1, "root", None);
        attacked.lemma = Some("attack".into());
        sent(vec![
            tok("Hermione", "NNP", 2, "nsubjpass", Some("@char2")),
            tok("was", "VBD", 2, "auxpass", None),
            attacked,
            tok("by", "IN", 2, "prep", None),
            tok("another", "DT", 5, "det", None),
            tok("spell", "NN", 3, "pobj", None),
            tok(".", ".", 2, "punct", None),
        ])
    }

    fn words(q: &[String]) -> Vec<&str> {
        q.iter().map(String::as_str).collect()
    }

    #[test]
    fn active_figure_example() {
        let s = marriat();
        let sites = find_sites(&s);
        assert_eq!(sites.len(), 1);
        assert_eq!((sites[0].kind, sites[0].verb, sites[0].answer.as_str()), (SiteKind::ActiveAgent, 1, "@char1"));
        let q = prune_to_question(&s, &sites[0]).unwrap();
        assert_eq!(words(&q), ["Who", "had", "a", "gift", "for", "invention", "?"]);
    }

    #[test]
    fn passive_figure_example() {
        let s = hermione();
        let sites = find_sites(&s);
        assert_eq!(sites.len(), 1);
        assert_eq!((sites[0].kind, sites[0].verb), (SiteKind::PassivePatient, 2));
        let q = prune_to_question(&s, &sites[0]).unwrap();
        assert_eq!(words(&q), ["Who", "was", "attacked", "by", "spell", "?"]);
    }

    #[test]
    fn no_characters_no_sites() {
        let s = sent(vec![tok("Rain", "NN", 1, "nsubj", None), tok("fell", "VBD", -1, "root", None)]);
        assert!(find_sites(&s).is_empty());
    }

    #[test]
    fn intransitive_is_too_short() {
        let s = sent(vec![
            tok("Marriat", "NNP", 1, "nsubj", Some("@char1")),
            tok("slept", "VBD", -1, "root", None),
            tok(".", ".", 1, "punct", None),
        ]);
        let sites = find_sites(&s);
        assert_eq!(prune_to_question(&s, &sites[0]), Err(Rejection::TooShort));
    }

    fn harry_saw_ron(lemma: Option<&str>) -> Sentence {
        let mut saw = tok("saw", "VBD", -1, "root", None);
        saw.lemma = lemma.map(String::from);
        sent(vec![
            tok("Harry", "NNP", 1, "nsubj", Some("@char1")),
            saw,
            tok("Ron", "NNP", 1, "dobj", Some("@char2")),
            tok("in", "IN", 1, "prep", None),
            tok("the", "DT", 5, "det", None),
            tok("hall", "NN", 3, "pobj", None),
            tok(".", ".", 1, "punct", None),
        ])
    }

    #[test]
    fn both_active_roles() {
        let s = harry_saw_ron(Some("see"));
        let sites = find_sites(&s);
        let kinds: Vec<SiteKind> = sites.iter().map(|x| x.kind).collect();
        assert_eq!(kinds, [SiteKind::ActiveAgent, SiteKind::ActivePatient]);
        assert_eq!(words(&prune_to_question(&s, &sites[0]).unwrap()), ["Who", "saw", "@char2", "in", "hall", "?"]);
        assert_eq!(words(&prune_to_question(&s, &sites[1]).unwrap()), ["Who", "did", "@char1", "see", "in", "hall", "?"]);
        let no_lemma = harry_saw_ron(None);
        assert_eq!(prune_to_question(&no_lemma, &find_sites(&no_lemma)[1]), Err(Rejection::NoLemma));
    }

    #[test]
    fn answer_leak_is_rejected() {
        // "Harry saw Harry in the hall": the object repeats the answer
        let mut s = harry_saw_ron(Some("see"));
        s.tokens[2].char = Some(CharacterId::new(1));
        let sites = find_sites(&s);
        assert_eq!(prune_to_question(&s, &sites[0]), Err(Rejection::AnswerLeak));
    }

    #[test]
    fn negation_is_kept() {
        let s = sent(vec![
            tok("Harry", "NNP", 3, "nsubj", Some("@char1")),
            tok("did", "VBD", 3, "aux", None),
            tok("not", "RB", 3, "neg", None),
            tok("open", "VB", -1, "root", None),
            tok("it", "PRP", 3, "dobj", None),
        ]);
        let q = prune_to_question(&s, &find_sites(&s)[0]).unwrap();
        assert_eq!(words(&q), ["Who", "did", "not", "open", "it", "?"]);
    }

    #[test]
    fn multi_token_answer_span() {
        let s = sent(vec![
            tok("Harry", "NNP", 1, "compound", Some("@char1")),
            tok("Potter", "NNP", 2, "nsubj", Some("@char1")),
            tok("opened", "VBD", -1, "root", None),
            tok("the", "DT", 4, "det", None),
            tok("door", "NN", 2, "dobj", None),
        ]);
        let site = &find_sites(&s)[0];
        assert_eq!(site.span, [0, 1]);
        assert_eq!(words(&prune_to_question(&s, site).unwrap()), ["Who", "opened", "the", "door", "?"]);
    }

    #[test]
    fn contexts_and_ordering() {
        assert_eq!(context_indices(0), [0]);
        assert_eq!(context_indices(5), (0..=5).collect::<Vec<_>>());
        assert_eq!(context_indices(30), (11..=30).collect::<Vec<_>>());

        let mut sentences = Vec::new();
        for i in 0..10 {
            let mut s = marriat();
            s.index = i;
            sentences.push(s);
        }
        let book = AnnotatedBook { book_id: "b".into(), sentences, roster: vec![entry("@char1", "Marriat", 10)] };
        let (ex, stats) = generate_dataset(&[book]);
        assert_eq!(ex.len(), 10);
        assert_eq!(stats[0].accepted, 10);
        for (i, e) in ex.iter().enumerate() {
            assert_eq!(e.source_sentence, i);
            assert_eq!(e.context.len(), i + 1);
            assert_eq!(e.question_id, format!("b:art:{i}:1:active_agent"));
        }
    }

    /// True when `needle` is a subsequence of `hay`.
    pub fn is_subsequence(needle: &[String], hay: &[String]) -> bool {
        let mut it = hay.iter();
        needle.iter().all(|n| it.any(|h| h == n))
    }

    #[test]
    fn subject_questions_are_subsequences() {
        for s in [marriat(), hermione(), harry_saw_ron(Some("see"))] {
            let norm = normalize_sentence(&s).tokens;
            for site in find_sites(&s).iter().filter(|x| x.kind != SiteKind::ActivePatient) {
                let q = prune_to_question(&s, site).unwrap();
                assert!(is_subsequence(&q[1..q.len() - 1], &norm), "{q:?}");
            }
        }
    }

    /// Independent site count: walk arguments upward instead of verbs downward.
    fn oracle_site_count(s: &Sentence) -> usize {
        let mut seen = std::collections::BTreeSet::new();
        for t in &s.tokens {
            let Some(h) = t.head_index() else { continue };
            if t.char.is_none() || !s.tokens[h].pos.starts_with("VB") {
                continue;
            }
            let passive = s.tokens.iter().any(|c| c.head_index() == Some(h) && c.deprel == "auxpass");
            let kind = match (t.deprel.as_str(), passive) {
                ("nsubj", false) => 0,
                ("dobj", false) => 1,
                ("nsubjpass", true) => 2,
                _ => continue,
            };
            seen.insert((h, kind));
        }
        seen.len()
    }

    #[test]
    fn site_count_matches_rescan_on_synthetic_books() {
        let corpus = crate::synth::generate(&crate::synth::SynthConfig { books: 3, ..Default::default() });
        let (examples, stats) = generate_dataset(&corpus.books);
        for (book, st) in corpus.books.iter().zip(&stats) {
            let expected: usize = book.sentences.iter().map(oracle_site_count).sum();
            assert_eq!(st.sites, expected);
            assert_eq!(st.sites, st.accepted + st.too_short + st.answer_leak + st.no_lemma + st.no_subject);
        }
        for e in &examples {
            assert_eq!(e.tokens.first().map(String::as_str), Some("Who"));
            assert_eq!(e.tokens.last().map(String::as_str), Some("?"));
            assert!(!e.tokens.contains(&e.gold[0].as_str().to_string()));
            assert_eq!(e.context.len(), (e.source_sentence + 1).min(CONTEXT_SENTENCES));
            assert_eq!(*e.context.last().unwrap(), e.source_sentence);
            if !e.question_id.ends_with("active_patient") {
                let book = corpus.books.iter().find(|b| b.book_id == e.book_id).unwrap();
                let norm = normalize_sentence(&book.sentences[e.source_sentence]).tokens;
                assert!(is_subsequence(&e.tokens[1..e.tokens.len() - 1], &norm));
            }
        }
        assert_eq!(generate_dataset(&corpus.books), (examples, stats));
    }

    #[test]
    fn jsonl_round_trip() {
        let corpus = crate::synth::generate(&crate::synth::SynthConfig { books: 2, sentences_per_book: 30, ..Default::default() });
        let (examples, _) = generate_dataset(&corpus.books);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("art.jsonl");
        write_jsonl(&path, &examples).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), examples);
        std::fs::write(&path, "{\"question_id\": 1}\n").unwrap();
        assert!(matches!(read_jsonl(&path), Err(CorpusError::Parse { line: 1, .. })));
    }
}
