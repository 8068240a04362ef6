use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{AnnotatedBook, CharacterEntry, CorpusError, QaExample, Sentence, Token};

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum BookLine {
    Book { book_id: String, characters: Vec<CharacterEntry> },
    Sentence { index: usize, tokens: Vec<Token> },
}

/// Looks up a book's character roster by id.
pub trait RosterLookup {
    fn roster(&self, book_id: &str) -> Option<&[CharacterEntry]>;
}

impl RosterLookup for [AnnotatedBook] {
    fn roster(&self, book_id: &str) -> Option<&[CharacterEntry]> {
        self.iter().find(|b| b.book_id == book_id).map(|b| b.roster.as_slice())
    }
}

impl RosterLookup for Vec<AnnotatedBook> {
    fn roster(&self, book_id: &str) -> Option<&[CharacterEntry]> {
        self.as_slice().roster(book_id)
    }
}

impl RosterLookup for BTreeMap<String, AnnotatedBook> {
    fn roster(&self, book_id: &str) -> Option<&[CharacterEntry]> {
        self.get(book_id).map(|b| b.roster.as_slice())
    }
}

impl RosterLookup for HashMap<String, Vec<CharacterEntry>> {
    fn roster(&self, book_id: &str) -> Option<&[CharacterEntry]> {
        self.get(book_id).map(Vec::as_slice)
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

/// Loads and validates one book file.
pub fn load_book(path: impl AsRef<Path>) -> Result<AnnotatedBook, CorpusError> {
    let path = path.as_ref();
    parse_book(&read(path)?, &path.display().to_string())
}

/// Parses book JSON Lines. `origin` labels errors.
pub fn parse_book(text: &str, origin: &str) -> Result<AnnotatedBook, CorpusError> {
    let parse_err = |line: usize, message: String| CorpusError::Parse { path: origin.to_string(), line, message };

    let mut header: Option<(String, Vec<CharacterEntry>)> = None;
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: BookLine = serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
        match parsed {
            BookLine::Book { book_id, characters } => {
                if header.is_some() || !sentences.is_empty() {
                    return Err(parse_err(lineno, "book header must be the first line".into()));
                }
                header = Some((book_id, characters));
            }
            BookLine::Sentence { index, tokens } => {
                if header.is_none() {
                    return Err(parse_err(lineno, "sentence before book header".into()));
                }
                sentences.push(Sentence { index, tokens });
            }
        }
    }
    let (book_id, roster) = header.ok_or_else(|| parse_err(1, "missing book header".into()))?;
    let book = AnnotatedBook { book_id, sentences, roster };
    book.validate().map_err(|source| CorpusError::Invalid {
        path: origin.to_string(),
        book_id: book.book_id.clone(),
        source,
    })?;
    Ok(book)
}

/// Loads every `*.jsonl` file in `dir`, sorted by file name.
pub fn load_books_dir(dir: impl AsRef<Path>) -> Result<Vec<AnnotatedBook>, CorpusError> {
    let dir = dir.as_ref();
    let io_err = |source| CorpusError::Io { path: dir.display().to_string(), source };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let p = entry.map_err(io_err)?.path();
        if p.extension().is_some_and(|e| e == "jsonl") {
            paths.push(p);
        }
    }
    paths.sort();
    let books: Vec<AnnotatedBook> = paths.iter().map(load_book).collect::<Result<_, _>>()?;
    let mut seen = HashSet::new();
    for b in &books {
        if !seen.insert(b.book_id.as_str()) {
            return Err(CorpusError::Parse {
                path: dir.display().to_string(),
                line: 1,
                message: format!("book id {} appears in more than one file", b.book_id),
            });
        }
    }
    Ok(books)
}

/// Serializes a book in the format [`parse_book`] reads.
pub fn book_to_jsonl(book: &AnnotatedBook) -> String {
    let mut out = serde_json::json!({"type": "book", "book_id": book.book_id, "characters": book.roster}).to_string();
    out.push('\n');
    for s in &book.sentences {
        out.push_str(&serde_json::json!({"type": "sentence", "index": s.index, "tokens": s.tokens}).to_string());
        out.push('\n');
    }
    out
}

pub fn write_book(path: impl AsRef<Path>, book: &AnnotatedBook) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, book_to_jsonl(book)).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

pub fn write_questions(path: impl AsRef<Path>, questions: &[QaExample]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = String::new();
    for q in questions {
        out.push_str(&serde_json::to_string(q).expect("questions serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

/// Loads question JSON Lines and checks each against its book's roster.
/// Unknown fields are ignored, so generated-question files load as well.
pub fn load_questions<L: RosterLookup + ?Sized>(
    path: impl AsRef<Path>,
    books: &L,
) -> Result<Vec<QaExample>, CorpusError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut q: QaExample = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: origin.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        check_question(&mut q, books)?;
        out.push(q);
    }
    Ok(out)
}

pub(crate) fn check_question<L: RosterLookup + ?Sized>(q: &mut QaExample, books: &L) -> Result<(), CorpusError> {
    if q.tokens.is_empty() {
        return Err(CorpusError::BadQuestion { question_id: q.question_id.clone(), problem: "empty token list" });
    }
    if q.gold.is_empty() {
        return Err(CorpusError::BadQuestion { question_id: q.question_id.clone(), problem: "empty gold set" });
    }
    let roster = books.roster(&q.book_id).ok_or_else(|| CorpusError::UnknownBook {
        question_id: q.question_id.clone(),
        book_id: q.book_id.clone(),
    })?;
    let mut seen = HashSet::new();
    q.gold.retain(|g| seen.insert(g.clone()));
    for g in &q.gold {
        if !roster.iter().any(|c| &c.id == g) {
            return Err(CorpusError::UnknownGold {
                question_id: q.question_id.clone(),
                book_id: q.book_id.clone(),
                id: g.clone(),
            });
        }
    }
    Ok(())
}
