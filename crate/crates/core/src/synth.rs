//! Seeded synthetic corpora with gold parses, for tests, benches and demos.
//!
//! Each book has a cast with Zipf-skewed prominence. Sentences come from a
//! handful of templates whose dependency trees are written out by hand:
//! transitive facts ("Mara took the lamp in the tower ."), pronoun facts,
//! passives, two-character interactions, and character-free filler.
//! Held-out questions ask "Who <verb> the <noun> ?" about facts that occur
//! in the book, and their gold set is recounted from the generated trees.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::{weighted::WeightedIndex, Distribution};

use crate::corpus::{AnnotatedBook, CharacterEntry, CharacterId, QaExample, Sentence, Token};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub books: usize,
    pub sentences_per_book: usize,
    pub characters_per_book: usize,
    /// Held-out questions over the whole corpus, spread evenly over books.
    pub questions: usize,
    /// Distinct (verb, noun) facts per book.
    pub facts_per_book: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { books: 10, sentences_per_book: 200, characters_per_book: 8, questions: 100, facts_per_book: 24, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub books: Vec<AnnotatedBook>,
    pub questions: Vec<QaExample>,
}

/// (lemma, past, participle)
const VERBS: &[(&str, &str, &str)] = &[
    ("take", "took", "taken"),
    ("find", "found", "found"),
    ("open", "opened", "opened"),
    ("carry", "carried", "carried"),
    ("break", "broke", "broken"),
    ("paint", "painted", "painted"),
    ("hide", "hid", "hidden"),
    ("buy", "bought", "bought"),
    ("steal", "stole", "stolen"),
    ("clean", "cleaned", "cleaned"),
    ("mend", "mended", "mended"),
    ("bring", "brought", "brought"),
    ("sell", "sold", "sold"),
    ("burn", "burned", "burned"),
    ("polish", "polished", "polished"),
    ("throw", "threw", "thrown"),
    ("lose", "lost", "lost"),
    ("guard", "guarded", "guarded"),
];

const SOCIAL: &[(&str, &str, &str)] = &[
    ("meet", "met", "met"),
    ("help", "helped", "helped"),
    ("follow", "followed", "followed"),
    ("thank", "thanked", "thanked"),
    ("warn", "warned", "warned"),
    ("greet", "greeted", "greeted"),
    ("call", "called", "called"),
    ("visit", "visited", "visited"),
];

const NOUNS: &[&str] = &[
    "lamp", "letter", "sword", "map", "key", "book", "coat", "ring", "boat", "horse", "box", "bell", "cup", "lantern",
    "basket", "clock", "mirror", "candle", "rope", "shield", "drum", "flag", "cart", "bottle", "crown", "scroll", "hammer",
    "wheel", "violin", "kettle",
];

const PLACES: &[&str] = &[
    "kitchen", "garden", "tower", "forest", "market", "library", "harbor", "chapel", "cellar", "stable", "hall", "village",
];

const ADJECTIVES: &[&str] = &["old", "quiet", "dark", "bright", "cold", "empty", "crowded", "strange"];

const FIRST_NAMES: &[&str] = &[
    "Mara", "Tomas", "Ilse", "Oren", "Wren", "Jasper", "Lina", "Corin", "Edda", "Felix", "Greta", "Hugo", "Ivo", "Juna",
    "Kasper", "Lotte", "Milo", "Nell", "Otto", "Pia", "Quill", "Rosa", "Silas", "Tilde", "Ulla", "Viggo", "Wanda", "Yara",
];

const SURNAMES: &[&str] = &["Brandt", "Hale", "Voss", "Marsh", "Keller", "Thorne", "Adler", "Crane"];

const PRONOUNS: &[&str] = &["He", "She"];

struct Cast {
    ids: Vec<CharacterId>,
    /// Surface tokens of each character's full name.
    names: Vec<Vec<String>>,
    weights: WeightedIndex<f64>,
}

struct Builder {
    tokens: Vec<Token>,
}

impl Builder {
    fn new() -> Self {
        Builder { tokens: Vec::new() }
    }

    /// Adds a token and returns its index. `head` is fixed up later for
    /// forward references, so it is given as an index here.
    fn push(&mut self, text: &str, lemma: &str, pos: &str, head: i64, deprel: &str, ch: Option<&CharacterId>) -> usize {
        self.tokens.push(Token {
            text: text.to_string(),
            lemma: Some(lemma.to_string()),
            pos: pos.to_string(),
            head,
            deprel: deprel.to_string(),
            char: ch.cloned(),
        });
        self.tokens.len() - 1
    }

    /// A character's name; the last token is the phrase head, earlier ones
    /// hang off it as compounds. Returns the head index.
    fn name(&mut self, cast: &Cast, who: usize, head: i64, deprel: &str) -> usize {
        let toks = &cast.names[who];
        let first = self.tokens.len();
        let head_idx = first + toks.len() - 1;
        for (k, t) in toks.iter().enumerate() {
            let last = k + 1 == toks.len();
            let (h, rel) = if last { (head, deprel) } else { (head_idx as i64, "compound") };
            self.push(t, &t.to_lowercase(), "NNP", h, rel, Some(&cast.ids[who]));
        }
        head_idx
    }

    fn finish(self, index: usize) -> Sentence {
        Sentence { index, tokens: self.tokens }
    }
}

const PENDING: i64 = i64::MIN;

fn set_head(b: &mut Builder, tok: usize, head: usize) {
    b.tokens[tok].head = head as i64;
}

/// "<A> <past> the <noun> in the <place> ."
fn fact_sentence(cast: &Cast, who: usize, verb: usize, noun: usize, place: usize, pronoun: bool) -> Builder {
    let (lemma, past, _) = VERBS[verb];
    let mut b = Builder::new();
    let subj = if pronoun {
        let p = PRONOUNS[who % 2];
        b.push(p, &p.to_lowercase(), "PRP", PENDING, "nsubj", Some(&cast.ids[who]))
    } else {
        b.name(cast, who, PENDING, "nsubj")
    };
    let v = b.push(past, lemma, "VBD", -1, "root", None);
    set_head(&mut b, subj, v);
    let det = b.push("the", "the", "DT", PENDING, "det", None);
    let obj = b.push(NOUNS[noun], NOUNS[noun], "NN", v as i64, "dobj", None);
    set_head(&mut b, det, obj);
    let prep = b.push("in", "in", "IN", v as i64, "prep", None);
    let det2 = b.push("the", "the", "DT", PENDING, "det", None);
    let pobj = b.push(PLACES[place], PLACES[place], "NN", prep as i64, "pobj", None);
    set_head(&mut b, det2, pobj);
    b.push(".", ".", ".", v as i64, "punct", None);
    b
}

/// "<A> was <participle> by <B> ."
fn passive_sentence(cast: &Cast, a: usize, verb: usize, by: usize) -> Builder {
    let (lemma, _, part) = SOCIAL[verb];
    let mut b = Builder::new();
    let subj = b.name(cast, a, PENDING, "nsubjpass");
    let aux = b.push("was", "be", "VBD", PENDING, "auxpass", None);
    let v = b.push(part, lemma, "VBN", -1, "root", None);
    set_head(&mut b, subj, v);
    set_head(&mut b, aux, v);
    let prep = b.push("by", "by", "IN", v as i64, "prep", None);
    b.name(cast, by, prep as i64, "pobj");
    b.push(".", ".", ".", v as i64, "punct", None);
    b
}

/// "<A> <past> <B> near the <place> ."
fn social_sentence(cast: &Cast, a: usize, verb: usize, other: usize, place: usize) -> Builder {
    let (lemma, past, _) = SOCIAL[verb];
    let mut b = Builder::new();
    let subj = b.name(cast, a, PENDING, "nsubj");
    let v = b.push(past, lemma, "VBD", -1, "root", None);
    set_head(&mut b, subj, v);
    b.name(cast, other, v as i64, "dobj");
    let prep = b.push("near", "near", "IN", v as i64, "prep", None);
    let det = b.push("the", "the", "DT", PENDING, "det", None);
    let pobj = b.push(PLACES[place], PLACES[place], "NN", prep as i64, "pobj", None);
    set_head(&mut b, det, pobj);
    b.push(".", ".", ".", v as i64, "punct", None);
    b
}

/// "The <place> was <adjective> ."
fn filler_sentence(place: usize, adj: usize) -> Builder {
    let mut b = Builder::new();
    let det = b.push("The", "the", "DT", PENDING, "det", None);
    let subj = b.push(PLACES[place], PLACES[place], "NN", PENDING, "nsubj", None);
    set_head(&mut b, det, subj);
    let cop = b.push("was", "be", "VBD", PENDING, "cop", None);
    let adj = b.push(ADJECTIVES[adj], ADJECTIVES[adj], "JJ", -1, "root", None);
    set_head(&mut b, subj, adj);
    set_head(&mut b, cop, adj);
    b.push(".", ".", ".", adj as i64, "punct", None);
    b
}

fn make_cast(rng: &mut ChaCha8Rng, n: usize) -> Cast {
    let mut first: Vec<&str> = FIRST_NAMES.to_vec();
    first.shuffle(rng);
    let names: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let given = first[i % first.len()].to_string();
            // every third character carries a surname
            if i % 3 == 2 {
                vec![given, SURNAMES.choose(rng).expect("nonempty").to_string()]
            } else {
                vec![given]
            }
        })
        .collect();
    // Zipf prominence over a shuffled order, so id number says nothing
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(rng);
    let weights = WeightedIndex::new(rank.iter().map(|&r| 1.0 / (r + 1) as f64)).expect("positive weights");
    Cast { ids: (1..=n as u64).map(CharacterId::new).collect(), names, weights }
}

fn other_than(rng: &mut ChaCha8Rng, cast: &Cast, who: usize) -> usize {
    loop {
        let o = cast.weights.sample(rng);
        if o != who {
            return o;
        }
    }
}

/// (verb, noun) of a fact sentence, if `s` is one.
fn fact_of(s: &Sentence) -> Option<(String, String, CharacterId)> {
    let v = s.tokens.iter().position(|t| t.deprel == "root")?;
    let subj = s.tokens.iter().find(|t| t.deprel == "nsubj" && t.head == v as i64)?;
    let obj = s.tokens.iter().find(|t| t.deprel == "dobj" && t.head == v as i64 && t.char.is_none())?;
    Some((s.tokens[v].text.clone(), obj.text.clone(), subj.char.clone()?))
}

fn generate_book(cfg: &SynthConfig, b: usize, rng: &mut ChaCha8Rng) -> (AnnotatedBook, Vec<QaExample>) {
    let n = cfg.characters_per_book.max(2);
    let cast = make_cast(rng, n);
    let book_id = format!("synth{:02}", b + 1);

    // each fact belongs to one character
    let mut pairs: Vec<(usize, usize)> = (0..VERBS.len()).flat_map(|v| (0..NOUNS.len()).map(move |o| (v, o))).collect();
    pairs.shuffle(rng);
    let facts: Vec<(usize, usize, usize)> = pairs
        .into_iter()
        .take(cfg.facts_per_book.max(1))
        .map(|(v, o)| (v, o, cast.weights.sample(rng)))
        .collect();

    let mut sentences = Vec::with_capacity(cfg.sentences_per_book);
    let mut last_subject: Option<usize> = None;
    for i in 0..cfg.sentences_per_book {
        let roll: f64 = rng.random();
        let place = rng.random_range(0..PLACES.len());
        let builder = if roll < 0.45 {
            let (v, o, who) = *facts.choose(rng).expect("nonempty");
            let pronoun = last_subject == Some(who) && rng.random_bool(0.5);
            last_subject = Some(who);
            fact_sentence(&cast, who, v, o, place, pronoun)
        } else if roll < 0.6 {
            let a = cast.weights.sample(rng);
            let by = other_than(rng, &cast, a);
            last_subject = Some(a);
            passive_sentence(&cast, a, rng.random_range(0..SOCIAL.len()), by)
        } else if roll < 0.8 {
            let a = cast.weights.sample(rng);
            let other = other_than(rng, &cast, a);
            last_subject = Some(a);
            social_sentence(&cast, a, rng.random_range(0..SOCIAL.len()), other, place)
        } else {
            last_subject = None;
            filler_sentence(place, rng.random_range(0..ADJECTIVES.len()))
        };
        sentences.push(builder.finish(i));
    }

    let mut counts = vec![0u64; n];
    for s in &sentences {
        for t in &s.tokens {
            if let Some(c) = &t.char {
                counts[cast.ids.iter().position(|x| x == c).expect("cast member")] += 1;
            }
        }
    }
    let roster = (0..n)
        .map(|k| {
            let full = cast.names[k].join(" ");
            let mut aliases = vec![full.clone()];
            if cast.names[k].len() > 1 {
                aliases.push(cast.names[k][0].clone());
            }
            CharacterEntry { id: cast.ids[k].clone(), name: full, aliases, mention_count: counts[k] }
        })
        .collect();
    let book = AnnotatedBook { book_id: book_id.clone(), sentences, roster };

    // facts that made it into the text, with every character who did them
    let mut seen: Vec<(String, String)> = Vec::new();
    let mut gold_of = std::collections::BTreeMap::<(String, String), BTreeSet<CharacterId>>::new();
    for s in &book.sentences {
        if let Some((verb, noun, who)) = fact_of(s) {
            let key = (verb, noun);
            if !gold_of.contains_key(&key) {
                seen.push(key.clone());
            }
            gold_of.entry(key).or_default().insert(who);
        }
    }
    let n_q = cfg.questions / cfg.books + usize::from(b < cfg.questions % cfg.books);
    seen.shuffle(rng);
    let questions = seen
        .iter()
        .cycle()
        .take(n_q)
        .enumerate()
        .map(|(k, (verb, noun))| QaExample {
            question_id: format!("{book_id}:q{:03}", k + 1),
            book_id: book_id.clone(),
            tokens: ["Who", verb, "the", noun, "?"].iter().map(|s| s.to_string()).collect(),
            gold: gold_of[&(verb.clone(), noun.clone())].iter().cloned().collect(),
        })
        .collect();
    (book, questions)
}

/// Builds a corpus. Identical configs give identical corpora.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut books = Vec::with_capacity(cfg.books);
    let mut questions = Vec::new();
    for b in 0..cfg.books {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::derive(cfg.seed, crate::seeds::Stage::Synth, b as u64, 0));
        let (book, qs) = generate_book(cfg, b, &mut rng);
        books.push(book);
        questions.extend(qs);
    }
    SynthCorpus { books, questions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifgen;
    use crate::corpus::normalize_sentence;

    fn small() -> SynthConfig {
        SynthConfig { books: 3, sentences_per_book: 60, characters_per_book: 6, questions: 12, facts_per_book: 10, seed: 7 }
    }

    #[test]
    fn books_validate() {
        let c = generate(&SynthConfig::default());
        assert_eq!(c.books.len(), 10);
        assert_eq!(c.questions.len(), 100);
        for b in &c.books {
            b.validate().unwrap();
            assert_eq!(b.sentences.len(), 200);
            assert_eq!(b.roster.len(), 8);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small()), generate(&small()));
        assert_ne!(generate(&small()), generate(&SynthConfig { seed: 8, ..small() }));
    }

    #[test]
    fn gold_matches_a_rescan() {
        let c = generate(&small());
        for q in &c.questions {
            let book = c.books.iter().find(|b| b.book_id == q.book_id).unwrap();
            let (verb, noun) = (&q.tokens[1], &q.tokens[3]);
            let mut gold = BTreeSet::new();
            for s in &book.sentences {
                let norm = normalize_sentence(s).tokens;
                if norm.len() == 8 && &norm[1] == verb && &norm[3] == noun {
                    gold.insert(CharacterId::parse(&norm[0]).unwrap());
                }
            }
            assert_eq!(gold.into_iter().collect::<Vec<_>>(), q.gold);
        }
    }

    #[test]
    fn every_template_yields_questions() {
        let c = generate(&small());
        let (ex, stats) = artifgen::generate_dataset(&c.books);
        assert!(stats.iter().all(|s| s.accepted > 0));
        let kinds: BTreeSet<_> = ex.iter().map(|e| e.question_id.rsplit(':').next().unwrap().to_string()).collect();
        assert_eq!(kinds.len(), 3, "{kinds:?}");
    }
}
