use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::QaExample;

/// Book-level fold assignment; a question's fold is its book's fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub folds: usize,
    pub book_fold: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, book_id: &str) -> Option<usize> {
        self.book_fold.get(book_id).copied()
    }

    /// Question indices of `fold` and of every other fold.
    pub fn split(&self, questions: &[QaExample], fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut test, mut train) = (Vec::new(), Vec::new());
        for (i, q) in questions.iter().enumerate() {
            if self.fold_of(&q.book_id) == Some(fold) {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (test, train)
    }
}

/// Shuffles the books with `seed`, then places them largest first into the
/// fold holding the fewest questions so far (ties to the lower fold).
pub fn crossval_split(questions: &[QaExample], folds: usize, seed: u64) -> Result<FoldAssignment, HarnessError> {
    if folds < 2 {
        return Err(HarnessError::Config(format!("folds must be at least 2, got {folds}")));
    }
    let mut per_book: BTreeMap<&str, usize> = BTreeMap::new();
    for q in questions {
        *per_book.entry(q.book_id.as_str()).or_default() += 1;
    }
    if per_book.len() < folds {
        return Err(HarnessError::TooFewBooks { books: per_book.len(), folds });
    }
    let mut books: Vec<(&str, usize)> = per_book.into_iter().collect();
    books.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // stable, so equal-sized books keep their shuffled order
    books.sort_by_key(|b| std::cmp::Reverse(b.1));
    let mut load = vec![0usize; folds];
    let mut book_fold = BTreeMap::new();
    for (book, n) in books {
        let f = (0..folds).min_by_key(|&f| (load[f], f)).expect("folds >= 2");
        load[f] += n;
        book_fold.insert(book.to_string(), f);
    }
    Ok(FoldAssignment { folds, book_fold })
}
