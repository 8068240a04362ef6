use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{EmbeddingError, EmbeddingTable};

/// Writes the text format: a `<count> <d>` header, then one
/// `<token> v1 .. vd` line per row. Floats use the shortest representation
/// that parses back to the same bits.
pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", table.len(), table.dim());
    for (i, tok) in table.tokens().iter().enumerate() {
        if tok.is_empty() || tok.chars().any(char::is_whitespace) {
            return Err(EmbeddingError::UnwritableToken(tok.clone()));
        }
        out.push_str(tok);
        for x in table.row(i) {
            let _ = write!(out, " {x:?}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| EmbeddingError::Io { path: path.display().to_string(), source })
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbeddingError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io { path: origin.clone(), source })?;
    let err = |line: usize, message: String| EmbeddingError::Format { path: origin.clone(), line, message };

    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|x| x.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| err(1, format!("bad header: {e}")))?;
    let [count, dim] = nums[..] else {
        return Err(err(1, "header must be \"<count> <d>\"".into()));
    };
    if dim == 0 {
        return Err(err(1, "dimension must be positive".into()));
    }

    let mut tokens = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if tokens.len() == count {
            return Err(err(lineno, format!("more rows than the {count} declared")));
        }
        let mut parts = line.split_whitespace();
        let tok = parts.next().ok_or_else(|| err(lineno, "empty row".into()))?;
        let row: Vec<f64> = parts
            .map(|x| x.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(lineno, format!("bad number: {e}")))?;
        if row.len() != dim {
            return Err(err(lineno, format!("row has {} values, header says {dim}", row.len())));
        }
        if !seen.insert(tok.to_string()) {
            return Err(err(lineno, format!("duplicate token {tok:?}")));
        }
        tokens.push(tok.to_string());
        data.extend(row);
    }
    if tokens.len() != count {
        return Err(err(1, format!("header declares {count} rows, file has {}", tokens.len())));
    }
    let vectors = Array2::from_shape_vec((count, dim), data).map_err(|e| err(1, e.to_string()))?;
    Ok(EmbeddingTable::new(tokens, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(rows: usize, d: usize) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tokens = (0..rows).map(|i| if i % 3 == 0 { format!("@char{i}") } else { format!("w{i}") }).collect();
        let vectors = Array2::from_shape_fn((rows, d), |_| (rng.random::<f64>() - 0.5) * 10f64.powi(rng.random_range(-8..4)));
        EmbeddingTable::new(tokens, vectors)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        let t = random_table(10, 7);
        save_embeddings(&t, &p).unwrap();
        let back = load_embeddings(&p).unwrap();
        assert_eq!(back, t);
        for (a, b) in back.vectors().iter().zip(t.vectors().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn row_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        let mut text = "10 2\n".to_string();
        for i in 0..9 {
            text.push_str(&format!("t{i} 0.5 1\n"));
        }
        fs::write(&p, text).unwrap();
        assert!(matches!(load_embeddings(&p), Err(EmbeddingError::Format { .. })));
    }

    #[test]
    fn width_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        fs::write(&p, "1 3\ntok 0.5 1\n").unwrap();
        let e = load_embeddings(&p).unwrap_err();
        assert!(matches!(e, EmbeddingError::Format { line: 2, .. }), "{e}");
    }

    #[test]
    fn whitespace_tokens_are_refused() {
        let t = EmbeddingTable::new(vec!["a b".into()], Array2::zeros((1, 2)));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(save_embeddings(&t, dir.path().join("x")), Err(EmbeddingError::UnwritableToken(_))));
    }
}
