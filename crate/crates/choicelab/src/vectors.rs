//! Plain-text word vectors: an optional `count dim` header line, then
//! `token v1 .. v_dim` per line. Tokens are case-folded on insert; when two
//! lines fold to the same token the later one wins.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use choicelab_core::repr::WordVectorTable;

use crate::IoError;

fn header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let count = it.next()?.parse().ok()?;
    let dim = it.next()?.parse().ok()?;
    it.next().is_none().then_some((count, dim))
}

pub fn read_word_vectors<R: Read>(name: &Path, reader: R) -> Result<WordVectorTable, IoError> {
    let unparsable =
        |line: usize, message: String| IoError::Unparsable { path: name.to_path_buf(), line, message };
    let mut table: Option<WordVectorTable> = None;
    let mut declared = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| IoError::io(name, e))?;
        let line = line.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Some((count, dim)) = header(line) {
                declared = Some(count);
                table = Some(WordVectorTable::new(dim));
                continue;
            }
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().ok_or_else(|| unparsable(lineno, "empty token".into()))?;
        let vector = fields
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| unparsable(lineno, format!("non-numeric component for {token:?}")))?;
        let t = table.get_or_insert_with(|| WordVectorTable::new(vector.len()));
        if vector.len() != t.dim() || vector.is_empty() {
            return Err(IoError::DimensionInconsistent {
                path: name.to_path_buf(),
                line: lineno,
                expected: t.dim(),
                got: vector.len(),
            });
        }
        if t.insert(token, vector).expect("dimension checked").is_some() {
            log::warn!("{}: line {lineno}: duplicate vector for {token:?}, keeping the later one", name.display());
        }
    }
    let table = table.ok_or_else(|| unparsable(0, "no vectors".into()))?;
    if let Some(count) = declared {
        if count != table.len() {
            log::warn!("{}: header declares {count} vectors, read {}", name.display(), table.len());
        }
    }
    Ok(table)
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectorTable, IoError> {
    let f = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    read_word_vectors(path, f)
}

/// Writes the table with a `count dim` header, tokens in sorted order.
pub fn write_word_vectors<W: Write>(mut writer: W, table: &WordVectorTable) -> std::io::Result<()> {
    writeln!(writer, "{} {}", table.len(), table.dim())?;
    for (token, v) in table.iter() {
        write!(writer, "{token}")?;
        for x in v {
            write!(writer, " {x}")?;
        }
        writeln!(writer)?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<WordVectorTable, IoError> {
        read_word_vectors(Path::new("v.txt"), text.as_bytes())
    }

    #[test]
    fn with_and_without_header() {
        let a = read("2 3\ncat 1 2 3\nDog 4 5 6\n").unwrap();
        let b = read("cat 1 2 3\ndog 4 5 6\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 3);
        assert_eq!(a.get("DOG"), Some(&[4.0, 5.0, 6.0][..]));
    }

    #[test]
    fn write_read_round_trip() {
        let t = read("b 0.1 -2.5e-7\na 3 4\n").unwrap();
        let mut buf = Vec::new();
        write_word_vectors(&mut buf, &t).unwrap();
        assert!(buf.starts_with(b"2 2\na 3 4\n"));
        assert_eq!(read_word_vectors(Path::new("v"), &buf[..]).unwrap(), t);
    }

    #[test]
    fn duplicate_keeps_last() {
        let t = read("cat 1 2\nCat 3 4\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("cat"), Some(&[3.0, 4.0][..]));
    }

    #[test]
    fn errors() {
        assert!(matches!(read("a 1 2\nb 1 2 3\n"), Err(IoError::DimensionInconsistent { line: 2, expected: 2, got: 3, .. })));
        assert!(matches!(read("1 3\nb 1 2\n"), Err(IoError::DimensionInconsistent { line: 2, .. })));
        assert!(matches!(read("a 1 x\n"), Err(IoError::Unparsable { line: 1, .. })));
        assert!(matches!(read(""), Err(IoError::Unparsable { .. })));
        assert!(matches!(read("a\n"), Err(IoError::DimensionInconsistent { .. })));
    }
}
