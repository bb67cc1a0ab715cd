//! JSON Lines datasets: one [`NlcExample`] object per line.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use slfnet_core::NlcExample;

use crate::error::{IoError, IoResult};

/// Parse and validate a JSON Lines dataset. Blank lines are skipped; errors
/// name the 1-based line and the offending field.
pub fn parse_dataset<R: BufRead>(reader: R, path: &Path, k_max: usize) -> IoResult<Vec<NlcExample>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IoError::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| IoError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let ex: NlcExample = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        ex.validate(k_max).map_err(|e| at(e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, k_max: usize) -> IoResult<Vec<NlcExample>> {
    let file = fs::File::open(path).map_err(|e| IoError::file(path, e))?;
    parse_dataset(BufReader::new(file), path, k_max)
}

/// Canonical serialization: compact JSON, one example per line, trailing newline.
pub fn write_dataset<W: Write>(mut w: W, examples: &[NlcExample]) -> std::io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_dataset(path: &Path, examples: &[NlcExample]) -> IoResult<()> {
    let file = fs::File::create(path).map_err(|e| IoError::file(path, e))?;
    write_dataset(std::io::BufWriter::new(file), examples).map_err(|e| IoError::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use slfnet_core::synth::{generate_synthetic, GrammarConfig};

    fn parse(text: &str) -> IoResult<Vec<NlcExample>> {
        parse_dataset(text.as_bytes(), Path::new("mem.jsonl"), 3)
    }

    const GOOD: &str = r#"{"id":"a","tokens":["open","the","door"],"dep_heads":[0,2,0],"groups":[{"action":[0,0],"location":null,"object":[2,2]}]}"#;

    #[test]
    fn three_lines_three_examples() {
        let text = format!("{GOOD}\n{}\n\n{}\n", GOOD.replace("\"a\"", "\"b\""), GOOD.replace("\"a\"", "\"c\""));
        let ids: Vec<String> = parse(&text).unwrap().into_iter().map(|e| e.id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn head_equal_to_length_names_line_and_field() {
        let bad = GOOD.replace("[0,2,0]", "[0,3,0]");
        let err = parse(&format!("{GOOD}\n{bad}\n")).unwrap_err().to_string();
        assert!(err.starts_with("mem.jsonl:2:"), "{err}");
        assert!(err.contains("dep_heads"), "{err}");
    }

    #[test]
    fn malformed_json_and_roots_and_overlaps() {
        for (bad, field) in [
            (GOOD.replace("\"tokens\"", "\"tokenz\""), "tokenz"),
            (GOOD.replace("[0,2,0]", "[0,2,2]"), "root"),
            (GOOD.replace("[0,2,0]", "[1,2,0]"), "root"),
            (
                GOOD.replace(
                    r#"[{"action":[0,0]"#,
                    r#"[{"action":[0,1],"location":null,"object":null},{"action":[1,1]"#,
                ),
                "overlap",
            ),
        ] {
            let err = parse(&bad).unwrap_err().to_string();
            assert!(err.starts_with("mem.jsonl:1:"), "{err}");
            assert!(err.contains(field), "{field}: {err}");
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let examples = generate_synthetic(&GrammarConfig::default(), 25).unwrap();
        let mut first = Vec::new();
        write_dataset(&mut first, &examples).unwrap();
        let reloaded = parse_dataset(first.as_slice(), Path::new("x"), 3).unwrap();
        assert_eq!(reloaded, examples);
        let mut second = Vec::new();
        write_dataset(&mut second, &reloaded).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn whitespace_variants_reserialize_canonically() {
        let spaced = GOOD.replace(',', " , ").replace(':', " : ");
        let ex = parse(&spaced).unwrap();
        let mut out = Vec::new();
        write_dataset(&mut out, &ex).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{GOOD}\n"));
    }
}
