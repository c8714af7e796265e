//! Latin-1 line reading and the small tokenizers used by the loaders.

use std::path::Path;

use super::{DataError, Result};

/// Reads a Latin-1 file into lines (each byte is its own code point).
pub(crate) fn read_latin1_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    let text: String = bytes.iter().map(|&b| b as char).collect();
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

const STOPWORDS: &[&str] = &["a", "an", "and", "the", "of", "in", "on", "to", "for", "with", "at", "by"];

/// Lower-cased alphanumeric words of a title, without a trailing `(YYYY)`.
pub(crate) fn title_tokens(title: &str) -> Vec<String> {
    let trimmed = title.trim();
    let body = match trimmed.rfind('(') {
        Some(p) if trimmed.ends_with(')') && trimmed[p + 1..trimmed.len() - 1].chars().all(|c| c.is_ascii_digit()) => &trimmed[..p],
        _ => trimmed,
    };
    let mut out: Vec<String> = body
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 2)
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Splits one `;`-separated BookCrossing record. Fields are either quoted
/// (`"..."`, closed by a quote followed by `;` or end of line) or bare, such
/// as the unquoted `NULL` age.
pub(crate) fn split_bx_fields(line: &str) -> Vec<String> {
    let chars: Vec<char> = line.chars().collect();
    let mut fields = Vec::new();
    let mut i = 0;
    loop {
        if i < chars.len() && chars[i] == '"' {
            let start = i + 1;
            let mut j = start;
            loop {
                if j >= chars.len() {
                    fields.push(chars[start..].iter().collect());
                    return fields;
                }
                if chars[j] == '"' && (j + 1 == chars.len() || chars[j + 1] == ';') {
                    break;
                }
                j += 1;
            }
            fields.push(chars[start..j].iter().collect());
            i = j + 1;
        } else {
            let start = i;
            while i < chars.len() && chars[i] != ';' {
                i += 1;
            }
            fields.push(chars[start..i].iter().collect());
        }
        if i >= chars.len() {
            return fields;
        }
        // skip the separator
        i += 1;
    }
}
