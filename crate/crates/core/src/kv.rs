//! `key = value` line format shared by manifests and experiment configs.

/// One non-blank, non-comment line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Entry<'a> {
    pub line: usize,
    pub key: &'a str,
    pub value: &'a str,
}

/// Splits `text` into entries. `#` starts a comment anywhere on a line. Lines
/// without `=` are returned as `Err(line_number)`.
pub(crate) fn entries(text: &str) -> Vec<Result<Entry<'_>, usize>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                return None;
            }
            Some(match line.split_once('=') {
                Some((k, v)) => Ok(Entry { line: i + 1, key: k.trim(), value: v.trim() }),
                None => Err(i + 1),
            })
        })
        .collect()
}
