//! Character-offset helpers. All offsets in the harness count Unicode scalar
//! values, not bytes.

/// Number of characters in `s`.
pub(crate) fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Slice `s` by character offsets `[start, end)`. Returns `None` when the
/// range is out of bounds or reversed.
pub(crate) fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&s[begin..finish])
}

/// Number of maximal non-whitespace runs.
pub(crate) fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Whitespace-normalised view of a string: runs of whitespace collapse to a
/// single space and the ends are trimmed. `origin[i]` is the character offset
/// in the source string of normalised character `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Normalized {
    pub chars: Vec<char>,
    pub origin: Vec<usize>,
}

impl Normalized {
    pub fn new(s: &str) -> Self {
        let mut chars = Vec::new();
        let mut origin = Vec::new();
        let mut pending_space: Option<usize> = None;
        for (idx, c) in s.chars().enumerate() {
            if c.is_whitespace() {
                if !chars.is_empty() && pending_space.is_none() {
                    pending_space = Some(idx);
                }
            } else {
                if let Some(at) = pending_space.take() {
                    chars.push(' ');
                    origin.push(at);
                }
                chars.push(c);
                origin.push(idx);
            }
        }
        Self { chars, origin }
    }

    #[cfg(test)]
    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }
}
