//! Character-level helpers shared by the query matcher and the codebook scanner.

/// Letters are Unicode alphabetic scalars. Everything else (digits,
/// punctuation, whitespace, emoji, underscore) is a "sign".
#[inline]
pub(crate) fn is_letter(c: char) -> bool {
    c.is_alphabetic()
}

/// Case-insensitive scalar comparison using full Unicode lowercase mapping.
#[inline]
pub(crate) fn eq_ignore_case(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

/// Compares `needle` against `hay` starting at `start`.
pub(crate) fn matches_at(hay: &[char], start: usize, needle: &[char], case_sensitive: bool) -> bool {
    if start + needle.len() > hay.len() {
        return false;
    }
    hay[start..start + needle.len()]
        .iter()
        .zip(needle)
        .all(|(&h, &n)| if case_sensitive { h == n } else { eq_ignore_case(h, n) })
}
