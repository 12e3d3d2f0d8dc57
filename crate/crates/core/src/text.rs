//! String normalization shared across modules.
//!
//! Only case-folding and whitespace collapse are applied for labels and
//! questions. Diacritics are kept: Vietnamese tone marks carry meaning.

use unicode_normalization::UnicodeNormalization;

/// Case-fold, trim and collapse internal whitespace runs to a single space.
pub fn fold(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.nfc().flat_map(char::to_lowercase));
    }
    out
}

/// Words are maximal runs of non-whitespace.
pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}
