//! BERT-style text cleanup and word splitting.

use unicode_general_category::get_general_category;
use unicode_normalization::UnicodeNormalization;

fn category(c: char) -> &'static str {
    get_general_category(c).abbreviation()
}

pub(crate) fn is_whitespace(c: char) -> bool {
    c.is_whitespace()
}

/// Cc, Cf, Cn, Co and Cs, except tab and newlines (treated as whitespace).
fn is_control(c: char) -> bool {
    !matches!(c, '\t' | '\n' | '\r') && category(c).starts_with('C')
}

pub(crate) fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || category(c).starts_with('P')
}

/// CJK Unified Ideograph blocks (not Hangul or kana).
fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F
        | 0x2B820..=0x2CEAF
        | 0xF900..=0xFAFF
        | 0x2F800..=0x2FA1F)
}

/// Clean, space out ideographs, optionally strip accents and lowercase.
pub(crate) fn normalize(text: &str, lowercase: bool) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c == '\0' || c == '\u{FFFD}' || is_control(c) {
            continue;
        }
        if is_whitespace(c) {
            out.push(' ');
        } else if is_cjk(c) {
            out.push(' ');
            out.push(c);
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    if lowercase {
        out.nfd().filter(|&c| category(c) != "Mn").collect::<String>().to_lowercase()
    } else {
        out
    }
}

/// Split cleaned text into words: whitespace-separated, with every
/// punctuation character as its own word.
pub fn basic_tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let text = normalize(text, lowercase);
    let mut words = Vec::new();
    for chunk in text.split(is_whitespace).filter(|s| !s.is_empty()) {
        let mut current = String::new();
        for c in chunk.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                words.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert!(basic_tokenize("", true).is_empty());
        assert_eq!(basic_tokenize("Hello, world!", true), ["hello", ",", "world", "!"]);
        assert_eq!(basic_tokenize("Café\tnaïve\u{0}", true), ["cafe", "naive"]);
        assert_eq!(basic_tokenize("Café", false), ["Café"]);
        assert_eq!(basic_tokenize("你好abc", true), ["你", "好", "abc"]);
        assert_eq!(basic_tokenize("a\u{200B}b «c»", true), ["ab", "«", "c", "»"]);
        assert_eq!(basic_tokenize("$5 ^x`", true), ["$", "5", "^", "x", "`"]);
    }

    proptest! {
        #[test]
        fn fixed_point(text in "\\PC{0,40}") {
            let words = basic_tokenize(&text, true);
            prop_assert_eq!(basic_tokenize(&words.join(" "), true), words);
        }
    }
}
