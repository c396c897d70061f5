/// Lowercases, drops non-ASCII characters, splits on whitespace and emits each
/// ASCII punctuation character as its own token.
pub fn normalize_and_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars().filter(char::is_ascii) {
        if c.is_ascii_whitespace() {
            flush(&mut current, &mut tokens);
        } else if c.is_ascii_punctuation() {
            flush(&mut current, &mut tokens);
            tokens.push(c.to_string());
        } else {
            current.push(c.to_ascii_lowercase());
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    if !current.is_empty() {
        tokens.push(std::mem::take(current));
    }
}

/// Joins tokens back into display text, attaching punctuation to the
/// preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let attach = t.len() == 1 && t.chars().all(|c| c.is_ascii_punctuation() && c != '(' && c != '"');
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_and_tokenize("Good to see you!"), ["good", "to", "see", "you", "!"]);
        assert_eq!(normalize_and_tokenize("Héllo"), ["hllo"]);
        assert!(normalize_and_tokenize("").is_empty());
        assert_eq!(normalize_and_tokenize("  I'm\tfine,thanks "), ["i", "'", "m", "fine", ",", "thanks"]);
    }

    #[test]
    fn detokenize_attaches_punctuation() {
        assert_eq!(detokenize(&["good", "to", "see", "you", "!"]), "good to see you!");
        assert_eq!(detokenize::<&str>(&[]), "");
    }
}
