//! Caption tokenization shared by the corpus, reward and captioner code paths.

/// Splits on whitespace and peels punctuation into standalone tokens.
/// Control tokens of the form `<|...|>` are kept whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        if is_control_like(word) {
            out.push(word.to_string());
            continue;
        }
        let mut cur = String::new();
        for ch in word.chars() {
            if ch.is_ascii_punctuation() && ch != '-' && ch != '_' {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

pub fn is_control_like(word: &str) -> bool {
    word.len() > 4 && word.starts_with("<|") && word.ends_with("|>")
}

pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_keeps_control_tokens() {
        assert_eq!(
            tokenize("<|good|> loss vs epoch. red, blue"),
            vec!["<|good|>", "loss", "vs", "epoch", ".", "red", ",", "blue"]
        );
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn already_tokenized_text_is_a_fixed_point() {
        let toks = tokenize("accuracy versus epoch for adam and sgd .");
        assert_eq!(tokenize(&detokenize(&toks)), toks);
    }
}
