/// Placeholder every numeric token is mapped to.
pub const NUM: &str = "NUM";

fn is_number(raw: &str) -> bool {
    raw.chars().any(|c| c.is_ascii_digit()) && raw.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
}

/// Maps numbers to `NUM` and lowercases everything else.
pub fn tokenize_word(raw: &str) -> String {
    if raw == NUM || is_number(raw) {
        NUM.to_owned()
    } else {
        raw.to_lowercase()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(tokenize_word("1993"), "NUM");
        assert_eq!(tokenize_word("Boston"), "boston");
        assert_eq!(tokenize_word("3,5"), "NUM");
        assert_eq!(tokenize_word("3.50"), "NUM");
        assert_eq!(tokenize_word("."), ".");
        assert_eq!(tokenize_word("B52"), "b52");
    }

    proptest! {
        #[test]
        fn idempotent(raw in "\\PC{1,12}") {
            let once = tokenize_word(&raw);
            prop_assert_eq!(tokenize_word(&once), once);
        }
    }
}
