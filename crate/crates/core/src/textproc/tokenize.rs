use super::{Token, TokenKind, TokenLang};

const EXTRA_PUNCT: &str = "¿¡«»“”‘’…–—·";

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCT.contains(c)
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_letter(c: char) -> bool {
    c.is_alphabetic()
}

/// Splits text into word, number, punctuation and other tokens with byte
/// offsets. Apostrophes and hyphens between letters stay inside a word.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let (kind, next) = if is_letter(c) {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if is_letter(cj) || is_combining(cj) {
                    j += 1;
                } else if (is_apostrophe(cj) || cj == '-') && chars.get(j + 1).is_some_and(|&(_, n)| is_letter(n)) {
                    j += 2;
                } else {
                    break;
                }
            }
            (TokenKind::Word, j)
        } else if c.is_ascii_digit() {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if cj.is_ascii_digit() {
                    j += 1;
                } else if (cj == '.' || cj == ',') && chars.get(j + 1).is_some_and(|&(_, n)| n.is_ascii_digit()) {
                    j += 2;
                } else {
                    break;
                }
            }
            (TokenKind::Number, j)
        } else if is_punct(c) {
            (TokenKind::Punctuation, i + 1)
        } else {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if cj.is_whitespace() || is_letter(cj) || cj.is_ascii_digit() || is_punct(cj) {
                    break;
                }
                j += 1;
            }
            (TokenKind::Other, j)
        };
        let end = chars.get(next).map_or(text.len(), |&(b, _)| b);
        let surface = &text[start..end];
        tokens.push(Token {
            surface: surface.to_string(),
            lower: surface.to_lowercase(),
            kind,
            lang: TokenLang::Undecided,
            start,
            end,
        });
        i = next;
    }
    tokens
}

fn is_combining(c: char) -> bool {
    matches!(c as u32, 0x0300..=0x036F)
}
