//! Tokenizer for safety clauses.

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokKind {
    Word,
    Number(f64),
    LParen,
    RParen,
    Comma,
    Colon,
    Semicolon,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tok {
    pub kind: TokKind,
    /// Byte range in the source text.
    pub start: usize,
    pub end: usize,
    /// 1-based character column.
    pub column: usize,
}

impl Tok {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is_word(&self, src: &str, word: &str) -> bool {
        self.kind == TokKind::Word && self.text(src).eq_ignore_ascii_case(word)
    }
}

fn is_punct(c: char) -> bool {
    matches!(c, '(' | ')' | ',' | ':' | ';')
}

pub(crate) fn tokenize(src: &str) -> Vec<Tok> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let byte_end = |i: usize| chars.get(i).map(|&(b, _)| b).unwrap_or(src.len());
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if is_punct(c) {
            let kind = match c {
                '(' => TokKind::LParen,
                ')' => TokKind::RParen,
                ',' => TokKind::Comma,
                ':' => TokKind::Colon,
                _ => TokKind::Semicolon,
            };
            toks.push(Tok {
                kind,
                start,
                end: byte_end(i + 1),
                column,
            });
            i += 1;
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|&(_, d)| d.is_ascii_digit()));
        if starts_number {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_ascii_digit() {
                j += 1;
            }
            if j + 1 < chars.len() && chars[j].1 == '.' && chars[j + 1].1.is_ascii_digit() {
                j += 1;
                while j < chars.len() && chars[j].1.is_ascii_digit() {
                    j += 1;
                }
            }
            let end = byte_end(j);
            let value = src[start..end].parse::<f64>().expect("digits parse as f64");
            toks.push(Tok {
                kind: TokKind::Number(value),
                start,
                end,
                column,
            });
            i = j;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && !chars[j].1.is_whitespace() && !is_punct(chars[j].1) {
            j += 1;
        }
        toks.push(Tok {
            kind: TokKind::Word,
            start,
            end: byte_end(j),
            column,
        });
        i = j;
    }
    toks
}
