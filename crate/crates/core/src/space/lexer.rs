//! Tokenizer shared by the parameter-file and condition parsers.

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64, String),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Pipe,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Not,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    /// 1-based column of the first character.
    pub col: usize,
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-'
}

pub(crate) fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, msg: String| ParseError {
        line: line_no,
        column: col,
        message: msg,
    };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ',' => Some(Tok::Comma),
            '|' => Some(Tok::Pipe),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, col });
            i += 1;
            continue;
        }
        let next = chars.get(i + 1).copied();
        match c {
            '=' => {
                if next == Some('=') {
                    out.push(Token { tok: Tok::Eq, col });
                    i += 2;
                } else {
                    return Err(err(col, "expected '=='".into()));
                }
            }
            '!' => {
                if next == Some('=') {
                    out.push(Token { tok: Tok::Ne, col });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Not, col });
                    i += 1;
                }
            }
            '<' | '>' => {
                let eq = next == Some('=');
                let tok = match (c, eq) {
                    ('<', true) => Tok::Le,
                    ('<', false) => Tok::Lt,
                    ('>', true) => Tok::Ge,
                    _ => Tok::Gt,
                };
                out.push(Token { tok, col });
                i += if eq { 2 } else { 1 };
            }
            '"' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j] != '"' {
                    j += 1;
                }
                if j == chars.len() {
                    return Err(err(col, "unterminated string literal".into()));
                }
                out.push(Token {
                    tok: Tok::Str(chars[start..j].iter().collect()),
                    col,
                });
                i = j + 1;
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() {
                    let d = chars[j];
                    let prev = chars[j - 1];
                    if d.is_ascii_alphanumeric()
                        || d == '.'
                        || ((d == '-' || d == '+') && (prev == 'e' || prev == 'E'))
                    {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[start..j].iter().collect();
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => out.push(Token {
                        tok: Tok::Number(v, text),
                        col,
                    }),
                    _ => return Err(err(col, format!("malformed number '{text}'"))),
                }
                i = j;
            }
            c if is_ident_start(c) => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() && is_ident_char(chars[j]) {
                    j += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..j].iter().collect()),
                    col,
                });
                i = j;
            }
            other => return Err(err(col, format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

/// Removes a `#` comment, ignoring `#` inside string literals.
pub(crate) fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_operators_and_literals() {
        let toks = tokenize(r#"a >= -1.5e2 and b != "x y""#, 1).unwrap();
        let kinds: Vec<Tok> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("a".into()),
                Tok::Ge,
                Tok::Number(-150.0, "-1.5e2".into()),
                Tok::Ident("and".into()),
                Tok::Ident("b".into()),
                Tok::Ne,
                Tok::Str("x y".into()),
            ]
        );
    }

    #[test]
    fn reports_column_of_bad_char() {
        let e = tokenize("abc $", 3).unwrap_err();
        assert_eq!((e.line, e.column), (3, 5));
    }

    #[test]
    fn comment_inside_string_is_kept() {
        assert_eq!(strip_comment(r##"a c {"#x", y} # note"##), r##"a c {"#x", y} "##);
    }
}
