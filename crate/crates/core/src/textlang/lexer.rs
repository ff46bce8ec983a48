use std::fmt;

use crate::model::Span;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Unsigned literal; the sign is applied by the parser.
    Int(u128),
    Kw(Kw),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kw {
    Atom,
    State,
    Init,
    Port,
    Var,
    On,
    From,
    To,
    Provided,
    Do,
    Compound,
    Component,
    Connector,
    Export,
    Up,
    Down,
    Priority,
    Property,
    Architecture,
    Param,
    Coordinator,
    True,
    False,
    IntTy,
    BoolTy,
}

const KEYWORDS: &[(&str, Kw)] = &[
    ("atom", Kw::Atom),
    ("state", Kw::State),
    ("init", Kw::Init),
    ("port", Kw::Port),
    ("var", Kw::Var),
    ("on", Kw::On),
    ("from", Kw::From),
    ("to", Kw::To),
    ("provided", Kw::Provided),
    ("do", Kw::Do),
    ("compound", Kw::Compound),
    ("component", Kw::Component),
    ("connector", Kw::Connector),
    ("export", Kw::Export),
    ("up", Kw::Up),
    ("down", Kw::Down),
    ("priority", Kw::Priority),
    ("property", Kw::Property),
    ("architecture", Kw::Architecture),
    ("param", Kw::Param),
    ("coordinator", Kw::Coordinator),
    ("true", Kw::True),
    ("false", Kw::False),
    ("int", Kw::IntTy),
    ("bool", Kw::BoolTy),
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.iter().any(|(k, _)| *k == s)
}

impl Kw {
    pub fn text(self) -> &'static str {
        KEYWORDS.iter().find(|(_, k)| *k == self).map(|(s, _)| *s).unwrap_or("?")
    }
}

// longest first
const SYMBOLS: &[&str] = &[
    ":=", "->", "<=", ">=", "==", "!=", "&&", "||", "{", "}", "(", ")", "[", "]", ",", ":", ";",
    "'", "<", ">", "+", "-", "*", "/", "%", "!", "@", ".",
];

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(i) => write!(f, "integer `{i}`"),
            Tok::Kw(k) => write!(f, "`{}`", k.text()),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

/// Splits `src` into tokens. Unknown characters are reported and skipped;
/// the result always ends with [`Tok::Eof`].
pub fn lex(src: &str) -> (Vec<Token>, Vec<(String, Span)>) {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = 0usize;
    let span_at = |start: usize, end: usize, line: u32, line_start: usize| Span {
        start,
        end,
        line,
        col: (src[line_start..start].chars().count() + 1) as u32,
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &src[start..i];
            let tok = KEYWORDS
                .iter()
                .find(|(k, _)| *k == word)
                .map(|(_, k)| Tok::Kw(*k))
                .unwrap_or_else(|| Tok::Ident(word.to_string()));
            out.push(Token {
                tok,
                span: span_at(start, i, line, line_start),
            });
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let span = span_at(start, i, line, line_start);
            match src[start..i].parse::<u128>() {
                Ok(v) if v <= 1u128 << 63 => out.push(Token { tok: Tok::Int(v), span }),
                _ => {
                    errors.push(("integer literal out of range".to_string(), span));
                    out.push(Token { tok: Tok::Int(0), span });
                }
            }
            continue;
        }
        if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            i += sym.len();
            out.push(Token {
                tok: Tok::Sym(sym),
                span: span_at(start, i, line, line_start),
            });
            continue;
        }
        let ch = src[i..].chars().next().unwrap_or('?');
        i += ch.len_utf8();
        errors.push((format!("unexpected character `{ch}`"), span_at(start, i, line, line_start)));
    }
    out.push(Token {
        tok: Tok::Eof,
        span: span_at(src.len(), src.len(), line, line_start),
    });
    (out, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).0.into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn longest_symbol_wins() {
        assert_eq!(
            toks("a:=b->c<=d"),
            vec![
                Tok::Ident("a".into()),
                Tok::Sym(":="),
                Tok::Ident("b".into()),
                Tok::Sym("->"),
                Tok::Ident("c".into()),
                Tok::Sym("<="),
                Tok::Ident("d".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_and_positions() {
        let (t, e) = lex("// hi\n  atom");
        assert!(e.is_empty());
        assert_eq!(t[0].tok, Tok::Kw(Kw::Atom));
        assert_eq!((t[0].span.line, t[0].span.col), (2, 3));
        assert_eq!((t[0].span.start, t[0].span.end), (8, 12));
    }

    #[test]
    fn stray_bytes_are_reported() {
        let (t, e) = lex("a # b é");
        assert_eq!(e.len(), 2);
        assert_eq!(t.len(), 3);
    }
}
