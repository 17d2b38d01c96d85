use crate::ast::Span;

use super::SourceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Keyword {
    To,
    Is,
    With,
    Where,
    My,
    The,
    Delta,
    When,
    Spawn,
    Die,
    Become,
    World,
    Here,
    Neighbor,
    Uniform,
    Normal,
    Gamma,
    LogLogistic,
    Direction,
    As,
    In,
}

impl Keyword {
    pub(crate) fn from_word(word: &str) -> Option<Keyword> {
        Some(match word {
            "to" => Keyword::To,
            "is" => Keyword::Is,
            "with" => Keyword::With,
            "where" => Keyword::Where,
            "my" => Keyword::My,
            "the" => Keyword::The,
            "delta" => Keyword::Delta,
            "when" => Keyword::When,
            "spawn" => Keyword::Spawn,
            "die" => Keyword::Die,
            "become" => Keyword::Become,
            "world" => Keyword::World,
            "here" => Keyword::Here,
            "neighbor" => Keyword::Neighbor,
            "uniform" => Keyword::Uniform,
            "normal" => Keyword::Normal,
            "gamma" => Keyword::Gamma,
            "loglogistic" => Keyword::LogLogistic,
            "direction" => Keyword::Direction,
            "as" => Keyword::As,
            "in" => Keyword::In,
            _ => return None,
        })
    }
}

/// Words that can never be identifiers. `d/dt` is lexed as its own token.
pub const KEYWORDS: [&str; 21] = [
    "to",
    "is",
    "with",
    "where",
    "my",
    "the",
    "delta",
    "when",
    "spawn",
    "die",
    "become",
    "world",
    "here",
    "neighbor",
    "uniform",
    "normal",
    "gamma",
    "loglogistic",
    "direction",
    "as",
    "in",
];

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    /// Raw text between `[` and `]`, with the byte offset of its first char.
    Unit(String, usize),
    Kw(Keyword),
    DDt,
    Prime,
    Possessive,
    Eq,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Dot,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Unit(s, _) => format!("unit `[{s}]`"),
            Tok::Kw(k) => format!("keyword `{}`", format!("{k:?}").to_lowercase()),
            Tok::DDt => "`d/dt`".into(),
            Tok::Prime => "`'`".into(),
            Tok::Possessive => "`'s`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

/// Maps byte offsets to line/column positions.
pub(crate) struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub(crate) fn new(text: &str) -> LineIndex {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    pub(crate) fn span(&self, text: &str, offset: usize) -> Span {
        let line = self.starts.partition_point(|&s| s <= offset) - 1;
        let column = text[self.starts[line]..offset].chars().count() + 1;
        Span::new(line as u32 + 1, column as u32)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, SourceError> {
    let index = LineIndex::new(text);
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    let err = |offset: usize, msg: String| {
        let span = index.span(text, offset);
        SourceError::new(msg, span)
    };

    while pos < text.len() {
        let c = text[pos..].chars().next().unwrap();
        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }
        if c == '#' {
            pos = text[pos..].find('\n').map_or(text.len(), |n| pos + n);
            continue;
        }
        let start = pos;
        let rest = &text[pos..];
        let tok = if rest.starts_with("d/dt")
            && !rest[4..].chars().next().is_some_and(is_ident_continue)
        {
            pos += 4;
            Tok::DDt
        } else if is_ident_start(c) {
            while pos < text.len() && is_ident_continue(bytes[pos] as char) {
                pos += 1;
            }
            let word = &text[start..pos];
            match Keyword::from_word(word) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(word.to_string()),
            }
        } else if c.is_ascii_digit() {
            pos = scan_number(bytes, pos);
            let literal = &text[start..pos];
            let value: f64 = literal
                .parse()
                .map_err(|_| err(start, format!("malformed number `{literal}`")))?;
            Tok::Number(value)
        } else if c == '[' {
            let close = rest
                .find([']', '\n'])
                .filter(|&n| rest.as_bytes()[n] == b']')
                .ok_or_else(|| err(start, "unterminated unit bracket".into()))?;
            pos += close + 1;
            Tok::Unit(rest[1..close].to_string(), start + 1)
        } else if c == '\'' {
            let after = &rest[1..];
            if after.starts_with('s') && !after[1..].chars().next().is_some_and(is_ident_continue) {
                pos += 2;
                Tok::Possessive
            } else {
                pos += 1;
                Tok::Prime
            }
        } else {
            let (tok, len) = match (c, rest.as_bytes().get(1).copied()) {
                ('-', Some(b'>')) => (Tok::Arrow, 2),
                ('<', Some(b'=')) => (Tok::Le, 2),
                ('>', Some(b'=')) => (Tok::Ge, 2),
                ('<', _) => (Tok::Lt, 1),
                ('>', _) => (Tok::Gt, 1),
                ('=', _) => (Tok::Eq, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('/', _) => (Tok::Slash, 1),
                ('^', _) => (Tok::Caret, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                (',', _) => (Tok::Comma, 1),
                ('.', _) => (Tok::Dot, 1),
                _ => return Err(err(start, format!("unexpected character `{c}`"))),
            };
            pos += len;
            tok
        };
        tokens.push(Token {
            tok,
            span: index.span(text, start),
        });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        span: index.span(text, text.len()),
    });
    Ok(tokens)
}

/// digits ("." digits)? ([eE] [+-]? digits)?
fn scan_number(bytes: &[u8], mut pos: usize) -> usize {
    let digits = |mut p: usize| {
        while p < bytes.len() && bytes[p].is_ascii_digit() {
            p += 1;
        }
        p
    };
    pos = digits(pos);
    if bytes.get(pos) == Some(&b'.') && bytes.get(pos + 1).is_some_and(u8::is_ascii_digit) {
        pos = digits(pos + 1);
    }
    if matches!(bytes.get(pos), Some(b'e' | b'E')) {
        let mut p = pos + 1;
        if matches!(bytes.get(p), Some(b'+' | b'-')) {
            p += 1;
        }
        if bytes.get(p).is_some_and(u8::is_ascii_digit) {
            pos = digits(p);
        }
    }
    pos
}
