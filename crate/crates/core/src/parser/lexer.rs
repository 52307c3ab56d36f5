use super::{ParseDiagnostic, SourceSpan};

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Number(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Semi,
    Lt,
    Gt,
    Dot,
    Question,
    /// `-->`
    SetArrow,
    /// `|->`
    ExclusiveArrow,
    /// `==>` optionally followed by `_id`
    PolicyArrow(Option<String>),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Question => "`?`".into(),
            Tok::SetArrow => "`-->`".into(),
            Tok::ExclusiveArrow => "`|->`".into(),
            Tok::PolicyArrow(_) => "`==>`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseDiagnostic> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let span = |start: usize, end: usize| SourceSpan::new(src, start, end);
    while i < bytes.len() {
        let c = src[i..].chars().next().expect("in bounds");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let rest = &src[i..];
        let tok = if rest.starts_with("-->") {
            i += 3;
            Tok::SetArrow
        } else if rest.starts_with("|->") {
            i += 3;
            Tok::ExclusiveArrow
        } else if rest.starts_with("==>") {
            i += 3;
            if bytes.get(i) == Some(&b'_') {
                let id_start = i + 1;
                let mut j = id_start;
                while j < bytes.len() && is_ident_continue(bytes[j] as char) {
                    j += 1;
                }
                if j == id_start {
                    return Err(ParseDiagnostic::error(
                        span(start, j),
                        "expected policy id after `==>_`",
                    ));
                }
                i = j;
                Tok::PolicyArrow(Some(src[id_start..j].to_string()))
            } else {
                Tok::PolicyArrow(None)
            }
        } else if is_ident_start(c) {
            let mut j = i;
            while j < bytes.len() && is_ident_continue(bytes[j] as char) {
                j += 1;
            }
            i = j;
            Tok::Ident(src[start..j].to_string())
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < bytes.len()
                && (bytes[j].is_ascii_digit() || bytes[j] == b'.' || bytes[j] == b'/')
            {
                j += 1;
            }
            // a trailing `.` terminates an agreement rather than belonging to the number
            if bytes[j - 1] == b'.' && !src[start..j - 1].contains('.') {
                j -= 1;
            }
            i = j;
            Tok::Number(src[start..j].to_string())
        } else {
            i += c.len_utf8();
            match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                ';' => Tok::Semi,
                '<' => Tok::Lt,
                '>' => Tok::Gt,
                '.' => Tok::Dot,
                '?' => Tok::Question,
                _ => {
                    return Err(ParseDiagnostic::error(
                        span(start, i),
                        format!("unexpected character `{c}`"),
                    ))
                }
            }
        };
        out.push(Token {
            tok,
            span: span(start, i),
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: span(src.len(), src.len()),
    });
    Ok(out)
}
