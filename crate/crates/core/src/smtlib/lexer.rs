//! Tokenizer and S-expression reader for SMT-LIB 2 concrete syntax.

use std::ops::Range;

use super::{FrontendError, Span};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    LParen,
    RParen,
    /// `name` is the symbol with quoting bars removed; `spelling` is the
    /// source text.
    Symbol { name: String, spelling: String },
    Keyword(String),
    Numeral(String),
    Decimal(String),
    Hex(String),
    Binary(String),
    Str(String),
}

#[derive(Clone, Debug)]
pub enum SExpr {
    Atom(Token, Span),
    List(Vec<SExpr>, Span),
}

impl SExpr {
    pub fn span(&self) -> Span {
        match self {
            SExpr::Atom(_, s) | SExpr::List(_, s) => s.clone(),
        }
    }

    pub fn symbol(&self) -> Option<&str> {
        match self {
            SExpr::Atom(Token::Symbol { name, .. }, _) => Some(name),
            _ => None,
        }
    }
}

pub fn is_simple_symbol_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || b"~!@$%^&*_-+=<>.?/".contains(&c)
}

pub struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a [u8]) -> Self {
        Lexer { src, pos: 0 }
    }

    fn err(&self, at: usize, msg: impl Into<String>) -> FrontendError {
        let (line, col) = line_col(self.src, at);
        FrontendError::Lex {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() {
            match self.src[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b';' => {
                    while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn text(&self, r: Range<usize>) -> String {
        String::from_utf8_lossy(&self.src[r]).into_owned()
    }

    pub fn next_token(&mut self) -> Result<Option<(Token, Span)>, FrontendError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok(None);
        };
        let tok = match c {
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'|' => {
                self.pos += 1;
                while self.pos < self.src.len() && self.src[self.pos] != b'|' {
                    if self.src[self.pos] == b'\\' {
                        return Err(self.err(self.pos, "backslash in quoted symbol"));
                    }
                    self.pos += 1;
                }
                if self.pos >= self.src.len() {
                    return Err(self.err(start, "unterminated quoted symbol"));
                }
                self.pos += 1;
                Token::Symbol {
                    name: self.text(start + 1..self.pos - 1),
                    spelling: self.text(start..self.pos),
                }
            }
            b'"' => {
                self.pos += 1;
                let mut s = Vec::new();
                loop {
                    match self.src.get(self.pos) {
                        None => return Err(self.err(start, "unterminated string literal")),
                        Some(b'"') if self.src.get(self.pos + 1) == Some(&b'"') => {
                            s.push(b'"');
                            self.pos += 2;
                        }
                        Some(b'"') => {
                            self.pos += 1;
                            break;
                        }
                        Some(&b) => {
                            s.push(b);
                            self.pos += 1;
                        }
                    }
                }
                Token::Str(String::from_utf8_lossy(&s).into_owned())
            }
            b':' => {
                self.pos += 1;
                while self.pos < self.src.len() && is_simple_symbol_char(self.src[self.pos]) {
                    self.pos += 1;
                }
                Token::Keyword(self.text(start..self.pos))
            }
            b'#' => {
                let radix = self.src.get(self.pos + 1).copied();
                self.pos += 2;
                let digits_start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let digits = self.text(digits_start..self.pos);
                match radix {
                    Some(b'x') => Token::Hex(digits),
                    Some(b'b') => Token::Binary(digits),
                    _ => return Err(self.err(start, "malformed `#` literal")),
                }
            }
            b'0'..=b'9' => {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if self.src.get(self.pos) == Some(&b'.') {
                    self.pos += 1;
                    while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    Token::Decimal(self.text(start..self.pos))
                } else {
                    Token::Numeral(self.text(start..self.pos))
                }
            }
            c if is_simple_symbol_char(c) => {
                while self.pos < self.src.len() && is_simple_symbol_char(self.src[self.pos]) {
                    self.pos += 1;
                }
                let s = self.text(start..self.pos);
                Token::Symbol {
                    name: s.clone(),
                    spelling: s,
                }
            }
            c => {
                return Err(self.err(start, format!("unexpected character {:?}", c as char)));
            }
        };
        Ok(Some((tok, start..self.pos)))
    }
}

/// Reads all top-level S-expressions. Iterative, so deeply nested input does
/// not exhaust the stack here.
pub fn read_all(src: &[u8]) -> Result<Vec<SExpr>, FrontendError> {
    let mut lexer = Lexer::new(src);
    let mut top = Vec::new();
    let mut stack: Vec<(Vec<SExpr>, usize)> = Vec::new();
    while let Some((tok, span)) = lexer.next_token()? {
        match tok {
            Token::LParen => stack.push((Vec::new(), span.start)),
            Token::RParen => {
                let Some((items, start)) = stack.pop() else {
                    let (line, col) = line_col(src, span.start);
                    return Err(FrontendError::Parse {
                        line,
                        col,
                        msg: "unbalanced `)`".into(),
                    });
                };
                let list = SExpr::List(items, start..span.end);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(list),
                    None => top.push(list),
                }
            }
            tok => {
                let atom = SExpr::Atom(tok, span);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(atom),
                    None => top.push(atom),
                }
            }
        }
    }
    if let Some((_, start)) = stack.last() {
        let (line, col) = line_col(src, *start);
        return Err(FrontendError::Parse {
            line,
            col,
            msg: "missing `)`".into(),
        });
    }
    Ok(top)
}

/// 1-based line and column of a byte offset.
pub fn line_col(src: &[u8], offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let col = offset - before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}
