//! A small JavaScript/TypeScript tokenizer.
//!
//! It only needs to be precise enough to find statement boundaries and
//! bracket structure: string, template, regex, comment and JSX bodies are
//! each collapsed into a single opaque token so that brackets and quotes
//! inside them never confuse the structural scan.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Template,
    Regex,
    Jsx,
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    /// A line terminator occurs between the previous token and this one.
    pub newline_before: bool,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is_punct(&self, src: &str, p: &str) -> bool {
        self.kind == TokenKind::Punct && self.text(src) == p
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.message, self.offset)
    }
}

/// Keywords after which an expression (and so a regex or JSX) may start.
const EXPR_KEYWORDS: &[&str] = &[
    "return",
    "typeof",
    "instanceof",
    "in",
    "of",
    "new",
    "delete",
    "void",
    "throw",
    "case",
    "do",
    "else",
    "yield",
    "await",
];

const PUNCTUATORS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==", "!=", "<=", ">=", "&&",
    "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "**", "<<", ">>",
];

pub fn tokenize(src: &str, jsx: bool) -> Result<Vec<Token>, LexError> {
    let mut lexer = Lexer {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        jsx,
        tokens: Vec::new(),
        brackets: Vec::new(),
    };
    lexer.run(None)?;
    if let Some(&(open, at)) = lexer.brackets.last() {
        return Err(LexError {
            offset: at,
            message: format!("unclosed '{}'", open as char),
        });
    }
    Ok(lexer.tokens)
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    jsx: bool,
    tokens: Vec<Token>,
    brackets: Vec<(u8, usize)>,
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphanumeric() || c == '\u{200c}' || c == '\u{200d}'
}

fn closer(open: u8) -> u8 {
    match open {
        b'(' => b')',
        b'[' => b']',
        _ => b'}',
    }
}

impl<'a> Lexer<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, LexError> {
        Err(LexError {
            offset,
            message: message.into(),
        })
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn byte_at(&self, i: usize) -> Option<u8> {
        self.bytes.get(i).copied()
    }

    /// Whether the previous significant token lets an expression start here.
    fn expr_allowed(&self) -> bool {
        let Some(prev) = self.tokens.last() else {
            return true;
        };
        match prev.kind {
            TokenKind::Number | TokenKind::Str | TokenKind::Template | TokenKind::Regex | TokenKind::Jsx => false,
            TokenKind::Ident => EXPR_KEYWORDS.contains(&prev.text(self.src)),
            TokenKind::Punct => !matches!(prev.text(self.src), ")" | "]" | "}" | "++" | "--"),
        }
    }

    fn push(&mut self, kind: TokenKind, start: usize, newline_before: bool) {
        self.tokens.push(Token {
            kind,
            start,
            end: self.pos,
            newline_before,
        });
    }

    /// Skips whitespace and comments; returns whether a line break was seen.
    fn skip_trivia(&mut self) -> Result<bool, LexError> {
        let mut newline = false;
        if self.pos == 0 && self.src.starts_with("#!") {
            while let Some(c) = self.peek_char() {
                if c == '\n' {
                    break;
                }
                self.pos += c.len_utf8();
            }
        }
        while let Some(c) = self.peek_char() {
            if c == '\n' || c == '\r' || c == '\u{2028}' || c == '\u{2029}' {
                newline = true;
                self.pos += c.len_utf8();
            } else if c.is_whitespace() || c == '\u{feff}' {
                self.pos += c.len_utf8();
            } else if self.src[self.pos..].starts_with("//") {
                while let Some(c) = self.peek_char() {
                    if c == '\n' || c == '\r' {
                        break;
                    }
                    self.pos += c.len_utf8();
                }
            } else if self.src[self.pos..].starts_with("/*") {
                let start = self.pos;
                match self.src[self.pos + 2..].find("*/") {
                    Some(off) => {
                        let body = &self.src[self.pos + 2..self.pos + 2 + off];
                        if body.contains('\n') || body.contains('\r') {
                            newline = true;
                        }
                        self.pos += off + 4;
                    }
                    None => return self.err(start, "unterminated block comment"),
                }
            } else {
                break;
            }
        }
        Ok(newline)
    }

    /// Lexes until end of input, or until the closing `}` of a template or
    /// JSX expression hole when `stop_at_brace` is set.
    fn run(&mut self, stop_at_brace: Option<usize>) -> Result<(), LexError> {
        let base_depth = self.brackets.len();
        loop {
            let newline = self.skip_trivia()?;
            let Some(c) = self.peek_char() else {
                if let Some(at) = stop_at_brace {
                    return self.err(at, "unterminated interpolation");
                }
                return Ok(());
            };
            let start = self.pos;
            match c {
                '"' | '\'' => {
                    self.lex_string(c as u8)?;
                    self.push(TokenKind::Str, start, newline);
                }
                '`' => {
                    self.lex_template()?;
                    self.push(TokenKind::Template, start, newline);
                }
                '/' if self.expr_allowed() => {
                    self.lex_regex()?;
                    self.push(TokenKind::Regex, start, newline);
                }
                '<' if self.jsx && self.expr_allowed() && self.looks_like_jsx() => {
                    self.lex_jsx_element()?;
                    self.push(TokenKind::Jsx, start, newline);
                }
                c if c.is_ascii_digit()
                    || (c == '.' && self.byte_at(self.pos + 1).is_some_and(|b| b.is_ascii_digit())) =>
                {
                    self.lex_number();
                    self.push(TokenKind::Number, start, newline);
                }
                c if is_ident_start(c) || c == '\\' || c == '#' => {
                    self.pos += c.len_utf8();
                    while let Some(c) = self.peek_char() {
                        if is_ident_continue(c) || c == '\\' {
                            self.pos += c.len_utf8();
                        } else {
                            break;
                        }
                    }
                    self.push(TokenKind::Ident, start, newline);
                }
                '(' | '[' | '{' => {
                    self.brackets.push((c as u8, start));
                    self.pos += 1;
                    self.push(TokenKind::Punct, start, newline);
                }
                ')' | ']' | '}' => {
                    if c == '}' && stop_at_brace.is_some() && self.brackets.len() == base_depth {
                        self.pos += 1;
                        return Ok(());
                    }
                    if self.brackets.len() <= base_depth {
                        return self.err(start, format!("unmatched '{c}'"));
                    }
                    match self.brackets.pop() {
                        Some((open, _)) if closer(open) == c as u8 => {}
                        Some((open, at)) => {
                            return self.err(
                                start,
                                format!("'{c}' does not close '{}' opened at byte {at}", open as char),
                            )
                        }
                        None => return self.err(start, format!("unmatched '{c}'")),
                    }
                    self.pos += 1;
                    self.push(TokenKind::Punct, start, newline);
                }
                _ => {
                    let rest = &self.src[self.pos..];
                    let len = PUNCTUATORS
                        .iter()
                        .find(|p| rest.starts_with(*p))
                        .map(|p| p.len())
                        .unwrap_or(c.len_utf8());
                    self.pos += len;
                    self.push(TokenKind::Punct, start, newline);
                }
            }
        }
    }

    fn lex_string(&mut self, quote: u8) -> Result<(), LexError> {
        let start = self.pos;
        self.pos += 1;
        while let Some(b) = self.byte_at(self.pos) {
            match b {
                b'\\' => self.pos += 2,
                b'\n' => return self.err(start, "unterminated string literal"),
                b if b == quote => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => self.pos += 1,
            }
        }
        self.err(start, "unterminated string literal")
    }

    fn lex_template(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        self.pos += 1;
        while let Some(b) = self.byte_at(self.pos) {
            match b {
                b'\\' => self.pos += 2,
                b'`' => {
                    self.pos += 1;
                    return Ok(());
                }
                b'$' if self.byte_at(self.pos + 1) == Some(b'{') => {
                    let hole = self.pos;
                    self.pos += 2;
                    self.lex_nested(hole)?;
                }
                _ => self.pos += 1,
            }
        }
        self.err(start, "unterminated template literal")
    }

    /// Lexes an expression hole (`${...}` or JSX `{...}`) with a scratch
    /// token list; the hole is folded into the enclosing opaque token.
    fn lex_nested(&mut self, hole: usize) -> Result<(), LexError> {
        let saved = std::mem::take(&mut self.tokens);
        let depth = self.brackets.len();
        let result = self.run(Some(hole));
        self.brackets.truncate(depth);
        self.tokens = saved;
        result
    }

    fn lex_regex(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        self.pos += 1;
        let mut in_class = false;
        loop {
            match self.byte_at(self.pos) {
                None | Some(b'\n') | Some(b'\r') => return self.err(start, "unterminated regular expression"),
                Some(b'\\') => self.pos += 2,
                Some(b'[') => {
                    in_class = true;
                    self.pos += 1;
                }
                Some(b']') => {
                    in_class = false;
                    self.pos += 1;
                }
                Some(b'/') if !in_class => {
                    self.pos += 1;
                    break;
                }
                Some(_) => self.pos += 1,
            }
        }
        while let Some(c) = self.peek_char() {
            if is_ident_continue(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        Ok(())
    }

    fn lex_number(&mut self) {
        let start = self.pos;
        let hex = self.src[start..].starts_with("0x") || self.src[start..].starts_with("0X");
        while let Some(c) = self.peek_char() {
            let exponent_sign =
                (c == '+' || c == '-') && !hex && matches!(self.byte_at(self.pos - 1), Some(b'e') | Some(b'E'));
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || exponent_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn looks_like_jsx(&self) -> bool {
        match self.src[self.pos + 1..].chars().next() {
            Some('>') => true,
            Some(c) => is_ident_start(c),
            None => false,
        }
    }

    fn lex_jsx_element(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        let self_closing = self.lex_jsx_tag(start)?;
        if self_closing {
            return Ok(());
        }
        self.lex_jsx_children(start)
    }

    /// Lexes one opening tag starting at `<`; returns true for `<x/>`.
    fn lex_jsx_tag(&mut self, element_start: usize) -> Result<bool, LexError> {
        self.pos += 1;
        loop {
            match self.byte_at(self.pos) {
                None => return self.err(element_start, "unterminated JSX tag"),
                Some(b'>') => {
                    self.pos += 1;
                    return Ok(false);
                }
                Some(b'/') if self.byte_at(self.pos + 1) == Some(b'>') => {
                    self.pos += 2;
                    return Ok(true);
                }
                Some(q @ (b'"' | b'\'')) => {
                    let s = self.pos;
                    self.pos += 1;
                    while self.byte_at(self.pos).is_some_and(|b| b != q) {
                        self.pos += 1;
                    }
                    if self.byte_at(self.pos).is_none() {
                        return self.err(s, "unterminated JSX attribute");
                    }
                    self.pos += 1;
                }
                Some(b'{') => {
                    let hole = self.pos;
                    self.pos += 1;
                    self.lex_nested(hole)?;
                }
                Some(_) => self.pos += self.peek_char().map_or(1, char::len_utf8),
            }
        }
    }

    fn lex_jsx_children(&mut self, element_start: usize) -> Result<(), LexError> {
        loop {
            match self.byte_at(self.pos) {
                None => return self.err(element_start, "unterminated JSX element"),
                Some(b'<') if self.byte_at(self.pos + 1) == Some(b'/') => {
                    while self.byte_at(self.pos).is_some_and(|b| b != b'>') {
                        self.pos += 1;
                    }
                    if self.byte_at(self.pos).is_none() {
                        return self.err(element_start, "unterminated JSX closing tag");
                    }
                    self.pos += 1;
                    return Ok(());
                }
                Some(b'<') => {
                    let child = self.pos;
                    if !self.lex_jsx_tag(child)? {
                        self.lex_jsx_children(child)?;
                    }
                }
                Some(b'{') => {
                    let hole = self.pos;
                    self.pos += 1;
                    self.lex_nested(hole)?;
                }
                Some(_) => self.pos += self.peek_char().map_or(1, char::len_utf8),
            }
        }
    }
}
