use thiserror::Error;

/// Lexical class of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Identifier,
    Number,
    Str,
    Char,
    Punct,
}

/// One lexed token with its exact source text and 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexError {
    #[error("unterminated string literal at {line}:{column}")]
    UnterminatedString { line: u32, column: u32 },
    #[error("unterminated character literal at {line}:{column}")]
    UnterminatedChar { line: u32, column: u32 },
    #[error("illegal character '{ch}' at {line}:{column}")]
    IllegalChar { ch: char, line: u32, column: u32 },
}

const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while",
];

/// Multi-character punctuators, longest first so greedy matching works.
const PUNCTS: &[&str] = &[
    "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "=", "<", ">", "!", "&",
    "|", "^", "~", "?", ":", ";", ",", ".", "(", ")", "[", "]", "{", "}",
];

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
    src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { chars: src.chars().collect(), pos: 0, line: 1, column: 1, src }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek_at(i) == Some(c))
    }
}

/// Lex UTF-8 C source into tokens. Comments and preprocessor lines are
/// skipped; line/column counting is preserved across them.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor::new(source);
    let mut out = Vec::new();
    let mut at_line_start = true;

    while let Some(c) = cur.peek() {
        if c == '\n' {
            cur.bump();
            at_line_start = true;
            continue;
        }
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        // Preprocessor line: '#' as the first non-whitespace character.
        // Backslash-newline continuations extend the skipped region.
        if c == '#' && at_line_start {
            let mut prev = ' ';
            while let Some(ch) = cur.peek() {
                if ch == '\n' {
                    if prev == '\\' {
                        cur.bump();
                        prev = ' ';
                        continue;
                    }
                    break;
                }
                prev = ch;
                cur.bump();
            }
            continue;
        }
        at_line_start = false;

        if cur.starts_with("//") {
            while let Some(ch) = cur.peek() {
                if ch == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            // An unterminated block comment swallows the rest of the file.
            while cur.peek().is_some() {
                if cur.starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                cur.bump();
            }
            continue;
        }

        let (line, column) = (cur.line, cur.column);

        if c == '"' {
            let mut text = String::new();
            text.push(cur.bump().unwrap());
            loop {
                match cur.peek() {
                    None | Some('\n') => {
                        return Err(LexError::UnterminatedString { line, column })
                    }
                    Some('\\') => {
                        text.push(cur.bump().unwrap());
                        if let Some(esc) = cur.bump() {
                            text.push(esc);
                        }
                    }
                    Some('"') => {
                        text.push(cur.bump().unwrap());
                        break;
                    }
                    Some(_) => text.push(cur.bump().unwrap()),
                }
            }
            out.push(Token { kind: TokenKind::Str, text, line, column });
            continue;
        }

        if c == '\'' {
            let mut text = String::new();
            text.push(cur.bump().unwrap());
            loop {
                match cur.peek() {
                    None | Some('\n') => return Err(LexError::UnterminatedChar { line, column }),
                    Some('\\') => {
                        text.push(cur.bump().unwrap());
                        if let Some(esc) = cur.bump() {
                            text.push(esc);
                        }
                    }
                    Some('\'') => {
                        text.push(cur.bump().unwrap());
                        break;
                    }
                    Some(_) => text.push(cur.bump().unwrap()),
                }
            }
            out.push(Token { kind: TokenKind::Char, text, line, column });
            continue;
        }

        if c.is_ascii_digit() {
            let mut text = String::new();
            while let Some(ch) = cur.peek() {
                if ch.is_ascii_alphanumeric() || ch == '.' || ch == '_' {
                    text.push(cur.bump().unwrap());
                } else {
                    break;
                }
            }
            out.push(Token { kind: TokenKind::Number, text, line, column });
            continue;
        }

        if c.is_ascii_alphabetic() || c == '_' {
            let mut text = String::new();
            while let Some(ch) = cur.peek() {
                if ch.is_ascii_alphanumeric() || ch == '_' {
                    text.push(cur.bump().unwrap());
                } else {
                    break;
                }
            }
            let kind = if KEYWORDS.contains(&text.as_str()) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            out.push(Token { kind, text, line, column });
            continue;
        }

        if let Some(p) = PUNCTS.iter().find(|p| cur.starts_with(p)) {
            for _ in 0..p.chars().count() {
                cur.bump();
            }
            out.push(Token { kind: TokenKind::Punct, text: p.to_string(), line, column });
            continue;
        }

        return Err(LexError::IllegalChar { ch: c, line, column });
    }
    let _ = cur.src;
    Ok(out)
}
