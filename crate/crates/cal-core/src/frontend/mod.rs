//! C frontend: lexing, recursive-descent parsing into a span-accurate AST,
//! and call-site resolution.
//!
//! This is a pragmatic subset frontend. Preprocessor lines and comments are
//! skipped (line numbers preserved), macros are not expanded, and statements
//! outside the subset are consumed as opaque nodes with correct spans rather
//! than aborting the parse.

mod lexer;
mod parser;

pub use lexer::{tokenize, LexError, Token, TokenKind};
pub use parser::{parse, resolve_calls, Ast, AstKind, AstNode, CallSite, ParseError};

pub(crate) use parser::join_tokens;
