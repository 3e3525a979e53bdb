use super::lexer::{Token, TokenKind};
use thiserror::Error;

/// AST node kinds for the supported C subset. Constructs outside the subset
/// are consumed as `Opaque` statements with correct spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AstKind {
    TranslationUnit,
    FunctionDef,
    ParamDecl,
    VarDecl,
    GlobalVarDecl,
    TypeName,
    Block,
    If,
    While,
    For,
    Return,
    Call,
    Assign,
    BinaryOp,
    UnaryOp,
    Identifier,
    Literal,
    Opaque,
}

/// One AST node in the arena. Ids are pre-order positions, so identical
/// source always yields identical ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub id: usize,
    pub kind: AstKind,
    pub children: Vec<usize>,
    /// (start line, end line), 1-based, inclusive. Parents enclose children.
    pub span: (u32, u32),
    /// Salient text: name for definitions/identifiers/calls, operator for
    /// expressions, keyword for control structures.
    pub text: String,
    /// Half-open range into the token stream covered by this subtree.
    pub token_range: (u32, u32),
}

/// Parsed translation unit: node arena plus the token stream it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    pub nodes: Vec<AstNode>,
    pub tokens: Vec<Token>,
}

impl Ast {
    pub fn root(&self) -> &AstNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &AstNode {
        &self.nodes[id]
    }

    /// Source text of a node, reassembled from its tokens.
    pub fn code(&self, id: usize) -> String {
        let (lo, hi) = self.nodes[id].token_range;
        join_tokens(&self.tokens[lo as usize..hi as usize])
    }
}

/// Joins token texts, omitting space before closing/separator punctuation and
/// after opening punctuation so snippets stay close to the original source.
pub(crate) fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            let no_space_before = matches!(t.text.as_str(), ")" | "]" | ";" | "," | "(" | "[");
            let prev = &tokens[i - 1].text;
            let no_space_after = matches!(prev.as_str(), "(" | "[" | "!" | "~");
            if !no_space_before && !no_space_after {
                out.push(' ');
            }
        }
        out.push_str(&t.text);
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unbalanced delimiters: expected '{expected}' near {line}:{column}")]
    Unbalanced { expected: char, line: u32, column: u32 },
    #[error("unexpected closing '{found}' at {line}:{column}")]
    StrayCloser { found: char, line: u32, column: u32 },
}

/// A resolved call site: one per `Call` AST node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub call_node: usize,
    pub callee: String,
    /// True when no `FunctionDef` with this name exists in the tree.
    pub is_external: bool,
}

/// One call site per Call node; callees without a local definition are
/// external, never errors.
pub fn resolve_calls(ast: &Ast) -> Vec<CallSite> {
    let defined: std::collections::BTreeSet<&str> = ast
        .nodes
        .iter()
        .filter(|n| n.kind == AstKind::FunctionDef)
        .map(|n| n.text.as_str())
        .collect();
    ast.nodes
        .iter()
        .filter(|n| n.kind == AstKind::Call)
        .map(|n| CallSite {
            call_node: n.id,
            callee: n.text.clone(),
            is_external: !defined.contains(n.text.as_str()),
        })
        .collect()
}

const TYPE_KEYWORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "const",
    "static", "volatile", "extern", "register", "struct", "enum", "union",
];

/// Statement-leading keywords outside the subset; consumed as opaque nodes.
const OPAQUE_KEYWORDS: &[&str] = &[
    "switch", "do", "goto", "break", "continue", "case", "default", "typedef", "sizeof", "inline",
    "auto", "restrict",
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

/// Binary operator precedence tiers, loosest first.
const BIN_TIERS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["|"],
    &["^"],
    &["&"],
    &["==", "!="],
    &["<", ">", "<=", ">="],
    &["<<", ">>"],
    &["+", "-"],
    &["*", "/", "%"],
];

struct TypeSpec {
    /// Base type text without pointer stars, e.g. "unsigned char", "EVP_PKEY".
    text: String,
    tok_lo: u32,
    tok_hi: u32,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    nodes: Vec<AstNode>,
}

/// Parse a token stream into a `TranslationUnit` tree.
pub fn parse(tokens: Vec<Token>) -> Result<Ast, ParseError> {
    let mut p = Parser { tokens, pos: 0, nodes: Vec::new() };
    let root = p.new_node(AstKind::TranslationUnit, String::new());
    let mut children = Vec::new();
    while !p.at_end() {
        if let Some(t) = p.peek() {
            if t.kind == TokenKind::Punct && matches!(t.text.as_str(), ")" | "}" | "]") {
                let found = t.text.chars().next().unwrap();
                return Err(ParseError::StrayCloser { found, line: t.line, column: t.column });
            }
        }
        if let Some(id) = p.parse_top_level()? {
            children.push(id);
        }
    }
    p.nodes[root].children = children;
    p.finish(root, 0);
    if p.nodes[root].token_range.1 == 0 {
        p.nodes[root].span = (1, 1);
    }
    Ok(renumber_preorder(p))
}

/// Rebuild the arena in pre-order so node ids equal pre-order ranks.
fn renumber_preorder(p: Parser) -> Ast {
    let mut order = Vec::with_capacity(p.nodes.len());
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        order.push(id);
        for &c in p.nodes[id].children.iter().rev() {
            stack.push(c);
        }
    }
    let mut new_id = vec![usize::MAX; p.nodes.len()];
    for (rank, &old) in order.iter().enumerate() {
        new_id[old] = rank;
    }
    let mut nodes: Vec<AstNode> = Vec::with_capacity(order.len());
    for &old in &order {
        let mut n = p.nodes[old].clone();
        n.id = new_id[old];
        n.children = n.children.iter().map(|&c| new_id[c]).collect();
        nodes.push(n);
    }
    Ast { nodes, tokens: p.tokens }
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, off: usize) -> Option<&Token> {
        self.tokens.get(self.pos + off)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        self.tokens.get(self.pos - 1)
    }

    fn is_punct(&self, s: &str) -> bool {
        self.peek().map_or(false, |t| t.kind == TokenKind::Punct && t.text == s)
    }

    fn is_keyword(&self, s: &str) -> bool {
        self.peek().map_or(false, |t| t.kind == TokenKind::Keyword && t.text == s)
    }

    fn eat_punct(&mut self, s: &str) -> bool {
        if self.is_punct(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_closer(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_punct(s) {
            Ok(())
        } else {
            let (line, column) = self
                .peek()
                .map(|t| (t.line, t.column))
                .or_else(|| self.tokens.last().map(|t| (t.line, t.column)))
                .unwrap_or((1, 1));
            Err(ParseError::Unbalanced { expected: s.chars().next().unwrap(), line, column })
        }
    }

    fn new_node(&mut self, kind: AstKind, text: String) -> usize {
        let id = self.nodes.len();
        self.nodes.push(AstNode {
            id,
            kind,
            children: Vec::new(),
            span: (1, 1),
            text,
            token_range: (self.pos as u32, self.pos as u32),
        });
        id
    }

    /// Close a node: record its token range and line span.
    fn finish(&mut self, id: usize, tok_lo: usize) {
        let hi = self.pos;
        self.nodes[id].token_range = (tok_lo as u32, hi as u32);
        if tok_lo < hi {
            let start = self.tokens[tok_lo].line;
            let end = self.tokens[hi - 1].line;
            self.nodes[id].span = (start, end.max(start));
        }
    }

    fn snapshot(&self) -> (usize, usize) {
        (self.pos, self.nodes.len())
    }

    fn rollback(&mut self, snap: (usize, usize)) {
        self.pos = snap.0;
        self.nodes.truncate(snap.1);
    }

    // ---- type specifiers -------------------------------------------------

    /// Lookahead: does a declaration start here? Type keywords, or the
    /// typedef-name heuristic `Ident Ident` / `Ident '*'+ Ident`.
    fn is_decl_start(&self) -> bool {
        let Some(t) = self.peek() else { return false };
        match t.kind {
            TokenKind::Keyword => TYPE_KEYWORDS.contains(&t.text.as_str()),
            TokenKind::Identifier => {
                let mut off = 1;
                while let Some(n) = self.peek_at(off) {
                    match (n.kind, n.text.as_str()) {
                        (TokenKind::Punct, "*") => off += 1,
                        (TokenKind::Identifier, _) => return true,
                        _ => return false,
                    }
                }
                false
            }
            _ => false,
        }
    }

    /// Consume a base type (qualifiers + type word + struct/enum tag). Stars
    /// belong to declarators, not the base type.
    fn parse_type_spec(&mut self) -> TypeSpec {
        let lo = self.pos;
        let mut words: Vec<String> = Vec::new();
        let mut saw_base = false;
        while let Some(t) = self.peek() {
            let is_qualifier = t.kind == TokenKind::Keyword
                && matches!(
                    t.text.as_str(),
                    "const" | "static" | "volatile" | "extern" | "register" | "unsigned" | "signed"
                );
            let is_base_kw = t.kind == TokenKind::Keyword
                && matches!(
                    t.text.as_str(),
                    "void" | "char" | "short" | "int" | "long" | "float" | "double"
                );
            let is_tag_kw = t.kind == TokenKind::Keyword
                && matches!(t.text.as_str(), "struct" | "enum" | "union");
            if is_qualifier {
                let keep = matches!(t.text.as_str(), "unsigned" | "signed");
                let text = t.text.clone();
                self.bump();
                if keep {
                    words.push(text);
                    saw_base = true;
                }
            } else if is_tag_kw {
                words.push(t.text.clone());
                self.bump();
                if let Some(tag) = self.peek() {
                    if tag.kind == TokenKind::Identifier {
                        words.push(tag.text.clone());
                        self.bump();
                    }
                }
                saw_base = true;
            } else if is_base_kw {
                words.push(t.text.clone());
                self.bump();
                saw_base = true;
                // allow "long long", "long int", etc. to continue
            } else if t.kind == TokenKind::Identifier && !saw_base {
                words.push(t.text.clone());
                self.bump();
                break;
            } else {
                break;
            }
        }
        TypeSpec { text: words.join(" "), tok_lo: lo as u32, tok_hi: self.pos as u32 }
    }

    fn mk_type_node(&mut self, spec: &TypeSpec) -> usize {
        let id = self.new_node(AstKind::TypeName, spec.text.clone());
        self.nodes[id].token_range = (spec.tok_lo, spec.tok_hi);
        if spec.tok_lo < spec.tok_hi {
            let start = self.tokens[spec.tok_lo as usize].line;
            let end = self.tokens[spec.tok_hi as usize - 1].line;
            self.nodes[id].span = (start, end.max(start));
        }
        id
    }

    // ---- top level -------------------------------------------------------

    fn parse_top_level(&mut self) -> Result<Option<usize>, ParseError> {
        if self.eat_punct(";") {
            return Ok(None);
        }
        if self.is_decl_start() {
            let lo = self.pos;
            let snap = self.snapshot();
            let spec = self.parse_type_spec();
            // function definition or prototype: Type ident '('
            let is_fn = self.peek().map_or(false, |t| t.kind == TokenKind::Identifier)
                && self.peek_at(1).map_or(false, |t| t.text == "(");
            if is_fn {
                let name = self.peek().unwrap().text.clone();
                // find whether this is a definition (body) or a prototype
                if self.function_has_body() {
                    return Ok(Some(self.parse_function_def(lo, spec, name)?));
                }
                self.rollback(snap);
                return Ok(Some(self.parse_opaque()?));
            }
            if self.peek().map_or(false, |t| t.kind == TokenKind::Identifier || t.text == "*") {
                return Ok(Some(self.parse_var_decls(lo, spec, AstKind::GlobalVarDecl)?));
            }
            self.rollback(snap);
        }
        Ok(Some(self.parse_opaque()?))
    }

    /// After `Type`, with `ident (` ahead: scan past the parameter list to
    /// see whether a `{` follows (definition) or `;` (prototype).
    fn function_has_body(&self) -> bool {
        let mut off = 1; // at '(' after the identifier
        let mut depth = 0usize;
        while let Some(t) = self.peek_at(off) {
            match t.text.as_str() {
                "(" => depth += 1,
                ")" => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return self.peek_at(off + 1).map_or(false, |n| n.text == "{");
                    }
                }
                _ => {}
            }
            off += 1;
        }
        false
    }

    fn parse_function_def(
        &mut self,
        lo: usize,
        spec: TypeSpec,
        name: String,
    ) -> Result<usize, ParseError> {
        let func = self.new_node(AstKind::FunctionDef, name);
        let ty = self.mk_type_node(&spec);
        self.bump(); // name
        self.bump(); // '('
        let mut children = vec![ty];
        while !self.is_punct(")") && !self.at_end() {
            if self.eat_punct(",") {
                continue;
            }
            if self.eat_punct("...") {
                continue;
            }
            if self.is_keyword("void") && self.peek_at(1).map_or(false, |t| t.text == ")") {
                self.bump();
                continue;
            }
            children.push(self.parse_param()?);
        }
        self.expect_closer(")")?;
        let body_lo = self.pos;
        if self.is_punct("{") {
            children.push(self.parse_block()?);
        } else {
            // K&R style or missing body: consume nothing, leave an empty block
            let b = self.new_node(AstKind::Block, String::new());
            self.finish(b, body_lo);
            children.push(b);
        }
        self.nodes[func].children = children;
        self.finish(func, lo);
        Ok(func)
    }

    fn parse_param(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let spec = self.parse_type_spec();
        let param = self.new_node(AstKind::ParamDecl, String::new());
        let ty = self.mk_type_node(&spec);
        while self.eat_punct("*") || self.eat_punct("const") {}
        let mut name = String::new();
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Identifier {
                name = t.text.clone();
                self.bump();
            }
        }
        while self.eat_punct("[") {
            while !self.is_punct("]") && !self.at_end() {
                self.bump();
            }
            self.expect_closer("]")?;
        }
        self.nodes[param].text = name;
        self.nodes[param].children = vec![ty];
        self.finish(param, lo);
        Ok(param)
    }

    /// One or more declarators sharing a base type. Returns the first decl
    /// node; extra declarators become siblings appended to the arena and
    /// linked by the caller via the returned group. To keep a single parent
    /// slot, multiple declarators are wrapped: the first node is returned and
    /// the rest are made its following siblings through the parent's child
    /// list, so this returns a synthetic wrapper only when needed.
    fn parse_var_decls(
        &mut self,
        lo: usize,
        spec: TypeSpec,
        kind: AstKind,
    ) -> Result<usize, ParseError> {
        let decls = self.parse_var_decl_group(lo, spec, kind)?;
        if decls.len() == 1 {
            return Ok(decls[0]);
        }
        // Multiple declarators in one statement: group under a Block-like
        // wrapper so every declarator keeps its own node.
        let wrapper = self.new_node(AstKind::Block, String::new());
        self.nodes[wrapper].children = decls;
        self.finish(wrapper, lo);
        Ok(wrapper)
    }

    fn parse_var_decl_group(
        &mut self,
        lo: usize,
        spec: TypeSpec,
        kind: AstKind,
    ) -> Result<Vec<usize>, ParseError> {
        let mut decls = Vec::new();
        loop {
            let dlo = if decls.is_empty() { lo } else { self.pos };
            let decl = self.new_node(kind, String::new());
            let ty = self.mk_type_node(&spec);
            let mut children = vec![ty];
            while self.eat_punct("*") || self.eat_punct("const") {}
            let mut name = String::new();
            if let Some(t) = self.peek() {
                if t.kind == TokenKind::Identifier {
                    name = t.text.clone();
                    self.bump();
                }
            }
            while self.eat_punct("[") {
                while !self.is_punct("]") && !self.at_end() {
                    self.bump();
                }
                self.expect_closer("]")?;
            }
            if self.eat_punct("=") {
                children.push(self.parse_initializer()?);
            }
            self.nodes[decl].text = name;
            self.nodes[decl].children = children;
            self.finish(decl, dlo);
            decls.push(decl);
            if !self.eat_punct(",") {
                break;
            }
        }
        if !self.eat_punct(";") {
            // tolerate missing semicolon at EOF; otherwise sync to one
            while !self.at_end() && !self.eat_punct(";") {
                self.bump();
            }
        }
        Ok(decls)
    }

    fn parse_initializer(&mut self) -> Result<usize, ParseError> {
        if self.is_punct("{") {
            // brace initializer: consume balanced, opaque
            let lo = self.pos;
            self.skip_balanced_braces()?;
            let node = self.new_node(AstKind::Opaque, String::new());
            self.finish(node, lo);
            return Ok(node);
        }
        self.parse_assignment()
    }

    // ---- statements ------------------------------------------------------

    fn parse_block(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let block = self.new_node(AstKind::Block, String::new());
        self.bump(); // '{'
        let mut children = Vec::new();
        while !self.is_punct("}") {
            if self.at_end() {
                let (line, column) =
                    self.tokens.last().map(|t| (t.line, t.column)).unwrap_or((1, 1));
                return Err(ParseError::Unbalanced { expected: '}', line, column });
            }
            if let Some(id) = self.parse_stmt()? {
                children.push(id);
            }
        }
        self.bump(); // '}'
        self.nodes[block].children = children;
        self.finish(block, lo);
        Ok(block)
    }

    fn parse_stmt(&mut self) -> Result<Option<usize>, ParseError> {
        if self.eat_punct(";") {
            return Ok(None);
        }
        if self.is_punct("{") {
            return Ok(Some(self.parse_block()?));
        }
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Keyword {
                match t.text.as_str() {
                    "if" => return Ok(Some(self.parse_if()?)),
                    "while" => return Ok(Some(self.parse_while()?)),
                    "for" => return Ok(Some(self.parse_for()?)),
                    "return" => return Ok(Some(self.parse_return()?)),
                    s if OPAQUE_KEYWORDS.contains(&s) => return Ok(Some(self.parse_opaque()?)),
                    _ => {}
                }
            }
        }
        if self.is_decl_start() {
            let lo = self.pos;
            let spec = self.parse_type_spec();
            return Ok(Some(self.parse_var_decls(lo, spec, AstKind::VarDecl)?));
        }
        // expression statement, with opaque fallback on anything odd
        let snap = self.snapshot();
        match self.parse_expr() {
            Ok(expr) if self.is_punct(";") => {
                self.bump();
                // extend the statement node over the semicolon
                let hi = self.pos;
                self.nodes[expr].token_range.1 = hi as u32;
                Ok(Some(expr))
            }
            _ => {
                self.rollback(snap);
                Ok(Some(self.parse_opaque()?))
            }
        }
    }

    fn parse_if(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let node = self.new_node(AstKind::If, "if".into());
        self.bump(); // if
        self.expect_closer("(").map_err(|_| self.unbalanced('('))?;
        let cond = self.parse_expr()?;
        self.expect_closer(")")?;
        let mut children = vec![cond];
        if let Some(then) = self.parse_stmt()? {
            children.push(then);
        }
        if self.is_keyword("else") {
            self.bump();
            if let Some(els) = self.parse_stmt()? {
                children.push(els);
            }
        }
        self.nodes[node].children = children;
        self.finish(node, lo);
        Ok(node)
    }

    fn unbalanced(&self, expected: char) -> ParseError {
        let (line, column) = self
            .peek()
            .map(|t| (t.line, t.column))
            .or_else(|| self.tokens.last().map(|t| (t.line, t.column)))
            .unwrap_or((1, 1));
        ParseError::Unbalanced { expected, line, column }
    }

    fn parse_while(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let node = self.new_node(AstKind::While, "while".into());
        self.bump();
        self.expect_closer("(").map_err(|_| self.unbalanced('('))?;
        let cond = self.parse_expr()?;
        self.expect_closer(")")?;
        let mut children = vec![cond];
        if let Some(body) = self.parse_stmt()? {
            children.push(body);
        }
        self.nodes[node].children = children;
        self.finish(node, lo);
        Ok(node)
    }

    fn parse_for(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let node = self.new_node(AstKind::For, "for".into());
        self.bump();
        self.expect_closer("(").map_err(|_| self.unbalanced('('))?;
        let mut children = Vec::new();
        if !self.is_punct(";") {
            if self.is_decl_start() {
                let dlo = self.pos;
                let spec = self.parse_type_spec();
                let decls = self.parse_var_decl_group(dlo, spec, AstKind::VarDecl)?;
                children.extend(decls);
            } else {
                children.push(self.parse_expr()?);
                self.eat_punct(";");
            }
        } else {
            self.bump();
        }
        if !self.is_punct(";") {
            children.push(self.parse_expr()?);
        }
        self.eat_punct(";");
        if !self.is_punct(")") {
            children.push(self.parse_expr()?);
        }
        self.expect_closer(")")?;
        if let Some(body) = self.parse_stmt()? {
            children.push(body);
        }
        self.nodes[node].children = children;
        self.finish(node, lo);
        Ok(node)
    }

    fn parse_return(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let node = self.new_node(AstKind::Return, "return".into());
        self.bump();
        let mut children = Vec::new();
        if !self.is_punct(";") && !self.at_end() {
            children.push(self.parse_expr()?);
        }
        self.eat_punct(";");
        self.nodes[node].children = children;
        self.finish(node, lo);
        Ok(node)
    }

    /// Consume an unsupported construct through its terminating `;` or
    /// balanced brace block, producing an `Opaque` node with a correct span.
    fn parse_opaque(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let node = self.new_node(AstKind::Opaque, String::new());
        let starter = self.peek().map(|t| t.text.clone()).unwrap_or_default();
        self.nodes[node].text = starter.clone();
        let mut depth = 0usize;
        while let Some(t) = self.peek() {
            match t.text.as_str() {
                "(" | "[" => {
                    depth += 1;
                    self.bump();
                }
                ")" | "]" => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                    self.bump();
                }
                "{" => {
                    self.skip_balanced_braces()?;
                    if depth == 0 {
                        if starter == "do" {
                            continue; // keep going to the trailing ';'
                        }
                        if self.is_punct(";") {
                            self.bump();
                        }
                        break;
                    }
                }
                ";" if depth == 0 => {
                    self.bump();
                    break;
                }
                "}" if depth == 0 => break,
                _ => {
                    self.bump();
                }
            }
        }
        self.finish(node, lo);
        Ok(node)
    }

    fn skip_balanced_braces(&mut self) -> Result<(), ParseError> {
        let open = self.peek().map(|t| (t.line, t.column)).unwrap_or((1, 1));
        self.bump(); // '{'
        let mut depth = 1usize;
        while depth > 0 {
            match self.bump() {
                Some(t) if t.text == "{" => depth += 1,
                Some(t) if t.text == "}" => depth -= 1,
                Some(_) => {}
                None => {
                    return Err(ParseError::Unbalanced {
                        expected: '}',
                        line: open.0,
                        column: open.1,
                    })
                }
            }
        }
        Ok(())
    }

    // ---- expressions -----------------------------------------------------

    fn parse_expr(&mut self) -> Result<usize, ParseError> {
        self.parse_assignment()
    }

    fn parse_assignment(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let lhs = self.parse_ternary()?;
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Punct && ASSIGN_OPS.contains(&t.text.as_str()) {
                let op = t.text.clone();
                self.bump();
                let rhs = self.parse_assignment()?;
                let node = self.new_node(AstKind::Assign, op);
                self.nodes[node].children = vec![lhs, rhs];
                self.finish(node, lo);
                return Ok(node);
            }
        }
        Ok(lhs)
    }

    fn parse_ternary(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let cond = self.parse_binary(0)?;
        if self.eat_punct("?") {
            let a = self.parse_assignment()?;
            self.expect_closer(":").map_err(|_| self.unbalanced(':'))?;
            let b = self.parse_ternary()?;
            let node = self.new_node(AstKind::BinaryOp, "?:".into());
            self.nodes[node].children = vec![cond, a, b];
            self.finish(node, lo);
            return Ok(node);
        }
        Ok(cond)
    }

    fn parse_binary(&mut self, tier: usize) -> Result<usize, ParseError> {
        if tier >= BIN_TIERS.len() {
            return self.parse_unary();
        }
        let lo = self.pos;
        let mut lhs = self.parse_binary(tier + 1)?;
        loop {
            let Some(t) = self.peek() else { break };
            if t.kind == TokenKind::Punct && BIN_TIERS[tier].contains(&t.text.as_str()) {
                let op = t.text.clone();
                self.bump();
                let rhs = self.parse_binary(tier + 1)?;
                let node = self.new_node(AstKind::BinaryOp, op);
                self.nodes[node].children = vec![lhs, rhs];
                self.finish(node, lo);
                lhs = node;
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        if let Some(t) = self.peek() {
            let is_prefix = t.kind == TokenKind::Punct
                && matches!(t.text.as_str(), "!" | "-" | "+" | "~" | "*" | "&" | "++" | "--");
            let is_sizeof = t.kind == TokenKind::Keyword && t.text == "sizeof";
            if is_prefix || is_sizeof {
                let op = t.text.clone();
                self.bump();
                if is_sizeof && self.is_punct("(") {
                    // sizeof(...) with a type or expression inside
                    let node = self.new_node(AstKind::UnaryOp, op);
                    let mut depth = 0usize;
                    while let Some(t) = self.peek() {
                        match t.text.as_str() {
                            "(" => depth += 1,
                            ")" => {
                                depth -= 1;
                                if depth == 0 {
                                    self.bump();
                                    break;
                                }
                            }
                            _ => {}
                        }
                        self.bump();
                    }
                    self.finish(node, lo);
                    return Ok(node);
                }
                let operand = self.parse_unary()?;
                let node = self.new_node(AstKind::UnaryOp, op);
                self.nodes[node].children = vec![operand];
                self.finish(node, lo);
                return Ok(node);
            }
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        // Simple direct call `name(...)`: the callee is carried in the Call
        // node's text, no Identifier child is created for it.
        let direct_call = self.peek().map_or(false, |t| t.kind == TokenKind::Identifier)
            && self.peek_at(1).map_or(false, |t| t.text == "(");
        let mut base = if direct_call {
            let name = self.bump().unwrap().text.clone();
            self.bump(); // '('
            let node = self.new_node(AstKind::Call, name);
            let args = self.parse_args()?;
            self.nodes[node].children = args;
            self.finish(node, lo);
            node
        } else {
            self.parse_primary()?
        };
        loop {
            if self.is_punct("(") {
                self.bump();
                let node = self.new_node(AstKind::Call, String::new());
                let args = self.parse_args()?;
                let mut children = vec![base];
                children.extend(args);
                self.nodes[node].children = children;
                self.finish(node, lo);
                base = node;
            } else if self.is_punct("[") {
                self.bump();
                let idx = self.parse_expr()?;
                self.expect_closer("]")?;
                let node = self.new_node(AstKind::BinaryOp, "[]".into());
                self.nodes[node].children = vec![base, idx];
                self.finish(node, lo);
                base = node;
            } else if self.is_punct(".") || self.is_punct("->") {
                let op = self.bump().unwrap().text.clone();
                let field = self
                    .peek()
                    .filter(|t| t.kind == TokenKind::Identifier)
                    .map(|t| t.text.clone())
                    .unwrap_or_default();
                if !field.is_empty() {
                    self.bump();
                }
                let node = self.new_node(AstKind::BinaryOp, format!("{op}{field}"));
                self.nodes[node].children = vec![base];
                self.finish(node, lo);
                base = node;
            } else if self.is_punct("++") || self.is_punct("--") {
                let op = self.bump().unwrap().text.clone();
                let node = self.new_node(AstKind::UnaryOp, op);
                self.nodes[node].children = vec![base];
                self.finish(node, lo);
                base = node;
            } else {
                break;
            }
        }
        Ok(base)
    }

    fn parse_args(&mut self) -> Result<Vec<usize>, ParseError> {
        let mut args = Vec::new();
        while !self.is_punct(")") {
            if self.at_end() {
                return Err(self.unbalanced(')'));
            }
            args.push(self.parse_assignment()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_closer(")")?;
        Ok(args)
    }

    fn parse_primary(&mut self) -> Result<usize, ParseError> {
        let lo = self.pos;
        let Some(t) = self.peek() else {
            return Err(self.unbalanced(';'));
        };
        match t.kind {
            TokenKind::Identifier => {
                let name = t.text.clone();
                self.bump();
                let node = self.new_node(AstKind::Identifier, name);
                self.finish(node, lo);
                Ok(node)
            }
            TokenKind::Number | TokenKind::Str | TokenKind::Char => {
                let text = t.text.clone();
                self.bump();
                let node = self.new_node(AstKind::Literal, text);
                self.finish(node, lo);
                Ok(node)
            }
            TokenKind::Keyword if t.text == "sizeof" => self.parse_unary(),
            TokenKind::Punct if t.text == "(" => {
                self.bump();
                // cast: '(' type-keyword ... ')' expr
                if self.peek().map_or(false, |t| {
                    t.kind == TokenKind::Keyword && TYPE_KEYWORDS.contains(&t.text.as_str())
                }) {
                    while !self.is_punct(")") && !self.at_end() {
                        self.bump();
                    }
                    self.expect_closer(")")?;
                    return self.parse_unary();
                }
                let inner = self.parse_expr()?;
                self.expect_closer(")")?;
                Ok(inner)
            }
            _ => {
                // unknown token in expression position: make it a literal-ish
                // leaf so the statement can finish or fall back to opaque
                let text = t.text.clone();
                self.bump();
                let node = self.new_node(AstKind::Literal, text);
                self.finish(node, lo);
                Ok(node)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::lexer::tokenize;
    use super::*;

    fn parse_src(src: &str) -> Ast {
        parse(tokenize(src).unwrap()).unwrap()
    }

    fn kinds(ast: &Ast) -> Vec<AstKind> {
        ast.nodes.iter().map(|n| n.kind).collect()
    }

    #[test]
    fn empty_translation_unit() {
        let ast = parse_src("");
        assert_eq!(ast.nodes.len(), 1);
        assert_eq!(ast.root().kind, AstKind::TranslationUnit);
        assert!(ast.root().children.is_empty());
    }

    #[test]
    fn minimal_main_has_six_nodes() {
        let ast = parse_src("int main() { return 0; }");
        assert_eq!(ast.nodes.len(), 6);
        assert_eq!(
            kinds(&ast),
            vec![
                AstKind::TranslationUnit,
                AstKind::FunctionDef,
                AstKind::TypeName,
                AstKind::Block,
                AstKind::Return,
                AstKind::Literal,
            ]
        );
        assert_eq!(ast.nodes[1].text, "main");
        assert_eq!(ast.nodes[5].text, "0");
    }

    #[test]
    fn if_with_call_branch() {
        let ast = parse_src("void f(){ if(x) g(); }");
        let ifn = ast.nodes.iter().find(|n| n.kind == AstKind::If).unwrap();
        let cond = ast.node(ifn.children[0]);
        assert_eq!(cond.kind, AstKind::Identifier);
        assert_eq!(cond.text, "x");
        let then = ast.node(ifn.children[1]);
        assert_eq!(then.kind, AstKind::Call);
        assert_eq!(then.text, "g");
    }

    #[test]
    fn preorder_ids_and_parent_spans() {
        let ast = parse_src("int a = 1;\nvoid f(int x){ while(x) { x = x - 1; } }\n");
        for (i, n) in ast.nodes.iter().enumerate() {
            assert_eq!(n.id, i);
            for &c in &n.children {
                assert!(c > n.id, "child id {} not after parent {}", c, n.id);
                let cs = ast.node(c).span;
                assert!(n.span.0 <= cs.0 && cs.1 <= n.span.1, "span nesting violated");
            }
        }
        // each node has exactly one parent except the root
        let mut parent_count = vec![0usize; ast.nodes.len()];
        for n in &ast.nodes {
            for &c in &n.children {
                parent_count[c] += 1;
            }
        }
        assert_eq!(parent_count[0], 0);
        assert!(parent_count[1..].iter().all(|&c| c == 1));
    }

    #[test]
    fn resolve_calls_examples() {
        let ast = parse_src("void g();\nvoid f(){ g(); }\n");
        // g is a prototype (opaque), not a definition -> external
        let sites = resolve_calls(&ast);
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].callee, "g");
        assert!(sites[0].is_external);

        let ast = parse_src("void f(){ f(); }");
        let sites = resolve_calls(&ast);
        assert_eq!(sites[0].callee, "f");
        assert!(!sites[0].is_external);

        let ast = parse_src("int main(){SHA256(a,b,c);}");
        let sites = resolve_calls(&ast);
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].callee, "SHA256");
        assert!(sites[0].is_external);
    }

    #[test]
    fn unsupported_statement_becomes_opaque() {
        let ast = parse_src("void f(){ switch(x){ case 1: break; } y = 1; }");
        assert!(ast.nodes.iter().any(|n| n.kind == AstKind::Opaque));
        assert!(ast.nodes.iter().any(|n| n.kind == AstKind::Assign));
    }

    #[test]
    fn unbalanced_brace_is_error() {
        let toks = tokenize("void f(){ if(x) { g(); ").unwrap();
        assert!(matches!(parse(toks), Err(ParseError::Unbalanced { .. })));
    }

    #[test]
    fn deterministic_reparse() {
        let src = "int g_k = 3;\nvoid f(int n){ for(int i=0;i<n;i++){ g_k += i; } }\n";
        let a = parse_src(src);
        let b = parse_src(src);
        assert_eq!(a, b);
    }

    #[test]
    fn globals_and_locals_distinguished() {
        let ast = parse_src("int g;\nvoid f(){ int l; }\n");
        assert!(ast.nodes.iter().any(|n| n.kind == AstKind::GlobalVarDecl && n.text == "g"));
        assert!(ast.nodes.iter().any(|n| n.kind == AstKind::VarDecl && n.text == "l"));
    }

    #[test]
    fn typedef_name_declaration() {
        let ast = parse_src("void f(){ EVP_PKEY *k = load(); }");
        let decl = ast.nodes.iter().find(|n| n.kind == AstKind::VarDecl).unwrap();
        assert_eq!(decl.text, "k");
        let ty = ast.node(decl.children[0]);
        assert_eq!(ty.kind, AstKind::TypeName);
        assert_eq!(ty.text, "EVP_PKEY");
    }

    #[test]
    fn call_args_are_children() {
        let ast = parse_src("void f(){ hmac(key, msg, 32); }");
        let call = ast.nodes.iter().find(|n| n.kind == AstKind::Call).unwrap();
        assert_eq!(call.text, "hmac");
        assert_eq!(call.children.len(), 3);
        assert_eq!(ast.node(call.children[0]).text, "key");
    }
}
