use super::{Cpg, CpgEdge, CpgNode, EdgeKind, NodeKind};
use crate::frontend::{Ast, AstKind};
use std::collections::{BTreeMap, BTreeSet};

/// Build the unified property graph from a parsed translation unit.
///
/// Layers: AST edges mirror the tree; CFG edges chain statements per function
/// (branches rejoin, loops carry a back edge, returns jump to the method
/// exit); DDG edges run from each reaching definition to its uses; CDG edges
/// run from each branch/loop node to the statements its body governs; CALL
/// edges link call sites to locally defined methods.
///
/// Every AST-derived node carries the line of its first token. The synthetic
/// METHOD_RETURN exit node is left lineless on purpose.
pub fn build_cpg(ast: &Ast, source_path: &str) -> Cpg {
    let mut b = Builder {
        ast,
        nodes: Vec::with_capacity(ast.nodes.len() + 4),
        edges: Vec::new(),
        methods: BTreeMap::new(),
        method_exit: BTreeMap::new(),
    };
    b.make_nodes();
    b.assign_enclosing();
    b.resolve_identifier_types();
    b.ast_edges();
    let functions: Vec<usize> = ast
        .nodes
        .iter()
        .filter(|n| n.kind == AstKind::FunctionDef)
        .map(|n| n.id)
        .collect();
    for &f in &functions {
        b.cfg_for_function(f);
    }
    for &f in &functions {
        b.ddg_for_function(f);
    }
    for &f in &functions {
        b.cdg_for_function(f);
    }
    b.call_edges();
    Cpg { nodes: b.nodes, edges: b.edges, methods: b.methods, source_path: source_path.into() }
}

struct Builder<'a> {
    ast: &'a Ast,
    nodes: Vec<CpgNode>,
    edges: Vec<CpgEdge>,
    methods: BTreeMap<String, usize>,
    /// METHOD node id -> METHOD_RETURN node id.
    method_exit: BTreeMap<usize, usize>,
}

impl<'a> Builder<'a> {
    fn push_edge(&mut self, src: usize, dst: usize, kind: EdgeKind) {
        self.edges.push(CpgEdge { src, dst, kind });
    }

    fn make_nodes(&mut self) {
        for n in &self.ast.nodes {
            let kind = match n.kind {
                AstKind::TranslationUnit => NodeKind::Unknown,
                AstKind::FunctionDef => NodeKind::Method,
                AstKind::ParamDecl => NodeKind::MethodParameter,
                AstKind::VarDecl => NodeKind::Local,
                AstKind::GlobalVarDecl => NodeKind::Global,
                AstKind::TypeName => NodeKind::TypeDecl,
                AstKind::Block => NodeKind::Block,
                AstKind::If | AstKind::While | AstKind::For => NodeKind::ControlStructure,
                AstKind::Return => NodeKind::Return,
                AstKind::Call => NodeKind::Call,
                AstKind::Assign | AstKind::BinaryOp | AstKind::UnaryOp => NodeKind::Operator,
                AstKind::Identifier => NodeKind::Identifier,
                AstKind::Literal => NodeKind::Literal,
                AstKind::Opaque => NodeKind::Unknown,
            };
            let code = self.node_code(n.id, kind);
            let name = match kind {
                NodeKind::Method
                | NodeKind::MethodParameter
                | NodeKind::Local
                | NodeKind::Global
                | NodeKind::Call
                | NodeKind::Identifier
                | NodeKind::Operator => {
                    if n.text.is_empty() {
                        None
                    } else {
                        Some(n.text.clone())
                    }
                }
                _ => None,
            };
            let type_full_name = match n.kind {
                AstKind::ParamDecl | AstKind::VarDecl | AstKind::GlobalVarDecl => {
                    self.declared_type(n.id)
                }
                AstKind::TypeName => Some(n.text.clone()),
                _ => None,
            };
            self.nodes.push(CpgNode {
                id: n.id,
                kind,
                code,
                line: Some(n.span.0),
                type_full_name,
                name,
                enclosing_method: None,
            });
        }
        // method exit nodes, lineless by design
        let funcs: Vec<usize> = self
            .ast
            .nodes
            .iter()
            .filter(|n| n.kind == AstKind::FunctionDef)
            .map(|n| n.id)
            .collect();
        for f in funcs {
            let ret_ty = self.declared_type(f);
            let id = self.nodes.len();
            self.nodes.push(CpgNode {
                id,
                kind: NodeKind::MethodReturn,
                code: ret_ty.clone().unwrap_or_default(),
                line: None,
                type_full_name: ret_ty,
                name: None,
                enclosing_method: Some(f),
            });
            self.method_exit.insert(f, id);
            let name = self.ast.node(f).text.clone();
            self.methods.entry(name).or_insert(f);
        }
    }

    /// Declared base type of a decl-like node (first TypeName child).
    fn declared_type(&self, id: usize) -> Option<String> {
        self.ast
            .node(id)
            .children
            .iter()
            .map(|&c| self.ast.node(c))
            .find(|c| c.kind == AstKind::TypeName)
            .map(|c| c.text.clone())
            .filter(|t| !t.is_empty())
    }

    fn node_code(&self, id: usize, kind: NodeKind) -> String {
        let n = self.ast.node(id);
        match n.kind {
            AstKind::TranslationUnit | AstKind::Block => String::new(),
            AstKind::TypeName => n.text.clone(),
            AstKind::FunctionDef => {
                // signature: everything before the body block
                let body_lo = n
                    .children
                    .last()
                    .map(|&c| self.ast.node(c).token_range.0)
                    .unwrap_or(n.token_range.1);
                self.join_range(n.token_range.0, body_lo)
            }
            AstKind::If | AstKind::While | AstKind::For => {
                // header: everything before the body statement
                let body_lo = match n.kind {
                    AstKind::If | AstKind::While => n.children.get(1),
                    _ => n.children.last(),
                }
                .map(|&c| self.ast.node(c).token_range.0)
                .unwrap_or(n.token_range.1);
                self.join_range(n.token_range.0, body_lo.max(n.token_range.0))
            }
            _ => {
                let _ = kind;
                self.ast.code(id)
            }
        }
    }

    fn join_range(&self, lo: u32, hi: u32) -> String {
        crate::frontend::join_tokens(&self.ast.tokens[lo as usize..hi as usize])
    }

    fn assign_enclosing(&mut self) {
        let funcs: Vec<usize> = self
            .ast
            .nodes
            .iter()
            .filter(|n| n.kind == AstKind::FunctionDef)
            .map(|n| n.id)
            .collect();
        for f in funcs {
            let mut stack = vec![f];
            while let Some(id) = stack.pop() {
                self.nodes[id].enclosing_method = Some(f);
                stack.extend(self.ast.node(id).children.iter().copied());
            }
        }
    }

    /// Resolve declared types for identifier uses: locals and params shadow
    /// globals; unknown names stay untyped.
    fn resolve_identifier_types(&mut self) {
        let mut globals: BTreeMap<String, String> = BTreeMap::new();
        for n in &self.ast.nodes {
            if n.kind == AstKind::GlobalVarDecl && !n.text.is_empty() {
                if let Some(ty) = self.declared_type(n.id) {
                    globals.entry(n.text.clone()).or_insert(ty);
                }
            }
        }
        let funcs: Vec<usize> = self
            .ast
            .nodes
            .iter()
            .filter(|n| n.kind == AstKind::FunctionDef)
            .map(|n| n.id)
            .collect();
        for f in funcs {
            let mut scope: BTreeMap<String, String> = BTreeMap::new();
            let mut stack = vec![f];
            let mut idents: Vec<usize> = Vec::new();
            while let Some(id) = stack.pop() {
                let n = self.ast.node(id);
                match n.kind {
                    AstKind::ParamDecl | AstKind::VarDecl => {
                        if !n.text.is_empty() {
                            if let Some(ty) = self.declared_type(id) {
                                scope.entry(n.text.clone()).or_insert(ty);
                            }
                        }
                    }
                    AstKind::Identifier => idents.push(id),
                    _ => {}
                }
                stack.extend(n.children.iter().copied());
            }
            for id in idents {
                let name = &self.ast.node(id).text;
                let ty = scope.get(name).or_else(|| globals.get(name));
                if let Some(ty) = ty {
                    self.nodes[id].type_full_name = Some(ty.clone());
                }
            }
        }
    }

    fn ast_edges(&mut self) {
        for n in &self.ast.nodes {
            for &c in &n.children {
                self.edges.push(CpgEdge { src: n.id, dst: c, kind: EdgeKind::Ast });
            }
        }
    }

    // ---- control flow ----------------------------------------------------

    fn cfg_for_function(&mut self, f: usize) {
        let exit = self.method_exit[&f];
        let body = match self.ast.node(f).children.last() {
            Some(&b) if self.ast.node(b).kind == AstKind::Block => b,
            _ => return,
        };
        let flow = self.stmt_flow(body, exit);
        self.push_edge(f, flow.entry, EdgeKind::Cfg);
        for e in flow.exits {
            self.push_edge(e, exit, EdgeKind::Cfg);
        }
    }

    fn stmt_flow(&mut self, id: usize, exit: usize) -> Flow {
        let node = self.ast.node(id);
        match node.kind {
            AstKind::Block => {
                let children = node.children.clone();
                let mut prevs = vec![id];
                for c in children {
                    let f = self.stmt_flow(c, exit);
                    for &p in &prevs {
                        self.push_edge(p, f.entry, EdgeKind::Cfg);
                    }
                    prevs = f.exits;
                    if prevs.is_empty() {
                        break; // everything after a terminating statement is dead
                    }
                }
                Flow { entry: id, exits: prevs }
            }
            AstKind::If => {
                let then = node.children.get(1).copied();
                let els = node.children.get(2).copied();
                let mut exits = Vec::new();
                if let Some(t) = then {
                    let ft = self.stmt_flow(t, exit);
                    self.push_edge(id, ft.entry, EdgeKind::Cfg);
                    exits.extend(ft.exits);
                } else {
                    exits.push(id);
                }
                match els {
                    Some(e) => {
                        let fe = self.stmt_flow(e, exit);
                        self.push_edge(id, fe.entry, EdgeKind::Cfg);
                        exits.extend(fe.exits);
                    }
                    None => exits.push(id), // false branch falls through
                }
                exits.sort_unstable();
                exits.dedup();
                Flow { entry: id, exits }
            }
            AstKind::While | AstKind::For => {
                let body = match node.kind {
                    AstKind::While => node.children.get(1).copied(),
                    _ => node.children.last().copied().filter(|_| node.children.len() > 1),
                };
                if let Some(b) = body {
                    let fb = self.stmt_flow(b, exit);
                    self.push_edge(id, fb.entry, EdgeKind::Cfg);
                    for e in fb.exits {
                        self.push_edge(e, id, EdgeKind::Cfg); // back edge
                    }
                }
                Flow { entry: id, exits: vec![id] }
            }
            AstKind::Return => {
                self.push_edge(id, exit, EdgeKind::Cfg);
                Flow { entry: id, exits: vec![] }
            }
            _ => Flow { entry: id, exits: vec![id] },
        }
    }

    // ---- data dependence ---------------------------------------------------

    fn ddg_for_function(&mut self, f: usize) {
        // CFG subgraph of this function
        let exit = self.method_exit[&f];
        let in_fn = |id: usize, nodes: &[CpgNode]| nodes[id].enclosing_method == Some(f);
        let mut succs: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut stmts: BTreeSet<usize> = BTreeSet::new();
        for e in self.edges.iter().filter(|e| e.kind == EdgeKind::Cfg) {
            if in_fn(e.src, &self.nodes) && in_fn(e.dst, &self.nodes) {
                succs.entry(e.src).or_default().push(e.dst);
                stmts.insert(e.src);
                stmts.insert(e.dst);
            }
        }
        if stmts.is_empty() {
            return;
        }
        let mut preds: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&s, ds) in &succs {
            for &d in ds {
                preds.entry(d).or_default().push(s);
            }
        }

        // per-statement defs/uses
        let mut gen: BTreeMap<usize, Vec<(String, usize)>> = BTreeMap::new();
        let mut uses: BTreeMap<usize, Vec<(String, usize)>> = BTreeMap::new();
        for &s in &stmts {
            let (d, u) = self.stmt_defs_uses(s, f, exit);
            gen.insert(s, d);
            uses.insert(s, u);
        }

        type Defs = BTreeMap<String, BTreeSet<usize>>;
        let mut ins: BTreeMap<usize, Defs> = BTreeMap::new();
        let mut outs: BTreeMap<usize, Defs> = BTreeMap::new();
        for &s in &stmts {
            ins.insert(s, Defs::new());
            outs.insert(s, Defs::new());
        }
        let mut changed = true;
        while changed {
            changed = false;
            for &s in &stmts {
                let mut inset = Defs::new();
                if let Some(ps) = preds.get(&s) {
                    for p in ps {
                        for (name, defs) in &outs[p] {
                            inset.entry(name.clone()).or_default().extend(defs.iter().copied());
                        }
                    }
                }
                let mut outset = inset.clone();
                for (name, def) in &gen[&s] {
                    let entry = outset.entry(name.clone()).or_default();
                    entry.clear();
                    entry.insert(*def);
                }
                if ins[&s] != inset {
                    ins.insert(s, inset);
                    changed = true;
                }
                if outs[&s] != outset {
                    outs.insert(s, outset);
                    changed = true;
                }
            }
        }

        for &s in &stmts {
            for (name, use_node) in &uses[&s] {
                if let Some(defs) = ins[&s].get(name) {
                    for &d in defs {
                        self.push_edge(d, *use_node, EdgeKind::Ddg);
                    }
                }
            }
        }
    }

    /// Definitions and identifier uses attributed to one CFG statement.
    /// Nested statements are excluded; control headers contribute their
    /// condition (and for-loops their init/update) expressions.
    fn stmt_defs_uses(
        &self,
        stmt: usize,
        f: usize,
        exit: usize,
    ) -> (Vec<(String, usize)>, Vec<(String, usize)>) {
        if stmt == exit {
            return (vec![], vec![]);
        }
        let node = self.ast.node(stmt);
        let mut roots: Vec<usize> = Vec::new();
        match node.kind {
            AstKind::FunctionDef => {
                let mut defs = Vec::new();
                for &c in &self.ast.node(f).children {
                    let cn = self.ast.node(c);
                    if cn.kind == AstKind::ParamDecl && !cn.text.is_empty() {
                        defs.push((cn.text.clone(), c));
                    }
                }
                return (defs, vec![]);
            }
            AstKind::Block => return (vec![], vec![]),
            AstKind::If | AstKind::While => roots.extend(node.children.first().copied()),
            AstKind::For => {
                let n = node.children.len();
                if n > 1 {
                    roots.extend(node.children[..n - 1].iter().copied());
                } else {
                    roots.extend(node.children.iter().copied());
                }
            }
            _ => roots.push(stmt),
        }

        let mut defs: Vec<(String, usize)> = Vec::new();
        let mut def_targets: BTreeSet<usize> = BTreeSet::new();
        let mut idents: Vec<usize> = Vec::new();
        for r in roots {
            let mut stack = vec![r];
            while let Some(id) = stack.pop() {
                let n = self.ast.node(id);
                match n.kind {
                    AstKind::Assign => {
                        if let Some(&lhs) = n.children.first() {
                            if let Some(base) = self.base_identifier(lhs) {
                                defs.push((self.ast.node(base).text.clone(), id));
                                if n.text == "=" {
                                    // plain assignment: target is written, not read
                                    def_targets.insert(base);
                                }
                            }
                        }
                    }
                    AstKind::UnaryOp if n.text == "++" || n.text == "--" => {
                        if let Some(&op) = n.children.first() {
                            if let Some(base) = self.base_identifier(op) {
                                defs.push((self.ast.node(base).text.clone(), id));
                            }
                        }
                    }
                    AstKind::VarDecl => {
                        if !n.text.is_empty() {
                            defs.push((n.text.clone(), id));
                        }
                    }
                    AstKind::Identifier => idents.push(id),
                    _ => {}
                }
                stack.extend(n.children.iter().copied());
            }
        }
        idents.sort_unstable();
        let uses = idents
            .into_iter()
            .filter(|id| !def_targets.contains(id))
            .map(|id| (self.ast.node(id).text.clone(), id))
            .collect();
        (defs, uses)
    }

    /// Base identifier of an lvalue expression: `x`, `x[i]`, `x.f`, `*p`.
    fn base_identifier(&self, id: usize) -> Option<usize> {
        let n = self.ast.node(id);
        match n.kind {
            AstKind::Identifier => Some(id),
            AstKind::BinaryOp | AstKind::UnaryOp => {
                n.children.first().and_then(|&c| self.base_identifier(c))
            }
            _ => None,
        }
    }

    // ---- control dependence ------------------------------------------------

    fn cdg_for_function(&mut self, f: usize) {
        // statement nodes = CFG endpoints in this function
        let mut cfg_nodes: BTreeSet<usize> = BTreeSet::new();
        for e in self.edges.iter().filter(|e| e.kind == EdgeKind::Cfg) {
            if self.nodes[e.src].enclosing_method == Some(f) {
                cfg_nodes.insert(e.src);
                cfg_nodes.insert(e.dst);
            }
        }
        let controls: Vec<usize> = {
            let mut stack = vec![f];
            let mut out = Vec::new();
            while let Some(id) = stack.pop() {
                let n = self.ast.node(id);
                if matches!(n.kind, AstKind::If | AstKind::While | AstKind::For) {
                    out.push(id);
                }
                stack.extend(n.children.iter().copied());
            }
            out.sort_unstable();
            out
        };
        for c in controls {
            let n = self.ast.node(c);
            let bodies: Vec<usize> = match n.kind {
                AstKind::If => n.children.iter().skip(1).copied().collect(),
                AstKind::While => n.children.iter().skip(1).copied().collect(),
                AstKind::For => {
                    if n.children.len() > 1 {
                        vec![*n.children.last().unwrap()]
                    } else {
                        vec![]
                    }
                }
                _ => vec![],
            };
            let mut targets: Vec<usize> = Vec::new();
            for b in bodies {
                let mut stack = vec![b];
                while let Some(id) = stack.pop() {
                    if cfg_nodes.contains(&id) {
                        targets.push(id);
                    }
                    stack.extend(self.ast.node(id).children.iter().copied());
                }
            }
            targets.sort_unstable();
            targets.dedup();
            for t in targets {
                self.push_edge(c, t, EdgeKind::Cdg);
            }
        }
    }

    // ---- calls ---------------------------------------------------------------

    fn call_edges(&mut self) {
        let calls: Vec<(usize, usize)> = self
            .ast
            .nodes
            .iter()
            .filter(|n| n.kind == AstKind::Call && !n.text.is_empty())
            .filter_map(|n| self.methods.get(&n.text).map(|&m| (n.id, m)))
            .collect();
        for (c, m) in calls {
            self.push_edge(c, m, EdgeKind::Call);
        }
    }
}

struct Flow {
    entry: usize,
    exits: Vec<usize>,
}
