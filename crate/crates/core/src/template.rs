//! Parser for the mini JSP-like template language.
//!
//! A `.jspt` file interleaves raw HTML with host code in `<% ... %>`
//! scriptlets and `<%= ... %>` expression sinks. The host subset covers what
//! sink-bearing pages actually use: `String`/`boolean` declarations,
//! assignment, `if/else`, `switch/case` (no fallthrough), `out.write` /
//! `out.print` calls, string `+`, and calls. Loops and JSP directives are
//! rejected with a diagnostic.
//!
//! Brace structure may span segments (`<% if (x) { %> ... <% } %>`): HTML
//! and sink segments encountered inside an open block are absorbed into the
//! enclosing statement as `Write`s. Every node keeps its exact source bytes,
//! so concatenating node raw text reproduces the input.

use serde::Serialize;
use std::fmt;

/// 1-based line and (byte) column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SourcePos {
    pub line: u32,
    pub col: u32,
}

impl SourcePos {
    pub fn new(line: u32, col: u32) -> Self {
        debug_assert!(line >= 1 && col >= 1);
        SourcePos { line, col }
    }
}

impl fmt::Display for SourcePos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, col {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct ParseError {
    pub pos: SourcePos,
    pub message: String,
}

fn err<T>(pos: SourcePos, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { pos, message: message.into() })
}

/// Host-language expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    StrLit { value: String, pos: SourcePos },
    BoolLit { value: bool, pos: SourcePos },
    Var { name: String, pos: SourcePos },
    Call { callee: String, args: Vec<Expr>, pos: SourcePos },
    Concat { left: Box<Expr>, right: Box<Expr>, pos: SourcePos },
}

impl Expr {
    pub fn pos(&self) -> SourcePos {
        match self {
            Expr::StrLit { pos, .. }
            | Expr::BoolLit { pos, .. }
            | Expr::Var { pos, .. }
            | Expr::Call { pos, .. }
            | Expr::Concat { pos, .. } => *pos,
        }
    }
}

/// How a `Write` statement arose; sink filtering keys off this.
#[derive(Debug, Clone, PartialEq)]
pub enum WriteOrigin {
    /// Normalized HTML chunk; always a string literal.
    Html,
    /// A `<%= ... %>` expression.
    ExprSink,
    /// An explicit `out.write(...)` / `out.print(...)` call.
    WriteCall(String),
}

/// Host statement.
#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Decl { type_name: String, var: String, init: Expr, pos: SourcePos },
    Assign { var: String, value: Expr, pos: SourcePos },
    If { cond: Expr, then_arm: Vec<Stmt>, else_arm: Vec<Stmt>, pos: SourcePos },
    Switch { scrutinee: Expr, cases: Vec<(String, Vec<Stmt>)>, default_arm: Vec<Stmt>, pos: SourcePos },
    Write { value: Expr, origin: WriteOrigin, pos: SourcePos },
    /// Branch condition retained in an extracted slice; evaluates to a
    /// benign `true`. Never produced by parsing.
    CondCapture { var: String, cond: Expr, pos: SourcePos },
}

impl Stmt {
    pub fn pos(&self) -> SourcePos {
        match self {
            Stmt::Decl { pos, .. }
            | Stmt::Assign { pos, .. }
            | Stmt::If { pos, .. }
            | Stmt::Switch { pos, .. }
            | Stmt::Write { pos, .. }
            | Stmt::CondCapture { pos, .. } => *pos,
        }
    }
}

/// Surface segment kind.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    HtmlChunk { text: String },
    Scriptlet { stmts: Vec<Stmt> },
    ExprSink { expr: Expr },
}

/// One surface segment with its exact source bytes.
#[derive(Debug, Clone)]
pub struct TemplateNode {
    pub raw: String,
    pub pos: SourcePos,
    pub kind: NodeKind,
    /// True when this segment's output statement was absorbed into an
    /// enclosing block that started in an earlier scriptlet.
    pub absorbed: bool,
}

/// A parsed template. Node raw text concatenates back to the input.
#[derive(Debug, Clone)]
pub struct TemplateDoc {
    pub name: String,
    pub nodes: Vec<TemplateNode>,
    source: String,
}

impl TemplateDoc {
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Byte offset of a source position.
    pub(crate) fn offset_of(&self, pos: SourcePos) -> Option<usize> {
        let mut line = 1u32;
        let mut start = 0usize;
        if pos.line > 1 {
            for (i, b) in self.source.bytes().enumerate() {
                if b == b'\n' {
                    line += 1;
                    if line == pos.line {
                        start = i + 1;
                        break;
                    }
                }
            }
            if line != pos.line {
                return None;
            }
        }
        Some(start + pos.col as usize - 1)
    }

    /// Statements of scriptlet nodes, in document order. On a normalized
    /// document this is the whole program.
    pub fn top_level_stmts(&self) -> Vec<&Stmt> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Scriptlet { stmts } => Some(stmts),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

/// Parses template text. Every node carries the position of its first
/// character; HTML outside the markers is preserved verbatim.
pub fn parse_template(text: &str, name: &str) -> Result<TemplateDoc, ParseError> {
    let segments = segment(text)?;
    let mut nodes: Vec<TemplateNode> = Vec::with_capacity(segments.len());
    let mut stream: Vec<Spanned> = Vec::new();
    for segment in segments {
        let node_index = nodes.len();
        match segment.kind {
            SegKind::Html => {
                let value_pos = first_nonspace_pos(&segment.raw, segment.pos).unwrap_or(segment.pos);
                stream.push(Spanned {
                    tok: Tok::PendingWrite {
                        node: node_index,
                        value: Expr::StrLit { value: segment.raw.clone(), pos: value_pos },
                        origin: WriteOrigin::Html,
                        pos: value_pos,
                    },
                    pos: value_pos,
                    node: node_index,
                });
                nodes.push(TemplateNode {
                    raw: segment.raw.clone(),
                    pos: segment.pos,
                    kind: NodeKind::HtmlChunk { text: segment.raw },
                    absorbed: false,
                });
            }
            SegKind::ExprSink => {
                let mut lexer = HostLexer::new(text, segment.inner_range.clone(), segment.inner_pos);
                let toks = lexer.lex(node_index)?;
                let expr = parse_expr_only(&toks, segment.pos)?;
                stream.push(Spanned {
                    tok: Tok::PendingWrite {
                        node: node_index,
                        value: expr.clone(),
                        origin: WriteOrigin::ExprSink,
                        pos: segment.pos,
                    },
                    pos: segment.pos,
                    node: node_index,
                });
                nodes.push(TemplateNode {
                    raw: segment.raw,
                    pos: segment.pos,
                    kind: NodeKind::ExprSink { expr },
                    absorbed: false,
                });
            }
            SegKind::Scriptlet => {
                let mut lexer = HostLexer::new(text, segment.inner_range.clone(), segment.inner_pos);
                stream.extend(lexer.lex(node_index)?);
                nodes.push(TemplateNode {
                    raw: segment.raw,
                    pos: segment.pos,
                    kind: NodeKind::Scriptlet { stmts: Vec::new() },
                    absorbed: false,
                });
            }
            SegKind::Comment => {
                // JSP comments produce nothing; they still occupy lines.
                nodes.push(TemplateNode {
                    raw: segment.raw,
                    pos: segment.pos,
                    kind: NodeKind::Scriptlet { stmts: Vec::new() },
                    absorbed: false,
                });
            }
        }
    }
    let mut parser = HostParser { toks: stream, pos: 0 };
    let parsed = parser.parse_program()?;
    for (node_index, stmt) in parsed.top_level {
        if let NodeKind::Scriptlet { stmts } = &mut nodes[node_index].kind {
            stmts.push(stmt);
        }
    }
    for node_index in parsed.absorbed_nodes {
        nodes[node_index].absorbed = true;
    }
    Ok(TemplateDoc { name: name.to_string(), nodes, source: text.to_string() })
}

/// Rewrites every unabsorbed HTML chunk and expression sink into an
/// equivalent `out.write` statement, preserving order and positions.
/// Idempotent.
pub fn normalize_writes(doc: &TemplateDoc) -> TemplateDoc {
    let nodes = doc
        .nodes
        .iter()
        .map(|node| {
            if node.absorbed {
                return node.clone();
            }
            let kind = match &node.kind {
                NodeKind::HtmlChunk { text } => {
                    let pos = first_nonspace_pos(text, node.pos).unwrap_or(node.pos);
                    NodeKind::Scriptlet {
                        stmts: vec![Stmt::Write {
                            value: Expr::StrLit { value: text.clone(), pos },
                            origin: WriteOrigin::Html,
                            pos,
                        }],
                    }
                }
                NodeKind::ExprSink { expr } => NodeKind::Scriptlet {
                    stmts: vec![Stmt::Write {
                        value: expr.clone(),
                        origin: WriteOrigin::ExprSink,
                        pos: node.pos,
                    }],
                },
                scriptlet => scriptlet.clone(),
            };
            TemplateNode { kind, ..node.clone() }
        })
        .collect();
    TemplateDoc { name: doc.name.clone(), nodes, source: doc.source.clone() }
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum SegKind {
    Html,
    Scriptlet,
    ExprSink,
    Comment,
}

struct Segment {
    raw: String,
    pos: SourcePos,
    kind: SegKind,
    inner_range: std::ops::Range<usize>,
    inner_pos: SourcePos,
}

struct Cursor<'a> {
    text: &'a str,
    offset: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn pos(&self) -> SourcePos {
        SourcePos::new(self.line, self.col)
    }

    fn advance_to(&mut self, target: usize) {
        for b in self.text.as_bytes()[self.offset..target].iter() {
            if *b == b'\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        self.offset = target;
    }
}

fn segment(text: &str) -> Result<Vec<Segment>, ParseError> {
    let mut cursor = Cursor { text, offset: 0, line: 1, col: 1 };
    let mut segments = Vec::new();
    while cursor.offset < text.len() {
        match text[cursor.offset..].find("<%") {
            None => {
                let pos = cursor.pos();
                let offset = cursor.offset;
                segments.push(Segment {
                    raw: text[offset..].to_string(),
                    pos,
                    kind: SegKind::Html,
                    inner_range: offset..text.len(),
                    inner_pos: pos,
                });
                cursor.advance_to(text.len());
            }
            Some(rel) => {
                if rel > 0 {
                    let pos = cursor.pos();
                    let offset = cursor.offset;
                    let end = offset + rel;
                    segments.push(Segment {
                        raw: text[offset..end].to_string(),
                        pos,
                        kind: SegKind::Html,
                        inner_range: offset..end,
                        inner_pos: pos,
                    });
                    cursor.advance_to(end);
                }
                let marker_pos = cursor.pos();
                let marker_offset = cursor.offset;
                let after = &text[marker_offset + 2..];
                let (kind, open_len, close): (SegKind, usize, &str) = if after.starts_with('=') {
                    (SegKind::ExprSink, 3, "%>")
                } else if after.starts_with('@') {
                    return err(marker_pos, "JSP directives are not supported");
                } else if after.starts_with("--") {
                    (SegKind::Comment, 4, "--%>")
                } else {
                    (SegKind::Scriptlet, 2, "%>")
                };
                let inner_start = marker_offset + open_len;
                match text[inner_start..].find(close) {
                    None => {
                        let what = match kind {
                            SegKind::ExprSink => "expression",
                            SegKind::Comment => "comment",
                            _ => "scriptlet",
                        };
                        return err(marker_pos, format!("unterminated {what} marker"));
                    }
                    Some(close_rel) => {
                        let inner_end = inner_start + close_rel;
                        let seg_end = inner_end + close.len();
                        cursor.advance_to(inner_start);
                        let inner_pos = cursor.pos();
                        cursor.advance_to(seg_end);
                        segments.push(Segment {
                            raw: text[marker_offset..seg_end].to_string(),
                            pos: marker_pos,
                            kind,
                            inner_range: inner_start..inner_end,
                            inner_pos,
                        });
                    }
                }
            }
        }
    }
    Ok(segments)
}

fn first_nonspace_pos(text: &str, start: SourcePos) -> Option<SourcePos> {
    let mut line = start.line;
    let mut col = start.col;
    for c in text.chars() {
        if !c.is_whitespace() {
            return Some(SourcePos::new(line, col));
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += c.len_utf8() as u32;
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Host lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Tok {
    Ident(String),
    Str(String),
    Num(String),
    Punct(char),
    PendingWrite { node: usize, value: Expr, origin: WriteOrigin, pos: SourcePos },
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    pos: SourcePos,
    node: usize,
}

struct HostLexer<'a> {
    text: &'a str,
    range: std::ops::Range<usize>,
    cursor: Cursor<'a>,
}

impl<'a> HostLexer<'a> {
    fn new(text: &'a str, range: std::ops::Range<usize>, start: SourcePos) -> Self {
        let cursor = Cursor { text, offset: range.start, line: start.line, col: start.col };
        HostLexer { text, range, cursor }
    }

    fn lex(&mut self, node: usize) -> Result<Vec<Spanned>, ParseError> {
        let mut toks = Vec::new();
        let bytes = self.text.as_bytes();
        while self.cursor.offset < self.range.end {
            let c = bytes[self.cursor.offset] as char;
            let pos = self.cursor.pos();
            if c.is_whitespace() {
                self.cursor.advance_to(self.cursor.offset + 1);
            } else if c == '/' && self.peek_at(1) == Some('/') {
                let eol = self.text[self.cursor.offset..self.range.end]
                    .find('\n')
                    .map(|i| self.cursor.offset + i)
                    .unwrap_or(self.range.end);
                self.cursor.advance_to(eol);
            } else if c == '/' && self.peek_at(1) == Some('*') {
                match self.text[self.cursor.offset + 2..self.range.end].find("*/") {
                    Some(i) => self.cursor.advance_to(self.cursor.offset + 2 + i + 2),
                    None => return err(pos, "unterminated comment"),
                }
            } else if c == '"' {
                toks.push(Spanned { tok: Tok::Str(self.lex_string(pos)?), pos, node });
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = self.cursor.offset;
                let mut end = start;
                while end < self.range.end {
                    let b = bytes[end] as char;
                    if b.is_ascii_alphanumeric() || b == '_' {
                        end += 1;
                    } else {
                        break;
                    }
                }
                self.cursor.advance_to(end);
                toks.push(Spanned { tok: Tok::Ident(self.text[start..end].to_string()), pos, node });
            } else if c.is_ascii_digit() {
                let start = self.cursor.offset;
                let mut end = start;
                while end < self.range.end && (bytes[end] as char).is_ascii_digit() {
                    end += 1;
                }
                self.cursor.advance_to(end);
                toks.push(Spanned { tok: Tok::Num(self.text[start..end].to_string()), pos, node });
            } else if "=;(){}+,.:".contains(c) {
                self.cursor.advance_to(self.cursor.offset + 1);
                toks.push(Spanned { tok: Tok::Punct(c), pos, node });
            } else {
                return err(pos, format!("unexpected character {c:?} in host code"));
            }
        }
        Ok(toks)
    }

    fn peek_at(&self, ahead: usize) -> Option<char> {
        let i = self.cursor.offset + ahead;
        if i < self.range.end {
            Some(self.text.as_bytes()[i] as char)
        } else {
            None
        }
    }

    fn lex_string(&mut self, start_pos: SourcePos) -> Result<String, ParseError> {
        let bytes = self.text.as_bytes();
        let mut value = String::new();
        let mut i = self.cursor.offset + 1;
        loop {
            if i >= self.range.end {
                return err(start_pos, "unterminated string literal");
            }
            match bytes[i] as char {
                '"' => {
                    self.cursor.advance_to(i + 1);
                    return Ok(value);
                }
                '\\' => {
                    match bytes.get(i + 1).map(|b| *b as char) {
                        Some('"') => value.push('"'),
                        Some('\\') => value.push('\\'),
                        Some(other) => {
                            return err(start_pos, format!("unsupported string escape \\{other}"))
                        }
                        None => return err(start_pos, "unterminated string literal"),
                    }
                    i += 2;
                }
                '\n' => return err(start_pos, "unterminated string literal"),
                c => {
                    let mut buf = [0u8; 4];
                    let len = if (c as u32) < 0x80 {
                        value.push(c);
                        1
                    } else {
                        let ch = self.text[i..].chars().next().unwrap();
                        value.push_str(ch.encode_utf8(&mut buf));
                        ch.len_utf8()
                    };
                    i += len;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Host parser
// ---------------------------------------------------------------------------

struct ParsedProgram {
    /// (owning scriptlet node, statement)
    top_level: Vec<(usize, Stmt)>,
    absorbed_nodes: Vec<usize>,
}

struct HostParser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl HostParser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn cur_pos(&self) -> SourcePos {
        self.peek().map(|s| s.pos).unwrap_or(SourcePos::new(1, 1))
    }

    fn eat_punct(&mut self, p: char) -> bool {
        if matches!(self.peek(), Some(Spanned { tok: Tok::Punct(q), .. }) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: char) -> Result<(), ParseError> {
        let pos = self.cur_pos();
        if self.eat_punct(p) {
            Ok(())
        } else {
            err(pos, format!("expected {p:?}"))
        }
    }

    fn at_ident(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Spanned { tok: Tok::Ident(name), .. }) if name == kw)
    }

    fn parse_program(&mut self) -> Result<ParsedProgram, ParseError> {
        let mut program = ParsedProgram { top_level: Vec::new(), absorbed_nodes: Vec::new() };
        while let Some(spanned) = self.peek() {
            if let Tok::PendingWrite { .. } = spanned.tok {
                // Top-level output segment: stays a node of its own.
                self.pos += 1;
                continue;
            }
            let node = spanned.node;
            let stmt = self.parse_stmt(&mut program.absorbed_nodes)?;
            program.top_level.push((node, stmt));
        }
        Ok(program)
    }

    fn parse_stmt(&mut self, absorbed: &mut Vec<usize>) -> Result<Stmt, ParseError> {
        let spanned = match self.peek() {
            Some(s) => s.clone(),
            None => return err(SourcePos::new(1, 1), "unexpected end of input"),
        };
        let pos = spanned.pos;
        match &spanned.tok {
            Tok::PendingWrite { node, value, origin, pos } => {
                absorbed.push(*node);
                let stmt = Stmt::Write { value: value.clone(), origin: origin.clone(), pos: *pos };
                self.pos += 1;
                Ok(stmt)
            }
            Tok::Ident(name) => match name.as_str() {
                "String" | "boolean" => self.parse_decl(pos),
                "if" => self.parse_if(pos, absorbed),
                "switch" => self.parse_switch(pos, absorbed),
                "for" | "while" | "do" => err(pos, "loops are not supported"),
                _ => self.parse_assign_or_call(pos),
            },
            other => err(pos, format!("unexpected token {other:?}")),
        }
    }

    fn parse_decl(&mut self, pos: SourcePos) -> Result<Stmt, ParseError> {
        let type_name = self.ident()?;
        let var = self.ident()?;
        self.expect_punct('=')?;
        let init = self.parse_expr()?;
        self.expect_punct(';')?;
        Ok(Stmt::Decl { type_name, var, init, pos })
    }

    fn parse_if(&mut self, pos: SourcePos, absorbed: &mut Vec<usize>) -> Result<Stmt, ParseError> {
        self.pos += 1; // if
        self.expect_punct('(')?;
        let cond = self.parse_expr()?;
        self.expect_punct(')')?;
        let then_arm = self.parse_block_or_single(absorbed)?;
        let mut else_arm = Vec::new();
        if self.at_ident("else") {
            self.pos += 1;
            if self.at_ident("if") {
                let nested_pos = self.cur_pos();
                else_arm.push(self.parse_if(nested_pos, absorbed)?);
            } else {
                else_arm = self.parse_block_or_single(absorbed)?;
            }
        }
        Ok(Stmt::If { cond, then_arm, else_arm, pos })
    }

    fn parse_switch(&mut self, pos: SourcePos, absorbed: &mut Vec<usize>) -> Result<Stmt, ParseError> {
        self.pos += 1; // switch
        self.expect_punct('(')?;
        let scrutinee = self.parse_expr()?;
        self.expect_punct(')')?;
        self.expect_punct('{')?;
        let mut cases = Vec::new();
        let mut default_arm = Vec::new();
        loop {
            if self.eat_punct('}') {
                break;
            }
            if self.at_ident("case") {
                self.pos += 1;
                let label = self.case_label()?;
                self.expect_punct(':')?;
                cases.push((label, self.parse_arm(absorbed)?));
            } else if self.at_ident("default") {
                self.pos += 1;
                self.expect_punct(':')?;
                default_arm = self.parse_arm(absorbed)?;
            } else {
                return err(self.cur_pos(), "expected case, default or '}' in switch");
            }
        }
        Ok(Stmt::Switch { scrutinee, cases, default_arm, pos })
    }

    fn case_label(&mut self) -> Result<String, ParseError> {
        let pos = self.cur_pos();
        match self.peek().map(|s| s.tok.clone()) {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(format!("\"{s}\""))
            }
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(n)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(name)
            }
            _ => err(pos, "expected case label"),
        }
    }

    /// Statements of one switch arm, up to the next label. A trailing
    /// `break;` ends the arm; there is no fallthrough.
    fn parse_arm(&mut self, absorbed: &mut Vec<usize>) -> Result<Vec<Stmt>, ParseError> {
        let mut stmts = Vec::new();
        loop {
            if self.at_ident("break") {
                self.pos += 1;
                self.expect_punct(';')?;
                break;
            }
            match self.peek() {
                None => return err(SourcePos::new(1, 1), "unterminated switch"),
                Some(Spanned { tok: Tok::Punct('}'), .. }) => break,
                Some(s) if matches!(&s.tok, Tok::Ident(n) if n == "case" || n == "default") => break,
                _ => stmts.push(self.parse_stmt(absorbed)?),
            }
        }
        Ok(stmts)
    }

    fn parse_block_or_single(&mut self, absorbed: &mut Vec<usize>) -> Result<Vec<Stmt>, ParseError> {
        if self.eat_punct('{') {
            let mut stmts = Vec::new();
            loop {
                if self.eat_punct('}') {
                    return Ok(stmts);
                }
                if self.peek().is_none() {
                    return err(SourcePos::new(1, 1), "unterminated block");
                }
                stmts.push(self.parse_stmt(absorbed)?);
            }
        }
        Ok(vec![self.parse_stmt(absorbed)?])
    }

    fn parse_assign_or_call(&mut self, pos: SourcePos) -> Result<Stmt, ParseError> {
        let name = self.dotted_name()?;
        if self.eat_punct('=') {
            let value = self.parse_expr()?;
            self.expect_punct(';')?;
            return Ok(Stmt::Assign { var: name, value, pos });
        }
        if self.eat_punct('(') {
            let args = self.parse_args()?;
            self.expect_punct(';')?;
            if name == "out.write" || name == "out.print" {
                let value = args.into_iter().next().ok_or(ParseError {
                    pos,
                    message: format!("{name} requires an argument"),
                })?;
                return Ok(Stmt::Write { value, origin: WriteOrigin::WriteCall(name), pos });
            }
            return err(pos, format!("unsupported call statement {name}"));
        }
        err(pos, "expected '=' or '(' after identifier")
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        let pos = self.cur_pos();
        match self.peek().map(|s| s.tok.clone()) {
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(name)
            }
            _ => err(pos, "expected identifier"),
        }
    }

    fn dotted_name(&mut self) -> Result<String, ParseError> {
        let mut name = self.ident()?;
        while matches!(self.peek(), Some(Spanned { tok: Tok::Punct('.'), .. })) {
            self.pos += 1;
            name.push('.');
            name.push_str(&self.ident()?);
        }
        Ok(name)
    }

    fn parse_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if self.eat_punct(')') {
            return Ok(args);
        }
        loop {
            args.push(self.parse_expr()?);
            if self.eat_punct(')') {
                return Ok(args);
            }
            self.expect_punct(',')?;
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_primary()?;
        while self.eat_punct('+') {
            let right = self.parse_primary()?;
            let pos = left.pos();
            left = Expr::Concat { left: Box::new(left), right: Box::new(right), pos };
        }
        Ok(left)
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.cur_pos();
        match self.peek().map(|s| s.tok.clone()) {
            Some(Tok::Str(value)) => {
                self.pos += 1;
                Ok(Expr::StrLit { value, pos })
            }
            Some(Tok::Num(n)) => err(pos, format!("numeric literal {n} is not part of the host subset")),
            Some(Tok::Ident(name)) if name == "true" || name == "false" => {
                self.pos += 1;
                Ok(Expr::BoolLit { value: name == "true", pos })
            }
            Some(Tok::Ident(_)) => {
                let name = self.dotted_name()?;
                if self.eat_punct('(') {
                    let args = self.parse_args()?;
                    Ok(Expr::Call { callee: name, args, pos })
                } else {
                    Ok(Expr::Var { name, pos })
                }
            }
            Some(Tok::Punct('(')) => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect_punct(')')?;
                Ok(inner)
            }
            other => err(pos, format!("expected expression, found {other:?}")),
        }
    }
}

fn parse_expr_only(toks: &[Spanned], pos: SourcePos) -> Result<Expr, ParseError> {
    if toks.is_empty() {
        return err(pos, "empty expression");
    }
    let mut parser = HostParser { toks: toks.to_vec(), pos: 0 };
    let expr = parser.parse_expr()?;
    if parser.pos != parser.toks.len() {
        return err(parser.cur_pos(), "unexpected trailing tokens in expression");
    }
    Ok(expr)
}
