//! Executable model of browser context switching.
//!
//! A browser is a pipeline of interpreters: the HTML tokenizer hands
//! attribute values to the URI, CSS and JavaScript interpreters, `<script>`
//! and `<style>` bodies go to JavaScript and CSS directly, and entity or
//! percent decoding happens at specific hand-off points. `scan` walks a
//! rendered document through that pipeline and reports every payload call
//! `attack(n)` that would actually execute, together with the context it
//! executes in.
//!
//! This module stands in for a real headless browser. It deliberately shares
//! no code with the attack generator's grammar engine: the tokenizer and the
//! mini-JS parser are hand written, so cross-checking generated attacks
//! against this scanner is a meaningful test.

use serde::Serialize;

/// Where in the document a piece of text is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ParseContext {
    /// Ordinary element body text.
    HtmlBody,
    /// Value of an attribute with no special interpretation.
    TagAttr,
    /// Value of a URI-bearing attribute (src, href, ...).
    UriAttr,
    /// Value of a `style` attribute.
    StyleAttr,
    /// Body of a `<style>` element.
    StyleBlock,
    /// Value of an `on*` event-handler attribute.
    EventAttr,
    /// Body of a `<script>` element.
    ScriptBlock,
    /// Body of a `<textarea>` or `<title>` element; inert raw text.
    RawText,
}

/// One payload call the model would execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PayloadHit {
    /// Sink line number carried by the payload, from `attack(n)`.
    pub line: u32,
    /// Interpreter context the call executes in.
    pub context: ParseContext,
}

/// Result of scanning one document.
#[derive(Debug, Clone, Default)]
pub struct ExecutionReport {
    /// Executed payloads, deduplicated on (line, context).
    pub hits: Vec<PayloadHit>,
    /// Parse diagnostics: aborted script blocks, malformed tags.
    pub notes: Vec<String>,
}

/// A byte range of the input and the context it is interpreted in.
/// Produced by [`scan_traced`] for context probing and debug dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextSpan {
    pub start: usize,
    pub end: usize,
    pub context: ParseContext,
}

/// Attribute names whose values the URI interpreter sees.
const URI_HOST_ATTRS: [&str; 17] = [
    "src", "href", "codebase", "cite", "action", "background", "data", "classid", "longdesc",
    "profile", "usemap", "formaction", "icon", "manifest", "poster", "srcset", "archive",
];

/// CSS properties whose `url(...)` value can switch to the URI interpreter.
const CSS_URL_PROPS: [&str; 6] = [
    "background-image", "list-style-image", "content", "cursor", "cue-after", "cue-before",
];

/// Scans a rendered document and reports which payload calls execute.
pub fn scan(document: &str) -> ExecutionReport {
    scan_traced(document).0
}

/// Like [`scan`], also returning the context assigned to each text region.
pub fn scan_traced(document: &str) -> (ExecutionReport, Vec<ContextSpan>) {
    let mut scanner = Scanner {
        doc: document,
        bytes: document.as_bytes(),
        pos: 0,
        report: ExecutionReport::default(),
        seen: Vec::new(),
        spans: Vec::new(),
    };
    scanner.run();
    (scanner.report, scanner.spans)
}

/// Looks up the context covering byte `pos` in a trace. Positions outside
/// any recorded span are tag markup.
pub fn context_at(spans: &[ContextSpan], pos: usize) -> Option<ParseContext> {
    spans.iter().find(|s| s.start <= pos && pos < s.end).map(|s| s.context)
}

struct Scanner<'a> {
    doc: &'a str,
    bytes: &'a [u8],
    pos: usize,
    report: ExecutionReport,
    seen: Vec<PayloadHit>,
    spans: Vec<ContextSpan>,
}

#[derive(Debug)]
struct Attr {
    name: String,
    value: String,
    value_start: usize,
    value_end: usize,
}

impl<'a> Scanner<'a> {
    fn run(&mut self) {
        while self.pos < self.bytes.len() {
            let text_start = self.pos;
            let lt = match find_byte(self.bytes, b'<', self.pos) {
                Some(i) => i,
                None => {
                    self.span(text_start, self.bytes.len(), ParseContext::HtmlBody);
                    break;
                }
            };
            self.span(text_start, lt, ParseContext::HtmlBody);
            self.pos = lt;
            let next = self.bytes.get(lt + 1).copied();
            match next {
                Some(c) if c.is_ascii_alphabetic() => self.open_tag(lt),
                Some(b'/') => self.close_tag(lt),
                Some(b'!') | Some(b'?') => {
                    // Comment or doctype-ish markup; skip to the next `>`.
                    match find_byte(self.bytes, b'>', lt + 1) {
                        Some(gt) => self.pos = gt + 1,
                        None => self.pos = self.bytes.len(),
                    }
                }
                _ => {
                    // Bare `<` in text.
                    self.span(lt, lt + 1, ParseContext::HtmlBody);
                    self.pos = lt + 1;
                }
            }
        }
    }

    fn open_tag(&mut self, lt: usize) {
        let mut i = lt + 1;
        let name_start = i;
        while i < self.bytes.len() && (self.bytes[i].is_ascii_alphanumeric() || self.bytes[i] == b'-') {
            i += 1;
        }
        let name = self.doc[name_start..i].to_ascii_lowercase();
        let mut attrs = Vec::new();
        let mut self_closing = false;
        loop {
            while i < self.bytes.len() && self.bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            match self.bytes.get(i) {
                None => {
                    self.report.notes.push(format!("unterminated tag <{name}"));
                    self.pos = self.bytes.len();
                    return;
                }
                Some(b'>') => {
                    i += 1;
                    break;
                }
                Some(b'/') => {
                    self_closing = true;
                    i += 1;
                }
                _ => {
                    let attr_start = i;
                    while i < self.bytes.len() && !self.bytes[i].is_ascii_whitespace()
                        && !matches!(self.bytes[i], b'=' | b'>' | b'/')
                    {
                        i += 1;
                    }
                    if i == attr_start {
                        // Stray punctuation inside the tag.
                        i += 1;
                        continue;
                    }
                    let attr_name = self.doc[attr_start..i].to_ascii_lowercase();
                    while i < self.bytes.len() && self.bytes[i].is_ascii_whitespace() {
                        i += 1;
                    }
                    if self.bytes.get(i) == Some(&b'=') {
                        i += 1;
                        while i < self.bytes.len() && self.bytes[i].is_ascii_whitespace() {
                            i += 1;
                        }
                        let (value, vstart, vend) = match self.bytes.get(i) {
                            Some(&q @ (b'\'' | b'"')) => {
                                let vstart = i + 1;
                                match find_byte(self.bytes, q, vstart) {
                                    Some(endq) => {
                                        i = endq + 1;
                                        (self.doc[vstart..endq].to_string(), vstart, endq)
                                    }
                                    None => {
                                        self.report.notes.push(format!(
                                            "unterminated attribute value for {attr_name}"
                                        ));
                                        self.pos = self.bytes.len();
                                        return;
                                    }
                                }
                            }
                            _ => {
                                let vstart = i;
                                while i < self.bytes.len() && !self.bytes[i].is_ascii_whitespace()
                                    && self.bytes[i] != b'>'
                                {
                                    i += 1;
                                }
                                (self.doc[vstart..i].to_string(), vstart, i)
                            }
                        };
                        attrs.push(Attr { name: attr_name, value, value_start: vstart, value_end: vend });
                    } else {
                        attrs.push(Attr {
                            name: attr_name,
                            value: String::new(),
                            value_start: i,
                            value_end: i,
                        });
                    }
                }
            }
        }
        self.pos = i;
        self.dispatch_attrs(&attrs);
        if !self_closing {
            match name.as_str() {
                "script" => self.raw_text_body(&name, RawBody::Script),
                "style" => self.raw_text_body(&name, RawBody::Style),
                "textarea" | "title" => self.raw_text_body(&name, RawBody::Inert),
                _ => {}
            }
        }
    }

    fn dispatch_attrs(&mut self, attrs: &[Attr]) {
        for attr in attrs {
            if URI_HOST_ATTRS.contains(&attr.name.as_str()) {
                self.span(attr.value_start, attr.value_end, ParseContext::UriAttr);
                let decoded = decode_entities(&attr.value);
                if let Some(body) = javascript_scheme_body(&decoded) {
                    self.js(&percent_decode(body), ParseContext::UriAttr);
                }
            } else if attr.name == "style" {
                self.span(attr.value_start, attr.value_end, ParseContext::StyleAttr);
                let decoded = decode_entities(&attr.value);
                self.css(&decoded, ParseContext::StyleAttr);
            } else if attr.name.len() > 2 && attr.name.starts_with("on") {
                self.span(attr.value_start, attr.value_end, ParseContext::EventAttr);
                // Every handler body counts as triggered.
                let decoded = decode_entities(&attr.value);
                self.js(&decoded, ParseContext::EventAttr);
            } else {
                self.span(attr.value_start, attr.value_end, ParseContext::TagAttr);
            }
        }
    }

    fn raw_text_body(&mut self, name: &str, kind: RawBody) {
        let close = format!("</{name}");
        let body_start = self.pos;
        let lower = self.doc.to_ascii_lowercase();
        match lower[body_start..].find(&close) {
            Some(rel) => {
                let body_end = body_start + rel;
                let body = &self.doc[body_start..body_end];
                match kind {
                    RawBody::Script => {
                        self.span(body_start, body_end, ParseContext::ScriptBlock);
                        self.js(body, ParseContext::ScriptBlock);
                    }
                    RawBody::Style => {
                        self.span(body_start, body_end, ParseContext::StyleBlock);
                        // Entities are not decoded inside style blocks.
                        self.css(body, ParseContext::StyleBlock);
                    }
                    RawBody::Inert => self.span(body_start, body_end, ParseContext::RawText),
                }
                // Skip past the close tag's `>`.
                let after = body_end + close.len();
                self.pos = match find_byte(self.bytes, b'>', after) {
                    Some(gt) => gt + 1,
                    None => self.bytes.len(),
                };
            }
            None => {
                // Never closed: the element swallows the rest of the
                // document and nothing in it executes.
                let ctx = match kind {
                    RawBody::Script => {
                        self.report.notes.push(format!("<{name}> block never closed; aborted"));
                        ParseContext::ScriptBlock
                    }
                    RawBody::Style => ParseContext::StyleBlock,
                    RawBody::Inert => ParseContext::RawText,
                };
                self.span(body_start, self.bytes.len(), ctx);
                self.pos = self.bytes.len();
            }
        }
    }

    fn close_tag(&mut self, lt: usize) {
        match find_byte(self.bytes, b'>', lt) {
            Some(gt) => self.pos = gt + 1,
            None => {
                self.report.notes.push("unterminated close tag".to_string());
                self.pos = self.bytes.len();
            }
        }
    }

    fn css(&mut self, text: &str, ctx: ParseContext) {
        for (prop, value) in css_declarations(text) {
            if CSS_URL_PROPS.contains(&prop.as_str()) {
                if let Some(uri) = css_url_argument(&value) {
                    if let Some(body) = javascript_scheme_body(&uri) {
                        self.js(&percent_decode(body), ctx);
                    }
                }
            }
        }
    }

    fn js(&mut self, code: &str, ctx: ParseContext) {
        let (hits, notes) = js_executes(code, ctx);
        for hit in hits {
            if !self.seen.contains(&hit) {
                self.seen.push(hit);
                self.report.hits.push(hit);
            }
        }
        self.report.notes.extend(notes);
    }

    fn span(&mut self, start: usize, end: usize, context: ParseContext) {
        if end > start {
            self.spans.push(ContextSpan { start, end, context });
        }
    }
}

enum RawBody {
    Script,
    Style,
    Inert,
}

fn find_byte(haystack: &[u8], needle: u8, from: usize) -> Option<usize> {
    haystack[from..].iter().position(|&b| b == needle).map(|i| from + i)
}

/// Strips ASCII whitespace and control characters, then checks for the
/// `javascript:` scheme case-insensitively. Returns the URI body after the
/// scheme. Browsers tolerate embedded whitespace here, and attackers use it.
fn javascript_scheme_body(uri: &str) -> Option<&str> {
    let cleaned: String = uri.chars().filter(|c| !c.is_ascii_whitespace() && !c.is_ascii_control()).collect();
    let lower = cleaned.to_ascii_lowercase();
    if !lower.starts_with("javascript:") {
        return None;
    }
    // Re-locate the colon in the original string so the returned slice
    // borrows from the caller's data.
    let colon = uri.find(':')?;
    Some(&uri[colon + 1..])
}

/// Splits CSS text into (property, value) pairs on top-level semicolons.
/// Quoted strings and parentheses shield their contents.
fn css_declarations(text: &str) -> Vec<(String, String)> {
    let mut decls = Vec::new();
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let cut = |s: usize, e: usize, decls: &mut Vec<(String, String)>| {
        let decl = &text[s..e];
        if let Some(colon) = decl.find(':') {
            let prop = decl[..colon].trim().to_ascii_lowercase();
            let value = decl[colon + 1..].trim().to_string();
            if !prop.is_empty() {
                decls.push((prop, value));
            }
        }
    };
    for &(i, c) in &chars {
        match quote {
            Some(q) => {
                if c == q {
                    quote = None;
                }
            }
            None => match c {
                '\'' | '"' => quote = Some(c),
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                ';' if depth == 0 => {
                    cut(start, i, &mut decls);
                    start = i + c.len_utf8();
                }
                _ => {}
            },
        }
    }
    cut(start, text.len(), &mut decls);
    decls
}

/// Extracts the argument of a `url(...)` CSS value, stripping one layer of
/// matching quotes.
fn css_url_argument(value: &str) -> Option<String> {
    let lower = value.to_ascii_lowercase();
    if !lower.starts_with("url(") {
        return None;
    }
    let close = value.rfind(')')?;
    let inner = value[4..close].trim();
    let inner = match (inner.chars().next(), inner.chars().last()) {
        (Some('\''), Some('\'')) if inner.len() >= 2 => &inner[1..inner.len() - 1],
        (Some('"'), Some('"')) if inner.len() >= 2 => &inner[1..inner.len() - 1],
        _ => inner,
    };
    Some(inner.to_string())
}

/// Decodes the named references amp/lt/gt/quot/apos (semicolon required) and
/// numeric references `&#D;` / `&#xH;` (semicolon optional). Unknown
/// references stay verbatim.
pub fn decode_entities(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'&' {
            let ch_len = utf8_len(bytes[i]);
            out.push_str(&text[i..i + ch_len]);
            i += ch_len;
            continue;
        }
        let rest = &text[i..];
        let mut matched = false;
        for (name, ch) in [("&amp;", '&'), ("&lt;", '<'), ("&gt;", '>'), ("&quot;", '"'), ("&apos;", '\'')] {
            if rest.starts_with(name) {
                out.push(ch);
                i += name.len();
                matched = true;
                break;
            }
        }
        if matched {
            continue;
        }
        if rest.len() > 2 && rest.as_bytes()[1] == b'#' {
            let (digits_start, radix) = if matches!(rest.as_bytes().get(2), Some(b'x') | Some(b'X')) {
                (3, 16)
            } else {
                (2, 10)
            };
            let digits: String = rest[digits_start..]
                .chars()
                .take_while(|c| c.is_digit(radix))
                .collect();
            if !digits.is_empty() && digits.len() <= 6 {
                if let Some(ch) = u32::from_str_radix(&digits, radix).ok().and_then(char::from_u32) {
                    out.push(ch);
                    i += digits_start + digits.len();
                    if bytes.get(i) == Some(&b';') {
                        i += 1;
                    }
                    continue;
                }
            }
        }
        out.push('&');
        i += 1;
    }
    out
}

fn utf8_len(first: u8) -> usize {
    match first {
        b if b < 0x80 => 1,
        b if b >= 0xF0 => 4,
        b if b >= 0xE0 => 3,
        _ => 2,
    }
}

/// Decodes `%HH` sequences; invalid sequences stay verbatim.
pub(crate) fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() + 1 {
            if let (Some(h), Some(l)) = (
                bytes.get(i + 1).and_then(|b| (*b as char).to_digit(16)),
                bytes.get(i + 2).and_then(|b| (*b as char).to_digit(16)),
            ) {
                out.push((h * 16 + l) as u8);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// Undoes the mini-JS string escapes. `None` means the text is not a valid
/// escape sequence stream, i.e. it would break a JS string literal.
pub(crate) fn js_string_unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\'' => out.push('\''),
            '"' => out.push('"'),
            '\\' => out.push('\\'),
            '/' => out.push('/'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            't' => out.push('\t'),
            'x' => {
                let h = chars.next()?.to_digit(16)?;
                let l = chars.next()?.to_digit(16)?;
                out.push(char::from_u32(h * 16 + l)?);
            }
            'u' => {
                let mut cp = 0u32;
                for _ in 0..4 {
                    cp = cp * 16 + chars.next()?.to_digit(16)?;
                }
                out.push(char::from_u32(cp)?);
            }
            _ => return None,
        }
    }
    Some(out)
}

/// Undoes CSS hex escapes (`\HH `, up to six digits, one optional trailing
/// whitespace consumed). `None` on a dangling backslash.
pub(crate) fn css_unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        let mut digits = String::new();
        while digits.len() < 6 {
            match chars.peek() {
                Some(d) if d.is_ascii_hexdigit() => {
                    digits.push(*d);
                    chars.next();
                }
                _ => break,
            }
        }
        if digits.is_empty() {
            // Identity escape of the next character.
            out.push(chars.next()?);
        } else {
            out.push(char::from_u32(u32::from_str_radix(&digits, 16).ok()?)?);
            if chars.peek().is_some_and(|c| c.is_ascii_whitespace()) {
                chars.next();
            }
        }
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Mini JavaScript
// ---------------------------------------------------------------------------

/// Parses `code` with the mini-JS grammar and returns a hit for every call to
/// the bare identifier `attack` with a single integer argument in executable
/// position. Occurrences inside string literals or comments do not count, and
/// a syntax error anywhere means the whole block executes nothing.
pub fn js_executes(code: &str, context: ParseContext) -> (Vec<PayloadHit>, Vec<String>) {
    let tokens = match js_lex(code) {
        Ok(t) => t,
        Err(e) => return (Vec::new(), vec![format!("js syntax error: {e}")]),
    };
    let mut parser = JsParser { tokens, pos: 0, hits: Vec::new(), context };
    match parser.program() {
        Ok(()) => (parser.hits, Vec::new()),
        Err(e) => (Vec::new(), vec![format!("js syntax error: {e}")]),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum JsTok {
    Ident(String),
    Num(u64),
    Str(String),
    Punct(&'static str),
}

fn js_lex(code: &str) -> Result<Vec<JsTok>, String> {
    let mut toks = Vec::new();
    let chars: Vec<char> = code.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            loop {
                if i + 1 >= chars.len() {
                    return Err("unterminated comment".to_string());
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
        } else if c == '\'' || c == '"' {
            let quote = c;
            i += 1;
            let mut value = String::new();
            loop {
                match chars.get(i) {
                    None => return Err("unterminated string".to_string()),
                    Some(&ch) if ch == quote => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        i += 1;
                        match chars.get(i) {
                            Some('\'') => value.push('\''),
                            Some('"') => value.push('"'),
                            Some('\\') => value.push('\\'),
                            Some('/') => value.push('/'),
                            Some('x') => {
                                let h = hex_at(&chars, i + 1, 2)?;
                                value.push(char::from_u32(h).ok_or("bad \\x escape")?);
                                i += 2;
                            }
                            Some('u') => {
                                let h = hex_at(&chars, i + 1, 4)?;
                                value.push(char::from_u32(h).unwrap_or('\u{fffd}'));
                                i += 4;
                            }
                            Some(other) => return Err(format!("invalid string escape \\{other}")),
                            None => return Err("unterminated string".to_string()),
                        }
                        i += 1;
                    }
                    Some(&ch) => {
                        value.push(ch);
                        i += 1;
                    }
                }
            }
            toks.push(JsTok::Str(value));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            toks.push(JsTok::Num(text.parse().map_err(|_| "number overflow".to_string())?));
        } else if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                i += 1;
            }
            toks.push(JsTok::Ident(chars[start..i].iter().collect()));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let punct = match two.as_str() {
                "==" | "!=" => {
                    i += 2;
                    if two == "==" { "==" } else { "!=" }
                }
                _ => {
                    i += 1;
                    match c {
                        '+' => "+",
                        '*' => "*",
                        '(' => "(",
                        ')' => ")",
                        '{' => "{",
                        '}' => "}",
                        ';' => ";",
                        ',' => ",",
                        '.' => ".",
                        '=' => "=",
                        other => return Err(format!("unexpected character {other:?}")),
                    }
                }
            };
            toks.push(JsTok::Punct(punct));
        }
    }
    Ok(toks)
}

fn hex_at(chars: &[char], start: usize, len: usize) -> Result<u32, String> {
    let mut v = 0u32;
    for k in 0..len {
        let d = chars
            .get(start + k)
            .and_then(|c| c.to_digit(16))
            .ok_or("bad hex escape")?;
        v = v * 16 + d;
    }
    Ok(v)
}

struct JsParser {
    tokens: Vec<JsTok>,
    pos: usize,
    hits: Vec<PayloadHit>,
    context: ParseContext,
}

impl JsParser {
    fn peek(&self) -> Option<&JsTok> {
        self.tokens.get(self.pos)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Some(JsTok::Punct(q)) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), String> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(format!("expected {p:?}"))
        }
    }

    fn at_ident(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(JsTok::Ident(name)) if name == kw)
    }

    fn program(&mut self) -> Result<(), String> {
        while self.peek().is_some() {
            self.statement()?;
        }
        Ok(())
    }

    fn statement(&mut self) -> Result<(), String> {
        if self.eat_punct(";") {
            return Ok(());
        }
        if self.eat_punct("{") {
            while !self.eat_punct("}") {
                if self.peek().is_none() {
                    return Err("unterminated block".to_string());
                }
                self.statement()?;
            }
            return Ok(());
        }
        if self.at_ident("var") {
            self.pos += 1;
            loop {
                match self.peek() {
                    Some(JsTok::Ident(_)) => self.pos += 1,
                    _ => return Err("expected identifier after var".to_string()),
                }
                if self.eat_punct("=") {
                    self.expression()?;
                }
                if !self.eat_punct(",") {
                    break;
                }
            }
            return self.end_statement();
        }
        if self.at_ident("if") {
            self.pos += 1;
            self.expect_punct("(")?;
            self.expression()?;
            self.expect_punct(")")?;
            self.statement()?;
            if self.at_ident("else") {
                self.pos += 1;
                self.statement()?;
            }
            return Ok(());
        }
        self.expression()?;
        self.end_statement()
    }

    fn end_statement(&mut self) -> Result<(), String> {
        if self.eat_punct(";") {
            return Ok(());
        }
        match self.peek() {
            None => Ok(()),
            Some(JsTok::Punct("}")) => Ok(()),
            Some(t) => Err(format!("expected ; before {t:?}")),
        }
    }

    fn expression(&mut self) -> Result<(), String> {
        self.additive()?;
        while self.eat_punct("==") || self.eat_punct("!=") {
            self.additive()?;
        }
        Ok(())
    }

    fn additive(&mut self) -> Result<(), String> {
        self.multiplicative()?;
        while self.eat_punct("+") {
            self.multiplicative()?;
        }
        Ok(())
    }

    fn multiplicative(&mut self) -> Result<(), String> {
        self.postfix()?;
        while self.eat_punct("*") {
            self.postfix()?;
        }
        Ok(())
    }

    fn postfix(&mut self) -> Result<(), String> {
        let primary_ident = match self.peek() {
            Some(JsTok::Ident(name)) => Some(name.clone()),
            _ => None,
        };
        self.primary()?;
        let mut bare = primary_ident;
        loop {
            if self.eat_punct(".") {
                match self.peek() {
                    Some(JsTok::Ident(_)) => self.pos += 1,
                    _ => return Err("expected member name".to_string()),
                }
                bare = None;
            } else if self.eat_punct("(") {
                // Track which arguments are plain integer literals; a call
                // `attack(n)` with exactly one such argument is a payload.
                let mut arg_ints: Vec<Option<u64>> = Vec::new();
                if !self.eat_punct(")") {
                    loop {
                        if let Some(JsTok::Num(n)) = self.peek() {
                            let n = *n;
                            let save = self.pos;
                            self.pos += 1;
                            if matches!(self.peek(), Some(JsTok::Punct(")")) | Some(JsTok::Punct(","))) {
                                arg_ints.push(Some(n));
                            } else {
                                self.pos = save;
                                self.expression()?;
                                arg_ints.push(None);
                            }
                        } else {
                            self.expression()?;
                            arg_ints.push(None);
                        }
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                    self.expect_punct(")")?;
                }
                if bare.as_deref() == Some("attack") && arg_ints.len() == 1 {
                    if let Some(line) = arg_ints[0] {
                        self.hits.push(PayloadHit { line: line as u32, context: self.context });
                    }
                }
                bare = None;
            } else {
                break;
            }
        }
        Ok(())
    }

    fn primary(&mut self) -> Result<(), String> {
        match self.peek() {
            Some(JsTok::Ident(name)) if name == "var" || name == "if" || name == "else" => {
                Err(format!("unexpected keyword {name}"))
            }
            Some(JsTok::Ident(_)) | Some(JsTok::Num(_)) | Some(JsTok::Str(_)) => {
                self.pos += 1;
                Ok(())
            }
            Some(JsTok::Punct("(")) => {
                self.pos += 1;
                self.expression()?;
                self.expect_punct(")")
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}
