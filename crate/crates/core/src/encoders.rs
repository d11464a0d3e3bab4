//! Output encoder registry.
//!
//! These are the character-substitution functions whose misuse the tool
//! detects and whose replacement repairs it. Each encoder neutralizes data
//! for one output context (HTML body, JavaScript string, URL, CSS value);
//! applying the wrong one, or two of them in the wrong order, is exactly
//! the bug class under test, so the tables below are part of the tool's
//! observable behavior and are pinned by tests.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Identifies one encoder in the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EncoderId {
    Html,
    HtmlDecimal,
    JavaScript,
    Url,
    Css,
    Identity,
}

impl EncoderId {
    /// The dotted call name templates use for this encoder.
    pub fn call_name(self) -> &'static str {
        match self {
            EncoderId::Html => "escapeHtml",
            EncoderId::HtmlDecimal => "escapeHtmlDecimal",
            EncoderId::JavaScript => "escapeJavaScript",
            EncoderId::Url => "escapeUrl",
            EncoderId::Css => "escapeCss",
            EncoderId::Identity => "identity",
        }
    }

    /// Reverse lookup for config files and call sites. Case-sensitive.
    pub fn from_call_name(name: &str) -> Option<Self> {
        match name {
            "escapeHtml" => Some(EncoderId::Html),
            "escapeHtmlDecimal" => Some(EncoderId::HtmlDecimal),
            "escapeJavaScript" => Some(EncoderId::JavaScript),
            "escapeUrl" => Some(EncoderId::Url),
            "escapeCss" => Some(EncoderId::Css),
            "identity" => Some(EncoderId::Identity),
            _ => None,
        }
    }
}

impl fmt::Display for EncoderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.call_name())
    }
}

/// Behavior of the JavaScript encoder. The other encoders have one table.
///
/// `Permissive` models the Apache/Spring libraries: it backslash-escapes
/// quotes and backslashes but passes `+`, `/`, parentheses and angle
/// brackets through. `Strict` models ESAPI: everything outside
/// `[A-Za-z0-9]` becomes a hex escape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderVariant {
    #[default]
    Permissive,
    Strict,
}

/// An ordered list of encoders; application order is list order.
pub type EncoderChain = Vec<EncoderId>;

/// Renders a chain the way a template would spell it, innermost call first:
/// `[Html, JavaScript]` -> `escapeJavaScript(escapeHtml(x))`.
pub fn chain_display(chain: &[EncoderId]) -> String {
    match chain {
        [] => "identity".to_string(),
        [single] => single.call_name().to_string(),
        more => {
            let mut out = String::new();
            for enc in more.iter().rev() {
                out.push_str(enc.call_name());
                out.push('(');
            }
            out.push('x');
            out.push_str(&")".repeat(more.len()));
            out
        }
    }
}

/// Applies one encoder to `input`.
pub fn encode(id: EncoderId, variant: EncoderVariant, input: &str) -> String {
    match id {
        EncoderId::Identity => input.to_string(),
        EncoderId::Html => encode_html(input),
        EncoderId::HtmlDecimal => encode_html_decimal(input),
        EncoderId::JavaScript => match variant {
            EncoderVariant::Permissive => encode_js_permissive(input),
            EncoderVariant::Strict => encode_js_strict(input),
        },
        EncoderId::Url => encode_url(input),
        EncoderId::Css => encode_css(input),
    }
}

/// Applies a chain left to right: the first element is applied first.
pub fn apply_chain(chain: &[EncoderId], variant: EncoderVariant, input: &str) -> String {
    let mut value = input.to_string();
    for &id in chain {
        value = encode(id, variant, &value);
    }
    value
}

/// The six OWASP-sanctioned repair candidates, in preference order.
///
/// Single encoders precede the double chains; list order inside a chain is
/// application order, so `[Html, JavaScript]` realizes
/// `escapeJavaScript(escapeHtml(x))`.
pub fn candidate_encoders() -> Vec<EncoderChain> {
    vec![
        vec![EncoderId::Html],
        vec![EncoderId::JavaScript],
        vec![EncoderId::Css],
        vec![EncoderId::Url],
        vec![EncoderId::Html, EncoderId::JavaScript],
        vec![EncoderId::Url, EncoderId::JavaScript],
    ]
}

fn encode_html(input: &str) -> String {
    // Apache-style table: the single quote deliberately passes through.
    let mut out = String::with_capacity(input.len());
    for c in input.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn encode_html_decimal(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    for c in input.chars() {
        match c {
            '&' => out.push_str("&#38;"),
            '<' => out.push_str("&#60;"),
            '>' => out.push_str("&#62;"),
            '"' => out.push_str("&#34;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn encode_js_permissive(input: &str) -> String {
    // Quotes and backslashes are escaped; `/`, `+`, `(`, `)`, `<`, `>` pass
    // through, which is what lets entity-encoded quote sequences and bare
    // additive expressions survive this encoder.
    let mut out = String::with_capacity(input.len());
    for c in input.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\x{:02x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out
}

fn encode_js_strict(input: &str) -> String {
    let mut out = String::with_capacity(input.len() * 2);
    for c in input.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else {
            let cp = c as u32;
            if cp < 0x100 {
                out.push_str(&format!("\\x{cp:02x}"));
            } else {
                let mut units = [0u16; 2];
                for unit in c.encode_utf16(&mut units) {
                    out.push_str(&format!("\\u{unit:04x}"));
                }
            }
        }
    }
    out
}

fn encode_url(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    for b in input.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => {
                out.push(b as char)
            }
            b => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn encode_css(input: &str) -> String {
    // CSS hex escapes are terminated by a single space so a following hex
    // digit cannot extend them.
    let mut out = String::with_capacity(input.len());
    for c in input.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else {
            out.push_str(&format!("\\{:x} ", c as u32));
        }
    }
    out
}
