//! Automatic repair by candidate-encoder replacement.
//!
//! A confirmed vulnerability is classified by the shape of its tainted
//! flows, candidate replacements are enumerated in preference order (single
//! encoders before double chains), and each plan is verified by patching the
//! template text, re-parsing it, and re-running full detection. The first
//! verified plan wins. When no candidate verifies the fix is deferred with a
//! reason.
//!
//! Two guards keep the search honest. Sinks feeding an eval-style API
//! (`setInterval` and friends) are deferred outright: their argument is
//! executed as code, so no encoder can help, even when a blanket encoder
//! would happen to smother every corpus attack. And a candidate is only
//! tried when it preserves ordinary benign text (letters, digits, spaces)
//! under the decoding pipeline of the contexts its sinks render in;
//! without that check the all-escaping CSS/URL encoders would "verify" in
//! any JavaScript context by reducing benign pages to escape soup, which is
//! exactly the over-encoding the candidate list is meant to avoid.

use crate::attacks::AttackString;
use crate::browser::{self, ParseContext};
use crate::config::ToolConfig;
use crate::encoders::{self, candidate_encoders, EncoderChain, EncoderId, EncoderVariant};
use crate::harness::{self, detect, Finding};
use crate::taint::{extract_unit_tests, XssUnitTest};
use crate::template::{normalize_writes, parse_template, ParseError, SourcePos, TemplateDoc};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// Structural shape of the vulnerability being repaired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scenario {
    /// One tainted flow, one or two encoder sites.
    SingleVar,
    /// Several flows with disjoint encoder sites and sinks.
    IndependentFlows,
    /// Several variables concatenated into one sink.
    MultiVarSingleSink,
    /// One encoder site feeding several sinks.
    SharedEncoderMultiSink,
    /// A shared encoder plus a private downstream encoder at one sink.
    SharedPlusExtraEncoder,
    /// An encoder site appearing in flows of more than one unit test.
    CrossUnitShared,
}

/// Why a repair was deferred to the developer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DeferReason {
    /// One value renders in two incompatible contexts; fixing it needs a new
    /// variable, i.e. a structural change.
    MultiContextSink,
    /// The unit tests sharing the encoder demand different replacements.
    ConflictAcrossUnits,
    /// The sink feeds an API that executes its argument.
    UnsafeSink,
    /// More than two encoders in sequence; replacement would over-encode.
    ChainTooLong,
    /// Every admissible candidate failed verification.
    ExhaustedCandidates,
}

/// A concrete replacement: encoder call site -> chain to install there.
#[derive(Debug, Clone)]
pub struct RepairPlan {
    pub replacements: BTreeMap<SourcePos, EncoderChain>,
    pub scenario: Scenario,
    /// Candidates evaluated (verified) before this plan.
    pub tried_rank: usize,
    /// True for plans beyond the candidate list proper (a two-site chain
    /// collapsed onto one site); disabled in strict-paper mode.
    pub extension: bool,
}

#[derive(Debug)]
pub enum RepairResult {
    Fixed { plan: RepairPlan, patched: String },
    Unrepairable { reason: DeferReason },
}

#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error("nothing to repair: detection reported no findings")]
    NothingToRepair,
    #[error("no encoder call at {0}")]
    SiteNotFound(SourcePos),
    #[error("patched template failed to parse: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}

/// Benign probe for the over-encoding check: letters, digits and spaces must
/// survive a sink's decode pipeline. Spaces are what separate the blanket
/// encoders (CSS, URL) from the context-preserving ones.
const COMPAT_PROBE: &str = "benign text 42";

/// True when `chain`-encoded ordinary text decodes back to itself in the
/// given context.
pub fn chain_fits_context(chain: &[EncoderId], context: ParseContext, variant: EncoderVariant) -> bool {
    let encoded = encoders::apply_chain(chain, variant, COMPAT_PROBE);
    decode_for_context(&encoded, context).as_deref() == Some(COMPAT_PROBE)
}

fn decode_for_context(text: &str, context: ParseContext) -> Option<String> {
    match context {
        ParseContext::HtmlBody | ParseContext::TagAttr | ParseContext::RawText => {
            Some(browser::decode_entities(text))
        }
        ParseContext::EventAttr => browser::js_string_unescape(&browser::decode_entities(text)),
        ParseContext::ScriptBlock => browser::js_string_unescape(text),
        ParseContext::UriAttr => Some(browser::percent_decode(&browser::decode_entities(text))),
        ParseContext::StyleAttr => browser::css_unescape(&browser::decode_entities(text)),
        ParseContext::StyleBlock => browser::css_unescape(text),
    }
}

fn context_family(context: ParseContext) -> u8 {
    match context {
        ParseContext::HtmlBody | ParseContext::TagAttr | ParseContext::RawText => 0,
        ParseContext::EventAttr | ParseContext::ScriptBlock => 1,
        ParseContext::UriAttr => 2,
        ParseContext::StyleAttr | ParseContext::StyleBlock => 3,
    }
}

/// A flow under repair, with everything the search needs precomputed.
#[derive(Debug, Clone)]
struct RepairFlow {
    unit: usize,
    sink_line: u32,
    variable: String,
    /// Encoder sites in application order (deduplicated).
    sites: Vec<SourcePos>,
    /// (site, encoder) pairs in application order, duplicates kept.
    site_encoders: Vec<(SourcePos, EncoderId)>,
    contexts: Vec<ParseContext>,
    vulnerable: bool,
}

/// Classifies the vulnerability shape. All flows participate, not only the
/// vulnerable ones: a replacement at a shared site must keep the currently
/// safe sinks safe.
pub fn classify(findings: &[Finding], tests: &[XssUnitTest]) -> Scenario {
    let mut site_units: BTreeMap<SourcePos, BTreeSet<usize>> = BTreeMap::new();
    let mut site_sinks: BTreeMap<SourcePos, BTreeSet<(u32, u32)>> = BTreeMap::new();
    let mut sink_flows: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut flow_count = 0usize;
    for (unit_index, unit) in tests.iter().enumerate() {
        for flow in &unit.flows {
            flow_count += 1;
            let sink = (flow.sink.pos.line, flow.sink.pos.col);
            *sink_flows.entry(sink).or_insert(0) += 1;
            for (_, pos) in &flow.encoders {
                site_units.entry(*pos).or_default().insert(unit_index);
                site_sinks.entry(*pos).or_default().insert(sink);
            }
        }
    }
    let _ = findings;
    if site_units.values().any(|units| units.len() > 1) {
        return Scenario::CrossUnitShared;
    }
    let shared_sites: Vec<SourcePos> = site_sinks
        .iter()
        .filter(|(_, sinks)| sinks.len() > 1)
        .map(|(pos, _)| *pos)
        .collect();
    if let Some(shared) = shared_sites.first() {
        // A private downstream encoder at one of the dependent sinks makes
        // this the shared-plus-extra shape.
        let has_extra = tests.iter().flat_map(|t| &t.flows).any(|flow| {
            let sites: Vec<SourcePos> = flow.encoders.iter().map(|(_, p)| *p).collect();
            sites.contains(shared) && sites.iter().any(|s| s != shared)
        });
        if has_extra {
            return Scenario::SharedPlusExtraEncoder;
        }
        return Scenario::SharedEncoderMultiSink;
    }
    if sink_flows.values().any(|n| *n > 1) {
        return Scenario::MultiVarSingleSink;
    }
    if flow_count > 1 {
        return Scenario::IndependentFlows;
    }
    Scenario::SingleVar
}

/// Verifies one plan: apply the replacements to the template text, re-parse,
/// run full detection. True iff no findings and no unencoded flows remain.
pub fn verify_plan(
    doc: &TemplateDoc,
    plan: &RepairPlan,
    config: &ToolConfig,
    corpus: &[AttackString],
    variant: EncoderVariant,
) -> bool {
    verify_replacements(doc, &plan.replacements, config, corpus, variant, None).unwrap_or(false)
}

fn verify_replacements(
    doc: &TemplateDoc,
    replacements: &BTreeMap<SourcePos, EncoderChain>,
    config: &ToolConfig,
    corpus: &[AttackString],
    variant: EncoderVariant,
    scope: Option<(u32, &str)>,
) -> Result<bool, RepairError> {
    let patched = apply_replacements(doc, replacements)?;
    let patched_doc = parse_template(&patched, &doc.name)?;
    let report = detect(&patched_doc, &config.analysis, corpus, variant)?;
    Ok(match scope {
        None => report.is_clean(),
        Some((line, var)) => {
            let dynamic_clean = !report
                .findings
                .iter()
                .any(|f| f.sink_line == line && f.focus_variable == var);
            let static_clean = !report
                .static_findings
                .iter()
                .any(|f| f.sink.pos.line == line && f.variable_chain.first().map(String::as_str) == Some(var));
            dynamic_clean && static_clean
        }
    })
}

/// Rewrites only the encoder call names at the planned sites; a two-element
/// chain wraps the original call in a nested one. All other bytes, including
/// whitespace and line structure, are unchanged.
pub fn emit_patch(doc: &TemplateDoc, plan: &RepairPlan) -> Result<String, RepairError> {
    apply_replacements(doc, &plan.replacements)
}

fn apply_replacements(
    doc: &TemplateDoc,
    replacements: &BTreeMap<SourcePos, EncoderChain>,
) -> Result<String, RepairError> {
    let source = doc.source();
    let bytes = source.as_bytes();
    // (start, end, replacement text)
    let mut edits: Vec<(usize, usize, String)> = Vec::new();
    for (&pos, chain) in replacements {
        let start = doc.offset_of(pos).ok_or(RepairError::SiteNotFound(pos))?;
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        let name = &source[start..end];
        if EncoderId::from_call_name(name).is_none() {
            return Err(RepairError::SiteNotFound(pos));
        }
        match chain.as_slice() {
            [] => edits.push((start, end, EncoderId::Identity.call_name().to_string())),
            [single] => edits.push((start, end, single.call_name().to_string())),
            [first, second] => {
                let close = matching_close_paren(source, end).ok_or(RepairError::SiteNotFound(pos))?;
                edits.push((start, end, format!("{}({}", second.call_name(), first.call_name())));
                edits.push((close + 1, close + 1, ")".to_string()));
            }
            _ => return Err(RepairError::SiteNotFound(pos)),
        }
    }
    edits.sort_by(|a, b| b.0.cmp(&a.0));
    let mut patched = source.to_string();
    for (start, end, text) in edits {
        patched.replace_range(start..end, &text);
    }
    Ok(patched)
}

/// Finds the `)` closing the call whose name ends at `after_name`, skipping
/// string literals.
fn matching_close_paren(source: &str, after_name: usize) -> Option<usize> {
    let bytes = source.as_bytes();
    let mut i = after_name;
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    if i >= bytes.len() || bytes[i] != b'(' {
        return None;
    }
    let mut depth = 0usize;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            b'"' => {
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Classifies, searches the candidate space in preference order, and returns
/// the first plan that verifies, or the reason none can.
pub fn repair(
    doc: &TemplateDoc,
    config: &ToolConfig,
    corpus: &[AttackString],
    variant: EncoderVariant,
    strict_paper: bool,
) -> Result<RepairResult, RepairError> {
    let report = detect(doc, &config.analysis, corpus, variant)?;
    if report.findings.is_empty() && report.static_findings.is_empty() {
        return Err(RepairError::NothingToRepair);
    }
    let normalized = normalize_writes(doc);
    let tests = extract_unit_tests(&normalized, &config.analysis);
    let flows = collect_flows(&tests, &report.findings, config, variant);

    // Inherently unsafe sinks first: no encoder fixes an eval-style API.
    for flow in flows.iter().filter(|f| f.vulnerable) {
        let unit = &tests[flow.unit];
        if let Some(flow_index) = unit
            .flows
            .iter()
            .position(|uf| uf.sink.pos.line == flow.sink_line && uf.variable_chain.first() == Some(&flow.variable))
        {
            if flow_feeds_unsafe_api(unit, flow_index, config, variant) {
                return Ok(RepairResult::Unrepairable { reason: DeferReason::UnsafeSink });
            }
        }
    }
    // Chains of more than two encoders are deferred: replacement inside a
    // long chain is over-encoding territory.
    if flows.iter().any(|f| f.vulnerable && f.sites.len() > 2) {
        return Ok(RepairResult::Unrepairable { reason: DeferReason::ChainTooLong });
    }
    // A vulnerable flow with no encoder at all needs an inserted statement,
    // which is a structural change.
    if flows.iter().any(|f| f.vulnerable && f.sites.is_empty()) || !report.static_findings.is_empty() {
        return Ok(RepairResult::Unrepairable { reason: DeferReason::ExhaustedCandidates });
    }

    let scenario = classify(&report.findings, &tests);
    let search = SearchContext { doc, config, corpus, variant, flows: &flows, scenario, strict_paper };
    search.run()
}

struct SearchContext<'a> {
    doc: &'a TemplateDoc,
    config: &'a ToolConfig,
    corpus: &'a [AttackString],
    variant: EncoderVariant,
    flows: &'a [RepairFlow],
    scenario: Scenario,
    strict_paper: bool,
}

impl<'a> SearchContext<'a> {
    fn run(&self) -> Result<RepairResult, RepairError> {
        match self.scenario {
            Scenario::SingleVar => {
                let flow = self.flows.iter().find(|f| f.vulnerable).expect("findings imply a flow");
                let candidates = self.single_flow_candidates(flow);
                self.search(candidates, self.flows_touching_any(&flow.sites), None, 0)
            }
            Scenario::IndependentFlows => self.independent_search(),
            Scenario::MultiVarSingleSink => {
                // All variables of the sink get the same chain.
                let sites = self.all_sites();
                let candidates = candidate_encoders()
                    .into_iter()
                    .map(|chain| {
                        let mut replacements = BTreeMap::new();
                        for &site in &sites {
                            replacements.insert(site, chain.clone());
                        }
                        (replacements, false)
                    })
                    .collect();
                self.search(candidates, self.flows_touching_any(&sites), None, 0)
            }
            Scenario::SharedEncoderMultiSink | Scenario::CrossUnitShared => {
                let shared = self.shared_site().expect("scenario implies a shared site");
                let candidates = candidate_encoders()
                    .into_iter()
                    .map(|chain| (BTreeMap::from([(shared, chain)]), false))
                    .collect();
                self.search(candidates, self.flows_touching_any(&[shared]), None, 0)
            }
            Scenario::SharedPlusExtraEncoder => {
                let shared = self.shared_site().expect("scenario implies a shared site");
                let extra = self
                    .flows
                    .iter()
                    .flat_map(|f| f.sites.iter())
                    .find(|s| **s != shared)
                    .copied()
                    .expect("scenario implies an extra site");
                // Only combinations whose composed chain is itself a
                // candidate: {Html,+JavaScript} and {Url,+JavaScript}.
                let candidates = vec![
                    (
                        BTreeMap::from([(shared, vec![EncoderId::Html]), (extra, vec![EncoderId::JavaScript])]),
                        false,
                    ),
                    (
                        BTreeMap::from([(shared, vec![EncoderId::Url]), (extra, vec![EncoderId::JavaScript])]),
                        false,
                    ),
                ];
                self.search(candidates, self.flows_touching_any(&[shared, extra]), None, 0)
            }
        }
    }

    /// Candidate replacement maps for one flow, in preference order.
    fn single_flow_candidates(&self, flow: &RepairFlow) -> Vec<(BTreeMap<SourcePos, EncoderChain>, bool)> {
        match flow.sites.as_slice() {
            [site] => candidate_encoders()
                .into_iter()
                .map(|chain| (BTreeMap::from([(*site, chain)]), false))
                .collect(),
            [first, second] => {
                // Ordered pairs over the two sites, first-applied site
                // first; the composite candidates in both readings, paper
                // order leading.
                let pairs = [
                    (EncoderId::JavaScript, EncoderId::Html),
                    (EncoderId::JavaScript, EncoderId::Url),
                    (EncoderId::Html, EncoderId::JavaScript),
                    (EncoderId::Url, EncoderId::JavaScript),
                ];
                let mut candidates: Vec<(BTreeMap<SourcePos, EncoderChain>, bool)> = pairs
                    .into_iter()
                    .map(|(a, b)| (BTreeMap::from([(*first, vec![a]), (*second, vec![b])]), false))
                    .collect();
                if !self.strict_paper {
                    // Collapse extension: one candidate chain at one site,
                    // identity at the other.
                    for chain in candidate_encoders() {
                        candidates.push((
                            BTreeMap::from([(*first, chain.clone()), (*second, vec![EncoderId::Identity])]),
                            true,
                        ));
                        candidates.push((
                            BTreeMap::from([(*first, vec![EncoderId::Identity]), (*second, chain)]),
                            true,
                        ));
                    }
                }
                candidates
            }
            _ => Vec::new(),
        }
    }

    fn independent_search(&self) -> Result<RepairResult, RepairError> {
        let mut combined: BTreeMap<SourcePos, EncoderChain> = BTreeMap::new();
        let mut total_rank = 0usize;
        for flow in self.flows.iter().filter(|f| f.vulnerable) {
            let candidates = self.single_flow_candidates(flow);
            let affected = self.flows_touching_any(&flow.sites);
            let scope = Some((flow.sink_line, flow.variable.as_str()));
            let mut won = None;
            let mut evaluated = 0usize;
            for (replacements, extension) in candidates {
                if self.strict_paper && extension {
                    continue;
                }
                if !self.admissible(&replacements, &affected) {
                    continue;
                }
                if verify_replacements(self.doc, &replacements, self.config, self.corpus, self.variant, scope)? {
                    won = Some(replacements);
                    break;
                }
                evaluated += 1;
            }
            total_rank += evaluated;
            match won {
                Some(replacements) => combined.extend(replacements),
                None => return Ok(self.exhausted()),
            }
        }
        if verify_replacements(self.doc, &combined, self.config, self.corpus, self.variant, None)? {
            let plan = RepairPlan {
                replacements: combined,
                scenario: self.scenario,
                tried_rank: total_rank,
                extension: false,
            };
            let patched = apply_replacements(self.doc, &plan.replacements)?;
            Ok(RepairResult::Fixed { plan, patched })
        } else {
            Ok(self.exhausted())
        }
    }

    fn search(
        &self,
        candidates: Vec<(BTreeMap<SourcePos, EncoderChain>, bool)>,
        affected: Vec<&RepairFlow>,
        scope: Option<(u32, &str)>,
        rank_offset: usize,
    ) -> Result<RepairResult, RepairError> {
        let mut evaluated = rank_offset;
        for (replacements, extension) in candidates {
            if self.strict_paper && extension {
                continue;
            }
            if !self.admissible(&replacements, &affected) {
                continue;
            }
            if verify_replacements(self.doc, &replacements, self.config, self.corpus, self.variant, scope)? {
                let plan = RepairPlan {
                    replacements,
                    scenario: self.scenario,
                    tried_rank: evaluated,
                    extension,
                };
                let patched = apply_replacements(self.doc, &plan.replacements)?;
                return Ok(RepairResult::Fixed { plan, patched });
            }
            evaluated += 1;
        }
        Ok(self.exhausted())
    }

    /// Over-encoding gate: the effective chain at every affected sink must
    /// keep benign text intact in that sink's context.
    fn admissible(&self, replacements: &BTreeMap<SourcePos, EncoderChain>, affected: &[&RepairFlow]) -> bool {
        for flow in affected {
            let effective = self.effective_chain(flow, replacements);
            for &context in &flow.contexts {
                if !chain_fits_context(&effective, context, self.variant) {
                    return false;
                }
            }
        }
        true
    }

    fn effective_chain(&self, flow: &RepairFlow, replacements: &BTreeMap<SourcePos, EncoderChain>) -> EncoderChain {
        let mut chain = Vec::new();
        for site in &flow.sites {
            match replacements.get(site) {
                Some(replacement) => chain.extend(replacement.iter().copied()),
                None => chain.extend(flow_site_encoders(flow, *site)),
            }
        }
        chain
    }

    fn flows_touching_any(&self, sites: &[SourcePos]) -> Vec<&RepairFlow> {
        self.flows
            .iter()
            .filter(|f| f.sites.iter().any(|s| sites.contains(s)))
            .collect()
    }

    /// Sites of every flow reaching the sink that several variables share.
    fn all_sites(&self) -> Vec<SourcePos> {
        let mut sink_counts: BTreeMap<u32, usize> = BTreeMap::new();
        for flow in self.flows {
            *sink_counts.entry(flow.sink_line).or_insert(0) += 1;
        }
        let shared_sinks: BTreeSet<u32> = sink_counts
            .into_iter()
            .filter(|(_, n)| *n > 1)
            .map(|(line, _)| line)
            .collect();
        let mut sites = Vec::new();
        for flow in self.flows.iter().filter(|f| shared_sinks.contains(&f.sink_line)) {
            for site in &flow.sites {
                if !sites.contains(site) {
                    sites.push(*site);
                }
            }
        }
        sites
    }

    fn shared_site(&self) -> Option<SourcePos> {
        let mut site_sinks: BTreeMap<SourcePos, BTreeSet<u32>> = BTreeMap::new();
        for flow in self.flows {
            for site in &flow.sites {
                site_sinks.entry(*site).or_default().insert(flow.sink_line);
            }
        }
        site_sinks.into_iter().find(|(_, sinks)| sinks.len() > 1).map(|(site, _)| site)
    }

    fn exhausted(&self) -> RepairResult {
        if self.scenario == Scenario::CrossUnitShared {
            return RepairResult::Unrepairable { reason: DeferReason::ConflictAcrossUnits };
        }
        let families: BTreeSet<u8> = self
            .flows
            .iter()
            .flat_map(|f| f.contexts.iter().map(|c| context_family(*c)))
            .collect();
        if families.len() > 1 {
            RepairResult::Unrepairable { reason: DeferReason::MultiContextSink }
        } else {
            RepairResult::Unrepairable { reason: DeferReason::ExhaustedCandidates }
        }
    }
}

/// Original encoders a flow applies at one site (usually a single entry;
/// nested same-site chains keep their order).
fn flow_site_encoders(flow: &RepairFlow, site: SourcePos) -> Vec<EncoderId> {
    flow.site_encoders
        .iter()
        .filter(|(pos, _)| *pos == site)
        .map(|(_, id)| *id)
        .collect()
}

fn collect_flows(
    tests: &[XssUnitTest],
    findings: &[Finding],
    config: &ToolConfig,
    variant: EncoderVariant,
) -> Vec<RepairFlow> {
    let vulnerable: BTreeSet<(u32, String)> = findings
        .iter()
        .map(|f| (f.sink_line, f.focus_variable.clone()))
        .collect();
    let mut flows = Vec::new();
    for (unit_index, unit) in tests.iter().enumerate() {
        for (flow_index, flow) in unit.flows.iter().enumerate() {
            let variable = flow.variable_chain[0].clone();
            let mut sites = Vec::new();
            for (_, pos) in &flow.encoders {
                if !sites.contains(pos) {
                    sites.push(*pos);
                }
            }
            let contexts = harness::probe_flow_contexts(unit, flow_index, &config.analysis, variant);
            flows.push(RepairFlow {
                unit: unit_index,
                sink_line: flow.sink.pos.line,
                variable: variable.clone(),
                site_encoders: flow.encoders.iter().map(|(id, pos)| (*pos, *id)).collect(),
                sites,
                contexts,
                vulnerable: vulnerable.contains(&(flow.sink.pos.line, variable)),
            });
        }
    }
    flows
}

/// A sink feeds an eval-style API when, immediately before the injected
/// value (allowing whitespace and one quote), the rendered page calls one of
/// the configured unsafe functions.
fn flow_feeds_unsafe_api(
    unit: &XssUnitTest,
    flow_index: usize,
    config: &ToolConfig,
    variant: EncoderVariant,
) -> bool {
    let Some((output, offsets)) = harness::probe_flow_output(unit, flow_index, &config.analysis, variant)
    else {
        return false;
    };
    offsets.iter().any(|&offset| unsafe_call_before(&output, offset, &config.unsafe_sinks))
}

fn unsafe_call_before(output: &str, marker: usize, unsafe_sinks: &[String]) -> bool {
    let bytes = output.as_bytes();
    let mut i = marker;
    let skip_ws = |i: &mut usize| {
        while *i > 0 && bytes[*i - 1].is_ascii_whitespace() {
            *i -= 1;
        }
    };
    skip_ws(&mut i);
    if i > 0 && matches!(bytes[i - 1], b'\'' | b'"') {
        i -= 1;
        skip_ws(&mut i);
    }
    if i == 0 || bytes[i - 1] != b'(' {
        return false;
    }
    i -= 1;
    skip_ws(&mut i);
    let end = i;
    while i > 0 {
        let b = bytes[i - 1];
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'$' || b == b'.' {
            i -= 1;
        } else {
            break;
        }
    }
    if i == end {
        return false;
    }
    let name = &output[i..end];
    let last = name.rsplit('.').next().unwrap_or(name);
    unsafe_sinks.iter().any(|u| u == name || u == last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{generate_corpus, RenderRules};

    fn corpus() -> Vec<AttackString> {
        generate_corpus(2, &RenderRules::default())
    }

    fn parse(text: &str) -> TemplateDoc {
        parse_template(text, "t").unwrap()
    }

    fn classify_text(text: &str) -> Scenario {
        let doc = parse(text);
        let config = ToolConfig::default();
        let report = detect(&doc, &config.analysis, &corpus(), EncoderVariant::Permissive).unwrap();
        let tests = extract_unit_tests(&normalize_writes(&doc), &config.analysis);
        classify(&report.findings, &tests)
    }

    #[test]
    fn classifies_single_flow() {
        let s = classify_text("<% String user = request.getParameter(\"u\");\n   user = escapeHtml(user); %>\n<a onclick=\"p('<%= user %>')\" href=\"#\">x</a>\n");
        assert_eq!(s, Scenario::SingleVar);
    }

    #[test]
    fn classifies_independent_flows() {
        let s = classify_text("<% String a = request.getParameter(\"a\");\n   a = escapeHtml(a);\n   String b = request.getParameter(\"b\");\n   b = escapeHtml(b); %>\n<a onclick=\"f('<%= a %>')\" href=\"#\">x</a>\n<a onclick=\"g('<%= b %>')\" href=\"#\">y</a>\n");
        assert_eq!(s, Scenario::IndependentFlows);
    }

    #[test]
    fn classifies_concatenated_variables_at_one_sink() {
        let s = classify_text("<% String a = request.getParameter(\"a\");\n   a = escapeHtml(a);\n   String b = request.getParameter(\"b\");\n   b = escapeHtml(b);\n   String c = a + \"-\" + b; %>\n<a onclick=\"f('<%= c %>')\" href=\"#\">x</a>\n");
        assert_eq!(s, Scenario::MultiVarSingleSink);
    }

    #[test]
    fn classifies_shared_encoder() {
        let s = classify_text("<% String u = request.getParameter(\"u\");\n   u = escapeHtml(u); %>\n<a onclick=\"f('<%= u %>')\" href=\"#\">x</a>\n<p><%= u %></p>\n");
        assert_eq!(s, Scenario::SharedEncoderMultiSink);
    }

    #[test]
    fn classifies_shared_plus_extra() {
        let s = classify_text("<% String u = request.getParameter(\"u\");\n   u = escapeJavaScript(u); %>\n<p><%= u %></p>\n<% u = escapeHtml(u); %>\n<a onclick=\"f('<%= u %>')\" href=\"#\">x</a>\n");
        assert_eq!(s, Scenario::SharedPlusExtraEncoder);
    }

    #[test]
    fn classifies_cross_unit_shared() {
        let s = classify_text("<% String c = request.getParameter(\"c\");\n   c = escapeHtml(c);\n   if (m) { %>\n<a onclick=\"e('<%= c %>')\" href=\"#\">x</a>\n<% } else { %>\n<p><%= c %></p>\n<% } %>\n");
        assert_eq!(s, Scenario::CrossUnitShared);
    }

    #[test]
    fn blanket_encoders_do_not_fit_foreign_contexts() {
        use EncoderId::*;
        let v = EncoderVariant::Permissive;
        assert!(!chain_fits_context(&[Css], ParseContext::EventAttr, v));
        assert!(!chain_fits_context(&[Css], ParseContext::HtmlBody, v));
        assert!(!chain_fits_context(&[Url], ParseContext::HtmlBody, v));
        assert!(!chain_fits_context(&[Url], ParseContext::EventAttr, v));
        assert!(!chain_fits_context(&[Css], ParseContext::UriAttr, v));
        assert!(chain_fits_context(&[Css], ParseContext::StyleAttr, v));
        assert!(chain_fits_context(&[Url], ParseContext::UriAttr, v));
        assert!(chain_fits_context(&[Html], ParseContext::HtmlBody, v));
        assert!(chain_fits_context(&[JavaScript], ParseContext::EventAttr, v));
        assert!(chain_fits_context(&[Html, JavaScript], ParseContext::EventAttr, v));
        assert!(chain_fits_context(&[Html, JavaScript], ParseContext::ScriptBlock, v));
        assert!(chain_fits_context(&[Html, JavaScript], ParseContext::HtmlBody, v));
        // The strict JavaScript encoder escapes spaces but JS contexts
        // decode them back.
        assert!(chain_fits_context(&[JavaScript], ParseContext::EventAttr, EncoderVariant::Strict));
        assert!(!chain_fits_context(&[JavaScript], ParseContext::HtmlBody, EncoderVariant::Strict));
    }

    #[test]
    fn patch_swaps_a_single_name_byte_precisely() {
        let text = "<% String u = request.getParameter(\"u\");\n   u = escapeHtml(u); %>\n<a onclick=\"p('<%= u %>')\" href=\"#\">x</a>\n";
        let doc = parse(text);
        let site = SourcePos::new(2, 8);
        let plan = RepairPlan {
            replacements: BTreeMap::from([(site, vec![EncoderId::JavaScript])]),
            scenario: Scenario::SingleVar,
            tried_rank: 0,
            extension: false,
        };
        let patched = emit_patch(&doc, &plan).unwrap();
        assert_eq!(patched, text.replace("escapeHtml(u)", "escapeJavaScript(u)"));
    }

    #[test]
    fn patch_wraps_double_chains_as_nested_calls() {
        let text = "<% String u = request.getParameter(\"u\");\n   u = escapeHtml(u); %>\n<p><%= u %></p>\n";
        let doc = parse(text);
        let site = SourcePos::new(2, 8);
        let plan = RepairPlan {
            replacements: BTreeMap::from([(site, vec![EncoderId::Html, EncoderId::JavaScript])]),
            scenario: Scenario::SingleVar,
            tried_rank: 0,
            extension: false,
        };
        let patched = emit_patch(&doc, &plan).unwrap();
        assert!(patched.contains("u = escapeJavaScript(escapeHtml(u));"), "{patched}");
    }

    #[test]
    fn empty_plan_patches_to_identical_bytes() {
        let text = "<% String u = request.getParameter(\"u\");\n   u = escapeHtml(u); %>\n<p><%= u %></p>\n";
        let doc = parse(text);
        let plan = RepairPlan {
            replacements: BTreeMap::new(),
            scenario: Scenario::SingleVar,
            tried_rank: 0,
            extension: false,
        };
        assert_eq!(emit_patch(&doc, &plan).unwrap(), text);
    }

    #[test]
    fn patch_site_must_be_an_encoder_call() {
        let text = "<% String u = request.getParameter(\"u\"); %>";
        let doc = parse(text);
        let plan = RepairPlan {
            replacements: BTreeMap::from([(SourcePos::new(1, 4), vec![EncoderId::Html])]),
            scenario: Scenario::SingleVar,
            tried_rank: 0,
            extension: false,
        };
        assert!(matches!(emit_patch(&doc, &plan), Err(RepairError::SiteNotFound(_))));
    }

    #[test]
    fn unsafe_call_scanner_matches_quoted_and_bare_arguments() {
        let unsafe_sinks = vec!["setInterval".to_string()];
        let doc = "<script>setInterval(zq);</script>";
        assert!(unsafe_call_before(doc, doc.find("zq").unwrap(), &unsafe_sinks));
        let doc = "<script>setInterval('zq');</script>";
        assert!(unsafe_call_before(doc, doc.find("zq").unwrap(), &unsafe_sinks));
        let doc = "<script>window.setInterval( \"zq\" );</script>";
        assert!(unsafe_call_before(doc, doc.find("zq").unwrap(), &unsafe_sinks));
        let doc = "<script>fn('zq');</script>";
        assert!(!unsafe_call_before(doc, doc.find("zq").unwrap(), &unsafe_sinks));
        let doc = "<p>zq</p>";
        assert!(!unsafe_call_before(doc, doc.find("zq").unwrap(), &unsafe_sinks));
    }

    #[test]
    fn repair_on_clean_document_is_an_error() {
        let text = "<% String u = request.getParameter(\"u\");\n   u = escapeHtml(u); %>\n<p><%= u %></p>\n";
        let doc = parse(text);
        let config = ToolConfig::default();
        let result = repair(&doc, &config, &corpus(), EncoderVariant::Permissive, false);
        assert!(matches!(result, Err(RepairError::NothingToRepair)));
    }
}
