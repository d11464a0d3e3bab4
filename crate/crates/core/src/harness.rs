//! Unit-test execution and vulnerability detection.
//!
//! An extracted slice is interpreted over string values with one untrusted
//! source bound to an attack string (everything else returns the benign
//! constant), the rendered output is scanned by the browser model, and every
//! payload hit whose line matches a sink line of the slice becomes a
//! [`Finding`]. `baseline_string_match` runs the same pipeline with the
//! ZAP-style verbatim-survival oracle instead of execution, for comparison.

use crate::attacks::AttackString;
use crate::browser::{self, ParseContext};
use crate::config::AnalysisConfig;
use crate::encoders::{self, EncoderVariant};
use crate::taint::{extract_unit_tests, flag_unencoded_flows, FlowTuple, XssUnitTest};
use crate::template::{normalize_writes, Expr, SourcePos, Stmt, TemplateDoc};
use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

/// One confirmed vulnerability: this attack, injected at this variable,
/// executes at this sink.
#[derive(Debug, Clone)]
pub struct Finding {
    pub unit_test_id: String,
    pub sink_line: u32,
    pub attack: AttackString,
    pub context: ParseContext,
    pub focus_variable: String,
}

#[derive(Debug, Clone, Default)]
pub struct DetectionStats {
    pub unit_tests: usize,
    pub attacks_tried: usize,
    pub elapsed: Duration,
}

/// Aggregated result of detection over one template.
#[derive(Debug, Clone, Default)]
pub struct DetectionReport {
    /// Execution-confirmed findings, deduplicated on
    /// (unit test, sink line, variable, rendered attack).
    pub findings: Vec<Finding>,
    /// Flows with no real encoder; trivially vulnerable, reported without
    /// attack execution.
    pub static_findings: Vec<FlowTuple>,
    pub stats: DetectionStats,
}

impl DetectionReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty() && self.static_findings.is_empty()
    }

    /// Distinct (sink line, focus variable) pairs with confirmed findings.
    pub fn vulnerable_sinks(&self) -> std::collections::BTreeSet<(u32, String)> {
        self.findings.iter().map(|f| (f.sink_line, f.focus_variable.clone())).collect()
    }

    /// Distinct sink lines with confirmed findings.
    pub fn vulnerable_lines(&self) -> std::collections::BTreeSet<u32> {
        self.findings.iter().map(|f| f.sink_line).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{pos}: reference to unbound variable {name}")]
    UnboundVariable { name: String, pos: SourcePos },
    #[error("branching statement inside a unit-test slice")]
    BranchInSlice,
}

/// Marker substituted for `%L%` by the write instrumentation.
pub const LINE_MARKER: &str = "%L%";

/// Interprets a branch-free slice over string values. Untrusted source calls
/// return their binding (keyed by call-site position) or the benign
/// constant; encoder calls apply their table; `CondCapture` evaluates to a
/// benign true. Each `Write` substitutes the statement's original line for
/// `%L%` in the written value, then appends to the output buffer.
pub fn interpret_slice(
    unit: &XssUnitTest,
    bindings: &HashMap<SourcePos, String>,
    variant: EncoderVariant,
    config: &AnalysisConfig,
) -> Result<String, HarnessError> {
    let mut env: HashMap<String, String> = HashMap::new();
    let mut output = String::new();
    for stmt in &unit.stmts {
        match stmt {
            Stmt::Decl { var, init, .. } => {
                let value = eval(init, &env, bindings, variant, config)?;
                env.insert(var.clone(), value);
            }
            Stmt::Assign { var, value, .. } => {
                let value = eval(value, &env, bindings, variant, config)?;
                env.insert(var.clone(), value);
            }
            Stmt::CondCapture { var, .. } => {
                env.insert(var.clone(), "true".to_string());
            }
            Stmt::Write { value, pos, .. } => {
                let value = eval(value, &env, bindings, variant, config)?;
                if value.contains(LINE_MARKER) {
                    output.push_str(&value.replace(LINE_MARKER, &pos.line.to_string()));
                } else {
                    output.push_str(&value);
                }
            }
            Stmt::If { .. } | Stmt::Switch { .. } => return Err(HarnessError::BranchInSlice),
        }
    }
    Ok(output)
}

fn eval(
    expr: &Expr,
    env: &HashMap<String, String>,
    bindings: &HashMap<SourcePos, String>,
    variant: EncoderVariant,
    config: &AnalysisConfig,
) -> Result<String, HarnessError> {
    match expr {
        Expr::StrLit { value, .. } => Ok(value.clone()),
        Expr::BoolLit { value, .. } => Ok(value.to_string()),
        Expr::Var { name, pos } => env.get(name).cloned().ok_or_else(|| HarnessError::UnboundVariable {
            name: name.clone(),
            pos: *pos,
        }),
        Expr::Concat { left, right, .. } => {
            let mut value = eval(left, env, bindings, variant, config)?;
            value.push_str(&eval(right, env, bindings, variant, config)?);
            Ok(value)
        }
        Expr::Call { callee, args, pos } => {
            if config.is_source(callee) {
                return Ok(bindings
                    .get(pos)
                    .cloned()
                    .unwrap_or_else(|| config.benign_constant.clone()));
            }
            if let Some(encoder) = config.encoder_for(callee) {
                let inner = match args.first() {
                    Some(arg) => eval(arg, env, bindings, variant, config)?,
                    None => String::new(),
                };
                return Ok(encoders::encode(encoder, variant, &inner));
            }
            // Unknown calls pass their (concatenated) arguments through.
            let mut value = String::new();
            for arg in args {
                value.push_str(&eval(arg, env, bindings, variant, config)?);
            }
            Ok(value)
        }
    }
}

/// Runs the whole corpus against one unit test: one focus variable at a
/// time, all other untrusted sources held at the benign constant. Every
/// payload hit whose line matches a sink line yields a finding.
pub fn run_unit_test(
    unit: &XssUnitTest,
    corpus: &[AttackString],
    variant: EncoderVariant,
    config: &AnalysisConfig,
) -> Result<(Vec<Finding>, usize), HarnessError> {
    let sink_lines = unit.sink_lines();
    let mut findings = Vec::new();
    let mut seen: HashSet<(u32, String, String)> = HashSet::new();
    let mut attacks_tried = 0usize;
    for point in &unit.injection_points {
        let mut bindings = HashMap::new();
        for attack in corpus {
            bindings.insert(point.site.pos, attack.rendered.clone());
            let output = interpret_slice(unit, &bindings, variant, config)?;
            attacks_tried += 1;
            let report = browser::scan(&output);
            for hit in report.hits {
                if !sink_lines.contains(&hit.line) {
                    // Raw marker survival or foreign line: diagnostic only.
                    continue;
                }
                let key = (hit.line, point.focus_variable.clone(), attack.rendered.clone());
                if seen.insert(key) {
                    findings.push(Finding {
                        unit_test_id: unit.id.clone(),
                        sink_line: hit.line,
                        attack: attack.clone(),
                        context: hit.context,
                        focus_variable: point.focus_variable.clone(),
                    });
                }
            }
        }
    }
    Ok((findings, attacks_tried))
}

/// Full detection pipeline: extract unit tests, flag unencoded flows, run
/// every unit test against the corpus, aggregate.
pub fn detect(
    doc: &TemplateDoc,
    config: &AnalysisConfig,
    corpus: &[AttackString],
    variant: EncoderVariant,
) -> Result<DetectionReport, HarnessError> {
    let started = Instant::now();
    let normalized = normalize_writes(doc);
    let tests = extract_unit_tests(&normalized, config);
    let static_findings = flag_unencoded_flows(&tests);
    let mut findings = Vec::new();
    let mut attacks_tried = 0usize;
    for unit in &tests {
        let (unit_findings, tried) = run_unit_test(unit, corpus, variant, config)?;
        findings.extend(unit_findings);
        attacks_tried += tried;
    }
    Ok(DetectionReport {
        findings,
        static_findings,
        stats: DetectionStats { unit_tests: tests.len(), attacks_tried, elapsed: started.elapsed() },
    })
}

/// The string-matching oracle used by black-box scanners: a finding is
/// recorded whenever the rendered attack survives verbatim in the output,
/// with no browser-model execution. Reproduces their false-positive
/// mechanism for comparison.
pub fn baseline_string_match(
    doc: &TemplateDoc,
    config: &AnalysisConfig,
    corpus: &[AttackString],
    variant: EncoderVariant,
) -> Result<DetectionReport, HarnessError> {
    let started = Instant::now();
    let normalized = normalize_writes(doc);
    let tests = extract_unit_tests(&normalized, config);
    let static_findings = flag_unencoded_flows(&tests);
    let mut findings = Vec::new();
    let mut seen: HashSet<(String, u32, String, String)> = HashSet::new();
    let mut attacks_tried = 0usize;
    for unit in &tests {
        for point in &unit.injection_points {
            let flow = &unit.flows[point.flow_index];
            let sink_line = flow.sink.pos.line;
            let context = probe_flow_contexts(unit, point.flow_index, config, variant)
                .first()
                .copied()
                .unwrap_or(ParseContext::HtmlBody);
            let mut bindings = HashMap::new();
            for attack in corpus {
                bindings.insert(point.site.pos, attack.rendered.clone());
                let output = interpret_slice(unit, &bindings, variant, config)?;
                attacks_tried += 1;
                let needle = attack.rendered.replace(LINE_MARKER, &sink_line.to_string());
                if output.contains(&needle) {
                    let key = (unit.id.clone(), sink_line, point.focus_variable.clone(), attack.rendered.clone());
                    if seen.insert(key) {
                        findings.push(Finding {
                            unit_test_id: unit.id.clone(),
                            sink_line,
                            attack: attack.clone(),
                            context,
                            focus_variable: point.focus_variable.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(DetectionReport {
        findings,
        static_findings,
        stats: DetectionStats { unit_tests: tests.len(), attacks_tried, elapsed: started.elapsed() },
    })
}

/// Determines where a flow's sink value lands in the rendered document by
/// injecting a recognizable alphanumeric marker and reading the context
/// trace. The marker carries `%L%` so sinks on different lines can be told
/// apart; if an encoder mangles the marker, a plain one is used and every
/// occurrence is attributed to the flow.
pub fn probe_flow_contexts(
    unit: &XssUnitTest,
    flow_index: usize,
    config: &AnalysisConfig,
    variant: EncoderVariant,
) -> Vec<ParseContext> {
    let flow = &unit.flows[flow_index];
    let point = unit
        .injection_points
        .iter()
        .find(|p| p.flow_index == flow_index)
        .expect("every flow has an injection point");
    let lined_marker = format!("zql{LINE_MARKER}lqz");
    let mut bindings = HashMap::new();
    bindings.insert(point.site.pos, lined_marker);
    let mut contexts = Vec::new();
    if let Ok(output) = interpret_slice(unit, &bindings, variant, config) {
        let needle = format!("zql{}lqz", flow.sink.pos.line);
        let (_, spans) = browser::scan_traced(&output);
        let mut from = 0;
        while let Some(rel) = output[from..].find(&needle) {
            let at = from + rel;
            if let Some(ctx) = browser::context_at(&spans, at) {
                if !contexts.contains(&ctx) {
                    contexts.push(ctx);
                }
            }
            from = at + needle.len();
        }
    }
    if contexts.is_empty() {
        // Marker mangled by a blanket encoder; fall back to a plain one.
        let plain = "zqplainprobeqz".to_string();
        let mut bindings = HashMap::new();
        bindings.insert(point.site.pos, plain.clone());
        if let Ok(output) = interpret_slice(unit, &bindings, variant, config) {
            let (_, spans) = browser::scan_traced(&output);
            let mut from = 0;
            while let Some(rel) = output[from..].find(&plain) {
                let at = from + rel;
                if let Some(ctx) = browser::context_at(&spans, at) {
                    if !contexts.contains(&ctx) {
                        contexts.push(ctx);
                    }
                }
                from = at + plain.len();
            }
        }
    }
    contexts
}

/// Renders the unit test with a marker at the flow's injection point and
/// returns the rendered output together with the marker's occurrence
/// offsets. Used by the repair gate that checks whether a sink feeds an
/// eval-style API.
pub fn probe_flow_output(
    unit: &XssUnitTest,
    flow_index: usize,
    config: &AnalysisConfig,
    variant: EncoderVariant,
) -> Option<(String, Vec<usize>)> {
    let flow = &unit.flows[flow_index];
    let point = unit.injection_points.iter().find(|p| p.flow_index == flow_index)?;
    for marker in [format!("zql{LINE_MARKER}lqz"), "zqplainprobeqz".to_string()] {
        let mut bindings = HashMap::new();
        bindings.insert(point.site.pos, marker.clone());
        let output = interpret_slice(unit, &bindings, variant, config).ok()?;
        let needle = marker.replace(LINE_MARKER, &flow.sink.pos.line.to_string());
        let mut offsets = Vec::new();
        let mut from = 0;
        while let Some(rel) = output[from..].find(&needle) {
            offsets.push(from + rel);
            from = from + rel + needle.len();
        }
        if !offsets.is_empty() {
            return Some((output, offsets));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::WriteOrigin;
    use crate::attacks::{generate_corpus, RenderRules};
    use crate::template::parse_template;

    fn setup(text: &str) -> (TemplateDoc, AnalysisConfig) {
        let doc = parse_template(text, "t").unwrap();
        (doc, AnalysisConfig::default())
    }

    fn corpus() -> Vec<AttackString> {
        generate_corpus(2, &RenderRules::default())
    }

    fn unit_of(doc: &TemplateDoc, config: &AnalysisConfig, index: usize) -> XssUnitTest {
        extract_unit_tests(&normalize_writes(doc), config).remove(index)
    }

    const BRANCHED: &str = "<% String ord = request.getParameter(\"order\");\n   ord = escapeHtml(ord);\n   if (editMode) { %>\n<a onclick=\"edit('<%= ord %>')\" href=\"#\" > Edit Order</a>\n<% } else { %>\n<span><%= ord %></span>\n<% } %>\n";

    #[test]
    fn interprets_then_branch_slice() {
        let (doc, config) = setup(BRANCHED);
        let unit = unit_of(&doc, &config, 0);
        let mut bindings = HashMap::new();
        bindings.insert(unit.injection_points[0].site.pos, "X".to_string());
        let output = interpret_slice(&unit, &bindings, EncoderVariant::Permissive, &config).unwrap();
        assert_eq!(output.trim(), "<a onclick=\"edit('X')\" href=\"#\" > Edit Order</a>");
    }

    #[test]
    fn write_substitutes_sink_line_for_marker() {
        let (doc, config) = setup(BRANCHED);
        let unit = unit_of(&doc, &config, 0);
        let mut bindings = HashMap::new();
        bindings.insert(unit.injection_points[0].site.pos, "' + attack(%L%) + '".to_string());
        let output = interpret_slice(&unit, &bindings, EncoderVariant::Permissive, &config).unwrap();
        assert!(output.contains("attack(4)"), "{output}");
    }

    #[test]
    fn unbound_variable_fails_loudly() {
        let (_, config) = setup("<p>x</p>");
        let pos = SourcePos::new(1, 1);
        let unit = XssUnitTest {
            id: "broken#1".to_string(),
            stmts: vec![Stmt::Write {
                value: Expr::Var { name: "ghost".to_string(), pos },
                origin: WriteOrigin::ExprSink,
                pos,
            }],
            flows: Vec::new(),
            injection_points: Vec::new(),
            origin_lines: vec![1],
        };
        let err = interpret_slice(&unit, &HashMap::new(), EncoderVariant::Permissive, &config);
        assert!(matches!(err, Err(HarnessError::UnboundVariable { ref name, .. }) if name == "ghost"));
    }

    #[test]
    fn unit_with_no_writes_renders_empty() {
        let (_, config) = setup("<p>x</p>");
        let unit = XssUnitTest {
            id: "empty#1".to_string(),
            stmts: Vec::new(),
            flows: Vec::new(),
            injection_points: Vec::new(),
            origin_lines: Vec::new(),
        };
        let output = interpret_slice(&unit, &HashMap::new(), EncoderVariant::Permissive, &config).unwrap();
        assert_eq!(output, "");
    }

    const TWO_SINKS: &str = "<% String pid = request.getParameter(\"pid\");\n   String addr = request.getParameter(\"addr\"); %>\n<a onclick=\"fn('<%= escapeHtml(pid) %>')\" href=\"#\"> mylink </a>\n<address><%= escapeHtml(addr) %></address>\n";

    #[test]
    fn detects_event_attr_bypass_and_leaves_body_sink_clean() {
        let (doc, config) = setup(TWO_SINKS);
        let report = detect(&doc, &config, &corpus(), EncoderVariant::Permissive).unwrap();
        let sinks = report.vulnerable_sinks();
        assert_eq!(sinks.len(), 1);
        assert!(sinks.contains(&(3, "pid".to_string())));
        assert!(report.findings.iter().all(|f| f.context == ParseContext::EventAttr));
        assert!(report
            .findings
            .iter()
            .any(|f| f.attack.rendered.replace(' ', "") == "'+attack(%L%)+'"));
    }

    #[test]
    fn encoder_order_bug_is_detected_via_entity_decoding() {
        let text = "<% String uname = request.getParameter(\"uname\");\n   uname = escapeHtmlDecimal(uname);\n   uname = escapeJavaScript(uname); %>\n<a onclick=\"process('<%= uname %>')\" href=\"#\"> Process </a>\n";
        let (doc, config) = setup(text);
        let report = detect(&doc, &config, &corpus(), EncoderVariant::Permissive).unwrap();
        assert_eq!(report.vulnerable_lines().into_iter().collect::<Vec<_>>(), vec![4]);
        let breakout = report
            .findings
            .iter()
            .find(|f| f.attack.rendered.replace(' ', "") == "');attack(%L%);//");
        assert!(breakout.is_some(), "expected the statement-breakout attack to confirm");
    }

    #[test]
    fn fully_safe_fixture_reports_nothing() {
        let text = "<% String name = request.getParameter(\"name\");\n   name = escapeHtml(name); %>\n<p><%= name %></p>\n";
        let (doc, config) = setup(text);
        let report = detect(&doc, &config, &corpus(), EncoderVariant::Permissive).unwrap();
        assert!(report.is_clean(), "{:?}", report.vulnerable_sinks());
    }

    #[test]
    fn branched_template_reports_original_line_numbers() {
        let (doc, config) = setup(BRANCHED);
        let report = detect(&doc, &config, &corpus(), EncoderVariant::Permissive).unwrap();
        assert_eq!(report.stats.unit_tests, 2);
        // Event-attr sink on line 4 falls to the html encoder; body sink on
        // line 6 is safe.
        assert_eq!(report.vulnerable_lines().into_iter().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn baseline_flags_inert_survivals_that_execution_rejects() {
        let text = "<% String msg = request.getParameter(\"msg\");\n   msg = escapeHtmlDecimal(msg); %>\n<p> <%= msg %> </p>\n";
        let (doc, config) = setup(text);
        let attacks = corpus();
        let exec = detect(&doc, &config, &attacks, EncoderVariant::Permissive).unwrap();
        let baseline = baseline_string_match(&doc, &config, &attacks, EncoderVariant::Permissive).unwrap();
        assert!(exec.findings.is_empty());
        assert!(!baseline.findings.is_empty());
    }

    #[test]
    fn baseline_dominates_detection_on_surviving_attacks() {
        let (doc, config) = setup(TWO_SINKS);
        let attacks = corpus();
        let exec = detect(&doc, &config, &attacks, EncoderVariant::Permissive).unwrap();
        let baseline = baseline_string_match(&doc, &config, &attacks, EncoderVariant::Permissive).unwrap();
        let exec_keys: HashSet<(u32, String, String)> = exec
            .findings
            .iter()
            .map(|f| (f.sink_line, f.focus_variable.clone(), f.attack.rendered.clone()))
            .collect();
        let baseline_keys: HashSet<(u32, String, String)> = baseline
            .findings
            .iter()
            .map(|f| (f.sink_line, f.focus_variable.clone(), f.attack.rendered.clone()))
            .collect();
        assert!(exec_keys.is_subset(&baseline_keys));
        assert!(baseline_keys.len() > exec_keys.len());
    }

    #[test]
    fn finding_set_is_invariant_under_corpus_permutation() {
        let (doc, config) = setup(TWO_SINKS);
        let mut attacks = corpus();
        let forward = detect(&doc, &config, &attacks, EncoderVariant::Permissive).unwrap();
        attacks.reverse();
        let backward = detect(&doc, &config, &attacks, EncoderVariant::Permissive).unwrap();
        let key = |r: &DetectionReport| -> HashSet<(u32, String, String)> {
            r.findings
                .iter()
                .map(|f| (f.sink_line, f.focus_variable.clone(), f.attack.rendered.clone()))
                .collect()
        };
        assert_eq!(key(&forward), key(&backward));
    }

    #[test]
    fn rescanning_stored_output_reproduces_each_finding() {
        let (doc, config) = setup(TWO_SINKS);
        let attacks = corpus();
        let report = detect(&doc, &config, &attacks, EncoderVariant::Permissive).unwrap();
        let normalized = normalize_writes(&doc);
        let tests = extract_unit_tests(&normalized, &config);
        for finding in &report.findings {
            let unit = tests.iter().find(|t| t.id == finding.unit_test_id).unwrap();
            let point = unit
                .injection_points
                .iter()
                .find(|p| p.focus_variable == finding.focus_variable)
                .unwrap();
            let mut bindings = HashMap::new();
            bindings.insert(point.site.pos, finding.attack.rendered.clone());
            let output = interpret_slice(unit, &bindings, EncoderVariant::Permissive, &config).unwrap();
            let rescan = browser::scan(&output);
            assert!(rescan.hits.iter().any(|h| h.line == finding.sink_line));
        }
    }

    #[test]
    fn probe_reports_event_attr_context() {
        let (doc, config) = setup(TWO_SINKS);
        let unit = unit_of(&doc, &config, 0);
        let contexts = probe_flow_contexts(&unit, 0, &config, EncoderVariant::Permissive);
        assert_eq!(contexts, vec![ParseContext::EventAttr]);
        let contexts = probe_flow_contexts(&unit, 1, &config, EncoderVariant::Permissive);
        assert_eq!(contexts, vec![ParseContext::HtmlBody]);
    }

    #[test]
    fn unencoded_sinks_are_confirmed_in_every_context() {
        // Identity-guarded sink in each modeled context must be confirmed by
        // at least one corpus attack.
        let fixtures = [
            "<% String q = request.getParameter(\"q\"); %>\n<p><%= q %></p>",
            "<% String q = request.getParameter(\"q\"); %>\n<a onclick=\"f('<%= q %>')\" href=\"#\">x</a>",
            "<% String q = request.getParameter(\"q\"); %>\n<script>var x = '<%= q %>';</script>",
            "<% String q = request.getParameter(\"q\"); %>\n<a href=\"<%= q %>\">x</a>",
            "<% String q = request.getParameter(\"q\"); %>\n<div style=\"height: <%= q %>px;\">x</div>",
        ];
        let attacks = corpus();
        for text in fixtures {
            let (doc, config) = setup(text);
            let report = detect(&doc, &config, &attacks, EncoderVariant::Permissive).unwrap();
            assert!(!report.findings.is_empty(), "no finding for {text}");
            assert!(!report.static_findings.is_empty());
        }
    }
}
