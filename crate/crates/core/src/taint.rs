//! Control-flow path enumeration, taint analysis, and unit-test extraction.
//!
//! Every acyclic branch combination of a normalized template becomes one
//! straight-line path; branch conditions survive as `CondCapture` statements
//! so nothing observable is lost. Forward taint propagation over a path
//! yields one [`FlowTuple`] per (untrusted source, sink) pair, carrying the
//! ordered encoder list the value passed through. Paths with at least one
//! tainted sink become executable [`XssUnitTest`]s.

use crate::config::AnalysisConfig;
use crate::encoders::EncoderId;
use crate::template::{Expr, SourcePos, Stmt, TemplateDoc, WriteOrigin};
use std::collections::HashMap;

/// A named call location.
#[derive(Debug, Clone, PartialEq)]
pub struct CallSite {
    pub name: String,
    pub pos: SourcePos,
}

/// Where a tainted value reaches output.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkSite {
    pub pos: SourcePos,
    pub expr: Expr,
}

/// One tainted data flow: untrusted source, sink, and the encoders applied
/// between them in application order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTuple {
    pub source: CallSite,
    pub sink: SinkSite,
    pub encoders: Vec<(EncoderId, SourcePos)>,
    pub variable_chain: Vec<String>,
}

impl FlowTuple {
    /// True when no real encoder guards the flow (`identity` does not count).
    pub fn is_unencoded(&self) -> bool {
        !self.encoders.iter().any(|(id, _)| *id != EncoderId::Identity)
    }
}

/// One straight-line execution path through a template.
#[derive(Debug, Clone)]
pub struct Path {
    pub stmts: Vec<Stmt>,
    /// Arm index chosen at each branch statement, in encounter order.
    pub arm_choices: Vec<usize>,
}

/// The place where an attack string enters a unit test: the untrusted
/// source call whose return value it replaces.
#[derive(Debug, Clone)]
pub struct InjectionPoint {
    pub flow_index: usize,
    pub focus_variable: String,
    pub site: CallSite,
}

/// A branch-free slice of a template with at least one tainted sink.
#[derive(Debug, Clone)]
pub struct XssUnitTest {
    pub id: String,
    pub stmts: Vec<Stmt>,
    pub flows: Vec<FlowTuple>,
    pub injection_points: Vec<InjectionPoint>,
    pub origin_lines: Vec<u32>,
}

impl XssUnitTest {
    pub fn sink_lines(&self) -> Vec<u32> {
        let mut lines: Vec<u32> = self.flows.iter().map(|f| f.sink.pos.line).collect();
        lines.dedup();
        lines
    }
}

/// Enumerates every acyclic branch combination of a normalized document.
/// Each `if` contributes its two arms (a missing `else` contributes an empty
/// arm), each `switch` one arm per case plus the default. The branch
/// condition is retained as a `CondCapture` assigning it to a fresh boolean
/// (`e1`, `e2`, ...).
pub fn enumerate_paths(doc: &TemplateDoc) -> Vec<Path> {
    let stmts: Vec<Stmt> = doc.top_level_stmts().into_iter().cloned().collect();
    expand(&stmts)
        .into_iter()
        .map(|(stmts, arm_choices)| {
            let stmts = number_captures(stmts);
            Path { stmts, arm_choices }
        })
        .collect()
}

fn expand(stmts: &[Stmt]) -> Vec<(Vec<Stmt>, Vec<usize>)> {
    let mut acc: Vec<(Vec<Stmt>, Vec<usize>)> = vec![(Vec::new(), Vec::new())];
    for stmt in stmts {
        let expansions: Vec<(Vec<Stmt>, Vec<usize>)> = match stmt {
            Stmt::If { cond, then_arm, else_arm, pos } => {
                branch_expansions(cond, *pos, &[then_arm.as_slice(), else_arm.as_slice()])
            }
            Stmt::Switch { scrutinee, cases, default_arm, pos } => {
                let mut arms: Vec<&[Stmt]> = cases.iter().map(|(_, arm)| arm.as_slice()).collect();
                arms.push(default_arm.as_slice());
                branch_expansions(scrutinee, *pos, &arms)
            }
            other => vec![(vec![other.clone()], Vec::new())],
        };
        let mut next = Vec::with_capacity(acc.len() * expansions.len());
        for (prefix, choices) in &acc {
            for (suffix, sub_choices) in &expansions {
                let mut stmts = prefix.clone();
                stmts.extend(suffix.iter().cloned());
                let mut all_choices = choices.clone();
                all_choices.extend(sub_choices.iter().copied());
                next.push((stmts, all_choices));
            }
        }
        acc = next;
    }
    acc
}

fn branch_expansions(cond: &Expr, pos: SourcePos, arms: &[&[Stmt]]) -> Vec<(Vec<Stmt>, Vec<usize>)> {
    let capture = Stmt::CondCapture { var: "e0".to_string(), cond: cond.clone(), pos };
    let mut out = Vec::new();
    for (index, arm) in arms.iter().enumerate() {
        for (arm_stmts, sub_choices) in expand(arm) {
            let mut stmts = vec![capture.clone()];
            stmts.extend(arm_stmts);
            let mut choices = vec![index];
            choices.extend(sub_choices);
            out.push((stmts, choices));
        }
    }
    out
}

fn number_captures(stmts: Vec<Stmt>) -> Vec<Stmt> {
    let mut counter = 0u32;
    stmts
        .into_iter()
        .map(|stmt| match stmt {
            Stmt::CondCapture { cond, pos, .. } => {
                counter += 1;
                Stmt::CondCapture { var: format!("e{counter}"), cond, pos }
            }
            other => other,
        })
        .collect()
}

#[derive(Debug, Clone)]
struct FlowState {
    source: CallSite,
    encoders: Vec<(EncoderId, SourcePos)>,
    chain: Vec<String>,
}

/// Forward taint propagation over one straight-line path. A variable is
/// tainted if assigned from an untrusted source call, a tainted variable, or
/// a concatenation with a tainted operand; passing through an encoder call
/// appends that encoder to the flow. A [`FlowTuple`] is emitted for every
/// tainted value reaching an enabled sink.
pub fn taint_analysis(path: &Path, config: &AnalysisConfig) -> Vec<FlowTuple> {
    let mut env: HashMap<String, Vec<FlowState>> = HashMap::new();
    let mut flows = Vec::new();
    for stmt in &path.stmts {
        match stmt {
            Stmt::Decl { var, init, .. } => {
                let states = assign_chain(eval_taint(init, &env, config), var);
                env.insert(var.clone(), states);
            }
            Stmt::Assign { var, value, .. } => {
                let states = assign_chain(eval_taint(value, &env, config), var);
                env.insert(var.clone(), states);
            }
            Stmt::CondCapture { var, .. } => {
                env.insert(var.clone(), Vec::new());
            }
            Stmt::Write { value, origin, pos } => {
                if !sink_enabled(origin, config) {
                    continue;
                }
                for state in eval_taint(value, &env, config) {
                    let chain = if state.chain.is_empty() {
                        vec![format!("<{}>", state.source.name)]
                    } else {
                        state.chain.clone()
                    };
                    flows.push(FlowTuple {
                        source: state.source,
                        sink: SinkSite { pos: *pos, expr: value.clone() },
                        encoders: state.encoders,
                        variable_chain: chain,
                    });
                }
            }
            Stmt::If { .. } | Stmt::Switch { .. } => {
                unreachable!("taint analysis requires a straight-line path")
            }
        }
    }
    flows
}

fn sink_enabled(origin: &WriteOrigin, config: &AnalysisConfig) -> bool {
    match origin {
        WriteOrigin::Html => false,
        WriteOrigin::ExprSink => config.expr_sink,
        WriteOrigin::WriteCall(name) => config.write_call_sinks.iter().any(|s| s == name),
    }
}

fn assign_chain(mut states: Vec<FlowState>, var: &str) -> Vec<FlowState> {
    for state in &mut states {
        if state.chain.last().map(String::as_str) != Some(var) {
            state.chain.push(var.to_string());
        }
    }
    states
}

fn eval_taint(expr: &Expr, env: &HashMap<String, Vec<FlowState>>, config: &AnalysisConfig) -> Vec<FlowState> {
    match expr {
        Expr::StrLit { .. } | Expr::BoolLit { .. } => Vec::new(),
        Expr::Var { name, .. } => env.get(name).cloned().unwrap_or_default(),
        Expr::Concat { left, right, .. } => {
            let mut states = eval_taint(left, env, config);
            states.extend(eval_taint(right, env, config));
            states
        }
        Expr::Call { callee, args, pos } => {
            if config.is_source(callee) {
                // The source call replaces whatever its arguments carried.
                return vec![FlowState {
                    source: CallSite { name: callee.clone(), pos: *pos },
                    encoders: Vec::new(),
                    chain: Vec::new(),
                }];
            }
            let mut states: Vec<FlowState> = args.iter().flat_map(|a| eval_taint(a, env, config)).collect();
            if let Some(encoder) = config.encoder_for(callee) {
                for state in &mut states {
                    state.encoders.push((encoder, *pos));
                }
            }
            // Unknown calls pass taint through with the encoder list
            // unchanged.
            states
        }
    }
}

/// Extracts one executable unit test per path that contains at least one
/// tainted sink; paths without tainted sinks are discarded. `doc` must be
/// normalized.
pub fn extract_unit_tests(doc: &TemplateDoc, config: &AnalysisConfig) -> Vec<XssUnitTest> {
    let mut tests = Vec::new();
    for path in enumerate_paths(doc) {
        let flows = taint_analysis(&path, config);
        if flows.is_empty() {
            continue;
        }
        let injection_points = flows
            .iter()
            .enumerate()
            .map(|(flow_index, flow)| InjectionPoint {
                flow_index,
                focus_variable: flow.variable_chain[0].clone(),
                site: flow.source.clone(),
            })
            .collect();
        let mut origin_lines: Vec<u32> = Vec::new();
        for stmt in &path.stmts {
            // Whitespace-only markup between segments carries no content and
            // does not count as a line the path covers.
            if let Stmt::Write { value: Expr::StrLit { value, .. }, origin: WriteOrigin::Html, .. } = stmt {
                if value.trim().is_empty() {
                    continue;
                }
            }
            let line = stmt.pos().line;
            if !origin_lines.contains(&line) {
                origin_lines.push(line);
            }
        }
        let id = format!("{}#{}", doc.name, tests.len() + 1);
        tests.push(XssUnitTest { id, stmts: path.stmts, flows, injection_points, origin_lines });
    }
    tests
}

/// Flows with no real encoder between source and sink. These are reported
/// as static findings: they are trivially vulnerable and need no attack
/// execution to prove it.
pub fn flag_unencoded_flows(tests: &[XssUnitTest]) -> Vec<FlowTuple> {
    tests
        .iter()
        .flat_map(|t| t.flows.iter())
        .filter(|f| f.is_unencoded())
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::{normalize_writes, parse_template};

    fn analyze(text: &str) -> (TemplateDoc, AnalysisConfig) {
        let doc = normalize_writes(&parse_template(text, "t").unwrap());
        (doc, AnalysisConfig::default())
    }

    const BRANCHED: &str = "<% String ord = request.getParameter(\"order\");\n   ord = escapeHtml(ord);\n   if (editMode) { %>\n<a onclick=\"edit('<%= ord %>')\" href=\"#\" > Edit Order</a>\n<% } else { %>\n<span><%= ord %></span>\n<% } %>\n";

    #[test]
    fn branched_template_has_two_paths() {
        let (doc, _) = analyze(BRANCHED);
        let paths = enumerate_paths(&doc);
        assert_eq!(paths.len(), 2);
        let line_sets: Vec<Vec<u32>> = paths
            .iter()
            .map(|p| {
                let mut lines: Vec<u32> = Vec::new();
                for s in &p.stmts {
                    if let Stmt::Write { value: Expr::StrLit { value, .. }, origin: WriteOrigin::Html, .. } = s {
                        if value.trim().is_empty() {
                            continue;
                        }
                    }
                    if !lines.contains(&s.pos().line) {
                        lines.push(s.pos().line);
                    }
                }
                lines
            })
            .collect();
        assert_eq!(line_sets[0], vec![1, 2, 3, 4]);
        assert_eq!(line_sets[1], vec![1, 2, 3, 6]);
    }

    #[test]
    fn branch_free_doc_has_one_path() {
        let (doc, _) = analyze("<% String a = request.getParameter(\"a\"); %>\n<p><%= a %></p>");
        assert_eq!(enumerate_paths(&doc).len(), 1);
    }

    /// Independent oracle: enumerate every arm-choice vector, walk the
    /// program under it, and count distinct realized statement sequences.
    fn brute_force_path_count(stmts: &[Stmt]) -> usize {
        fn branch_count(stmts: &[Stmt], acc: &mut Vec<usize>) {
            for s in stmts {
                match s {
                    Stmt::If { then_arm, else_arm, .. } => {
                        acc.push(2);
                        branch_count(then_arm, acc);
                        branch_count(else_arm, acc);
                    }
                    Stmt::Switch { cases, default_arm, .. } => {
                        acc.push(cases.len() + 1);
                        for (_, arm) in cases {
                            branch_count(arm, acc);
                        }
                        branch_count(default_arm, acc);
                    }
                    _ => {}
                }
            }
        }
        fn walk(
            stmts: &[Stmt],
            choices: &HashMap<usize, usize>,
            next_branch: &mut usize,
            out: &mut Vec<String>,
        ) {
            for s in stmts {
                match s {
                    Stmt::If { then_arm, else_arm, .. } => {
                        let my_index = *next_branch;
                        *next_branch += 1;
                        // Both subtrees consume branch indices statically.
                        let chosen = choices[&my_index];
                        out.push(format!("branch{my_index}:{chosen}"));
                        let mut count_then = Vec::new();
                        branch_count(then_arm, &mut count_then);
                        if chosen == 0 {
                            walk(then_arm, choices, next_branch, out);
                            *next_branch += {
                                let mut c = Vec::new();
                                branch_count(else_arm, &mut c);
                                c.len()
                            };
                        } else {
                            *next_branch += count_then.len();
                            walk(else_arm, choices, next_branch, out);
                        }
                    }
                    Stmt::Switch { cases, default_arm, .. } => {
                        let my_index = *next_branch;
                        *next_branch += 1;
                        let chosen = choices[&my_index];
                        out.push(format!("branch{my_index}:{chosen}"));
                        let mut arms: Vec<&[Stmt]> = cases.iter().map(|(_, a)| a.as_slice()).collect();
                        arms.push(default_arm.as_slice());
                        for (i, arm) in arms.iter().enumerate() {
                            let mut c = Vec::new();
                            branch_count(arm, &mut c);
                            if i == chosen {
                                walk(arm, choices, next_branch, out);
                            } else {
                                *next_branch += c.len();
                            }
                        }
                    }
                    other => out.push(format!("{other:?}")),
                }
            }
        }
        let mut arm_counts = Vec::new();
        branch_count(stmts, &mut arm_counts);
        let mut combos: Vec<HashMap<usize, usize>> = vec![HashMap::new()];
        for (branch, count) in arm_counts.iter().enumerate() {
            let mut next = Vec::new();
            for combo in &combos {
                for choice in 0..*count {
                    let mut c = combo.clone();
                    c.insert(branch, choice);
                    next.push(c);
                }
            }
            combos = next;
        }
        let mut seen = std::collections::HashSet::new();
        for combo in combos {
            let mut out = Vec::new();
            walk(stmts, &combo, &mut 0, &mut out);
            seen.insert(out.join("|"));
        }
        seen.len()
    }

    #[test]
    fn two_sequential_ifs_give_four_paths() {
        let text = "<% String a = request.getParameter(\"a\");\n   if (x) { out.write(a); } else { out.write(\"s\"); }\n   if (y) { out.write(a); } else { out.write(\"t\"); } %>";
        let (doc, _) = analyze(text);
        let paths = enumerate_paths(&doc);
        assert_eq!(paths.len(), 4);
        let stmts: Vec<Stmt> = doc.top_level_stmts().into_iter().cloned().collect();
        assert_eq!(paths.len(), brute_force_path_count(&stmts));
    }

    #[test]
    fn path_count_matches_brute_force_on_nested_branches() {
        let texts = [
            "<% if (a) { if (b) { out.write(\"1\"); } } else { out.write(\"2\"); } %>",
            "<% switch (m) { case \"a\": out.write(\"1\"); break; case \"b\": out.write(\"2\"); break; } %>",
            "<% if (a) { switch (m) { case \"x\": out.write(\"1\"); break; } } %>",
            "<% if (a) { out.write(\"1\"); } if (b) { out.write(\"2\"); } if (c) { out.write(\"3\"); } %>",
        ];
        for text in texts {
            let (doc, _) = analyze(text);
            let stmts: Vec<Stmt> = doc.top_level_stmts().into_iter().cloned().collect();
            assert_eq!(
                enumerate_paths(&doc).len(),
                brute_force_path_count(&stmts),
                "mismatch for {text}"
            );
        }
    }

    #[test]
    fn paths_are_branch_free_with_numbered_captures() {
        let (doc, _) = analyze(BRANCHED);
        for path in enumerate_paths(&doc) {
            assert!(!path.stmts.iter().any(|s| matches!(s, Stmt::If { .. } | Stmt::Switch { .. })));
        }
        let text = "<% if (a) { if (b) { out.write(\"1\"); } } %>";
        let (doc, _) = analyze(text);
        let paths = enumerate_paths(&doc);
        let captures: Vec<String> = paths[0]
            .stmts
            .iter()
            .filter_map(|s| match s {
                Stmt::CondCapture { var, .. } => Some(var.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(captures, vec!["e1", "e2"]);
    }

    const TWO_SINKS: &str = "<% String pid = request.getParameter(\"pid\");\n   String addr = request.getParameter(\"addr\"); %>\n<a onclick=\"fn('<%= escapeHtml(pid) %>')\" href=\"#\"> mylink </a>\n<address><%= escapeHtml(addr) %></address>\n";

    #[test]
    fn taint_finds_flows_through_sink_expressions() {
        let (doc, config) = analyze(TWO_SINKS);
        let paths = enumerate_paths(&doc);
        let flows = taint_analysis(&paths[0], &config);
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[0].source.name, "request.getParameter");
        assert_eq!(flows[0].sink.pos.line, 3);
        assert_eq!(flows[0].encoders.len(), 1);
        assert_eq!(flows[0].encoders[0].0, EncoderId::Html);
        assert_eq!(flows[0].variable_chain, vec!["pid".to_string()]);
        assert_eq!(flows[1].sink.pos.line, 4);
    }

    #[test]
    fn database_style_source_starts_a_flow() {
        let text = "<% String customerID = request.getParameter(\"cid\");\n   String prf = searchProfile(customerID);\n   String fName = escapeHtml(prf); %>\n<a onclick=\"profile('<%= fName %>')\" href=\"#\"> View </a>\n";
        let (doc, config) = analyze(text);
        let flows = taint_analysis(&enumerate_paths(&doc)[0], &config);
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].source.name, "searchProfile");
        assert_eq!(flows[0].source.pos.line, 2);
        assert_eq!(flows[0].sink.pos.line, 4);
        assert_eq!(flows[0].encoders.iter().map(|(e, _)| *e).collect::<Vec<_>>(), vec![EncoderId::Html]);
        assert_eq!(flows[0].variable_chain, vec!["prf".to_string(), "fName".to_string()]);
    }

    #[test]
    fn literal_only_sink_has_no_flows() {
        let (doc, config) = analyze("<% out.write(\"hello\" + \"world\"); %>");
        let flows = taint_analysis(&enumerate_paths(&doc)[0], &config);
        assert!(flows.is_empty());
    }

    #[test]
    fn encoder_order_is_application_order() {
        let text = "<% String u = request.getParameter(\"u\");\n   u = escapeHtmlDecimal(u);\n   u = escapeJavaScript(u); %>\n<a onclick=\"p('<%= u %>')\" href=\"#\">x</a>\n";
        let (doc, config) = analyze(text);
        let flows = taint_analysis(&enumerate_paths(&doc)[0], &config);
        let encoders: Vec<EncoderId> = flows[0].encoders.iter().map(|(e, _)| *e).collect();
        assert_eq!(encoders, vec![EncoderId::HtmlDecimal, EncoderId::JavaScript]);
        let positions: Vec<u32> = flows[0].encoders.iter().map(|(_, p)| p.line).collect();
        assert_eq!(positions, vec![2, 3]);
    }

    #[test]
    fn concatenation_merges_flows_at_one_sink() {
        let text = "<% String a = request.getParameter(\"a\");\n   a = escapeHtml(a);\n   String b = request.getParameter(\"b\");\n   b = escapeHtml(b);\n   String c = a + \"-\" + b; %>\n<a onclick=\"s('<%= c %>')\" href=\"#\">x</a>\n";
        let (doc, config) = analyze(text);
        let flows = taint_analysis(&enumerate_paths(&doc)[0], &config);
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[0].sink.pos, flows[1].sink.pos);
        assert_eq!(flows[0].variable_chain, vec!["a".to_string(), "c".to_string()]);
        assert_eq!(flows[1].variable_chain, vec!["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn extraction_keeps_only_tainted_paths() {
        let (doc, config) = analyze(BRANCHED);
        let tests = extract_unit_tests(&doc, &config);
        assert_eq!(tests.len(), 2);
        assert_eq!(tests[0].origin_lines, vec![1, 2, 3, 4]);
        assert_eq!(tests[1].origin_lines, vec![1, 2, 3, 6]);
        assert!(tests[0].stmts.iter().any(|s| matches!(
            s,
            Stmt::CondCapture { cond: Expr::Var { name, .. }, .. } if name == "editMode"
        )));
        assert_eq!(tests[0].id, "t#1");
    }

    #[test]
    fn paths_without_sinks_are_discarded() {
        let text = "<% String ord = request.getParameter(\"o\");\n   ord = escapeHtml(ord);\n   if (editMode) { %>\n<a onclick=\"edit('<%= ord %>')\" href=\"#\">E</a>\n<% } else { %>\n<span>static</span>\n<% } %>\n";
        let (doc, config) = analyze(text);
        let tests = extract_unit_tests(&doc, &config);
        assert_eq!(tests.len(), 1);
        assert_eq!(tests[0].origin_lines, vec![1, 2, 3, 4]);
    }

    #[test]
    fn doc_without_sources_yields_no_tests() {
        let (doc, config) = analyze("<p>static only</p>");
        assert!(extract_unit_tests(&doc, &config).is_empty());
    }

    #[test]
    fn unencoded_and_identity_flows_are_flagged() {
        let text = "<% String q = request.getParameter(\"q\");\n   String r = identity(q); %>\n<p><%= q %></p>\n<p><%= r %></p>\n<p><%= escapeHtml(q) %></p>\n";
        let (doc, config) = analyze(text);
        let tests = extract_unit_tests(&doc, &config);
        let flagged = flag_unencoded_flows(&tests);
        assert_eq!(flagged.len(), 2);
        assert!(flagged.iter().all(|f| f.is_unencoded()));
        let lines: Vec<u32> = flagged.iter().map(|f| f.sink.pos.line).collect();
        assert_eq!(lines, vec![3, 4]);
    }

    #[test]
    fn write_call_sinks_respect_configuration() {
        let text = "<% String q = request.getParameter(\"q\"); out.write(q); %>";
        let (doc, mut config) = analyze(text);
        assert_eq!(extract_unit_tests(&doc, &config).len(), 1);
        config.write_call_sinks = Vec::new();
        assert!(extract_unit_tests(&doc, &config).is_empty());
    }
}
