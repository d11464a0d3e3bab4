use xssynth::attacks::{generate_corpus, RenderRules};
use xssynth::config::ToolConfig;
use xssynth::encoders::EncoderVariant;
use xssynth::repair::{repair, RepairResult};
use xssynth::template::parse_template;

fn try_repair(name: &str, text: &str) {
    let corpus = generate_corpus(2, &RenderRules::default());
    let config = ToolConfig::default();
    let doc = parse_template(text, name).unwrap();
    match repair(&doc, &config, &corpus, EncoderVariant::Permissive, false) {
        Ok(RepairResult::Fixed { plan, patched }) => {
            println!("{name}: FIXED rank={} scenario={:?}", plan.tried_rank, plan.scenario);
            for (pos, chain) in &plan.replacements {
                println!("   line {} col {} -> {:?}", pos.line, pos.col, chain);
            }
            let changed: Vec<&str> = patched.lines().zip(text.lines()).filter(|(a, b)| a != b).map(|(a, _)| a).collect();
            for line in changed { println!("   patched: {line}"); }
        }
        Ok(RepairResult::Unrepairable { reason }) => println!("{name}: UNREPAIRABLE {reason:?}"),
        Err(e) => println!("{name}: ERROR {e}"),
    }
}

fn main() {
    // single var, event-attr sink: expect [JavaScript] at rank 1
    try_repair("select_name", "<% String tempName = request.getParameter(\"tempName\");\n   tempName = escapeHtml(tempName); %>\n<a onclick=\"select('<%= tempName %>')\" href=\"#\"> Select </a>\n");
    // single var, script-block string sink: expect [Html, JavaScript]
    try_repair("script_greeting", "<% String user = request.getParameter(\"user\");\n   user = escapeHtml(user); %>\n<script> var greet = 'Hello <%= user %>'; fn(greet); </script>\n");
    // swapped encoder order: expect {2: JavaScript, 3: Html}
    try_repair("swapped", "<% String uname = request.getParameter(\"uname\");\n   uname = escapeHtmlDecimal(uname);\n   uname = escapeJavaScript(uname); %>\n<a onclick=\"process('<%= uname %>')\" href=\"#\"> Process </a>\n");
    // independent flows: expect JavaScript for both
    try_repair("two_flows", "<% String user = request.getParameter(\"user\");\n   user = escapeHtml(user);\n   String email = request.getParameter(\"email\");\n   email = escapeHtml(email); %>\n<a onclick=\"fn('<%= user %>')\" href=\"#\"> A </a>\n<a onclick=\"gn('<%= email %>')\" href=\"#\"> B </a>\n");
    // multi-var single sink: expect same chain [JavaScript] both sites
    try_repair("concat", "<% String user = request.getParameter(\"user\");\n   user = escapeHtml(user);\n   String email = request.getParameter(\"email\");\n   email = escapeHtml(email);\n   String fulluser = user + \"-\" + email; %>\n<a onclick=\"show('<%= fulluser %>')\" href=\"#\"> Show </a>\n");
    // shared encoder, two sinks in different contexts: expect [Html, JavaScript]
    try_repair("shared", "<% String user = request.getParameter(\"user\");\n   user = escapeHtml(user); %>\n<a onclick=\"fn('<%= user %>')\" href=\"#\"> Link </a>\n<p><%= user %></p>\n");
    // shared + extra with a solution: expect {2: Html, 4: JavaScript}
    try_repair("shared_extra", "<% String user = request.getParameter(\"user\");\n   user = escapeJavaScript(user); %>\n<p><%= user %></p>\n<% user = escapeHtml(user); %>\n<a onclick=\"fn('<%= user %>')\" href=\"#\"> Link </a>\n");
    // shared + extra with no solution: expect MultiContextSink
    try_repair("two_contexts", "<% String user = request.getParameter(\"user\");\n   user = escapeHtml(user); %>\n<a onclick=\"fn('<%= user %>')\" href=\"#\"> Link </a>\n<% user = escapeJavaScript(user); %>\n<p><%= user %></p>\n");
    // cross-unit shared: expect [Html, JavaScript]
    try_repair("branch_shared", "<% String cmp = request.getParameter(\"cmp\");\n   cmp = escapeHtml(cmp);\n   if (editMode) { %>\n<a onclick=\"edit('<%= cmp %>')\" href=\"#\"> Edit </a>\n<% } else { %>\n<p><%= cmp %></p>\n<% } %>\n");
    // cross-unit conflict: expect ConflictAcrossUnits
    try_repair("branch_conflict", "<% String target = request.getParameter(\"target\");\n   target = escapeHtml(target);\n   if (linkMode) { %>\n<a href=\"<%= target %>\"> Go </a>\n<% } else { %>\n<a onclick=\"go('<%= target %>')\" href=\"#\"> Go </a>\n<% } %>\n");
    // unsafe sink: expect UnsafeSink
    try_repair("unsafe_interval", "<% String param = request.getParameter(\"param\");\n   param = escapeJavaScript(param); %>\n<script>\nsetInterval(<%= param %>);\n</script>\n");
}
