//! Command-line front end.
//!
//! Exit codes: 0 clean, 1 findings or unrepairable vulnerabilities present,
//! 2 usage or parse errors.

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use xssynth::attacks::{self, AttackString, RenderRules};
use xssynth::config::ToolConfig;
use xssynth::encoders::{chain_display, EncoderVariant};
use xssynth::harness::{self, DetectionReport};
use xssynth::repair::{self, RepairResult};
use xssynth::template::{parse_template, TemplateDoc};

#[derive(Parser)]
#[command(name = "xssynth", version, about = "Detects and repairs XSS bugs caused by misused output encoders in JSP-like templates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the grammar-derived attack corpus
    GenAttacks {
        /// Closure expansion bound (the corpus saturates at 2)
        #[arg(long)]
        bound: Option<u32>,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Dump the XSS unit tests extracted from templates
    Extract {
        files: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run detection over templates
    Detect {
        files: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        /// Use the string-matching oracle instead of the browser model
        #[arg(long)]
        baseline: bool,
        /// JavaScript encoder behavior: permissive or strict
        #[arg(long)]
        variant: Option<String>,
    },
    /// Search encoder replacements for detected vulnerabilities
    Repair {
        files: Vec<PathBuf>,
        /// Rewrite the template instead of writing `<file>.fixed`
        #[arg(long)]
        in_place: bool,
        /// Disable repair plans beyond the candidate list proper
        #[arg(long)]
        strict_paper: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn init_thread_pool() {
    if let Ok(threads) = std::env::var("XSSYNTH_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ToolConfig, String> {
    match path {
        Some(p) => ToolConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(ToolConfig::default()),
    }
}

fn parse_variant(spec: &Option<String>, fallback: EncoderVariant) -> Result<EncoderVariant, String> {
    match spec.as_deref() {
        None => Ok(fallback),
        Some("permissive") => Ok(EncoderVariant::Permissive),
        Some("strict") => Ok(EncoderVariant::Strict),
        Some(other) => Err(format!("unknown variant {other:?}; use permissive or strict")),
    }
}

fn build_corpus(config: &ToolConfig) -> Result<Vec<AttackString>, String> {
    if let Some(path) = &config.corpus_path {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read corpus {}: {e}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| format!("invalid corpus {}: {e}", path.display()))?;
        let entries = value.as_array().ok_or("corpus file must be a JSON array")?;
        let mut corpus = Vec::with_capacity(entries.len());
        for entry in entries {
            let rendered = entry
                .get("rendered")
                .and_then(|r| r.as_str())
                .ok_or("corpus entries need a rendered field")?;
            corpus.push(AttackString {
                tokens: Vec::new(),
                payload_index: 0,
                origin: attacks::GrammarName::Js,
                trim: (0, 0),
                rendered: rendered.to_string(),
            });
        }
        Ok(corpus)
    } else {
        Ok(attacks::generate_corpus(config.closure_bound, &RenderRules::default()))
    }
}

fn load_template(path: &Path) -> Result<TemplateDoc, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_template(&text, &name).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::GenAttacks { bound, json, config } => {
            let config = load_config(&config)?;
            let bound = bound.unwrap_or(config.closure_bound);
            if bound < 2 {
                return Err("--bound must be at least 2".to_string());
            }
            let corpus = attacks::generate_corpus(bound, &RenderRules::default());
            if json {
                let entries: Vec<serde_json::Value> = corpus
                    .iter()
                    .map(|a| {
                        serde_json::json!({
                            "origin": a.origin.to_string(),
                            "trim": [a.trim.0, a.trim.1],
                            "rendered": a.rendered,
                        })
                    })
                    .collect();
                println!("{}", serde_json::to_string_pretty(&entries).unwrap());
            } else {
                for attack in &corpus {
                    println!("{}\t{},{}\t{}", attack.origin, attack.trim.0, attack.trim.1, attack.rendered);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Extract { files, config, json } => {
            let config = load_config(&config)?;
            require_files(&files)?;
            let mut documents = Vec::new();
            for path in &files {
                let doc = load_template(path)?;
                let normalized = xssynth::template::normalize_writes(&doc);
                let tests = xssynth::taint::extract_unit_tests(&normalized, &config.analysis);
                documents.push((path, tests));
            }
            if json {
                let value: Vec<serde_json::Value> = documents
                    .iter()
                    .map(|(path, tests)| {
                        serde_json::json!({
                            "template": path.display().to_string(),
                            "unit_tests": tests.iter().map(unit_test_json).collect::<Vec<_>>(),
                        })
                    })
                    .collect();
                println!("{}", serde_json::to_string_pretty(&value).unwrap());
            } else {
                for (path, tests) in &documents {
                    println!("{} ({} unit tests)", path.display(), tests.len());
                    for unit in tests {
                        println!("  {}: lines {:?}", unit.id, unit.origin_lines);
                        for flow in &unit.flows {
                            let encoders: Vec<String> =
                                flow.encoders.iter().map(|(id, pos)| format!("{id}@{}", pos.line)).collect();
                            println!(
                                "    {} @{} -> sink line {} via [{}]",
                                flow.source.name,
                                flow.source.pos.line,
                                flow.sink.pos.line,
                                encoders.join(", ")
                            );
                        }
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Detect { files, config, json, baseline, variant } => {
            let config = load_config(&config)?;
            let variant = parse_variant(&variant, config.variant)?;
            require_files(&files)?;
            let corpus = build_corpus(&config)?;
            let docs: Vec<TemplateDoc> = files.iter().map(|p| load_template(p)).collect::<Result<_, _>>()?;
            let reports: Vec<Result<DetectionReport, String>> = docs
                .par_iter()
                .map(|doc| {
                    let run = if baseline {
                        harness::baseline_string_match(doc, &config.analysis, &corpus, variant)
                    } else {
                        harness::detect(doc, &config.analysis, &corpus, variant)
                    };
                    run.map_err(|e| e.to_string())
                })
                .collect();
            let mut any_findings = false;
            let mut values = Vec::new();
            for (path, report) in files.iter().zip(reports) {
                let report = report?;
                if !report.is_clean() {
                    any_findings = true;
                }
                if json {
                    values.push(report_json(path, &report));
                } else {
                    print_report(path, &report);
                }
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&values).unwrap());
            }
            Ok(if any_findings { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Repair { files, in_place, strict_paper, config, json } => {
            let config = load_config(&config)?;
            require_files(&files)?;
            let corpus = build_corpus(&config)?;
            let docs: Vec<TemplateDoc> = files.iter().map(|p| load_template(p)).collect::<Result<_, _>>()?;
            let outcomes: Vec<Result<Option<RepairResult>, String>> = docs
                .par_iter()
                .map(|doc| match repair::repair(doc, &config, &corpus, config.variant, strict_paper) {
                    Ok(result) => Ok(Some(result)),
                    Err(repair::RepairError::NothingToRepair) => Ok(None),
                    Err(e) => Err(e.to_string()),
                })
                .collect();
            let mut any_unrepaired = false;
            let mut values = Vec::new();
            for (path, outcome) in files.iter().zip(outcomes) {
                match outcome? {
                    None => {
                        if json {
                            values.push(serde_json::json!({
                                "template": path.display().to_string(),
                                "status": "clean",
                            }));
                        } else {
                            println!("{}: nothing to repair", path.display());
                        }
                    }
                    Some(RepairResult::Fixed { plan, patched }) => {
                        let target = if in_place {
                            path.clone()
                        } else {
                            let mut fixed = path.clone().into_os_string();
                            fixed.push(".fixed");
                            PathBuf::from(fixed)
                        };
                        std::fs::write(&target, &patched)
                            .map_err(|e| format!("cannot write {}: {e}", target.display()))?;
                        if json {
                            values.push(serde_json::json!({
                                "template": path.display().to_string(),
                                "status": "fixed",
                                "scenario": plan.scenario,
                                "tried_rank": plan.tried_rank,
                                "extension": plan.extension,
                                "output": target.display().to_string(),
                                "replacements": plan.replacements.iter().map(|(pos, chain)| {
                                    serde_json::json!({
                                        "line": pos.line,
                                        "col": pos.col,
                                        "chain": chain_display(chain),
                                    })
                                }).collect::<Vec<_>>(),
                            }));
                        } else {
                            println!(
                                "{}: fixed ({:?}, {} candidates tried before success) -> {}",
                                path.display(),
                                plan.scenario,
                                plan.tried_rank,
                                target.display()
                            );
                            for (pos, chain) in &plan.replacements {
                                println!("  line {}: {}", pos.line, chain_display(chain));
                            }
                        }
                    }
                    Some(RepairResult::Unrepairable { reason }) => {
                        any_unrepaired = true;
                        if json {
                            values.push(serde_json::json!({
                                "template": path.display().to_string(),
                                "status": "unrepairable",
                                "reason": reason,
                            }));
                        } else {
                            println!("{}: unrepairable ({reason:?}); deferred to the developer", path.display());
                        }
                    }
                }
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&values).unwrap());
            }
            Ok(if any_unrepaired { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
    }
}

fn require_files(files: &[PathBuf]) -> Result<(), String> {
    if files.is_empty() {
        return Err("no input files given".to_string());
    }
    Ok(())
}

fn unit_test_json(unit: &xssynth::taint::XssUnitTest) -> serde_json::Value {
    serde_json::json!({
        "id": unit.id,
        "origin_lines": unit.origin_lines,
        "flows": unit.flows.iter().map(|flow| {
            serde_json::json!({
                "source": flow.source.name,
                "source_line": flow.source.pos.line,
                "sink_line": flow.sink.pos.line,
                "encoders": flow.encoders.iter().map(|(id, pos)| {
                    serde_json::json!({"encoder": id.call_name(), "line": pos.line})
                }).collect::<Vec<_>>(),
                "variables": flow.variable_chain,
                "unencoded": flow.is_unencoded(),
            })
        }).collect::<Vec<_>>(),
    })
}

fn report_json(path: &Path, report: &DetectionReport) -> serde_json::Value {
    serde_json::json!({
        "template": path.display().to_string(),
        "findings": report.findings.iter().map(|f| {
            serde_json::json!({
                "template": path.display().to_string(),
                "unit_test_id": f.unit_test_id,
                "sink_line": f.sink_line,
                "variable": f.focus_variable,
                "attack_rendered": f.attack.rendered,
                "context": f.context,
            })
        }).collect::<Vec<_>>(),
        "static_findings": report.static_findings.iter().map(|f| {
            serde_json::json!({
                "source": f.source.name,
                "sink_line": f.sink.pos.line,
                "variables": f.variable_chain,
            })
        }).collect::<Vec<_>>(),
        "stats": {
            "unit_tests": report.stats.unit_tests,
            "attacks_tried": report.stats.attacks_tried,
            "elapsed_ms": report.stats.elapsed.as_millis() as u64,
        },
    })
}

fn print_report(path: &Path, report: &DetectionReport) {
    if report.is_clean() {
        println!(
            "{}: clean ({} unit tests, {} attack runs, {:?})",
            path.display(),
            report.stats.unit_tests,
            report.stats.attacks_tried,
            report.stats.elapsed
        );
        return;
    }
    println!("{}:", path.display());
    let sinks = report.vulnerable_sinks();
    for (line, variable) in &sinks {
        let attacks: Vec<&str> = report
            .findings
            .iter()
            .filter(|f| f.sink_line == *line && &f.focus_variable == variable)
            .map(|f| f.attack.rendered.as_str())
            .take(3)
            .collect();
        let context = report
            .findings
            .iter()
            .find(|f| f.sink_line == *line && &f.focus_variable == variable)
            .map(|f| format!("{:?}", f.context))
            .unwrap_or_default();
        println!("  line {line} [{context}] variable {variable}: e.g. {}", attacks.join(" | "));
    }
    for flow in &report.static_findings {
        println!(
            "  line {} variable {}: unencoded flow from {} (static)",
            flow.sink.pos.line,
            flow.variable_chain.first().map(String::as_str).unwrap_or("?"),
            flow.source.name
        );
    }
}
