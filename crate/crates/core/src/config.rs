//! Tool configuration: untrusted sources, encoder bindings, sink kinds.
//!
//! Everything has embedded defaults so the tool runs config-free on the
//! bundled fixtures; a flat JSON file overrides individual keys.

use crate::encoders::{EncoderId, EncoderVariant};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

/// Inputs to taint analysis and slice interpretation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Dotted call names that return attacker-controlled data.
    pub untrusted_sources: Vec<String>,
    /// Call name -> encoder binding.
    pub encoder_map: HashMap<String, EncoderId>,
    /// Whether `<%= ... %>` expressions count as sinks.
    pub expr_sink: bool,
    /// Write-style call names that count as sinks.
    pub write_call_sinks: Vec<String>,
    /// Value returned by untrusted sources that are not under test.
    pub benign_constant: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let mut encoder_map = HashMap::new();
        for id in [
            EncoderId::Html,
            EncoderId::HtmlDecimal,
            EncoderId::JavaScript,
            EncoderId::Url,
            EncoderId::Css,
            EncoderId::Identity,
        ] {
            encoder_map.insert(id.call_name().to_string(), id);
        }
        AnalysisConfig {
            untrusted_sources: vec![
                "request.getParameter".to_string(),
                "request.getHeader".to_string(),
                "searchProfile".to_string(),
            ],
            encoder_map,
            expr_sink: true,
            write_call_sinks: vec!["out.write".to_string(), "out.print".to_string()],
            benign_constant: "1".to_string(),
        }
    }
}

impl AnalysisConfig {
    pub fn is_source(&self, callee: &str) -> bool {
        self.untrusted_sources.iter().any(|s| s == callee)
    }

    pub fn encoder_for(&self, callee: &str) -> Option<EncoderId> {
        self.encoder_map.get(callee).copied()
    }
}

/// Whole-tool configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolConfig {
    pub analysis: AnalysisConfig,
    pub variant: EncoderVariant,
    /// Closure expansion bound for attack generation; saturation holds at 2.
    pub closure_bound: u32,
    /// JavaScript APIs that execute their argument; sinks feeding them
    /// cannot be fixed by any encoder.
    pub unsafe_sinks: Vec<String>,
    /// Optional pre-generated corpus (JSON emitted by `gen-attacks --json`).
    pub corpus_path: Option<PathBuf>,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            analysis: AnalysisConfig::default(),
            variant: EncoderVariant::Permissive,
            closure_bound: 2,
            unsafe_sinks: vec![
                "setInterval".to_string(),
                "setTimeout".to_string(),
                "eval".to_string(),
            ],
            corpus_path: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: String, message: String },
}

/// On-disk shape: a flat JSON object; every key optional.
///
/// ```json
/// {
///   "untrusted_sources": ["request.getParameter"],
///   "encoders": {"escapeHtml": "Html"},
///   "sinks": ["expr", "out.write", "out.print"],
///   "unsafe_sinks": ["setInterval"],
///   "variant": "permissive",
///   "benign_constant": "1",
///   "closure_bound": 2
/// }
/// ```
#[derive(Debug, Default, Deserialize)]
struct ConfigFile {
    untrusted_sources: Option<Vec<String>>,
    encoders: Option<HashMap<String, EncoderId>>,
    sinks: Option<Vec<String>>,
    unsafe_sinks: Option<Vec<String>>,
    variant: Option<EncoderVariant>,
    benign_constant: Option<String>,
    closure_bound: Option<u32>,
    corpus_path: Option<PathBuf>,
}

impl ToolConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ConfigFile = serde_json::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config = ToolConfig::default();
        if let Some(sources) = file.untrusted_sources {
            config.analysis.untrusted_sources = sources;
        }
        if let Some(encoders) = file.encoders {
            config.analysis.encoder_map = encoders;
        }
        if let Some(sinks) = file.sinks {
            config.analysis.expr_sink = sinks.iter().any(|s| s == "expr");
            config.analysis.write_call_sinks = sinks.into_iter().filter(|s| s != "expr").collect();
        }
        if let Some(unsafe_sinks) = file.unsafe_sinks {
            config.unsafe_sinks = unsafe_sinks;
        }
        if let Some(variant) = file.variant {
            config.variant = variant;
        }
        if let Some(benign) = file.benign_constant {
            if benign.is_empty() || benign.contains(['<', '>', '&', '"', '\'', '\\']) {
                return Err(ConfigError::Invalid {
                    path: path.display().to_string(),
                    message: "benign_constant must be non-empty and free of markup metacharacters"
                        .to_string(),
                });
            }
            config.analysis.benign_constant = benign;
        }
        if let Some(bound) = file.closure_bound {
            if bound < 2 {
                return Err(ConfigError::Invalid {
                    path: path.display().to_string(),
                    message: "closure_bound must be at least 2".to_string(),
                });
            }
            config.closure_bound = bound;
        }
        config.corpus_path = file.corpus_path;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_bind_the_standard_encoders() {
        let config = ToolConfig::default();
        assert_eq!(config.analysis.encoder_for("escapeHtml"), Some(EncoderId::Html));
        assert_eq!(config.analysis.encoder_for("escapeJavaScript"), Some(EncoderId::JavaScript));
        assert_eq!(config.analysis.encoder_for("identity"), Some(EncoderId::Identity));
        assert!(config.analysis.is_source("request.getParameter"));
        assert_eq!(config.closure_bound, 2);
        assert!(config.unsafe_sinks.iter().any(|s| s == "setInterval"));
    }

    #[test]
    fn partial_config_file_overrides_defaults() {
        let dir = std::env::temp_dir().join("xssynth-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("partial.json");
        std::fs::write(&path, r#"{"untrusted_sources": ["db.load"], "variant": "strict"}"#).unwrap();
        let config = ToolConfig::load(&path).unwrap();
        assert!(config.analysis.is_source("db.load"));
        assert!(!config.analysis.is_source("request.getParameter"));
        assert_eq!(config.variant, crate::encoders::EncoderVariant::Strict);
        assert!(config.analysis.expr_sink);
    }

    #[test]
    fn bad_bound_is_rejected() {
        let dir = std::env::temp_dir().join("xssynth-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(&path, r#"{"closure_bound": 1}"#).unwrap();
        assert!(ToolConfig::load(&path).is_err());
    }
}
