//! Detects and repairs cross-site-scripting vulnerabilities caused by wrong
//! or mis-ordered output encoders in a small JSP-like template language.
//!
//! The pipeline: [`template`] parses a `.jspt` file, [`taint`] slices it into
//! branch-free unit tests with tainted data flows, [`attacks`] enumerates a
//! grammar-derived attack corpus, [`harness`] injects each attack and asks
//! the [`browser`] model whether the payload would execute, and [`repair`]
//! searches the candidate-encoder space for a verified fix.

pub mod attacks;
pub mod browser;
pub mod config;
pub mod encoders;
pub mod harness;
pub mod repair;
pub mod taint;
pub mod template;
