//! Run configuration: a TOML file with `[domain]`, `[initial]`, `[scheme]`
//! and `[output]` sections.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wforge_core::scheme::SchemeConfig;
use wforge_core::{Domain, Field, Sym};

use crate::expr::parse_field;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub margin: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self { min: [0.0, 0.0], max: [1.0, 1.0], margin: 0.3 }
    }
}

/// Initial data as expressions in `x1`, `x2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub v0: String,
    pub w0: [String; 2],
    /// `[A11, A12, A22]`; when absent, `A0` is built from `f`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0: Option<[String; 3]>,
    /// Right-hand side `f` of `det D^2 v = f`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { v0: "0".into(), w0: ["0".into(), "0".into()], a0: None, f: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
    /// Points per side of exported grids.
    pub resolution: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: "out".into(), resolution: 64 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub initial: InitialSpec,
    pub scheme: SchemeConfig,
    pub output: OutputSpec,
}

/// Configuration error with a 1-based source position when known.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn position(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// The initial data as fields.
pub struct InitialFields {
    pub v0: Field,
    pub w0: [Field; 2],
    pub a0: Option<Sym>,
    pub f: Option<Field>,
}

impl RunConfig {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map(|s| position(src, s.start)).unzip();
            ConfigError { line, column, message: e.message().to_string() }
        })?;
        cfg.normalize().map_err(|message| ConfigError { line: None, column: None, message })?;
        cfg.fields_located(src)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, column: None, message: format!("{}: {e}", path.display()) })?;
        Self::parse(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Copy the domain into the scheme and run all parameter checks.
    pub fn normalize(&mut self) -> Result<(), String> {
        let d = &self.domain;
        self.scheme.domain = Domain::new(d.min, d.max, d.margin).map_err(|e| e.to_string())?;
        self.scheme.validate_c1().map_err(|e| e.to_string())?;
        self.scheme.validate_holder().map_err(|e| e.to_string())?;
        if self.initial.a0.is_none() && self.initial.f.is_none() {
            return Err("[initial] needs either `a0` or `f`".into());
        }
        if self.output.resolution < 3 {
            return Err(format!("output resolution must be at least 3, got {}", self.output.resolution));
        }
        Ok(())
    }

    fn fields_located(&self, src: &str) -> Result<InitialFields, ConfigError> {
        let conv = |key: &str, text: &str| {
            parse_field(text).map_err(|e| {
                // point at the expression inside the quoted value when it can be found
                let at = src.find(&format!("\"{text}\"")).map(|o| position(src, o + 1));
                ConfigError {
                    line: at.map(|a| a.0),
                    column: at.map(|a| a.1 + e.column - 1),
                    message: format!("expression `{key}`: {}", e.message),
                }
            })
        };
        let i = &self.initial;
        Ok(InitialFields {
            v0: conv("v0", &i.v0)?,
            w0: [conv("w0[0]", &i.w0[0])?, conv("w0[1]", &i.w0[1])?],
            a0: match &i.a0 {
                Some(a) => Some(Sym::new(conv("a0[0]", &a[0])?, conv("a0[1]", &a[1])?, conv("a0[2]", &a[2])?)),
                None => None,
            },
            f: i.f.as_deref().map(|f| conv("f", f)).transpose()?,
        })
    }

    pub fn fields(&self) -> Result<InitialFields, ConfigError> {
        self.fields_located("")
    }
}
