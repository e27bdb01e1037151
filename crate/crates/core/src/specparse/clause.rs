//! Recursive-descent parser for the safety-clause language.
//!
//! ```text
//! safety     := clause { ";" clause }
//! clause     := proximity | force | stretch | clips | foreign | completion | suture
//! proximity  := "not too close to" NAME [ "(" NUMBER "mm" [ "," "always" ] ")" ]
//! force      := "max force" NUMBER "N on" NAME
//! stretch    := "do not overstretch" NAME [ "(" NUMBER "x" [ "," NUMBER "N" ] ")" ]
//! clips      := "clips:" INT "proximal," INT "distal on" NAME [ "before cut" ]
//! foreign    := "no foreign objects"
//! completion := [ "free and" ] "retrieve" NAME [ "via pouch" ]
//! suture     := "suture only within" REGION "of" NAME
//! ```
//!
//! Keywords are case-insensitive. Names resolve through catalog completion.

use std::fmt;

use thiserror::Error;

use super::lexer::{tokenize, Tok, TokKind};
use crate::catalog::{Catalog, ResolveError};
use crate::model::{SafetyRule, Simlet, SimletId, ToolId};

pub const DEFAULT_MIN_DISTANCE_MM: f64 = 5.0;
pub const DEFAULT_TUBULAR_MAX_FORCE_N: f64 = 2.0;
pub const DEFAULT_MAX_FORCE_N: f64 = 5.0;
pub const DEFAULT_MAX_STRETCH: f64 = 1.5;

const CLAUSE_STARTS: [&str; 7] = [
    "not too close to",
    "max force",
    "do not overstretch",
    "clips:",
    "no foreign objects",
    "free and retrieve",
    "suture only within",
];

/// Force limit used when a clause does not state one.
pub fn default_max_force(s: &Simlet) -> f64 {
    s.force_threshold.unwrap_or(if s.kind.is_tubular() {
        DEFAULT_TUBULAR_MAX_FORCE_N
    } else {
        DEFAULT_MAX_FORCE_N
    })
}

pub fn default_max_stretch(s: &Simlet) -> f64 {
    s.stretch_threshold.unwrap_or(DEFAULT_MAX_STRETCH)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClauseErrorKind {
    #[error("syntax error: expected {}, found {found}", fmt_expected(.expected))]
    Syntax {
        expected: Vec<String>,
        found: String,
    },
    #[error("{0}")]
    Name(ResolveError),
    #[error("number must be positive, got {0}")]
    NonPositive(f64),
    #[error("unknown suture region '{region}' of '{name}'")]
    UnknownRegion { region: String, name: String },
    #[error("proximity clause needs the step's tool")]
    MissingTool,
}

fn fmt_expected(expected: &[String]) -> String {
    match expected {
        [one] => format!("'{one}'"),
        many => format!(
            "one of {}",
            many.iter()
                .map(|e| format!("'{e}'"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

/// A positioned clause error. `token` is the 1-based token index within the
/// clause, `column` the 1-based character column in the whole text.
#[derive(Debug, Clone, PartialEq)]
pub struct ClauseError {
    pub token: usize,
    pub column: usize,
    pub kind: ClauseErrorKind,
}

impl fmt::Display for ClauseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ClauseErrorKind::Syntax { .. } => write!(
                f,
                "syntax error at token {} (column {}): {}",
                self.token,
                self.column,
                self.kind.to_string().trim_start_matches("syntax error: ")
            ),
            k => write!(f, "{k} (column {})", self.column),
        }
    }
}

impl std::error::Error for ClauseError {}

/// Parses a safety entry into rules. `step_tool` binds proximity clauses to
/// the step's tool; it is `None` for the procedure-wide completion entry.
pub fn parse_safety(
    text: &str,
    catalog: &Catalog,
    step_tool: Option<&ToolId>,
) -> Result<Vec<SafetyRule>, ClauseError> {
    let toks = tokenize(text);
    if toks.is_empty() {
        return Ok(Vec::new());
    }
    let end_column = text.chars().count() + 1;
    let mut rules = Vec::new();
    for clause in toks.split(|t| t.kind == TokKind::Semicolon) {
        let mut p = ClauseParser {
            src: text,
            toks: clause,
            pos: 0,
            end_column: clause_end_column(&toks, clause, end_column),
            catalog,
            step_tool,
        };
        rules.push(p.clause()?);
    }
    Ok(rules)
}

/// Column just past the clause: its terminating ';' or the end of text.
fn clause_end_column(all: &[Tok], clause: &[Tok], end_column: usize) -> usize {
    let last = match clause.last() {
        Some(t) => t,
        None => return end_column,
    };
    all.iter()
        .find(|t| t.start >= last.end && t.kind == TokKind::Semicolon)
        .map(|t| t.column)
        .unwrap_or(end_column)
}

struct ClauseParser<'a> {
    src: &'a str,
    toks: &'a [Tok],
    pos: usize,
    end_column: usize,
    catalog: &'a Catalog,
    step_tool: Option<&'a ToolId>,
}

type PResult<T> = Result<T, ClauseError>;

impl<'a> ClauseParser<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos)
    }

    fn column_at(&self, idx: usize) -> usize {
        self.toks.get(idx).map(|t| t.column).unwrap_or(self.end_column)
    }

    fn error_at(&self, idx: usize, kind: ClauseErrorKind) -> ClauseError {
        ClauseError {
            token: idx + 1,
            column: self.column_at(idx),
            kind,
        }
    }

    fn syntax(&self, expected: &[&str]) -> ClauseError {
        let found = self
            .peek()
            .map(|t| format!("'{}'", t.text(self.src)))
            .unwrap_or_else(|| "end of clause".to_string());
        self.error_at(
            self.pos,
            ClauseErrorKind::Syntax {
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found,
            },
        )
    }

    fn eat_word(&mut self, word: &str) -> bool {
        match self.peek() {
            Some(t) if t.is_word(self.src, word) => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    fn expect_word(&mut self, word: &str) -> PResult<()> {
        if self.eat_word(word) {
            Ok(())
        } else {
            Err(self.syntax(&[word]))
        }
    }

    fn expect_words(&mut self, words: &[&str]) -> PResult<()> {
        words.iter().try_for_each(|w| self.expect_word(w))
    }

    fn eat(&mut self, kind: &TokKind) -> bool {
        match self.peek() {
            Some(t) if &t.kind == kind => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    fn expect(&mut self, kind: TokKind, shown: &str) -> PResult<()> {
        if self.eat(&kind) {
            Ok(())
        } else {
            Err(self.syntax(&[shown]))
        }
    }

    fn positive_number(&mut self) -> PResult<f64> {
        match self.peek().map(|t| &t.kind) {
            Some(TokKind::Number(v)) => {
                let v = *v;
                if v <= 0.0 {
                    return Err(self.error_at(self.pos, ClauseErrorKind::NonPositive(v)));
                }
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.syntax(&["NUMBER"])),
        }
    }

    fn count(&mut self) -> PResult<u32> {
        match self.peek().map(|t| &t.kind) {
            Some(TokKind::Number(v)) if *v >= 0.0 && v.fract() == 0.0 && *v <= u32::MAX as f64 => {
                let v = *v as u32;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.syntax(&["INT"])),
        }
    }

    fn expect_end(&self) -> PResult<()> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            Err(self.syntax(&["end of clause"]))
        }
    }

    /// Consumes tokens up to (not including) the first token matching `stop`
    /// and returns the covered source text.
    fn name_until(&mut self, stop: impl Fn(&Tok) -> bool) -> PResult<(usize, &'a str)> {
        let first = self.pos;
        while let Some(t) = self.peek() {
            if stop(t) {
                break;
            }
            self.pos += 1;
        }
        if self.pos == first {
            return Err(self.syntax(&["NAME"]));
        }
        Ok((first, self.span(first, self.pos)))
    }

    fn span(&self, from: usize, to: usize) -> &'a str {
        self.src[self.toks[from].start..self.toks[to - 1].end].trim()
    }

    fn resolve(&self, tok_idx: usize, written: &str) -> PResult<SimletId> {
        self.catalog
            .resolve_simlet(written)
            .map_err(|e| self.error_at(tok_idx, ClauseErrorKind::Name(e)))
    }

    fn simlet(&self, id: &SimletId) -> &'a Simlet {
        self.catalog.simlet(id).expect("resolved ids exist")
    }

    /// True when the tokens ending at the clause end spell `words`; those
    /// tokens are then excluded from the clause.
    fn strip_suffix(&mut self, words: &[&str]) -> bool {
        let n = words.len();
        if self.toks.len() < self.pos + n + 1 {
            return false;
        }
        let tail = &self.toks[self.toks.len() - n..];
        if tail.iter().zip(words).all(|(t, w)| t.is_word(self.src, w)) {
            self.toks = &self.toks[..self.toks.len() - n];
            true
        } else {
            false
        }
    }

    fn clause(&mut self) -> PResult<SafetyRule> {
        let first = match self.peek() {
            Some(t) if t.kind == TokKind::Word => t.text(self.src).to_lowercase(),
            _ => return Err(self.syntax(&CLAUSE_STARTS)),
        };
        match first.as_str() {
            "not" => self.proximity(),
            "max" => self.force(),
            "do" => self.stretch(),
            "clips" => self.clips(),
            "no" => {
                self.expect_words(&["no", "foreign", "objects"])?;
                self.expect_end()?;
                Ok(SafetyRule::NoForeignBodies)
            }
            "free" | "retrieve" => self.completion(),
            "suture" => self.suture(),
            _ => Err(self.syntax(&CLAUSE_STARTS)),
        }
    }

    fn proximity(&mut self) -> PResult<SafetyRule> {
        let kw_at = self.pos;
        self.expect_words(&["not", "too", "close", "to"])?;
        let (name_at, name) = self.name_until(|t| t.kind == TokKind::LParen)?;
        let protected_anatomy_id = self.resolve(name_at, name)?;
        let mut min_distance = DEFAULT_MIN_DISTANCE_MM;
        let mut active_only = true;
        if self.eat(&TokKind::LParen) {
            min_distance = self.positive_number()?;
            self.expect_word("mm")?;
            if self.eat(&TokKind::Comma) {
                self.expect_word("always")?;
                active_only = false;
            }
            self.expect(TokKind::RParen, ")")?;
        }
        self.expect_end()?;
        let tool_id = self
            .step_tool
            .cloned()
            .ok_or_else(|| self.error_at(kw_at, ClauseErrorKind::MissingTool))?;
        Ok(SafetyRule::Proximity {
            tool_id,
            protected_anatomy_id,
            min_distance,
            active_only,
        })
    }

    fn force(&mut self) -> PResult<SafetyRule> {
        self.expect_words(&["max", "force"])?;
        let max_force = self.positive_number()?;
        self.expect_words(&["N", "on"])?;
        let (name_at, name) = self.name_until(|_| false)?;
        let anatomy_id = self.resolve(name_at, name)?;
        Ok(SafetyRule::ForceLimit {
            anatomy_id,
            max_force,
            max_stretch: None,
        })
    }

    fn stretch(&mut self) -> PResult<SafetyRule> {
        self.expect_words(&["do", "not", "overstretch"])?;
        let (name_at, name) = self.name_until(|t| t.kind == TokKind::LParen)?;
        let anatomy_id = self.resolve(name_at, name)?;
        let simlet = self.simlet(&anatomy_id);
        let mut max_stretch = default_max_stretch(simlet);
        let mut max_force = default_max_force(simlet);
        if self.eat(&TokKind::LParen) {
            max_stretch = self.positive_number()?;
            self.expect_word("x")?;
            if self.eat(&TokKind::Comma) {
                max_force = self.positive_number()?;
                self.expect_word("N")?;
            }
            self.expect(TokKind::RParen, ")")?;
        }
        self.expect_end()?;
        Ok(SafetyRule::ForceLimit {
            anatomy_id,
            max_force,
            max_stretch: Some(max_stretch),
        })
    }

    fn clips(&mut self) -> PResult<SafetyRule> {
        self.expect_word("clips")?;
        self.expect(TokKind::Colon, ":")?;
        let required_proximal = self.count()?;
        self.expect_word("proximal")?;
        self.expect(TokKind::Comma, ",")?;
        let required_distal = self.count()?;
        self.expect_words(&["distal", "on"])?;
        let must_precede_cut = self.strip_suffix(&["before", "cut"]);
        let (name_at, name) = self.name_until(|_| false)?;
        let vessel_id = self.resolve(name_at, name)?;
        Ok(SafetyRule::ClipLayout {
            vessel_id,
            required_proximal,
            required_distal,
            must_precede_cut,
        })
    }

    fn completion(&mut self) -> PResult<SafetyRule> {
        let must_be_freed = self.eat_word("free");
        if must_be_freed {
            self.expect_word("and")?;
        }
        self.expect_word("retrieve")?;
        let via_pouch = self.strip_suffix(&["via", "pouch"]);
        let (name_at, name) = self.name_until(|_| false)?;
        let target_anatomy_id = self.resolve(name_at, name)?;
        Ok(SafetyRule::Completion {
            target_anatomy_id,
            must_be_freed,
            must_be_retrieved_via_pouch: via_pouch,
        })
    }

    fn suture(&mut self) -> PResult<SafetyRule> {
        self.expect_words(&["suture", "only", "within"])?;
        let start = self.pos;
        let splits: Vec<usize> = (start + 1..self.toks.len().saturating_sub(1))
            .filter(|&i| self.toks[i].is_word(self.src, "of"))
            .collect();
        if splits.is_empty() {
            if start == self.toks.len() {
                return Err(self.syntax(&["REGION"]));
            }
            self.pos = self.toks.len();
            return Err(self.syntax(&["of"]));
        }
        let mut first_error = None;
        let mut matches = Vec::new();
        for &of_at in &splits {
            let region = self.span(start, of_at);
            let name = self.span(of_at + 1, self.toks.len());
            match self.catalog.resolve_simlet(name) {
                Ok(id) => {
                    if self.simlet(&id).suture_region(region).is_some() {
                        matches.push((id, region));
                    } else if first_error.is_none() {
                        first_error = Some(self.error_at(
                            start,
                            ClauseErrorKind::UnknownRegion {
                                region: region.to_string(),
                                name: name.to_string(),
                            },
                        ));
                    }
                }
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some(self.error_at(of_at + 1, ClauseErrorKind::Name(e)));
                    }
                }
            }
        }
        match matches.len() {
            1 => {
                let (anatomy_id, region) = matches.pop().expect("one match");
                self.pos = self.toks.len();
                Ok(SafetyRule::SutureRegion {
                    anatomy_id,
                    region_id: region.to_string(),
                })
            }
            0 => Err(first_error.expect("at least one split was tried")),
            _ => Err(self.error_at(
                start,
                ClauseErrorKind::Syntax {
                    expected: vec!["unambiguous REGION of NAME".into()],
                    found: format!("{} readings", matches.len()),
                },
            )),
        }
    }
}

/// Canonical text for one rule; numeric parameters are always explicit.
pub fn format_rule(rule: &SafetyRule, catalog: &Catalog) -> String {
    match rule {
        SafetyRule::Proximity {
            protected_anatomy_id,
            min_distance,
            active_only,
            ..
        } => format!(
            "not too close to {} ({} mm{})",
            catalog.simlet_name(protected_anatomy_id),
            min_distance,
            if *active_only { "" } else { ", always" }
        ),
        SafetyRule::ForceLimit {
            anatomy_id,
            max_force,
            max_stretch: None,
        } => format!("max force {} N on {}", max_force, catalog.simlet_name(anatomy_id)),
        SafetyRule::ForceLimit {
            anatomy_id,
            max_force,
            max_stretch: Some(s),
        } => format!(
            "do not overstretch {} ({}x, {} N)",
            catalog.simlet_name(anatomy_id),
            s,
            max_force
        ),
        SafetyRule::NoForeignBodies => "no foreign objects".to_string(),
        SafetyRule::ClipLayout {
            vessel_id,
            required_proximal,
            required_distal,
            must_precede_cut,
        } => format!(
            "clips: {} proximal, {} distal on {}{}",
            required_proximal,
            required_distal,
            catalog.simlet_name(vessel_id),
            if *must_precede_cut { " before cut" } else { "" }
        ),
        SafetyRule::Completion {
            target_anatomy_id,
            must_be_freed,
            must_be_retrieved_via_pouch,
        } => format!(
            "{}retrieve {}{}",
            if *must_be_freed { "free and " } else { "" },
            catalog.simlet_name(target_anatomy_id),
            if *must_be_retrieved_via_pouch { " via pouch" } else { "" }
        ),
        SafetyRule::SutureRegion {
            anatomy_id,
            region_id,
        } => format!(
            "suture only within {} of {}",
            region_id,
            catalog.simlet_name(anatomy_id)
        ),
    }
}

pub fn format_safety(rules: &[SafetyRule], catalog: &Catalog) -> String {
    rules
        .iter()
        .map(|r| format_rule(r, catalog))
        .collect::<Vec<_>>()
        .join("; ")
}
