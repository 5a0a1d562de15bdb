//! Versioned JSON scenario documents.

use std::fmt;

use serde::{Deserialize, Serialize};
use uavcol_core::env::Scenario;
use uavcol_core::{Aabb, Error, Vec3};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub world_bounds: Aabb,
    pub depot: Vec3,
    pub items: Vec<Vec3>,
    pub obstacles: Vec<Aabb>,
    pub v_max: f64,
    pub a_max: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub hover_speed_tol: f64,
    pub seed: u64,
}

/// A rejected scenario document, with the 1-based line of the offending value
/// when it can be located.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFileError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ScenarioFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ScenarioFileError {}

impl ScenarioFile {
    pub fn from_scenario(scenario: &Scenario, seed: u64) -> Self {
        Self {
            version: FORMAT_VERSION,
            world_bounds: scenario.world_bounds,
            depot: scenario.depot,
            items: scenario.items.clone(),
            obstacles: scenario.obstacles.clone(),
            v_max: scenario.v_max,
            a_max: scenario.a_max,
            delta: scenario.delta,
            epsilon: scenario.epsilon,
            hover_speed_tol: scenario.hover_speed_tol,
            seed,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            world_bounds: self.world_bounds,
            depot: self.depot,
            items: self.items.clone(),
            obstacles: self.obstacles.clone(),
            v_max: self.v_max,
            a_max: self.a_max,
            delta: self.delta,
            epsilon: self.epsilon,
            hover_speed_tol: self.hover_speed_tol,
        }
    }

    /// Canonical text form: pretty JSON with a trailing newline.
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a document.
    pub fn parse(text: &str) -> Result<Self, ScenarioFileError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioFileError {
            line: (e.line() > 0).then_some(e.line()),
            field: None,
            message: strip_position(&e.to_string()),
        })?;
        if file.version != FORMAT_VERSION {
            return Err(ScenarioFileError {
                line: locate(text, "version"),
                field: Some("version".into()),
                message: format!("unsupported version {}, expected {FORMAT_VERSION}", file.version),
            });
        }
        match file.scenario().validate() {
            Ok(()) => Ok(file),
            Err(Error::InvalidScenario { field, message }) => {
                Err(ScenarioFileError { line: locate(text, &field), field: Some(field), message })
            }
            Err(e) => Err(ScenarioFileError { line: None, field: None, message: e.to_string() }),
        }
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Seg {
    Key(String),
    Index(usize),
}

fn parse_path(path: &str) -> Vec<Seg> {
    let mut out = Vec::new();
    for part in path.split('.') {
        let (name, rest) = part.split_once('[').unwrap_or((part, ""));
        if !name.is_empty() {
            out.push(Seg::Key(name.to_string()));
        }
        for idx in rest.split('[') {
            if let Ok(i) = idx.trim_end_matches(']').parse() {
                out.push(Seg::Index(i));
            }
        }
    }
    out
}

/// 1-based line where the value at `path` (e.g. `items[2]`) starts in a
/// well-formed JSON document.
pub fn locate(text: &str, path: &str) -> Option<usize> {
    let target = parse_path(path);
    let mut w = Walker { b: text.as_bytes(), i: 0, line: 1 };
    w.value(&mut Vec::new(), &target)
}

struct Walker<'a> {
    b: &'a [u8],
    i: usize,
    line: usize,
}

impl Walker<'_> {
    fn peek(&self) -> Option<u8> {
        self.b.get(self.i).copied()
    }

    fn ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_ascii_whitespace() {
                break;
            }
            if c == b'\n' {
                self.line += 1;
            }
            self.i += 1;
        }
    }

    fn string(&mut self) -> Option<String> {
        self.i += 1;
        let start = self.i;
        while let Some(c) = self.peek() {
            match c {
                b'\\' => self.i += 2,
                b'"' => {
                    let s = String::from_utf8_lossy(&self.b[start..self.i]).into_owned();
                    self.i += 1;
                    return Some(s);
                }
                _ => self.i += 1,
            }
        }
        None
    }

    fn value(&mut self, cur: &mut Vec<Seg>, target: &[Seg]) -> Option<usize> {
        self.ws();
        if cur.as_slice() == target {
            return Some(self.line);
        }
        match self.peek()? {
            b'{' => {
                self.i += 1;
                loop {
                    self.ws();
                    match self.peek()? {
                        b'}' => {
                            self.i += 1;
                            return None;
                        }
                        b',' => self.i += 1,
                        b'"' => {
                            let key = self.string()?;
                            self.ws();
                            self.i += 1; // ':'
                            cur.push(Seg::Key(key));
                            if let Some(l) = self.value(cur, target) {
                                return Some(l);
                            }
                            cur.pop();
                        }
                        _ => return None,
                    }
                }
            }
            b'[' => {
                self.i += 1;
                let mut idx = 0;
                loop {
                    self.ws();
                    match self.peek()? {
                        b']' => {
                            self.i += 1;
                            return None;
                        }
                        b',' => self.i += 1,
                        _ => {
                            cur.push(Seg::Index(idx));
                            if let Some(l) = self.value(cur, target) {
                                return Some(l);
                            }
                            cur.pop();
                            idx += 1;
                        }
                    }
                }
            }
            b'"' => {
                self.string()?;
                None
            }
            _ => {
                while let Some(c) = self.peek() {
                    if matches!(c, b',' | b']' | b'}') || c.is_ascii_whitespace() {
                        break;
                    }
                    self.i += 1;
                }
                None
            }
        }
    }
}
