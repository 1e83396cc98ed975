//! JSON model and function files.
//!
//! A model file lists off-diagonal rates as `[i, j, rate]` triplets:
//!
//! ```json
//! { "n": 3, "rates": [[0, 1, 1.0], [1, 0, 2.0]], "labels": ["a", "b", "c"] }
//! ```
//!
//! Diagonal triplets are accepted and ignored (the diagonal is recomputed);
//! duplicate off-diagonal triplets are rejected. A function file holds
//! `{ "values": [...], "range": [a, b] }`, where `range` may be omitted to
//! use `[min, max]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::generator::{GeneratorMatrix, ObservableFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub rates: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl ModelFile {
    pub fn from_generator(q: &GeneratorMatrix) -> Self {
        Self {
            n: q.n(),
            rates: q.off_diagonal().collect(),
            labels: q.labels().map(<[String]>::to_vec),
        }
    }

    pub fn into_generator(self) -> Result<GeneratorMatrix> {
        let q = GeneratorMatrix::from_rates(self.n, self.rates)?;
        match self.labels {
            Some(labels) => q.with_labels(labels),
            None => Ok(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
}

impl FunctionFile {
    pub fn into_function(self) -> Result<ObservableFunction> {
        match self.range {
            Some((a, b)) => ObservableFunction::new(self.values, a, b),
            None => ObservableFunction::from_values(self.values),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).or_else(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).or_else(|e| invalid(format!("malformed {what}: {e}")))
}

pub fn parse_model(text: &str) -> Result<GeneratorMatrix> {
    parse::<ModelFile>(text, "model")?.into_generator()
}

pub fn parse_function(text: &str) -> Result<ObservableFunction> {
    parse::<FunctionFile>(text, "function")?.into_function()
}

/// Reads a model file. Unreadable files are reported as invalid input.
pub fn load_model(path: &Path) -> Result<GeneratorMatrix> {
    parse_model(&read(path)?).or_else(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn load_function(path: &Path) -> Result<ObservableFunction> {
    parse_function(&read(path)?).or_else(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn model_to_json(q: &GeneratorMatrix) -> String {
    serde_json::to_string_pretty(&ModelFile::from_generator(q)).expect("model serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::three_state_example;

    #[test]
    fn round_trip() {
        let q = three_state_example();
        let back = parse_model(&model_to_json(&q)).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn labels_and_diagonal() {
        let q = parse_model(r#"{"n": 2, "rates": [[0,1,2.0],[1,0,3.0],[0,0,-9.0]], "labels": ["up","down"]}"#)
            .unwrap();
        assert_eq!(q.diagonal(0), -2.0);
        assert_eq!(q.labels().unwrap()[1], "down");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_model("{\"n\": 2,\n \"rates\": [[0,1,]]}").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn field_errors_name_the_field() {
        let err = parse_model(r#"{"rates": []}"#).unwrap_err().to_string();
        assert!(err.contains("`n`"), "{err}");
        let err = parse_model(r#"{"n": 1, "rates": [], "extra": 1}"#).unwrap_err().to_string();
        assert!(err.contains("extra"), "{err}");
    }

    #[test]
    fn duplicate_and_out_of_range_rates() {
        assert!(parse_model(r#"{"n": 2, "rates": [[0,1,1.0],[0,1,2.0]]}"#).is_err());
        assert!(parse_model(r#"{"n": 2, "rates": [[0,2,1.0]]}"#).is_err());
    }

    #[test]
    fn functions() {
        let g = parse_function(r#"{"values": [0, 1, 0.5], "range": [-1, 1]}"#).unwrap();
        assert_eq!(g.range(), (-1.0, 1.0));
        let g = parse_function(r#"{"values": [0, 1, 0.5]}"#).unwrap();
        assert_eq!(g.range(), (0.0, 1.0));
        assert!(parse_function(r#"{"values": [2], "range": [0, 1]}"#).is_err());
    }

    #[test]
    fn missing_file_is_invalid_input() {
        let err = load_model(Path::new("/nonexistent/model.json")).unwrap_err();
        assert!(matches!(err, crate::Error::InvalidInput(_)));
    }
}
