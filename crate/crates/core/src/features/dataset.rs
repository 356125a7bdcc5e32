//! In-memory datasets and their ARFF form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureConfig;
use crate::error::{Error, Result};
use crate::registration::Point;

/// Class names of fat-pixel datasets, in label order.
pub const FEATURE_CLASSES: [&str; 3] = ["epicardial", "mediastinal", "other"];

const PROVENANCE_PREFIX: &str = "% provenance: ";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub patients: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_config: Option<FeatureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_center: Option<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub values: Vec<f64>,
    /// Index into [`Dataset::classes`].
    pub class: usize,
}

/// Numeric attributes followed by one nominal class attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub relation: String,
    pub attributes: Vec<String>,
    pub classes: Vec<String>,
    pub rows: Vec<Row>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(relation: &str, attributes: &[&str], classes: &[&str]) -> Self {
        Self {
            relation: relation.to_string(),
            attributes: attributes.iter().map(|s| s.to_string()).collect(),
            classes: classes.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same attribute and class lists, without rows.
    pub fn empty_like(&self) -> Self {
        Self {
            rows: Vec::new(),
            ..self.clone()
        }
    }

    /// Copy holding the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            ..self.empty_like()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::SchemaMismatch("dataset has no classes".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.values.len() != self.attributes.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row {i} has {} values, expected {}",
                    r.values.len(),
                    self.attributes.len()
                )));
            }
            if r.class >= self.classes.len() {
                return Err(Error::UnknownClass(r.class));
            }
            if let Some(v) = r.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::SchemaMismatch(format!("row {i} holds non-finite value {v}")));
            }
        }
        Ok(())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for r in &self.rows {
            c[r.class] += 1;
        }
        c
    }

    pub fn to_arff(&self) -> Result<String> {
        self.validate()?;
        let mut s = String::new();
        let prov = serde_json::to_string(&self.provenance).expect("provenance serializes");
        let _ = writeln!(s, "{PROVENANCE_PREFIX}{prov}");
        let _ = writeln!(s, "@relation {}", quote(&self.relation));
        s.push('\n');
        for a in &self.attributes {
            let _ = writeln!(s, "@attribute {} numeric", quote(a));
        }
        let classes: Vec<String> = self.classes.iter().map(|c| quote(c)).collect();
        let _ = writeln!(s, "@attribute class {{{}}}", classes.join(","));
        s.push_str("\n@data\n");
        for r in &self.rows {
            for &v in &r.values {
                s.push_str(&format_number(v));
                s.push(',');
            }
            s.push_str(&classes[r.class]);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_arff(text: &str) -> Result<Self> {
        let mut relation = None;
        let mut attributes = Vec::new();
        let mut classes: Option<Vec<String>> = None;
        let mut provenance = Provenance::default();
        let mut rows = Vec::new();
        let mut in_data = false;

        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let bad = |reason: String| Error::MalformedArff { line: line_no, reason };
            let line = raw.trim();
            if let Some(json) = line.strip_prefix(PROVENANCE_PREFIX.trim_end()) {
                provenance = serde_json::from_str(json.trim()).map_err(|e| bad(format!("provenance: {e}")))?;
                continue;
            }
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            if in_data {
                let classes = classes.as_ref().expect("checked at @data");
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields.len() != attributes.len() + 1 {
                    return Err(bad(format!(
                        "expected {} fields, found {}",
                        attributes.len() + 1,
                        fields.len()
                    )));
                }
                let (class_field, value_fields) = fields.split_last().expect("non-empty");
                let values = value_fields
                    .iter()
                    .map(|f| match f.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(bad(format!("invalid numeric value '{f}'"))),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let name = unquote(class_field);
                let class = classes
                    .iter()
                    .position(|c| *c == name)
                    .ok_or_else(|| bad(format!("unknown class '{name}'")))?;
                rows.push(Row { values, class });
                continue;
            }
            let (keyword, rest) = split_word(line);
            match keyword.to_ascii_lowercase().as_str() {
                "@relation" => relation = Some(unquote(rest)),
                "@attribute" => {
                    if classes.is_some() {
                        return Err(bad("the class attribute must be last".into()));
                    }
                    let (name, kind) = split_name(rest).ok_or_else(|| bad("missing attribute type".into()))?;
                    let kind = kind.trim();
                    if let Some(body) = kind.strip_prefix('{') {
                        let body = body
                            .strip_suffix('}')
                            .ok_or_else(|| bad("unterminated nominal list".into()))?;
                        let list: Vec<String> = body.split(',').map(unquote).collect();
                        if list.iter().any(String::is_empty) {
                            return Err(bad("empty class name".into()));
                        }
                        classes = Some(list);
                    } else if matches!(kind.to_ascii_lowercase().as_str(), "numeric" | "real" | "integer") {
                        attributes.push(name);
                    } else {
                        return Err(bad(format!("unsupported attribute type '{kind}'")));
                    }
                }
                "@data" => {
                    if relation.is_none() {
                        return Err(bad("@data before @relation".into()));
                    }
                    if classes.is_none() {
                        return Err(bad("no nominal class attribute".into()));
                    }
                    in_data = true;
                }
                _ => return Err(bad(format!("unexpected line '{line}'"))),
            }
        }
        if !in_data {
            return Err(Error::MalformedArff {
                line: text.lines().count(),
                reason: "missing @data section".into(),
            });
        }
        Ok(Dataset {
            relation: relation.expect("checked at @data"),
            attributes,
            classes: classes.expect("checked at @data"),
            rows,
            provenance,
        })
    }
}

/// Shortest of the positional and exponent forms; both parse back to exactly `v`.
fn format_number(v: f64) -> String {
    let plain = v.to_string();
    let exp = format!("{v:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty() || s.chars().any(|c| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '\'' | '"' | '%'))
}

fn quote(s: &str) -> String {
    if needs_quotes(s) {
        format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
    } else {
        s.to_string()
    }
}

fn unquote(s: &str) -> String {
    let s = s.trim();
    match s.strip_prefix('\'').and_then(|r| r.strip_suffix('\'')) {
        Some(inner) => inner.replace("\\'", "'").replace("\\\\", "\\"),
        None => s.to_string(),
    }
}

fn split_word(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

/// Splits `name type`, honouring a quoted name.
fn split_name(s: &str) -> Option<(String, &str)> {
    if let Some(rest) = s.strip_prefix('\'') {
        let mut escaped = false;
        for (i, c) in rest.char_indices() {
            match c {
                '\\' if !escaped => escaped = true,
                '\'' if !escaped => return Some((unquote(&s[..i + 2]), &rest[i + 1..])),
                _ => escaped = false,
            }
        }
        None
    } else {
        let (name, rest) = split_word(s);
        (!rest.is_empty()).then(|| (name.to_string(), rest))
    }
}

pub fn write_arff(dataset: &Dataset, path: &Path) -> Result<()> {
    let text = dataset.to_arff()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_arff(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_arff(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_rows() -> Dataset {
        let mut d = Dataset::new("fat", &["a", "b c"], &FEATURE_CLASSES);
        d.rows.push(Row {
            values: vec![0.1, -3.0],
            class: 2,
        });
        d.rows.push(Row {
            values: vec![1e-300, 12345.678],
            class: 0,
        });
        d.provenance.patients = vec!["p01".into(), "p02".into()];
        d.provenance.target_center = Some(Point::new(256, 154));
        d.provenance.feature_config = Some(FeatureConfig::default());
        d
    }

    #[test]
    fn empty_dataset_round_trips() {
        let d = Dataset::new("empty", &["x"], &FEATURE_CLASSES);
        let text = d.to_arff().unwrap();
        assert!(text.trim_end().ends_with("@data"));
        assert_eq!(Dataset::from_arff(&text).unwrap(), d);
    }

    #[test]
    fn two_row_skeleton() {
        let d = two_rows();
        let text = d.to_arff().unwrap();
        assert!(text.contains("@relation fat\n"));
        assert!(text.contains("@attribute a numeric\n"));
        assert!(text.contains("@attribute 'b c' numeric\n"));
        assert!(text.contains("@attribute class {epicardial,mediastinal,other}\n"));
        let data: Vec<&str> = text.split("@data\n").nth(1).unwrap().lines().collect();
        assert_eq!(data, vec!["0.1,-3,other", "1e-300,12345.678,epicardial"]);
        assert_eq!(Dataset::from_arff(&text).unwrap(), d);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.arff");
        write_arff(&two_rows(), &p).unwrap();
        assert_eq!(read_arff(&p).unwrap(), two_rows());
    }

    #[test]
    fn malformed_inputs_report_line_numbers() {
        let cases = [
            ("@relation r\n@attribute a numeric\n@attribute class {x,y}\n@data\n1,z\n", 5),
            ("@relation r\n@attribute a numeric\n@attribute class {x,y}\n@data\n1,2,x\n", 5),
            ("@relation r\n@attribute a numeric\n@attribute class {x,y}\n@data\nfoo,x\n", 5),
            ("@relation r\n@attribute a string\n", 2),
            ("@relation r\n@attribute class {x}\n@attribute a numeric\n", 3),
            ("@relation r\n@attribute a numeric\n@data\n", 3),
            ("@relation r\n@attribute a numeric\n@attribute class {x,y}\n@data\n?,x\n", 5),
            ("@relation r\n@attribute a numeric\n", 2),
        ];
        for (text, line) in cases {
            match Dataset::from_arff(text) {
                Err(Error::MalformedArff { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn foreign_arff_is_accepted() {
        let text = "% a comment\n@RELATION 'my data'\n@ATTRIBUTE w REAL\n@attribute 'odd name' integer\n@attribute class {'a b',c}\n\n@DATA\n1.5, 2, 'a b'\n-0,3,c\n";
        let d = Dataset::from_arff(text).unwrap();
        assert_eq!(d.relation, "my data");
        assert_eq!(d.attributes, vec!["w", "odd name"]);
        assert_eq!(d.classes, vec!["a b", "c"]);
        assert_eq!(d.rows[0].class, 0);
        assert_eq!(d.rows[1].values, vec![-0.0, 3.0]);
        let again = Dataset::from_arff(&d.to_arff().unwrap()).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn invalid_rows_are_not_written() {
        let mut d = two_rows();
        d.rows[0].values.push(1.0);
        assert!(matches!(d.to_arff(), Err(Error::SchemaMismatch(_))));
        let mut d = two_rows();
        d.rows[0].class = 3;
        assert!(matches!(d.to_arff(), Err(Error::UnknownClass(3))));
    }

    proptest! {
        #[test]
        fn arbitrary_finite_values_round_trip_exactly(
            rows in prop::collection::vec((prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 3), 0usize..3), 0..40)
        ) {
            let mut d = Dataset::new("p", &["a", "b", "c"], &FEATURE_CLASSES);
            d.rows = rows.into_iter().map(|(values, class)| Row { values, class }).collect();
            let text = d.to_arff().unwrap();
            let back = Dataset::from_arff(&text).unwrap();
            prop_assert_eq!(back.to_arff().unwrap(), text);
            for (a, b) in back.rows.iter().zip(&d.rows) {
                prop_assert_eq!(a.class, b.class);
                for (x, y) in a.values.iter().zip(&b.values) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
