//! Machine-checkable experiment reports.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
    pub fn passed(self) -> bool {
        self == Outcome::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    #[serde(with = "cells")]
    pub rows: Vec<Vec<f64>>,
}

// JSON has no inf or nan; those cells are written as strings.
mod cells {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::Value;

    fn cell(v: f64) -> Value {
        if v.is_finite() {
            Value::from(v)
        } else if v.is_nan() {
            Value::from("nan")
        } else if v > 0.0 {
            Value::from("inf")
        } else {
            Value::from("-inf")
        }
    }

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Vec<Value>> = rows.iter().map(|r| r.iter().map(|&x| cell(x)).collect()).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let v = Vec::<Vec<Value>>::deserialize(d)?;
        v.into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|x| match &x {
                        Value::Number(n) => n.as_f64().ok_or_else(|| D::Error::custom("bad number")),
                        Value::String(t) if t == "inf" => Ok(f64::INFINITY),
                        Value::String(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
                        Value::String(t) if t == "nan" => Ok(f64::NAN),
                        _ => Err(D::Error::custom(format!("bad table cell {x}"))),
                    })
                    .collect()
            })
            .collect()
    }
}

impl Table {
    pub fn new(title: &str, columns: &[&str]) -> Self {
        Self { title: title.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub params: serde_json::Value,
    pub tables: Vec<Table>,
    pub verdict: Outcome,
    pub seeds: Vec<u64>,
    pub grid: serde_json::Value,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(name: &str, params: serde_json::Value) -> Self {
        Self { name: name.into(), params, tables: vec![], verdict: Outcome::Fail, seeds: vec![], grid: serde_json::Value::Null, notes: vec![] }
    }

    pub fn table(&self, title: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.title == title)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// All tables, each preceded by a `# title` line.
    pub fn to_csv(&self) -> String {
        self.tables.iter().map(|t| format!("# {}\n{}", t.title, t.to_csv())).collect::<Vec<_>>().join("\n")
    }
}

/// max/min of positive values (∞ if any is zero).
pub fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(0.0, f64::max);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_cells_round_trip() {
        let mut t = Table::new("t", &["a", "b", "c", "d"]);
        t.push(vec![1.5, f64::INFINITY, f64::NEG_INFINITY, f64::NAN]);
        let mut r = Report::new("x", serde_json::json!({}));
        r.tables.push(t);
        let s = r.to_json();
        let back: Report = serde_json::from_str(&s).unwrap();
        let row = &back.tables[0].rows[0];
        assert_eq!(&row[..3], &[1.5, f64::INFINITY, f64::NEG_INFINITY]);
        assert!(row[3].is_nan());
        assert_eq!(back.to_json(), s);
    }
}
