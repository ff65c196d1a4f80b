use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FeatureClass;
use crate::error::{Error, Result};

/// Column key rendered as `imageType_class_FeatureName`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureKey {
    pub image_type: String,
    pub class: FeatureClass,
    pub name: String,
}

impl FeatureKey {
    pub fn new(image_type: impl Into<String>, class: FeatureClass, name: impl Into<String>) -> Self {
        FeatureKey { image_type: image_type.into(), class, name: name.into() }
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}", self.image_type, self.class.label(), self.name)
    }
}

impl FromStr for FeatureKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(3, '_');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(t), Some(c), Some(n)) if !t.is_empty() && !n.is_empty() => {
                let class = FeatureClass::from_label(c)
                    .ok_or_else(|| Error::invalid("feature key", format!("unknown class {c:?} in {s:?}")))?;
                Ok(FeatureKey::new(t, class, n))
            }
            _ => Err(Error::invalid("feature key", format!("{s:?} is not imageType_class_name"))),
        }
    }
}

impl TryFrom<String> for FeatureKey {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureKey> for String {
    fn from(k: FeatureKey) -> String {
        k.to_string()
    }
}

/// Features of every ROI of one image: `values[r][k]` belongs to
/// `roi_ids[r]` and `keys[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub roi_ids: Vec<u32>,
    pub keys: Vec<FeatureKey>,
    pub values: Vec<Vec<f64>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FeatureTable {
    pub fn n_features(&self) -> usize {
        self.keys.len()
    }

    pub fn key_index(&self, key: &FeatureKey) -> Option<usize> {
        self.keys.iter().position(|k| k == key)
    }

    /// One feature across ROIs, in `roi_ids` order.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[index]).collect()
    }

    pub fn column_by_key(&self, key: &FeatureKey) -> Option<Vec<f64>> {
        self.key_index(key).map(|i| self.column(i))
    }

    /// Header `roi_id,<keys…>`, then one row per ROI. Numbers use the
    /// shortest representation that reads back to the same `f64`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("roi_id");
        for k in &self.keys {
            out.push(',');
            out.push_str(&csv_field(&k.to_string()));
        }
        out.push_str("\r\n");
        for (id, row) in self.roi_ids.iter().zip(&self.values) {
            out.push_str(&id.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push_str("\r\n");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::invalid("feature csv", "empty input"))?;
        let mut cols = header.split(',');
        if cols.next() != Some("roi_id") {
            return Err(Error::invalid("feature csv", "first column must be roi_id"));
        }
        let keys = cols.map(|c| c.trim_matches('"').parse()).collect::<Result<Vec<FeatureKey>>>()?;
        let (mut roi_ids, mut values) = (Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let mut cells = line.split(',');
            let bad = |what: String| Error::invalid("feature csv", format!("row {}: {what}", n + 1));
            let id = cells.next().unwrap_or("").parse::<u32>().map_err(|e| bad(e.to_string()))?;
            let row = cells.map(|c| c.parse::<f64>().map_err(|e| bad(e.to_string()))).collect::<Result<Vec<_>>>()?;
            if row.len() != keys.len() {
                return Err(bad(format!("{} values for {} keys", row.len(), keys.len())));
            }
            roi_ids.push(id);
            values.push(row);
        }
        Ok(FeatureTable { roi_ids, keys, values, warnings: Vec::new() })
    }
}

/// RFC 4180 field quoting.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
