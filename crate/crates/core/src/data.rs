//! Dataset records and their JSONL encodings.
//!
//! * unlabeled:   `{"x":[...],"y":[...]}`
//! * preference:  `{"x":[...],"y_pos":[...],"y_neg":[[...],...]}`
//! * ground truth sidecar: `{"x":[...],"y":[...],"f":...}`
//!
//! One object per line, UTF-8, `\n` line endings.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{DialError, Result};
use crate::model::Example;

/// A context with one preferred and one or more rejected responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceTriple {
    pub x: Vec<f64>,
    pub y_pos: Vec<f64>,
    pub y_neg: Vec<Vec<f64>>,
}

impl PreferenceTriple {
    pub fn chosen(&self) -> Example {
        Example::new(self.x.clone(), self.y_pos.clone())
    }

    pub fn rejected(&self) -> impl Iterator<Item = Example> + '_ {
        self.y_neg.iter().map(|y| Example::new(self.x.clone(), y.clone()))
    }

    pub fn n_pairs(&self) -> usize {
        self.y_neg.len()
    }
}

/// Unlabeled `(x, y)` plus its hidden ground-truth score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f: f64,
}

impl TruthRecord {
    pub fn example(&self) -> Example {
        Example::new(self.x.clone(), self.y.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainRole {
    Source,
    Target,
}

/// One domain's data. Sources carry preference triples; targets carry
/// unlabeled examples, with ground truth held aside for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub role: DomainRole,
    pub examples: Vec<Example>,
    pub truth: Vec<TruthRecord>,
    pub preference_triples: Vec<PreferenceTriple>,
}

impl DomainDataset {
    pub fn input_dim(&self) -> Option<usize> {
        self.examples.first().map(Example::dim)
    }

    /// All source examples: every chosen and every rejected response.
    pub fn triple_examples(&self) -> Vec<Example> {
        self.preference_triples
            .iter()
            .flat_map(|t| std::iter::once(t.chosen()).chain(t.rejected()))
            .collect()
    }
}

/// Expands triples into truth records: chosen `f = 1`, rejected `f = 0`.
pub fn truth_from_triples(triples: &[PreferenceTriple]) -> Vec<TruthRecord> {
    triples
        .iter()
        .flat_map(|t| {
            std::iter::once(TruthRecord {
                x: t.x.clone(),
                y: t.y_pos.clone(),
                f: 1.0,
            })
            .chain(t.y_neg.iter().map(|y| TruthRecord {
                x: t.x.clone(),
                y: y.clone(),
                f: 0.0,
            }))
        })
        .collect()
}

/// Serializes records as JSONL into a byte buffer.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&to_jsonl(records)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| DialError::InvalidArgument(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Groups records by identical context `x` (first-seen order).
pub fn group_by_context(records: &[TruthRecord]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(Vec<u64>, Vec<usize>)> = Vec::new();
    let mut index: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let key: Vec<u64> = r.x.iter().map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(&g) => groups[g].1.push(i),
            None => {
                index.insert(key.clone(), groups.len());
                groups.push((key, vec![i]));
            }
        }
    }
    groups.into_iter().map(|(_, v)| v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_lines_match_documented_shapes() {
        let t = PreferenceTriple {
            x: vec![],
            y_pos: vec![1.0, 0.5],
            y_neg: vec![vec![0.0, -1.0]],
        };
        let bytes = to_jsonl(&[t]).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "{\"x\":[],\"y_pos\":[1.0,0.5],\"y_neg\":[[0.0,-1.0]]}\n"
        );
        let u = to_jsonl(&[Example::new(vec![2.0], vec![3.0])]).unwrap();
        assert_eq!(String::from_utf8(u).unwrap(), "{\"x\":[2.0],\"y\":[3.0]}\n");
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: std::result::Result<TruthRecord, _> = serde_json::from_str("{\"x\":[],\"y\":[1.0],\"f\":1,\"z\":0}");
        assert!(r.is_err());
    }

    #[test]
    fn grouping_by_context() {
        let rec = |x: f64, f: f64| TruthRecord {
            x: vec![x],
            y: vec![0.0],
            f,
        };
        let rs = vec![rec(1.0, 0.0), rec(2.0, 1.0), rec(1.0, 1.0)];
        assert_eq!(group_by_context(&rs), vec![vec![0, 2], vec![1]]);
    }
}
