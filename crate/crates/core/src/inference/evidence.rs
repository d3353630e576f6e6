use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvidenceValue {
    Point(f64),
    /// Closed interval; either bound may be infinite.
    Interval { lo: f64, hi: f64 },
}

impl EvidenceValue {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            EvidenceValue::Point(v) => x == v,
            EvidenceValue::Interval { lo, hi } => lo <= x && x <= hi,
        }
    }
}

/// Observed values or ranges keyed by node id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    items: BTreeMap<String, EvidenceValue>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn point(mut self, id: &str, value: f64) -> Self {
        self.items.insert(id.to_string(), EvidenceValue::Point(value));
        self
    }

    pub fn interval(mut self, id: &str, lo: f64, hi: f64) -> Self {
        self.items.insert(id.to_string(), EvidenceValue::Interval { lo, hi });
        self
    }

    pub fn insert(&mut self, id: &str, value: EvidenceValue) {
        self.items.insert(id.to_string(), value);
    }

    pub fn get(&self, id: &str) -> Option<&EvidenceValue> {
        self.items.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &EvidenceValue)> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn has_interval(&self) -> bool {
        self.items.values().any(|v| matches!(v, EvidenceValue::Interval { .. }))
    }

    /// Checks node existence and interval ordering against `dag`.
    pub fn validate(&self, dag: &Dag) -> Result<()> {
        for (id, v) in &self.items {
            if dag.index_of(id).is_none() {
                return Err(Error::UnknownNode(id.clone()));
            }
            match *v {
                EvidenceValue::Point(x) if !x.is_finite() => {
                    return Err(Error::Config(format!("evidence for '{id}' must be finite")))
                }
                EvidenceValue::Interval { lo, hi } if lo.is_nan() || hi.is_nan() || lo > hi => {
                    return Err(Error::Config(format!("evidence interval for '{id}' needs lo <= hi")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Per-node evidence aligned with the node order of `dag`.
    pub(crate) fn aligned(&self, dag: &Dag) -> Result<Vec<Option<EvidenceValue>>> {
        self.validate(dag)?;
        let mut out = vec![None; dag.len()];
        for (id, v) in &self.items {
            out[dag.index_of(id).expect("validated")] = Some(*v);
        }
        Ok(out)
    }

    /// Parses `node=1.5` or `node in [lo,hi]` (bounds may be `-inf`/`inf`).
    pub fn parse_item(s: &str) -> Result<(String, EvidenceValue)> {
        let bad = || Error::Config(format!("cannot parse evidence '{s}' (expected 'node=value' or 'node in [lo,hi]')"));
        let num = |t: &str| f64::from_str(t.trim()).map_err(|_| bad());
        if let Some((id, rest)) = s.split_once(" in ") {
            let rest = rest.trim();
            let inner = rest
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(bad)?;
            let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
            let id = id.trim();
            if id.is_empty() {
                return Err(bad());
            }
            let (lo, hi) = (num(lo)?, num(hi)?);
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Config(format!("evidence interval for '{id}' needs lo <= hi")));
            }
            return Ok((id.to_string(), EvidenceValue::Interval { lo, hi }));
        }
        let (id, v) = s.split_once('=').ok_or_else(bad)?;
        let id = id.trim();
        let v = num(v)?;
        if id.is_empty() || !v.is_finite() {
            return Err(bad());
        }
        Ok((id.to_string(), EvidenceValue::Point(v)))
    }

    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Evidence> {
        let mut e = Evidence::new();
        for s in items {
            let (id, v) = Evidence::parse_item(s.as_ref())?;
            e.insert(&id, v);
        }
        Ok(e)
    }
}
