use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Mat2;
use crate::{Error, Result, Q};

/// On-disk system description (JSON).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alphabet: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rules: BTreeMap<String, RuleImage>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub lengths: BTreeMap<String, LengthValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chain: Vec<ChainEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleImage {
    Text(String),
    Symbols(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LengthValue {
    Int(i64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainEntry {
    Scalar(i64),
    Matrix(Vec<Vec<i64>>),
}

pub fn parse_rational(s: &str) -> Result<Q> {
    let bad = || Error::MalformedSpec(format!("bad rational {s:?}"));
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        Ok(Q::new(p, q))
    } else {
        Ok(Q::from_integer(s.parse().map_err(|_| bad())?))
    }
}

impl SystemSpec {
    pub(crate) fn substitution_parts(&self) -> Result<(Vec<String>, Vec<Vec<u8>>, Vec<Q>)> {
        let alphabet = self.alphabet.clone();
        if alphabet.is_empty() || alphabet.len() > 255 {
            return Err(Error::MalformedSpec("alphabet must have 1..=255 symbols".into()));
        }
        let mut sorted = alphabet.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != alphabet.len() {
            return Err(Error::MalformedSpec("duplicate symbols".into()));
        }
        let index = |s: &str| {
            alphabet
                .iter()
                .position(|a| a == s)
                .map(|i| i as u8)
                .ok_or_else(|| Error::MalformedSpec(format!("unknown symbol {s:?}")))
        };
        let single = alphabet.iter().all(|a| a.chars().count() == 1);
        let mut images = Vec::new();
        let mut lengths = Vec::new();
        for a in &alphabet {
            let img = self
                .rules
                .get(a)
                .ok_or_else(|| Error::MalformedSpec(format!("no rule for {a:?}")))?;
            let syms: Vec<String> = match img {
                RuleImage::Symbols(v) => v.clone(),
                RuleImage::Text(t) if single => t.chars().map(|c| c.to_string()).collect(),
                RuleImage::Text(t) => t.split_whitespace().map(str::to_string).collect(),
            };
            images.push(syms.iter().map(|s| index(s)).collect::<Result<Vec<u8>>>()?);
            lengths.push(match self.lengths.get(a) {
                None => Q::from_integer(1),
                Some(LengthValue::Int(i)) => Q::from_integer(*i),
                Some(LengthValue::Text(t)) => parse_rational(t)?,
            });
        }
        for k in self.rules.keys() {
            index(k)?;
        }
        Ok((alphabet, images, lengths))
    }

    pub(crate) fn odometer_parts(&self) -> Result<(usize, Vec<Mat2>)> {
        let mut dim = 0;
        let mut mats = Vec::new();
        for e in &self.chain {
            let (d, m) = match e {
                ChainEntry::Scalar(n) => (1, [[*n, 0], [0, 1]]),
                ChainEntry::Matrix(rows) if rows.len() == 1 && rows[0].len() == 1 => {
                    (1, [[rows[0][0], 0], [0, 1]])
                }
                ChainEntry::Matrix(rows)
                    if rows.len() == 2 && rows.iter().all(|r| r.len() == 2) =>
                {
                    (2, [[rows[0][0], rows[0][1]], [rows[1][0], rows[1][1]]])
                }
                _ => return Err(Error::MalformedSpec("chain entries must be 1x1 or 2x2".into())),
            };
            if dim != 0 && d != dim {
                return Err(Error::MalformedSpec("mixed chain dimensions".into()));
            }
            dim = d;
            mats.push(m);
        }
        if mats.is_empty() {
            return Err(Error::MalformedSpec("empty chain".into()));
        }
        Ok((dim, mats))
    }
}
