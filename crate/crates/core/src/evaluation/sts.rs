//! Gold-scored sentence pairs and the tab-separated pair file.
//!
//! One pair per line: `sentence1<TAB>sentence2<TAB>score`, score in `[0, 5]`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StsPair {
    pub sentence1: String,
    pub sentence2: String,
    pub gold: f64,
}

impl StsPair {
    pub fn new(sentence1: impl Into<String>, sentence2: impl Into<String>, gold: f64) -> Result<Self> {
        if !(0.0..=5.0).contains(&gold) {
            return Err(Error::InvalidInput(format!("gold score {gold} outside [0, 5]")));
        }
        Ok(Self {
            sentence1: sentence1.into(),
            sentence2: sentence2.into(),
            gold,
        })
    }
}

pub fn read_sts(path: &Path) -> Result<Vec<StsPair>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let gold: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("score {:?}: {e}", fields[2])))?;
        out.push(StsPair::new(fields[0], fields[1], gold).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_sts(path: &Path, pairs: &[StsPair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}\n", p.sentence1, p.sentence2, p.gold));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
