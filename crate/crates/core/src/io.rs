//! On-disk formats: JSON Lines transaction logs with a JSON header, JSON
//! models, revenue vectors and probit parameters.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChoiceModel, ConsumerType, ProductId, Transaction, TransactionLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub n: usize,
    #[serde(default)]
    pub no_arrival_periods: usize,
}

#[derive(Serialize, Deserialize)]
struct TypeRecord {
    sigma: Vec<u64>,
    eta: u64,
    prob: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    lambda: f64,
    types: Vec<TypeRecord>,
}

/// Parses a serialized preference list: everything from the first 0 on is dropped.
pub fn parse_sigma(raw: &[u64], eta: u64) -> Result<ConsumerType> {
    let cut = raw.iter().position(|&j| j == 0).unwrap_or(raw.len());
    let mut sigma = Vec::with_capacity(cut);
    for &j in &raw[..cut] {
        if j > ProductId::MAX as u64 {
            return Err(Error::data(format!("product id {j} out of range")));
        }
        sigma.push(j as ProductId);
    }
    let eta = u8::try_from(eta).map_err(|_| Error::data(format!("capacity {eta} out of range")))?;
    let eta = match (sigma.len(), eta) {
        (0, _) => 0,
        (_, 0) => return Err(Error::data("non-empty preference list with capacity 0")),
        (len, eta) => eta.min(len as u8),
    };
    ConsumerType::new(sigma, eta).map_err(|e| Error::data(e.to_string()))
}

pub fn model_to_json(model: &ChoiceModel) -> Result<String> {
    let rec = ModelRecord {
        lambda: model.lambda(),
        types: model
            .iter()
            .map(|(c, prob)| TypeRecord {
                sigma: c.sigma().iter().map(|&j| j as u64).collect(),
                eta: c.eta() as u64,
                prob,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&rec)?)
}

/// Parses a model. Types that coincide after truncation are merged.
pub fn model_from_json(text: &str) -> Result<ChoiceModel> {
    let rec: ModelRecord = serde_json::from_str(text)?;
    let weighted = rec
        .types
        .iter()
        .map(|t| Ok((parse_sigma(&t.sigma, t.eta)?, t.prob)))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = weighted.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::data(format!("type probabilities sum to {total}")));
    }
    ChoiceModel::from_weights(weighted, rec.lambda).map_err(|e| Error::data(e.to_string()))
}

pub fn read_model(path: &Path) -> Result<ChoiceModel> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn write_model(path: &Path, model: &ChoiceModel) -> Result<()> {
    fs::write(path, model_to_json(model)? + "\n")?;
    Ok(())
}

pub fn read_transactions(path: &Path) -> Result<Vec<Transaction>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Transaction = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_transactions(path: &Path, txs: &[Transaction]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in txs {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<LogHeader> {
    let h: LogHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
    if h.n == 0 || h.n > crate::model::MAX_PRODUCTS {
        return Err(Error::data(format!("header n = {} out of range", h.n)));
    }
    Ok(h)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Checks that every offer fits in a universe of `n` products.
pub fn check_universe(txs: &[Transaction], n: usize) -> Result<()> {
    match txs.iter().find(|t| t.offer.max_id().is_some_and(|m| m as usize > n)) {
        Some(t) => Err(Error::data(format!("offer {:?} exceeds header n = {n}", t.offer))),
        None => Ok(()),
    }
}

/// A generated or imported instance directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub n: usize,
    pub train: TransactionLog,
    pub test: Option<TransactionLog>,
    pub ground_truth: Option<ChoiceModel>,
    pub revenues: Option<Vec<f64>>,
}

pub const HEADER_FILE: &str = "header.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const TRUTH_FILE: &str = "ground_truth.json";
pub const REVENUES_FILE: &str = "revenues.json";
pub const PROBIT_FILE: &str = "probit_params.json";

impl Instance {
    /// Reads `dir`. Only the header and the training log are required. The
    /// header's no-arrival count belongs to the training log.
    pub fn read(dir: &Path) -> Result<Self> {
        let header = read_header(&dir.join(HEADER_FILE))?;
        let train = read_transactions(&dir.join(TRAIN_FILE))?;
        check_universe(&train, header.n)?;
        let test_path = dir.join(TEST_FILE);
        let test = if test_path.exists() {
            let t = read_transactions(&test_path)?;
            check_universe(&t, header.n)?;
            Some(TransactionLog::new(t, 0))
        } else {
            None
        };
        let truth_path = dir.join(TRUTH_FILE);
        let ground_truth = truth_path.exists().then(|| read_model(&truth_path)).transpose()?;
        let rev_path = dir.join(REVENUES_FILE);
        let revenues: Option<Vec<f64>> = rev_path.exists().then(|| read_json(&rev_path)).transpose()?;
        if let Some(r) = &revenues {
            if r.len() != header.n || r.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::data("revenues must be n non-negative numbers"));
            }
        }
        Ok(Instance {
            n: header.n,
            train: TransactionLog::new(train, header.no_arrival_periods),
            test,
            ground_truth,
            revenues,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_json(
            &dir.join(HEADER_FILE),
            &LogHeader { n: self.n, no_arrival_periods: self.train.no_arrival_periods },
        )?;
        write_transactions(&dir.join(TRAIN_FILE), &self.train.transactions)?;
        if let Some(t) = &self.test {
            write_transactions(&dir.join(TEST_FILE), &t.transactions)?;
        }
        if let Some(m) = &self.ground_truth {
            write_model(&dir.join(TRUTH_FILE), m)?;
        }
        if let Some(r) = &self.revenues {
            write_json(&dir.join(REVENUES_FILE), r)?;
        }
        Ok(())
    }
}
