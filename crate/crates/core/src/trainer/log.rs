use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row per completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub ce: f64,
    pub dice: f64,
    pub vqcl: f64,
    pub total: f64,
    pub beta: f64,
    pub omega0: f64,
    pub omega1: f64,
    pub omega2: f64,
    /// Macro Dice on the test split, on validation epochs only.
    pub val_dice: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

pub const LOG_HEADER: [&str; 10] =
    ["epoch", "ce", "dice", "vqcl", "total", "beta", "omega0", "omega1", "omega2", "val_dice"];

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        const OP: &str = "trainer::TrainLog::write_csv";
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(OP, path, e))?;
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::format(OP, path, e))?;
        }
        if self.records.is_empty() {
            w.write_record(LOG_HEADER).map_err(|e| Error::format(OP, path, e))?;
        }
        w.flush().map_err(|e| Error::io(OP, path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        const OP: &str = "trainer::TrainLog::read_csv";
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(OP, path, e))?;
        let header = r.headers().map_err(|e| Error::format(OP, path, e))?.clone();
        if header.iter().ne(LOG_HEADER) {
            return Err(Error::format(OP, path, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let records = r
            .deserialize()
            .collect::<std::result::Result<Vec<EpochRecord>, _>>()
            .map_err(|e| Error::format(OP, path, e))?;
        Ok(TrainLog { records })
    }

    /// Epoch with the lowest total loss.
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().min_by(|a, b| a.total.total_cmp(&b.total))
    }
}
