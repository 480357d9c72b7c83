use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Metric;
use crate::error::{Error, Result};
use crate::manifest::Scenario;

/// One row of the flat metric table; the unit every aggregation works on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub image_id: String,
    pub subject_id: String,
    pub scenario: Scenario,
    pub class: String,
    pub metric: Metric,
    pub value: f64,
    pub support: usize,
    /// Image the evaluated image was synthesized from, if any.
    #[serde(default)]
    pub source_image: Option<String>,
    /// Class removed or isolated in the evaluated image, if any.
    #[serde(default)]
    pub manipulated_class: Option<String>,
}

pub fn write_records<W: Write>(writer: W, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)
            .map_err(|e| Error::Config(format!("cannot write metric record: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("<metric table>", e))
}

pub fn read_records<R: Read>(reader: R, origin: &Path) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let offset = e.position().map(|p| p.byte() as usize).unwrap_or(0);
                Error::parse(origin, offset, e.to_string())
            })
        })
        .collect()
}
