//! Dataset persistence: CSV with header `t,y,x` (x optional) and JSON.
//!
//! Reals are written in shortest round-trip form, so a write/read cycle is
//! bit-exact. Time indices and state labels are 1-based on disk.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SimulatedDataset;

/// Observations with optional ground-truth states (0-based in memory).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub y: Vec<f64>,
    pub truth: Option<Vec<usize>>,
}

impl From<SimulatedDataset> for ObservedData {
    fn from(d: SimulatedDataset) -> Self {
        Self {
            y: d.observations,
            truth: Some(d.states),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    t: usize,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    seed: u64,
    observations: Vec<f64>,
    states: Vec<usize>,
}

pub fn write_dataset_csv<W: Write>(writer: W, y: &[f64], states: Option<&[usize]>) -> Result<()> {
    if let Some(s) = states {
        if s.len() != y.len() {
            return Err(Error::DimensionMismatch("states and observations differ in length".into()));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    match states {
        Some(_) => w.write_record(["t", "y", "x"])?,
        None => w.write_record(["t", "y"])?,
    }
    for (t, &v) in y.iter().enumerate() {
        let mut rec = vec![(t + 1).to_string(), v.to_string()];
        if let Some(s) = states {
            rec.push((s[t] + 1).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `t,y[,x]`. Rows are taken in file order; `t` must run 1..=n.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<ObservedData> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("t") || headers.get(1) != Some("y") {
        return Err(Error::Parse("dataset CSV must start with header t,y".into()));
    }
    let has_x = headers.get(2) == Some("x");
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (i, row) in r.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        if row.t != i + 1 {
            return Err(Error::Parse(format!("row {} has t = {}", i + 1, row.t)));
        }
        y.push(row.y);
        if has_x {
            match row.x {
                Some(label) if label >= 1 => x.push(label - 1),
                _ => return Err(Error::Parse(format!("row {} has no valid x label", i + 1))),
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Parse("dataset has no observations".into()));
    }
    Ok(ObservedData {
        y,
        truth: has_x.then_some(x),
    })
}

pub fn dataset_to_json(d: &SimulatedDataset) -> Result<String> {
    let j = DatasetJson {
        seed: d.seed,
        observations: d.observations.clone(),
        states: d.states.iter().map(|s| s + 1).collect(),
    };
    Ok(serde_json::to_string_pretty(&j)?)
}

pub fn dataset_from_json(s: &str) -> Result<SimulatedDataset> {
    let j: DatasetJson = serde_json::from_str(s)?;
    if j.states.len() != j.observations.len() {
        return Err(Error::DimensionMismatch("states and observations differ in length".into()));
    }
    if j.states.contains(&0) {
        return Err(Error::Parse("state labels are 1-based".into()));
    }
    Ok(SimulatedDataset {
        observations: j.observations,
        states: j.states.into_iter().map(|s| s - 1).collect(),
        seed: j.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_header_and_labels_are_one_based() {
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &[0.5, -1.25], Some(&[0, 2])).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "t,y,x\n1,0.5,1\n2,-1.25,3\n");
    }

    #[test]
    fn csv_without_truth() {
        let d = read_dataset_csv("t,y\n1,2.5\n2,3\n".as_bytes()).unwrap();
        assert_eq!(d.y, vec![2.5, 3.0]);
        assert!(d.truth.is_none());
    }

    #[test]
    fn csv_rejects_bad_files() {
        assert!(read_dataset_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_dataset_csv("t,y\n2,2.5\n".as_bytes()).is_err());
        assert!(read_dataset_csv("t,y,x\n1,2.5,0\n".as_bytes()).is_err());
        assert!(read_dataset_csv("t,y\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_and_json_round_trip_exactly(
            y in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..50),
            seed in any::<u64>(),
        ) {
            let states: Vec<usize> = (0..y.len()).map(|i| i % 4).collect();
            let mut buf = Vec::new();
            write_dataset_csv(&mut buf, &y, Some(&states)).unwrap();
            let back = read_dataset_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.truth.as_ref(), Some(&states));

            let d = SimulatedDataset { observations: y.clone(), states, seed };
            let back = dataset_from_json(&dataset_to_json(&d).unwrap()).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
