//! Posterior draws of the target chain and their CSV/JSON persistence.
//!
//! `trace.csv` holds one row per kept iteration:
//! `iteration,k_a,component,q_1_1,…,q_K_K,gamma_1,…,gamma_K,count_1,…,count_K`.
//! Allocation vectors, when kept, go to a separate `allocations.csv`
//! (`iteration,x_1,…,x_n`, labels 1-based).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TransitionMatrix;
use crate::priors::MixtureComponent;

/// One kept iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub transition: TransitionMatrix,
    pub means: Vec<f64>,
    /// Number of occupied states, K_A.
    pub occupied: usize,
    /// Observations allocated to each state.
    pub counts: Vec<usize>,
    pub component: Option<MixtureComponent>,
    /// Allocation vector (0-based), kept on thinned iterations only.
    pub states: Option<Vec<usize>>,
}

impl TraceRecord {
    pub fn k(&self) -> usize {
        self.means.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcTrace {
    pub k: usize,
    /// Length of the observation series.
    pub n: usize,
    pub records: Vec<TraceRecord>,
}

impl McmcTrace {
    pub fn new(k: usize, n: usize) -> Self {
        Self {
            k,
            n,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let k = self.k;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iteration".to_string(), "k_a".into(), "component".into()];
        for i in 1..=k {
            for j in 1..=k {
                header.push(format!("q_{i}_{j}"));
            }
        }
        header.extend((1..=k).map(|j| format!("gamma_{j}")));
        header.extend((1..=k).map(|j| format!("count_{j}")));
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for r in &self.records {
            row.clear();
            row.push(r.iteration.to_string());
            row.push(r.occupied.to_string());
            row.push(component_name(r.component).to_string());
            row.extend(r.transition.as_slice().iter().map(f64::to_string));
            row.extend(r.means.iter().map(f64::to_string));
            row.extend(r.counts.iter().map(usize::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_allocations_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iteration".to_string()];
        header.extend((1..=self.n).map(|t| format!("x_{t}")));
        w.write_record(&header)?;
        for r in &self.records {
            if let Some(states) = &r.states {
                let mut row = vec![r.iteration.to_string()];
                row.extend(states.iter().map(|s| (s + 1).to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `trace.csv`, optionally joined with `allocations.csv`.
    pub fn read_csv<R: Read, A: Read>(trace: R, allocations: Option<A>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(trace);
        let headers = r.headers()?.clone();
        let width = headers.len();
        // 3 + K² + 2K columns.
        let k = (1..=64)
            .find(|k| 3 + k * k + 2 * k == width)
            .ok_or_else(|| Error::Parse(format!("trace CSV has {width} columns")))?;
        let mut records = Vec::new();
        for row in r.records() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or_default();
            let num = |i: usize| -> Result<f64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number '{}' in trace", field(i))))
            };
            let iteration = field(0)
                .parse()
                .map_err(|_| Error::Parse(format!("bad iteration '{}'", field(0))))?;
            let component = parse_component(field(2))?;
            let probs = (0..k * k).map(|i| num(3 + i)).collect::<Result<Vec<_>>>()?;
            let means = (0..k).map(|i| num(3 + k * k + i)).collect::<Result<Vec<_>>>()?;
            let counts = (0..k)
                .map(|i| {
                    field(3 + k * k + k + i)
                        .parse()
                        .map_err(|_| Error::Parse("bad count in trace".into()))
                })
                .collect::<Result<Vec<usize>>>()?;
            records.push(TraceRecord {
                iteration,
                transition: TransitionMatrix::new(k, probs)?,
                means,
                occupied: counts.iter().filter(|&&c| c > 0).count(),
                counts,
                component,
                states: None,
            });
        }
        let mut n = 0;
        if let Some(a) = allocations {
            let mut r = csv::Reader::from_reader(a);
            n = r.headers()?.len().saturating_sub(1);
            let mut by_iter: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for row in r.records() {
                let row = row?;
                let it: u64 = row[0]
                    .parse()
                    .map_err(|_| Error::Parse("bad iteration in allocations".into()))?;
                let states = row
                    .iter()
                    .skip(1)
                    .map(|s| match s.parse::<usize>() {
                        Ok(v) if (1..=k).contains(&v) => Ok(v - 1),
                        _ => Err(Error::Parse(format!("bad state label '{s}'"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                by_iter.insert(it, states);
            }
            for rec in &mut records {
                rec.states = by_iter.remove(&rec.iteration);
            }
        }
        Ok(Self { k, n, records })
    }

    pub fn to_json(&self) -> Result<String> {
        let j = TraceJson {
            k: self.k,
            n: self.n,
            records: self
                .records
                .iter()
                .map(|r| RecordJson {
                    iteration: r.iteration,
                    transition: r.transition.as_slice().to_vec(),
                    means: r.means.clone(),
                    k_a: r.occupied,
                    counts: r.counts.clone(),
                    component: r.component,
                    states: r.states.as_ref().map(|s| s.iter().map(|x| x + 1).collect()),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: TraceJson = serde_json::from_str(s)?;
        let records = j
            .records
            .into_iter()
            .map(|r| {
                let states = match r.states {
                    Some(s) if s.iter().any(|&x| x == 0 || x > j.k) => {
                        return Err(Error::Parse("state labels are 1-based".into()))
                    }
                    Some(s) => Some(s.into_iter().map(|x| x - 1).collect()),
                    None => None,
                };
                Ok(TraceRecord {
                    iteration: r.iteration,
                    transition: TransitionMatrix::new(j.k, r.transition)?,
                    means: r.means,
                    occupied: r.k_a,
                    counts: r.counts,
                    component: r.component,
                    states,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { k: j.k, n: j.n, records })
    }
}

#[derive(Serialize, Deserialize)]
struct TraceJson {
    k: usize,
    n: usize,
    records: Vec<RecordJson>,
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    iteration: u64,
    /// Row-major.
    transition: Vec<f64>,
    means: Vec<f64>,
    k_a: usize,
    counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    component: Option<MixtureComponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<usize>>,
}

fn component_name(c: Option<MixtureComponent>) -> &'static str {
    match c {
        None => "",
        Some(MixtureComponent::Column) => "column",
        Some(MixtureComponent::Diagonal) => "diagonal",
    }
}

fn parse_component(s: &str) -> Result<Option<MixtureComponent>> {
    match s {
        "" => Ok(None),
        "column" => Ok(Some(MixtureComponent::Column)),
        "diagonal" => Ok(Some(MixtureComponent::Diagonal)),
        other => Err(Error::Parse(format!("unknown mixture component '{other}'"))),
    }
}
