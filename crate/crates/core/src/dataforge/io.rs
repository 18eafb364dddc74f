use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::config::is_json;
use crate::dynamics::{BodyParams, ContactGeometry, PlanarState};
use crate::error::{Error, Result};
use crate::trial::{ImpactTrial, TrialId};

/// Exact CSV header, SI units throughout.
pub const CSV_HEADER: [&str; 14] = [
    "trial_id", "m", "I", "rx", "ry", "qx", "qy", "qth", "vx_pre", "vy_pre", "w_pre", "vx_post",
    "vy_post", "w_post",
];

/// One flat row of the dataset schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub trial_id: TrialId,
    pub m: f64,
    #[serde(rename = "I")]
    pub inertia: f64,
    pub rx: f64,
    pub ry: f64,
    pub qx: f64,
    pub qy: f64,
    pub qth: f64,
    pub vx_pre: f64,
    pub vy_pre: f64,
    pub w_pre: f64,
    pub vx_post: f64,
    pub vy_post: f64,
    pub w_post: f64,
}

impl From<&ImpactTrial> for TrialRecord {
    fn from(t: &ImpactTrial) -> Self {
        let (q, a, b) = (&t.state_pre.q, &t.state_pre.v, &t.state_post.v);
        Self {
            trial_id: t.trial_id,
            m: t.body.mass,
            inertia: t.body.inertia,
            rx: t.contact.r.x,
            ry: t.contact.r.y,
            qx: q.x,
            qy: q.y,
            qth: q.z,
            vx_pre: a.x,
            vy_pre: a.y,
            w_pre: a.z,
            vx_post: b.x,
            vy_post: b.y,
            w_post: b.z,
        }
    }
}

impl TrialRecord {
    /// The schema stores one configuration; it is shared by both states.
    pub fn to_trial(&self) -> Result<ImpactTrial> {
        let q = Vector3::new(self.qx, self.qy, self.qth);
        let trial = ImpactTrial {
            trial_id: self.trial_id,
            body: BodyParams::new(self.m, self.inertia)?,
            contact: ContactGeometry {
                r: Vector2::new(self.rx, self.ry),
            },
            state_pre: PlanarState::new(q, Vector3::new(self.vx_pre, self.vy_pre, self.w_pre)),
            state_post: PlanarState::new(q, Vector3::new(self.vx_post, self.vy_post, self.w_post)),
        };
        trial.validate()?;
        Ok(trial)
    }
}

/// Parsed dataset plus anything suspicious found while reading it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedDataset {
    pub trials: Vec<ImpactTrial>,
    /// Trials violating the approach invariant (`v_cn_pre >= 0`). They are
    /// kept so the caller decides; the contact models will refuse them.
    pub flagged: Vec<TrialId>,
    pub warnings: Vec<String>,
}

impl LoadedDataset {
    fn from_records(records: Vec<(u64, TrialRecord)>) -> Result<Self> {
        let mut out = LoadedDataset::default();
        let mut seen = std::collections::HashSet::new();
        for (line, rec) in records {
            let trial = rec
                .to_trial()
                .map_err(|e| Error::Dataset { line, msg: e.to_string() })?;
            if !seen.insert(trial.trial_id) {
                return Err(Error::Dataset {
                    line,
                    msg: format!("duplicate trial_id {}", trial.trial_id),
                });
            }
            if !trial.is_approaching() {
                let msg = format!(
                    "line {line}: trial {} has non-approaching contact velocity {:.6e}",
                    trial.trial_id,
                    trial.contact_velocity_pre().y
                );
                log::warn!("{msg}");
                out.warnings.push(msg);
                out.flagged.push(trial.trial_id);
            }
            out.trials.push(trial);
        }
        Ok(out)
    }

    /// Only the trials that passed every check.
    pub fn clean(&self) -> Vec<ImpactTrial> {
        self.trials
            .iter()
            .filter(|t| !self.flagged.contains(&t.trial_id))
            .cloned()
            .collect()
    }
}

pub fn write_csv<W: Write>(writer: W, trials: &[ImpactTrial]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for t in trials {
        w.serialize(TrialRecord::from(t))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<LoadedDataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Dataset {
            line: 1,
            msg: format!(
                "header mismatch: expected '{}', found '{}'",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut records = Vec::new();
    let mut raw = csv::StringRecord::new();
    loop {
        let read = r.read_record(&mut raw).map_err(|e| Error::Dataset {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        if !read {
            break;
        }
        let line = raw.position().map_or(0, |p| p.line());
        let rec: TrialRecord = raw
            .deserialize(Some(&header))
            .map_err(|e| Error::Dataset { line, msg: e.to_string() })?;
        records.push((line, rec));
    }
    LoadedDataset::from_records(records)
}

pub fn write_json<W: Write>(writer: W, trials: &[ImpactTrial]) -> Result<()> {
    let records: Vec<TrialRecord> = trials.iter().map(TrialRecord::from).collect();
    serde_json::to_writer_pretty(writer, &records)?;
    Ok(())
}

/// JSON rows are numbered by array index, starting at 1.
pub fn read_json<R: Read>(reader: R) -> Result<LoadedDataset> {
    let values: Vec<serde_json::Value> = serde_json::from_reader(reader)?;
    let records = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let line = i as u64 + 1;
            serde_json::from_value(v)
                .map(|r| (line, r))
                .map_err(|e| Error::Dataset { line, msg: e.to_string() })
        })
        .collect::<Result<Vec<_>>>()?;
    LoadedDataset::from_records(records)
}

/// CSV, or JSON when the extension is `.json`.
pub fn save_dataset(path: impl AsRef<Path>, trials: &[ImpactTrial]) -> Result<()> {
    let path = path.as_ref();
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if is_json(path) {
        write_json(file, trials)
    } else {
        write_csv(file, trials)
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LoadedDataset> {
    let path = path.as_ref();
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if is_json(path) {
        read_json(file)
    } else {
        read_csv(file)
    }
}
