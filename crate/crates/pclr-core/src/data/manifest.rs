//! Cohort manifest and waveform CSV files.
//!
//! A manifest is a CSV with one row per ECG and the exact header
//! `ecg_id,patient_id,path,sample_rate,acquired_at,age,sex,diagnosis_text,hr,pr,qrs,qt,p_axis,r_axis,t_axis`;
//! missing optionals are empty strings. Waveform files are one CSV per
//! ECG with the twelve leads as integer-microvolt columns in canonical
//! order.

use super::{EcgRecord, Lead, Sex, LEAD_ORDER, NUM_LEADS};
use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

pub const MANIFEST_FIELDS: [&str; 15] = [
    "ecg_id",
    "patient_id",
    "path",
    "sample_rate",
    "acquired_at",
    "age",
    "sex",
    "diagnosis_text",
    "hr",
    "pr",
    "qrs",
    "qt",
    "p_axis",
    "r_axis",
    "t_axis",
];

/// One manifest row: identity, waveform file location, and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub ecg_id: String,
    pub patient_id: String,
    /// Waveform CSV path; relative paths resolve against the manifest's
    /// directory.
    pub path: String,
    pub sample_rate: u32,
    pub acquired_at: i64,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    pub diagnosis_text: Option<String>,
    pub hr: Option<f64>,
    pub pr: Option<f64>,
    pub qrs: Option<f64>,
    pub qt: Option<f64>,
    pub p_axis: Option<f64>,
    pub r_axis: Option<f64>,
    pub t_axis: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub entries: Vec<ManifestEntry>,
}

impl ManifestEntry {
    /// Absolute or manifest-relative waveform path.
    pub fn resolve_path(&self, manifest_dir: &Path) -> PathBuf {
        let p = Path::new(&self.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_dir.join(p)
        }
    }
}

fn opt_f64_to_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn parse_opt_f64(field: &str, name: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|_| {
        Error::data(format!("line {line}: field '{name}' is not a number: '{field}'"))
    })
}

pub fn write_manifest(manifest: &CohortManifest, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(MANIFEST_FIELDS)?;
    for e in &manifest.entries {
        writer.write_record([
            e.ecg_id.as_str(),
            e.patient_id.as_str(),
            e.path.as_str(),
            &e.sample_rate.to_string(),
            &e.acquired_at.to_string(),
            &opt_f64_to_field(e.age),
            e.sex.map(|s| s.as_str()).unwrap_or(""),
            e.diagnosis_text.as_deref().unwrap_or(""),
            &opt_f64_to_field(e.hr),
            &opt_f64_to_field(e.pr),
            &opt_f64_to_field(e.qrs),
            &opt_f64_to_field(e.qt),
            &opt_f64_to_field(e.p_axis),
            &opt_f64_to_field(e.r_axis),
            &opt_f64_to_field(e.t_axis),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads a manifest, validating ecg_id uniqueness and waveform file
/// existence. Errors carry 1-based line numbers (header is line 1).
pub fn load_manifest(path: &Path) -> Result<CohortManifest> {
    let manifest_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    {
        let headers = reader.headers()?;
        let got: Vec<&str> = headers.iter().collect();
        if got != MANIFEST_FIELDS {
            return Err(Error::data(format!(
                "line 1: bad manifest header: expected {:?}, got {:?}",
                MANIFEST_FIELDS.join(","),
                got.join(",")
            )));
        }
    }
    let mut entries = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::data(format!("line {line}: malformed row: {e}")))?;
        if row.len() != MANIFEST_FIELDS.len() {
            return Err(Error::data(format!(
                "line {line}: expected {} fields, got {}",
                MANIFEST_FIELDS.len(),
                row.len()
            )));
        }
        let get = |k: usize| row.get(k).unwrap();
        let ecg_id = get(0).to_string();
        if !seen.insert(ecg_id.clone()) {
            return Err(Error::data(format!(
                "line {line}: duplicate ecg_id '{ecg_id}'"
            )));
        }
        let sample_rate: u32 = get(3).parse().map_err(|_| {
            Error::data(format!("line {line}: field 'sample_rate' is not an integer"))
        })?;
        let acquired_at: i64 = get(4).parse().map_err(|_| {
            Error::data(format!("line {line}: field 'acquired_at' is not an integer"))
        })?;
        let sex = match get(6) {
            "" => None,
            "male" => Some(Sex::Male),
            "female" => Some(Sex::Female),
            other => {
                return Err(Error::data(format!(
                    "line {line}: field 'sex' must be male|female, got '{other}'"
                )))
            }
        };
        let entry = ManifestEntry {
            ecg_id,
            patient_id: get(1).to_string(),
            path: get(2).to_string(),
            sample_rate,
            acquired_at,
            age: parse_opt_f64(get(5), "age", line)?,
            sex,
            diagnosis_text: match get(7) {
                "" => None,
                s => Some(s.to_string()),
            },
            hr: parse_opt_f64(get(8), "hr", line)?,
            pr: parse_opt_f64(get(9), "pr", line)?,
            qrs: parse_opt_f64(get(10), "qrs", line)?,
            qt: parse_opt_f64(get(11), "qt", line)?,
            p_axis: parse_opt_f64(get(12), "p_axis", line)?,
            r_axis: parse_opt_f64(get(13), "r_axis", line)?,
            t_axis: parse_opt_f64(get(14), "t_axis", line)?,
        };
        let wave_path = entry.resolve_path(&manifest_dir);
        if !wave_path.exists() {
            return Err(Error::data(format!(
                "line {line}: waveform file not found: {}",
                wave_path.display()
            )));
        }
        entries.push(entry);
    }
    Ok(CohortManifest { entries })
}

/// Writes one ECG's leads as an integer-microvolt CSV with the
/// canonical 12-column header.
pub fn write_waveform_csv(leads: &BTreeMap<Lead, Vec<i32>>, path: &Path) -> Result<()> {
    let mut columns: Vec<&Vec<i32>> = Vec::with_capacity(NUM_LEADS);
    for lead in LEAD_ORDER {
        let wave = leads
            .get(&lead)
            .ok_or_else(|| Error::data(format!("missing lead {}", lead.name())))?;
        columns.push(wave);
    }
    let len = columns[0].len();
    if columns.iter().any(|c| c.len() != len) {
        return Err(Error::data("inconsistent lead lengths".to_string()));
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(LEAD_ORDER.map(|l| l.name()))?;
    let mut row = Vec::with_capacity(NUM_LEADS);
    for t in 0..len {
        row.clear();
        for c in &columns {
            row.push(c[t].to_string());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_waveform_csv(path: &Path) -> Result<BTreeMap<Lead, Vec<i32>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header_leads: Vec<Lead> = reader
        .headers()?
        .iter()
        .map(Lead::from_name)
        .collect::<Result<_>>()?;
    if header_leads != LEAD_ORDER {
        return Err(Error::data(format!(
            "waveform header out of canonical order in {}",
            path.display()
        )));
    }
    let mut columns: Vec<Vec<i32>> = vec![Vec::new(); NUM_LEADS];
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| {
            Error::data(format!("{}: row {}: {e}", path.display(), i + 2))
        })?;
        if row.len() != NUM_LEADS {
            return Err(Error::data(format!(
                "{}: row {}: expected {NUM_LEADS} columns, got {}",
                path.display(),
                i + 2,
                row.len()
            )));
        }
        for (c, field) in row.iter().enumerate() {
            let v: i32 = field.parse().map_err(|_| {
                Error::data(format!(
                    "{}: row {}: non-integer sample '{field}'",
                    path.display(),
                    i + 2
                ))
            })?;
            columns[c].push(v);
        }
    }
    Ok(LEAD_ORDER.iter().copied().zip(columns).collect())
}

/// Reads an entry's waveform file and merges it with the manifest
/// metadata into a full [`EcgRecord`].
pub fn load_record(entry: &ManifestEntry, manifest_dir: &Path) -> Result<EcgRecord> {
    let leads = read_waveform_csv(&entry.resolve_path(manifest_dir))?;
    Ok(EcgRecord {
        ecg_id: entry.ecg_id.clone(),
        patient_id: entry.patient_id.clone(),
        acquired_at: entry.acquired_at,
        sample_rate: entry.sample_rate,
        leads,
        age: entry.age,
        sex: entry.sex,
        diagnosis_text: entry.diagnosis_text.clone(),
        hr: entry.hr,
        pr: entry.pr,
        qrs: entry.qrs,
        qt: entry.qt,
        p_axis: entry.p_axis,
        r_axis: entry.r_axis,
        t_axis: entry.t_axis,
    })
}
