//! ECG records, waveform preprocessing, cohort quality filters, and
//! diagnosis-text labelers.
//!
//! Raw waveforms are 10-second 12-lead recordings at 250 or 500 Hz,
//! integer microvolts. Preparation divides by 1,000 (millivolts),
//! converts to `f32`, linearly interpolates each lead to 4,096 samples,
//! and stacks the leads in the fixed order
//! I, II, III, AVR, AVL, AVF, V1..V6.

pub mod manifest;
pub mod synth;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Samples per prepared lead.
pub const PREPARED_LEN: usize = 4096;
pub const NUM_LEADS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Lead {
    I,
    II,
    III,
    Avr,
    Avl,
    Avf,
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
}

/// Canonical column order of the prepared matrix.
pub const LEAD_ORDER: [Lead; NUM_LEADS] = [
    Lead::I,
    Lead::II,
    Lead::III,
    Lead::Avr,
    Lead::Avl,
    Lead::Avf,
    Lead::V1,
    Lead::V2,
    Lead::V3,
    Lead::V4,
    Lead::V5,
    Lead::V6,
];

impl Lead {
    pub fn name(&self) -> &'static str {
        match self {
            Lead::I => "I",
            Lead::II => "II",
            Lead::III => "III",
            Lead::Avr => "AVR",
            Lead::Avl => "AVL",
            Lead::Avf => "AVF",
            Lead::V1 => "V1",
            Lead::V2 => "V2",
            Lead::V3 => "V3",
            Lead::V4 => "V4",
            Lead::V5 => "V5",
            Lead::V6 => "V6",
        }
    }

    pub fn from_name(name: &str) -> Result<Lead> {
        LEAD_ORDER
            .iter()
            .copied()
            .find(|l| l.name() == name)
            .ok_or_else(|| Error::data(format!("unknown lead name '{name}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

/// One raw 12-lead ECG with patient identity and clinical metadata.
///
/// Lead waveforms are integer microvolts; each present lead must hold
/// `sample_rate * 10` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub ecg_id: String,
    pub patient_id: String,
    /// Unix seconds.
    pub acquired_at: i64,
    pub sample_rate: u32,
    pub leads: BTreeMap<Lead, Vec<i32>>,
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

impl EcgRecord {
    pub fn expected_samples(&self) -> usize {
        self.sample_rate as usize * 10
    }

    /// Largest absolute amplitude across all leads, in millivolts.
    pub fn max_abs_millivolts(&self) -> f64 {
        self.leads
            .values()
            .flat_map(|w| w.iter())
            .map(|&v| (v as f64).abs() / 1000.0)
            .fold(0.0, f64::max)
    }
}

/// The 4,096 x 12 prepared waveform matrix in millivolts, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedEcg {
    pub data: Vec<f32>,
}

impl PreparedEcg {
    pub fn matrix_len() -> usize {
        PREPARED_LEN * NUM_LEADS
    }

    /// Stacks prepared ECGs into a `[B, 4096, 12]` tensor.
    pub fn batch(rows: &[&PreparedEcg]) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(rows.len() * Self::matrix_len());
        for r in rows {
            data.extend_from_slice(&r.data);
        }
        Tensor::from_vec(&[rows.len(), PREPARED_LEN, NUM_LEADS], data)
    }
}

/// Linear interpolation of a lead onto `target` evenly spaced positions;
/// index `k` maps to source position `k*(L-1)/(target-1)`, so endpoints
/// are preserved exactly.
pub fn resample_lead(signal: &[f32], target: usize) -> Result<Vec<f32>> {
    if signal.len() < 2 {
        return Err(Error::data(format!(
            "resample needs at least 2 samples, got {}",
            signal.len()
        )));
    }
    if target < 2 {
        return Err(Error::data("resample target must be at least 2".to_string()));
    }
    let l = signal.len();
    let step = (l - 1) as f64 / (target - 1) as f64;
    let mut out = Vec::with_capacity(target);
    for k in 0..target {
        let pos = k as f64 * step;
        let i = pos.floor() as usize;
        if i + 1 >= l {
            out.push(signal[l - 1]);
        } else {
            let frac = pos - i as f64;
            let v = signal[i] as f64 * (1.0 - frac) + signal[i + 1] as f64 * frac;
            out.push(v as f32);
        }
    }
    Ok(out)
}

/// Builds the encoder input: per lead divide by 1,000 (mV), convert to
/// `f32`, resample to 4,096, then stack columns in canonical order.
pub fn prepare_ecg(record: &EcgRecord) -> Result<PreparedEcg> {
    let expected = record.expected_samples();
    let mut columns: Vec<Vec<f32>> = Vec::with_capacity(NUM_LEADS);
    for lead in LEAD_ORDER {
        let wave = record
            .leads
            .get(&lead)
            .ok_or_else(|| Error::data(format!("missing lead {}", lead.name())))?;
        if wave.len() != expected {
            return Err(Error::data(format!(
                "lead {} has {} samples, expected {} at {} Hz",
                lead.name(),
                wave.len(),
                expected,
                record.sample_rate
            )));
        }
        let mv: Vec<f32> = wave.iter().map(|&v| v as f32 / 1000.0).collect();
        columns.push(resample_lead(&mv, PREPARED_LEN)?);
    }
    let mut data = vec![0.0f32; PREPARED_LEN * NUM_LEADS];
    for (c, col) in columns.iter().enumerate() {
        for (t, &v) in col.iter().enumerate() {
            data[t * NUM_LEADS + c] = v;
        }
    }
    Ok(PreparedEcg { data })
}

/// Cohort selection profile: the AF datasets relax the required-field
/// list because the PR interval is undefined under atrial fibrillation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterProfile {
    NonAf,
    Af,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterOutcome {
    Pass,
    Reject(RejectReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    Age,
    Amplitude,
    MissingField(&'static str),
    PAxisSentinel,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::Age => write!(f, "age"),
            RejectReason::Amplitude => write!(f, "amplitude"),
            RejectReason::MissingField(field) => write!(f, "missing {field}"),
            RejectReason::PAxisSentinel => write!(f, "p-axis sentinel"),
        }
    }
}

/// Cohort quality filter. Checks, in order: age within [20, 90]; maximum
/// absolute amplitude at most 100 mV (over all leads, on raw millivolt
/// values); required-field presence for the profile; and the P-axis
/// missingness sentinel of -1 degrees (non-AF profile only). Returns the
/// first failing reason.
pub fn quality_filter(record: &EcgRecord, profile: FilterProfile) -> FilterOutcome {
    if let Some(age) = record.age {
        if !(20.0..=90.0).contains(&age) {
            return FilterOutcome::Reject(RejectReason::Age);
        }
    }
    if record.max_abs_millivolts() > 100.0 {
        return FilterOutcome::Reject(RejectReason::Amplitude);
    }
    let required: &[(&'static str, bool)] = match profile {
        FilterProfile::NonAf => &[
            ("age", true),
            ("sex", true),
            ("diagnosis_text", true),
            ("hr", true),
            ("pr", true),
            ("qt", true),
            ("qrs", true),
            ("p_axis", true),
            ("r_axis", true),
            ("t_axis", true),
        ],
        FilterProfile::Af => &[
            ("age", true),
            ("sex", true),
            ("hr", true),
            ("diagnosis_text", true),
        ],
    };
    for (field, _) in required {
        let present = match *field {
            "age" => record.age.is_some(),
            "sex" => record.sex.is_some(),
            "diagnosis_text" => record.diagnosis_text.is_some(),
            "hr" => record.hr.is_some(),
            "pr" => record.pr.is_some(),
            "qt" => record.qt.is_some(),
            "qrs" => record.qrs.is_some(),
            "p_axis" => record.p_axis.is_some(),
            "r_axis" => record.r_axis.is_some(),
            "t_axis" => record.t_axis.is_some(),
            _ => unreachable!(),
        };
        if !present {
            return FilterOutcome::Reject(RejectReason::MissingField(field));
        }
    }
    if profile == FilterProfile::NonAf {
        if let Some(p) = record.p_axis {
            if p == -1.0 {
                return FilterOutcome::Reject(RejectReason::PAxisSentinel);
            }
        }
    }
    FilterOutcome::Pass
}

/// Atrial-fibrillation diagnosis keywords.
pub const AF_KEYWORDS: [&str; 9] = [
    "atrial fibrillation with rapid ventricular response",
    "atrial fibrillation with moderate ventricular response",
    "fibrillation/flutter",
    "atrial fibrillation with controlled ventricular response",
    "afib",
    "atrial fib",
    "afibrillation",
    "atrial fibrillation",
    "atrialfibrillation",
];

/// Left-ventricular-hypertrophy diagnosis keywords.
pub const LVH_KEYWORDS: [&str; 5] = [
    "biventricular hypertrophy",
    "leftventricular hypertrophy",
    "combined ventricular hypertrophy",
    "left ventricular hypertr",
    "biventriclar hypertrophy",
];

/// Case-insensitive keyword containment against the AF set.
pub fn label_af(diagnosis_text: &str) -> bool {
    let lower = diagnosis_text.to_lowercase();
    AF_KEYWORDS.iter().any(|k| lower.contains(k))
}

/// Case-insensitive keyword containment against the LVH set.
pub fn label_lvh(diagnosis_text: &str) -> bool {
    let lower = diagnosis_text.to_lowercase();
    LVH_KEYWORDS.iter().any(|k| lower.contains(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_record() -> EcgRecord {
        let wave = vec![100i32; 2500];
        let leads: BTreeMap<Lead, Vec<i32>> =
            LEAD_ORDER.iter().map(|&l| (l, wave.clone())).collect();
        EcgRecord {
            ecg_id: "e1".to_string(),
            patient_id: "p1".to_string(),
            acquired_at: 0,
            sample_rate: 250,
            leads,
            age: Some(50.0),
            sex: Some(Sex::Female),
            diagnosis_text: Some("normal sinus rhythm".to_string()),
            hr: Some(70.0),
            pr: Some(160.0),
            qrs: Some(90.0),
            qt: Some(400.0),
            p_axis: Some(50.0),
            r_axis: Some(30.0),
            t_axis: Some(40.0),
        }
    }

    #[test]
    fn resample_constant_and_linear() {
        let c = resample_lead(&[3.5; 17], 4096).unwrap();
        assert!(c.iter().all(|&v| v == 3.5));
        let r = resample_lead(&[0.0, 1.0, 2.0, 3.0], 7).unwrap();
        assert_eq!(r, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn resample_ramp_stays_a_ramp() {
        let ramp: Vec<f32> = (0..2500).map(|i| i as f32).collect();
        let out = resample_lead(&ramp, 4096).unwrap();
        assert_eq!(out[0], 0.0);
        assert_eq!(out[4095], 2499.0);
        let step = 2499.0 / 4095.0;
        for (k, &v) in out.iter().enumerate() {
            assert!((v as f64 - k as f64 * step as f64).abs() < 1e-2, "k={k}");
        }
    }

    #[test]
    fn prepare_divides_microvolts_by_1000() {
        let mut rec = base_record();
        for wave in rec.leads.values_mut() {
            wave.iter_mut().for_each(|v| *v = 1500);
        }
        let prep = prepare_ecg(&rec).unwrap();
        assert_eq!(prep.data.len(), 4096 * 12);
        assert!(prep.data.iter().all(|&v| (v - 1.5).abs() < 1e-6));
    }

    #[test]
    fn prepare_handles_500hz() {
        let mut rec = base_record();
        rec.sample_rate = 500;
        for wave in rec.leads.values_mut() {
            *wave = vec![200i32; 5000];
        }
        let prep = prepare_ecg(&rec).unwrap();
        assert_eq!(prep.data.len(), 4096 * 12);
    }

    #[test]
    fn prepare_names_missing_lead() {
        let mut rec = base_record();
        rec.leads.remove(&Lead::V3);
        let err = prepare_ecg(&rec).unwrap_err();
        assert!(err.to_string().contains("V3"), "{err}");
    }

    #[test]
    fn quality_filter_age_bounds() {
        let mut rec = base_record();
        rec.age = Some(19.0);
        assert_eq!(
            quality_filter(&rec, FilterProfile::NonAf),
            FilterOutcome::Reject(RejectReason::Age)
        );
        rec.age = Some(90.0);
        assert_eq!(quality_filter(&rec, FilterProfile::NonAf), FilterOutcome::Pass);
    }

    #[test]
    fn quality_filter_p_axis_sentinel() {
        let mut rec = base_record();
        rec.p_axis = Some(-1.0);
        assert_eq!(
            quality_filter(&rec, FilterProfile::NonAf),
            FilterOutcome::Reject(RejectReason::PAxisSentinel)
        );
        // The AF profile does not examine the P-axis.
        assert_eq!(quality_filter(&rec, FilterProfile::Af), FilterOutcome::Pass);
    }

    #[test]
    fn af_profile_does_not_require_pr() {
        let mut rec = base_record();
        rec.pr = None;
        rec.p_axis = None;
        assert_eq!(quality_filter(&rec, FilterProfile::Af), FilterOutcome::Pass);
        assert_eq!(
            quality_filter(&rec, FilterProfile::NonAf),
            FilterOutcome::Reject(RejectReason::MissingField("pr"))
        );
    }

    #[test]
    fn quality_filter_amplitude_cap() {
        let mut rec = base_record();
        rec.leads.get_mut(&Lead::V2).unwrap()[10] = 100_001;
        assert_eq!(
            quality_filter(&rec, FilterProfile::NonAf),
            FilterOutcome::Reject(RejectReason::Amplitude)
        );
    }

    #[test]
    fn labelers_hit_expected_keywords() {
        assert!(label_af("AFIB with rapid response"));
        assert!(!label_af("normal sinus rhythm"));
        assert!(!label_lvh("normal sinus rhythm"));
        assert!(label_lvh("moderate LEFT VENTRICULAR HYPERTROPHY noted"));
        assert!(label_af("Atrial Fibrillation with controlled ventricular response"));
    }
}
