//! Seeded synthetic ECG cohort generator.
//!
//! Each patient draws latent traits (age, sex, per-lead gains, base
//! heart rate, interval durations, rhythm/hypertrophy flags); each ECG
//! renders ten seconds of PQRST-template beats — five Gaussian bumps
//! projected through per-lead weights — with per-record jitter and
//! additive noise. The waveform carries deliberate label signal: sex
//! shifts the T-wave amplitude, age stretches the intervals and T-wave
//! width, and the hypertrophy flag inflates the precordial leads.
//! Reported interval metadata is heavily noised so the waveform, not
//! the metadata, is the strong predictor.
//!
//! Generation is fully reproducible: every random draw comes from a
//! stream derived from (seed, patient index, record index).

use super::manifest::{write_manifest, write_waveform_csv, CohortManifest, ManifestEntry};
use super::{EcgRecord, Sex, AF_KEYWORDS, LEAD_ORDER, LVH_KEYWORDS, NUM_LEADS};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// PQRST bump shape: amplitudes, widths, and per-lead projections.
/// Row order is P, Q, R, S, T throughout.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PqrstTemplate {
    /// Base bump amplitudes in millivolts.
    pub amplitudes_mv: [f64; 5],
    /// Gaussian bump widths (sigma) in milliseconds.
    pub widths_ms: [f64; 5],
    /// Projection weight of each bump onto each canonical lead.
    pub lead_weights: [[f64; 12]; 5],
}

impl Default for PqrstTemplate {
    fn default() -> Self {
        PqrstTemplate {
            amplitudes_mv: [0.15, -0.2, 1.2, -0.35, 0.4],
            widths_ms: [22.0, 9.0, 12.0, 11.0, 60.0],
            lead_weights: [
                // P
                [0.8, 1.0, 0.4, -0.9, 0.2, 0.7, 0.3, 0.4, 0.5, 0.6, 0.7, 0.7],
                // Q
                [0.6, 0.8, 0.5, -0.7, 0.3, 0.7, 0.9, 0.8, 0.6, 0.5, 0.5, 0.4],
                // R
                [0.7, 1.0, 0.6, -0.8, 0.3, 0.8, -0.4, 0.2, 0.7, 1.1, 1.0, 0.9],
                // S
                [0.5, 0.7, 0.4, -0.6, 0.2, 0.6, 1.2, 1.1, 0.8, 0.5, 0.4, 0.3],
                // T
                [0.7, 1.0, 0.5, -0.8, 0.2, 0.8, 0.3, 0.6, 0.8, 1.0, 0.9, 0.8],
            ],
        }
    }
}

/// How latent intervals depend on age, and how flags reshape the beat.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IntervalModel {
    /// Milliseconds from beat onset to the P-bump center.
    pub p_onset_ms: f64,
    pub pr_base_ms: f64,
    /// Added PR milliseconds per year of age above/below the pivot.
    pub pr_age_coeff: f64,
    pub pr_sigma_ms: f64,
    pub qrs_base_ms: f64,
    pub qrs_sigma_ms: f64,
    pub qt_base_ms: f64,
    pub qt_age_coeff: f64,
    pub qt_sigma_ms: f64,
    /// Age used as the zero point of the age coefficients.
    pub age_pivot: f64,
    /// Fractional T-width change per year of age from the pivot.
    pub t_width_age_coeff: f64,
    /// Multiplies the T-bump amplitude for female patients.
    pub t_amp_female_factor: f64,
    /// Multiplies precordial (V1..V6) amplitudes when the hypertrophy
    /// flag is set.
    pub lvh_gain: f64,
}

impl Default for IntervalModel {
    fn default() -> Self {
        IntervalModel {
            p_onset_ms: 45.0,
            pr_base_ms: 150.0,
            pr_age_coeff: 0.6,
            pr_sigma_ms: 5.0,
            qrs_base_ms: 90.0,
            qrs_sigma_ms: 4.0,
            qt_base_ms: 360.0,
            qt_age_coeff: 1.5,
            qt_sigma_ms: 6.0,
            age_pivot: 55.0,
            t_width_age_coeff: 0.012,
            t_amp_female_factor: 1.2,
            lvh_gain: 1.6,
        }
    }
}

/// Full generator configuration; every knob lives here.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Inclusive (min, max) ECG count per patient.
    pub ecgs_per_patient: (usize, usize),
    pub seed: u64,
    /// Sample rates drawn uniformly per record.
    pub sample_rates: Vec<u32>,
    /// Additive waveform noise sigma in microvolts.
    pub noise_microvolts: f64,
    /// Per-patient probability of the atrial-fibrillation flag.
    pub af_rate: f64,
    /// Per-patient probability of the hypertrophy flag.
    pub lvh_rate: f64,
    pub age_range: (f64, f64),
    pub female_rate: f64,
    pub hr_range: (f64, f64),
    /// Per-patient global amplitude scale range (uniform).
    pub amplitude_scale_range: (f64, f64),
    /// Sigma of the per-patient, per-lead multiplicative log-gain.
    pub lead_gain_sigma: f64,
    /// Per-record fractional jitter of heart rate and amplitude.
    pub record_jitter: f64,
    /// Sigma of the noise added to reported interval metadata (ms).
    pub metadata_noise_ms: f64,
    pub template: PqrstTemplate,
    pub intervals: IntervalModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 64,
            ecgs_per_patient: (2, 4),
            seed: 7,
            sample_rates: vec![250, 500],
            noise_microvolts: 20.0,
            af_rate: 0.15,
            lvh_rate: 0.15,
            age_range: (20.0, 90.0),
            female_rate: 0.5,
            hr_range: (55.0, 95.0),
            amplitude_scale_range: (0.85, 1.15),
            lead_gain_sigma: 0.06,
            record_jitter: 0.03,
            metadata_noise_ms: 60.0,
            template: PqrstTemplate::default(),
            intervals: IntervalModel::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::config("n_patients must be positive"));
        }
        let (lo, hi) = self.ecgs_per_patient;
        if lo == 0 || hi < lo {
            return Err(Error::config("ecgs_per_patient must satisfy 1 <= min <= max"));
        }
        if self.sample_rates.is_empty()
            || self.sample_rates.iter().any(|&r| r != 250 && r != 500)
        {
            return Err(Error::config("sample_rates must be a non-empty subset of {250, 500}"));
        }
        if !(0.0..=1.0).contains(&self.af_rate)
            || !(0.0..=1.0).contains(&self.lvh_rate)
            || !(0.0..=1.0).contains(&self.female_rate)
        {
            return Err(Error::config("rates must lie in [0,1]"));
        }
        if self.age_range.0 >= self.age_range.1 || self.hr_range.0 >= self.hr_range.1 {
            return Err(Error::config("ranges must have min < max"));
        }
        Ok(())
    }
}

/// Latent per-patient state; fixed across all of a patient's ECGs.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientTraits {
    pub patient_idx: usize,
    pub age: f64,
    pub sex: Sex,
    pub af: bool,
    pub lvh: bool,
    pub amplitude_scale: f64,
    pub lead_gains: [f64; 12],
    pub base_hr: f64,
    pub pr_ms: f64,
    pub qrs_ms: f64,
    pub qt_ms: f64,
    pub p_axis: f64,
    pub r_axis: f64,
    pub t_axis: f64,
    pub n_ecgs: usize,
}

impl PatientTraits {
    pub fn patient_id(&self) -> String {
        format!("p{:05}", self.patient_idx)
    }
}

fn derive_rng(seed: u64, a: u64, b: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&a.to_le_bytes());
    key[16..24].copy_from_slice(&b.to_le_bytes());
    key[24..].copy_from_slice(&tag.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a patient's latent traits; deterministic in (seed, index).
pub fn draw_patient_traits(config: &SynthConfig, patient_idx: usize) -> PatientTraits {
    let mut rng = derive_rng(config.seed, patient_idx as u64, 0, 0x5041_5449);
    let iv = &config.intervals;
    let age = rng.random_range(config.age_range.0..config.age_range.1);
    let sex = if rng.random::<f64>() < config.female_rate {
        Sex::Female
    } else {
        Sex::Male
    };
    let af = rng.random::<f64>() < config.af_rate;
    let lvh = rng.random::<f64>() < config.lvh_rate;
    let amplitude_scale =
        rng.random_range(config.amplitude_scale_range.0..config.amplitude_scale_range.1);
    let mut lead_gains = [0.0f64; 12];
    for g in &mut lead_gains {
        *g = (config.lead_gain_sigma * normal(&mut rng)).exp();
    }
    let base_hr = rng.random_range(config.hr_range.0..config.hr_range.1);
    let da = age - iv.age_pivot;
    let pr_ms = iv.pr_base_ms + iv.pr_age_coeff * da + iv.pr_sigma_ms * normal(&mut rng);
    let qrs_ms = iv.qrs_base_ms + iv.qrs_sigma_ms * normal(&mut rng);
    let qt_ms = iv.qt_base_ms + iv.qt_age_coeff * da + iv.qt_sigma_ms * normal(&mut rng);
    let p_axis = rng.random_range(0.0..75.0);
    let r_axis = rng.random_range(-30.0..90.0);
    let t_axis = rng.random_range(0.0..90.0);
    let (lo, hi) = config.ecgs_per_patient;
    let n_ecgs = rng.random_range(lo..=hi);
    PatientTraits {
        patient_idx,
        age,
        sex,
        af,
        lvh,
        amplitude_scale,
        lead_gains,
        base_hr,
        pr_ms,
        qrs_ms,
        qt_ms,
        p_axis,
        r_axis,
        t_axis,
        n_ecgs,
    }
}

/// Bump centers in milliseconds from beat onset, order P,Q,R,S,T.
fn bump_centers_ms(iv: &IntervalModel, traits: &PatientTraits) -> [f64; 5] {
    let p = iv.p_onset_ms;
    let q = p + traits.pr_ms;
    let r = q + 0.35 * traits.qrs_ms;
    let s = q + 0.8 * traits.qrs_ms;
    let t = q + 0.72 * traits.qt_ms;
    [p, q, r, s, t]
}

fn diagnosis_text(traits: &PatientTraits, rng: &mut ChaCha8Rng) -> String {
    let mut parts: Vec<String> = Vec::new();
    if traits.af {
        let k = AF_KEYWORDS[rng.random_range(0..AF_KEYWORDS.len())];
        parts.push(k.to_string());
    }
    if traits.lvh {
        let k = LVH_KEYWORDS[rng.random_range(0..LVH_KEYWORDS.len())];
        parts.push(k.to_string());
    }
    if parts.is_empty() {
        "normal sinus rhythm".to_string()
    } else {
        parts.join(", ")
    }
}

/// Renders one ECG for a patient; deterministic in
/// (config.seed, traits.patient_idx, record_idx). Flag effects (sex,
/// hypertrophy, rhythm) are pure amplitude/shape scalings, so flipping
/// a flag on otherwise identical traits yields a paired record.
pub fn synthesize_record(
    config: &SynthConfig,
    traits: &PatientTraits,
    record_idx: usize,
) -> EcgRecord {
    let mut rng = derive_rng(
        config.seed,
        traits.patient_idx as u64,
        record_idx as u64,
        0x5245_434f,
    );
    let iv = &config.intervals;
    let tpl = &config.template;

    let sample_rate = config.sample_rates[rng.random_range(0..config.sample_rates.len())];
    let n = sample_rate as usize * 10;
    let dt_ms = 1000.0 / sample_rate as f64;

    let hr = traits.base_hr * (1.0 + config.record_jitter * normal(&mut rng));
    let amp_jitter = 1.0 + config.record_jitter * normal(&mut rng);
    let phase_ms = rng.random_range(0.0..200.0);

    // Beat onsets over the 10-second strip. AF strips have strongly
    // irregular RR intervals; sinus strips only mild jitter. Both draw
    // one value per beat so the stream stays aligned across flag flips.
    let mut onsets_ms = Vec::new();
    let mut t_ms = phase_ms;
    let period_ms = 60_000.0 / hr;
    while t_ms < 10_000.0 {
        onsets_ms.push(t_ms);
        let u: f64 = rng.random();
        let factor = if traits.af {
            0.7 + 0.6 * u
        } else {
            0.98 + 0.04 * u
        };
        t_ms += period_ms * factor;
    }

    let centers = bump_centers_ms(iv, traits);
    let da = traits.age - iv.age_pivot;
    let mut widths = tpl.widths_ms;
    widths[4] *= 1.0 + iv.t_width_age_coeff * da;
    let mut amps = tpl.amplitudes_mv;
    if traits.sex == Sex::Female {
        amps[4] *= iv.t_amp_female_factor;
    }
    if traits.af {
        amps[0] = 0.0; // no P wave
    }

    // Per-lead clean signal in millivolts.
    let mut clean = vec![vec![0.0f64; n]; NUM_LEADS];
    for &onset in &onsets_ms {
        for b in 0..5 {
            let center = onset + centers[b];
            let sigma = widths[b];
            let lo = ((((center - 4.0 * sigma) / dt_ms).floor().max(0.0)) as usize).min(n);
            let hi = ((((center + 4.0 * sigma) / dt_ms).ceil()) as usize).min(n);
            if lo >= hi {
                continue;
            }
            for (lead, clean_lead) in clean.iter_mut().enumerate() {
                let precordial = lead >= 6;
                let mut a = amps[b]
                    * tpl.lead_weights[b][lead]
                    * traits.amplitude_scale
                    * traits.lead_gains[lead]
                    * amp_jitter;
                if traits.lvh && precordial {
                    a *= iv.lvh_gain;
                }
                for (k, slot) in clean_lead[lo..hi].iter_mut().enumerate() {
                    let t = (lo + k) as f64 * dt_ms;
                    let z = (t - center) / sigma;
                    *slot += a * (-0.5 * z * z).exp();
                }
            }
        }
    }

    // Additive noise, microvolt integer conversion, 16-bit clamp.
    let noise_mv = config.noise_microvolts / 1000.0;
    let mut leads = BTreeMap::new();
    for (lead_idx, lead) in LEAD_ORDER.iter().enumerate() {
        let wave: Vec<i32> = clean[lead_idx]
            .iter()
            .map(|&v| {
                let with_noise = v + noise_mv * normal(&mut rng);
                ((with_noise * 1000.0).round() as i64)
                    .clamp(i16::MIN as i64, i16::MAX as i64) as i32
            })
            .collect();
        leads.insert(*lead, wave);
    }

    // Reported metadata: true latent values plus heavy noise, so the
    // metadata baseline is much weaker than the waveform.
    let md = config.metadata_noise_ms;
    let hr_reported = hr + 2.0 * normal(&mut rng);
    let pr_reported = traits.pr_ms + md * normal(&mut rng);
    let qrs_reported = traits.qrs_ms + md * normal(&mut rng);
    let qt_reported = traits.qt_ms + md * normal(&mut rng);
    let axis_noise = 5.0;
    let diag = diagnosis_text(traits, &mut rng);

    EcgRecord {
        ecg_id: format!("{}_e{:03}", traits.patient_id(), record_idx),
        patient_id: traits.patient_id(),
        acquired_at: 1_600_000_000
            + traits.patient_idx as i64 * 86_400 * 40
            + record_idx as i64 * 86_400,
        sample_rate,
        leads,
        age: Some(traits.age),
        sex: Some(traits.sex),
        diagnosis_text: Some(diag),
        hr: Some(hr_reported),
        pr: if traits.af { None } else { Some(pr_reported) },
        qrs: Some(qrs_reported),
        qt: Some(qt_reported),
        p_axis: if traits.af {
            None
        } else {
            Some(traits.p_axis + axis_noise * normal(&mut rng))
        },
        r_axis: Some(traits.r_axis + axis_noise * normal(&mut rng)),
        t_axis: Some(traits.t_axis + axis_noise * normal(&mut rng)),
    }
}

/// Generates the full cohort: waveform CSVs plus `manifest.csv` under
/// `out_dir`.
pub fn generate_synthetic_cohort(config: &SynthConfig, out_dir: &Path) -> Result<CohortManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut entries = Vec::new();
    for p in 0..config.n_patients {
        let traits = draw_patient_traits(config, p);
        for r in 0..traits.n_ecgs {
            let record = synthesize_record(config, &traits, r);
            let file = format!("{}.csv", record.ecg_id);
            write_waveform_csv(&record.leads, &out_dir.join(&file))?;
            entries.push(ManifestEntry {
                ecg_id: record.ecg_id.clone(),
                patient_id: record.patient_id.clone(),
                path: file,
                sample_rate: record.sample_rate,
                acquired_at: record.acquired_at,
                age: record.age,
                sex: record.sex,
                diagnosis_text: record.diagnosis_text.clone(),
                hr: record.hr,
                pr: record.pr,
                qrs: record.qrs,
                qt: record.qt,
                p_axis: record.p_axis,
                r_axis: record.r_axis,
                t_axis: record.t_axis,
            });
        }
    }
    let manifest = CohortManifest { entries };
    write_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{label_af, label_lvh, quality_filter, FilterOutcome, FilterProfile, Lead};

    fn tiny_config() -> SynthConfig {
        SynthConfig {
            n_patients: 4,
            ecgs_per_patient: (2, 3),
            seed: 42,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = tiny_config();
        let t = draw_patient_traits(&cfg, 1);
        let a = synthesize_record(&cfg, &t, 0);
        let b = synthesize_record(&cfg, &t, 0);
        assert_eq!(a.leads, b.leads);
        assert_eq!(a.hr, b.hr);
        // Noise-free generation is equally deterministic.
        let quiet = SynthConfig {
            noise_microvolts: 0.0,
            ..cfg
        };
        let c = synthesize_record(&quiet, &t, 0);
        let d = synthesize_record(&quiet, &t, 0);
        assert_eq!(c.leads, d.leads);
    }

    #[test]
    fn distinct_seeds_give_distinct_waveforms() {
        let a_cfg = tiny_config();
        let b_cfg = SynthConfig {
            seed: 43,
            ..tiny_config()
        };
        let a = synthesize_record(&a_cfg, &draw_patient_traits(&a_cfg, 0), 0);
        let b = synthesize_record(&b_cfg, &draw_patient_traits(&b_cfg, 0), 0);
        assert_ne!(a.leads, b.leads);
    }

    #[test]
    fn patient_traits_reproducible_under_fixed_seed() {
        let cfg = tiny_config();
        assert_eq!(draw_patient_traits(&cfg, 2), draw_patient_traits(&cfg, 2));
        assert_ne!(
            draw_patient_traits(&cfg, 2).age,
            draw_patient_traits(&cfg, 3).age
        );
    }

    #[test]
    fn hypertrophy_inflates_precordial_amplitudes() {
        let cfg = SynthConfig {
            noise_microvolts: 0.0,
            ..tiny_config()
        };
        let mut traits = draw_patient_traits(&cfg, 0);
        traits.lvh = false;
        let off = synthesize_record(&cfg, &traits, 0);
        traits.lvh = true;
        let on = synthesize_record(&cfg, &traits, 0);
        let max_precordial = |r: &EcgRecord| {
            [Lead::V1, Lead::V2, Lead::V3, Lead::V4, Lead::V5, Lead::V6]
                .iter()
                .flat_map(|l| r.leads[l].iter())
                .map(|&v| v.abs())
                .max()
                .unwrap()
        };
        assert!(max_precordial(&on) > max_precordial(&off));
        // Limb leads are untouched.
        assert_eq!(on.leads[&Lead::I], off.leads[&Lead::I]);
    }

    #[test]
    fn af_records_carry_keyword_and_drop_pr() {
        let cfg = tiny_config();
        let mut traits = draw_patient_traits(&cfg, 0);
        traits.af = true;
        let rec = synthesize_record(&cfg, &traits, 0);
        assert!(label_af(rec.diagnosis_text.as_deref().unwrap()));
        assert!(rec.pr.is_none());
        assert!(rec.p_axis.is_none());
        assert_eq!(quality_filter(&rec, FilterProfile::Af), FilterOutcome::Pass);
        traits.af = false;
        traits.lvh = true;
        let rec = synthesize_record(&cfg, &traits, 0);
        assert!(label_lvh(rec.diagnosis_text.as_deref().unwrap()));
        assert!(!label_af(rec.diagnosis_text.as_deref().unwrap()));
    }

    #[test]
    fn cohort_writes_loadable_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let manifest = generate_synthetic_cohort(&cfg, dir.path()).unwrap();
        assert!(manifest.entries.len() >= 8);
        let loaded = super::super::manifest::load_manifest(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(loaded, manifest);
        // Non-AF records pass the strict profile.
        for entry in &loaded.entries {
            let rec = super::super::manifest::load_record(entry, dir.path()).unwrap();
            let profile = if rec.pr.is_none() {
                FilterProfile::Af
            } else {
                FilterProfile::NonAf
            };
            assert_eq!(quality_filter(&rec, profile), FilterOutcome::Pass, "{}", rec.ecg_id);
            assert_eq!(rec.expected_samples(), rec.leads[&Lead::II].len());
        }
    }

    #[test]
    fn sex_shifts_t_wave_amplitude() {
        let cfg = SynthConfig {
            noise_microvolts: 0.0,
            ..tiny_config()
        };
        let mut traits = draw_patient_traits(&cfg, 0);
        traits.af = false;
        traits.sex = Sex::Male;
        let male = synthesize_record(&cfg, &traits, 0);
        traits.sex = Sex::Female;
        let female = synthesize_record(&cfg, &traits, 0);
        // T-bump scaling raises the overall absolute sum on lead II.
        let sum_abs = |r: &EcgRecord| -> i64 {
            r.leads[&Lead::II].iter().map(|&v| v.abs() as i64).sum()
        };
        assert!(sum_abs(&female) > sum_abs(&male));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = SynthConfig {
            n_patients: 0,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            sample_rates: vec![300],
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
