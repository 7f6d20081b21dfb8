//! Downstream task definitions and label extraction from manifests.

use clap::ValueEnum;
use pclr_core::data::manifest::ManifestEntry;
use pclr_core::data::{label_af, label_lvh, Sex};
use pclr_core::lineval::Task;
use pclr_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskKind {
    /// Age regression in years.
    Age,
    /// Sex classification (female = 1).
    Sex,
    /// Left-ventricular-hypertrophy classification from diagnosis text.
    Lvh,
    /// Atrial-fibrillation classification from diagnosis text.
    Af,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Age => "age",
            TaskKind::Sex => "sex",
            TaskKind::Lvh => "lvh",
            TaskKind::Af => "af",
        }
    }

    pub fn task(&self) -> Task {
        match self {
            TaskKind::Age => Task::Regression,
            _ => Task::Classification,
        }
    }

    /// The supervised target for one manifest entry.
    pub fn target(&self, entry: &ManifestEntry) -> Result<f64> {
        match self {
            TaskKind::Age => entry
                .age
                .ok_or_else(|| Error::data(format!("ECG '{}' has no age", entry.ecg_id))),
            TaskKind::Sex => {
                let sex = entry
                    .sex
                    .ok_or_else(|| Error::data(format!("ECG '{}' has no sex", entry.ecg_id)))?;
                Ok(f64::from(sex == Sex::Female))
            }
            TaskKind::Lvh | TaskKind::Af => {
                let text = entry.diagnosis_text.as_deref().ok_or_else(|| {
                    Error::data(format!("ECG '{}' has no diagnosis text", entry.ecg_id))
                })?;
                let flag = match self {
                    TaskKind::Lvh => label_lvh(text),
                    _ => label_af(text),
                };
                Ok(f64::from(flag))
            }
        }
    }
}
