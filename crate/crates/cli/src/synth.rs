//! Synthetic series for smoke tests and the learning checks.

use std::str::FromStr;

use chrono::{NaiveDate, TimeDelta};
use rand_distr::{Distribution, Normal};
use sonnet_core::data::SeriesTable;
use sonnet_numerics::rng::seeded_rng;

use crate::error::{usage, CliError};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// `y = sin(2πt/period)`, exogenous `cos` of the same phase. Noiseless.
    Sinusoid,
    /// Gaussian random walk plus a daily cycle; exogenous is the cycle alone.
    SeasonalWalk,
    /// AR(1) target whose exogenous column is the target `lead` steps ahead.
    LeadingIndicator,
}

impl FromStr for SynthKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "sinusoid" => Ok(Self::Sinusoid),
            "seasonal-walk" => Ok(Self::SeasonalWalk),
            "leading-indicator" => Ok(Self::LeadingIndicator),
            other => Err(usage(format!(
                "unknown synthetic kind {other:?}; expected sinusoid, seasonal-walk or leading-indicator"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub seed: u64,
    /// Cycle length of the sinusoid and of the seasonal term.
    pub period: usize,
    pub lead: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            kind: SynthKind::Sinusoid,
            n: 200,
            seed: 42,
            period: 24,
            lead: 1,
        }
    }
}

/// AR coefficient of the leading-indicator target.
const AR_PHI: f64 = 0.9;

pub fn generate(spec: &SynthSpec) -> SeriesTable {
    let n = spec.n;
    let w = std::f64::consts::TAU / spec.period.max(1) as f64;
    let mut rng = seeded_rng(spec.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let (target, exog) = match spec.kind {
        SynthKind::Sinusoid => (
            (0..n).map(|t| (w * t as f64).sin()).collect(),
            (0..n).map(|t| (w * t as f64).cos()).collect(),
        ),
        SynthKind::SeasonalWalk => {
            let cycle: Vec<f64> = (0..n).map(|t| 3.0 * (w * t as f64).sin()).collect();
            let mut level = 0.0;
            let y = cycle
                .iter()
                .map(|c| {
                    level += 0.5 * noise.sample(&mut rng);
                    level + c
                })
                .collect();
            (y, cycle)
        }
        SynthKind::LeadingIndicator => {
            let mut z = Vec::with_capacity(n + spec.lead);
            let mut v = 0.0;
            for _ in 0..n + spec.lead {
                v = AR_PHI * v + noise.sample(&mut rng);
                z.push(v);
            }
            (z[..n].to_vec(), z[spec.lead..].to_vec())
        }
    };
    let t0 = NaiveDate::from_ymd_opt(2020, 1, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time");
    SeriesTable {
        timestamp_name: "date".into(),
        target_name: "y".into(),
        exog_names: vec!["x".into()],
        timestamps: (0..n).map(|i| t0 + TimeDelta::hours(i as i64)).collect(),
        target,
        exog,
    }
}
