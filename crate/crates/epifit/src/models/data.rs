//! Validated dataset types consumed by the model builders.
//!
//! Parsing and file I/O live in the CLI; these constructors only check the
//! structural invariants each model relies on.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid data: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, DataError> {
    Err(DataError::Invalid(msg.into()))
}

/// The nine PHE regions, in the order used for indexing.
pub const REGION_NAMES: [&str; 9] = [
    "East Midlands",
    "East of England",
    "London",
    "North East",
    "North West",
    "South East",
    "South West",
    "West Midlands",
    "Yorkshire and the Humber",
];

pub const AGE_GROUPS: [&str; 7] = ["13-14", "15-19", "20-24", "25-34", "35-44", "45-64", "65+"];

pub const LONDON_REGION: usize = 2;

/// One stratum of the gonorrhoea counts: region x age group x gender.
#[derive(Clone, Copy, Debug)]
pub struct GonorrhoeaRow {
    /// Region index 0..9 into [`REGION_NAMES`].
    pub region: usize,
    /// Age-group index 0..7 into [`AGE_GROUPS`].
    pub age_group: usize,
    /// Gender indicator: true = male.
    pub male: bool,
    pub count: u64,
    pub population: u64,
}

impl GonorrhoeaRow {
    /// Location indicator derived from the region.
    pub fn london(&self) -> bool {
        self.region == LONDON_REGION
    }
}

#[derive(Clone, Debug)]
pub struct GonorrhoeaData {
    rows: Vec<GonorrhoeaRow>,
}

impl GonorrhoeaData {
    /// Requires exactly the 9 x 7 x 2 = 126 strata, each appearing once,
    /// with positive populations.
    pub fn new(mut rows: Vec<GonorrhoeaRow>) -> Result<Self, DataError> {
        if rows.len() != 126 {
            return invalid(format!("expected 126 strata rows, got {}", rows.len()));
        }
        let mut seen = [[[false; 2]; 7]; 9];
        for row in &rows {
            if row.region >= 9 {
                return invalid(format!("region index {} out of range", row.region));
            }
            if row.age_group >= 7 {
                return invalid(format!("age group index {} out of range", row.age_group));
            }
            if row.population == 0 {
                return invalid("population must be positive");
            }
            let m = row.male as usize;
            if seen[row.region][row.age_group][m] {
                return invalid(format!(
                    "duplicate stratum (region {}, age {}, male {})",
                    row.region, row.age_group, row.male
                ));
            }
            seen[row.region][row.age_group][m] = true;
        }
        rows.sort_by_key(|r| (r.region, r.age_group, r.male));
        Ok(GonorrhoeaData { rows })
    }

    pub fn rows(&self) -> &[GonorrhoeaRow] {
        &self.rows
    }
}

/// Daily counts of students confined to bed during the 1978 outbreak, or a
/// simulated dataset of the same shape.
#[derive(Clone, Debug)]
pub struct BoardingSchoolData {
    days: Vec<u32>,
    cases: Vec<u64>,
    population: u64,
}

impl BoardingSchoolData {
    /// Days must run 1, 2, ..., T; every count must not exceed the
    /// population.
    pub fn new(days: Vec<u32>, cases: Vec<u64>, population: u64) -> Result<Self, DataError> {
        if days.is_empty() || days.len() != cases.len() {
            return invalid("need equal, non-empty day and case columns");
        }
        for (i, d) in days.iter().enumerate() {
            if *d as usize != i + 1 {
                return invalid(format!("days must be consecutive from 1; found {d} at row {i}"));
            }
        }
        if population == 0 {
            return invalid("population must be positive");
        }
        if cases.iter().any(|c| *c > population) {
            return invalid("daily count exceeds population");
        }
        Ok(BoardingSchoolData {
            days,
            cases,
            population,
        })
    }

    pub fn days(&self) -> &[u32] {
        &self.days
    }

    pub fn cases(&self) -> &[u64] {
        &self.cases
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn times(&self) -> Vec<f64> {
        self.days.iter().map(|d| *d as f64).collect()
    }
}

/// Influenza strains distinguishable in the virology columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StrainId {
    H1,
    H3,
    B,
}

impl StrainId {
    pub const ALL: [StrainId; 3] = [StrainId::H1, StrainId::H3, StrainId::B];

    pub fn label(&self) -> &'static str {
        match self {
            StrainId::H1 => "H1",
            StrainId::H3 => "H3",
            StrainId::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<StrainId> {
        match s {
            "H1" => Some(StrainId::H1),
            "H3" => Some(StrainId::H3),
            "B" => Some(StrainId::B),
            _ => None,
        }
    }
}

/// One week of surveillance: ILI consultations plus virological samples.
#[derive(Clone, Copy, Debug)]
pub struct MultistrainWeek {
    pub week: u32,
    pub ili_cases: u64,
    pub monitored_pop: u64,
    /// Positive samples indexed as [H1, H3, B].
    pub positives: [u64; 3],
    pub negatives: u64,
}

impl MultistrainWeek {
    pub fn total_samples(&self) -> u64 {
        self.positives.iter().sum::<u64>() + self.negatives
    }
}

#[derive(Clone, Debug)]
pub struct MultistrainData {
    weeks: Vec<MultistrainWeek>,
    total_population: u64,
}

impl MultistrainData {
    /// Weeks must be contiguous from 1; populations positive.
    pub fn new(weeks: Vec<MultistrainWeek>, total_population: u64) -> Result<Self, DataError> {
        if weeks.is_empty() {
            return invalid("need at least one week of data");
        }
        for (i, w) in weeks.iter().enumerate() {
            if w.week as usize != i + 1 {
                return invalid(format!(
                    "weeks must be contiguous from 1; found {} at row {i}",
                    w.week
                ));
            }
            if w.monitored_pop == 0 {
                return invalid("monitored population must be positive");
            }
        }
        if total_population == 0 {
            return invalid("total population must be positive");
        }
        Ok(MultistrainData {
            weeks,
            total_population,
        })
    }

    pub fn weeks(&self) -> &[MultistrainWeek] {
        &self.weeks
    }

    pub fn n_weeks(&self) -> usize {
        self.weeks.len()
    }

    pub fn total_population(&self) -> u64 {
        self.total_population
    }
}
