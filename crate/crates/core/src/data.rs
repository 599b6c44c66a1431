//! Operating points, knock records and condition-grouped datasets.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

/// Dense condition identifier: `0..dataset.n_conditions()`.
pub type ConditionId = usize;

/// Engine operating condition `u`.
///
/// `fit` is the fuel-injection timing in degrees relative to borderline
/// knock (BL = 0); positive is advanced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    speed: f64,
    manifold_pressure: f64,
    fit: f64,
}

impl OperatingPoint {
    pub const DIM: usize = 3;

    pub fn new(speed: f64, manifold_pressure: f64, fit: f64) -> Result<Self> {
        if !(speed.is_finite() && manifold_pressure.is_finite() && fit.is_finite())
            || speed <= 0.0
            || manifold_pressure <= 0.0
        {
            return Err(Error::InvalidOperatingPoint);
        }
        Ok(OperatingPoint { speed, manifold_pressure, fit })
    }

    /// Engine speed in rpm.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Manifold pressure in bar.
    pub fn manifold_pressure(&self) -> f64 {
        self.manifold_pressure
    }

    /// Injection timing relative to borderline, in degrees.
    pub fn fit(&self) -> f64 {
        self.fit
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.speed, self.manifold_pressure, self.fit]
    }

    /// Bitwise identity, used for grouping and schedule caching.
    pub fn same_as(&self, other: &OperatingPoint) -> bool {
        self.speed.to_bits() == other.speed.to_bits()
            && self.manifold_pressure.to_bits() == other.manifold_pressure.to_bits()
            && self.fit.to_bits() == other.fit.to_bits()
    }
}

/// One recorded (or generated) run of consecutive cycles at a fixed condition.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockRecord {
    pub condition: OperatingPoint,
    pub record_id: u32,
    /// Knock intensity per cycle, in cycle order.
    pub ki: Vec<f64>,
}

impl KnockRecord {
    /// Builds a record, rejecting non-finite intensities.
    pub fn new(condition: OperatingPoint, record_id: u32, ki: Vec<f64>) -> Result<Self> {
        if let Some((cycle, &value)) = ki.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidRecord { record_id, cycle, value });
        }
        Ok(KnockRecord { condition, record_id, ki })
    }

    /// Builds a record of measured intensities, which are PSD-derived and
    /// therefore nonnegative.
    pub fn measured(condition: OperatingPoint, record_id: u32, ki: Vec<f64>) -> Result<Self> {
        let record = Self::new(condition, record_id, ki)?;
        record.check_nonnegative()?;
        Ok(record)
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        match self.ki.iter().enumerate().find(|(_, v)| **v < 0.0) {
            Some((cycle, &value)) => Err(Error::InvalidRecord {
                record_id: self.record_id,
                cycle,
                value,
            }),
            None => Ok(()),
        }
    }
}

/// Records grouped by operating condition.
///
/// Conditions get dense ids in order of first appearance; records are stored
/// grouped by condition, preserving their relative order within a condition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    records: Vec<KnockRecord>,
    conditions: Vec<OperatingPoint>,
    condition_index: Vec<Range<usize>>,
}

impl Dataset {
    pub fn new(records: Vec<KnockRecord>) -> Self {
        let mut conditions: Vec<OperatingPoint> = Vec::new();
        let mut keyed: Vec<(usize, KnockRecord)> = Vec::with_capacity(records.len());
        for record in records {
            let id = match conditions.iter().position(|c| c.same_as(&record.condition)) {
                Some(id) => id,
                None => {
                    conditions.push(record.condition);
                    conditions.len() - 1
                }
            };
            keyed.push((id, record));
        }
        keyed.sort_by_key(|(id, _)| *id);

        let mut condition_index = Vec::with_capacity(conditions.len());
        let mut start = 0;
        for id in 0..conditions.len() {
            let len = keyed[start..].iter().take_while(|(k, _)| *k == id).count();
            condition_index.push(start..start + len);
            start += len;
        }
        let records = keyed.into_iter().map(|(_, r)| r).collect();
        Dataset { records, conditions, condition_index }
    }

    pub fn n_conditions(&self) -> usize {
        self.conditions.len()
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn n_samples(&self) -> usize {
        self.records.iter().map(|r| r.ki.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples() == 0
    }

    pub fn conditions(&self) -> &[OperatingPoint] {
        &self.conditions
    }

    pub fn condition(&self, id: ConditionId) -> Result<OperatingPoint> {
        self.conditions.get(id).copied().ok_or(Error::UnknownCondition(id))
    }

    /// All records, grouped by ascending condition id.
    pub fn records(&self) -> &[KnockRecord] {
        &self.records
    }

    pub fn records_of(&self, id: ConditionId) -> Result<&[KnockRecord]> {
        let range = self.condition_index.get(id).ok_or(Error::UnknownCondition(id))?;
        Ok(&self.records[range.clone()])
    }

    /// Condition id owning the record at `index` in [`Dataset::records`].
    pub fn condition_of_record(&self, index: usize) -> Option<ConditionId> {
        self.condition_index.iter().position(|r| r.contains(&index))
    }

    /// Concatenated intensities of every record at condition `id`.
    pub fn samples_of(&self, id: ConditionId) -> Result<Vec<f64>> {
        Ok(self.records_of(id)?.iter().flat_map(|r| r.ki.iter().copied()).collect())
    }

    /// Every `(u, y)` training pair, one per cycle.
    pub fn pairs(&self) -> impl Iterator<Item = (OperatingPoint, f64)> + '_ {
        self.records
            .iter()
            .flat_map(|r| r.ki.iter().map(move |&y| (r.condition, y)))
    }

    /// A new dataset holding only the listed conditions, re-indexed densely
    /// in the order given.
    pub fn subset(&self, ids: &[ConditionId]) -> Result<Dataset> {
        let mut records = Vec::new();
        for &id in ids {
            records.extend_from_slice(self.records_of(id)?);
        }
        Ok(Dataset::new(records))
    }

    /// Rejects negative intensities, for datasets of measured knock.
    pub fn check_nonnegative(&self) -> Result<()> {
        self.records.iter().try_for_each(KnockRecord::check_nonnegative)
    }
}

/// Holds out the records of one condition as the test set.
pub fn split_leave_one_out(data: &Dataset, held_out: ConditionId) -> Result<(Dataset, Dataset)> {
    data.condition(held_out)?;
    if data.n_conditions() < 2 {
        return Err(Error::EmptySplit);
    }
    let rest: Vec<ConditionId> = (0..data.n_conditions()).filter(|&id| id != held_out).collect();
    Ok((data.subset(&rest)?, data.subset(&[held_out])?))
}
