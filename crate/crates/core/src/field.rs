//! Dense real `channels x slices` arrays.
//!
//! [`ControlField`] is the optimization variable of every solver. The same
//! type also carries the difference-image blocks (`channels x (slices - 1)`)
//! used by the splitting solver, so its shape is not tied to a task.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ControlField {
    channels: usize,
    slices: usize,
    data: Vec<f64>,
}

impl ControlField {
    pub fn zeros(channels: usize, slices: usize) -> Self {
        Self {
            channels,
            slices,
            data: vec![0.0; channels * slices],
        }
    }

    pub fn constant(channels: usize, slices: usize, value: f64) -> Self {
        Self {
            channels,
            slices,
            data: vec![value; channels * slices],
        }
    }

    /// Builds a field from row-major data.
    pub fn from_vec(channels: usize, slices: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * slices {
            return Err(Error::ShapeMismatch {
                what: "control field data".into(),
                expected: (channels, slices),
                actual: (data.len(), 1),
            });
        }
        Ok(Self { channels, slices, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.len();
        let slices = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != slices) {
            return Err(Error::ShapeMismatch {
                what: "control field rows".into(),
                expected: (channels, slices),
                actual: (channels, bad.len()),
            });
        }
        Ok(Self {
            channels,
            slices,
            data: rows.concat(),
        })
    }

    pub fn from_fn(channels: usize, slices: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * slices);
        for m in 0..channels {
            for k in 0..slices {
                data.push(f(m, k));
            }
        }
        Self { channels, slices, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.slices)
    }

    #[inline]
    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.data[m * self.slices + k]
    }

    #[inline]
    pub fn set(&mut self, m: usize, k: usize, v: f64) {
        self.data[m * self.slices + k] = v;
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.slices..(m + 1) * self.slices]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.slices..(m + 1) * self.slices]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|m| self.row(m).to_vec()).collect()
    }

    pub fn ensure_shape(&self, what: &str, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::ShapeMismatch {
                what: what.into(),
                expected,
                actual: self.shape(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            channels: self.channels,
            slices: self.slices,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Entrywise combination of two equally shaped fields.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            channels: self.channels,
            slices: self.slices,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn mean_square(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.dot(self) / self.data.len() as f64
    }
}

impl Serialize for ControlField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ControlField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        ControlField::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
