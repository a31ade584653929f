use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::FormatError;

/// Ground truth of one pour sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PourTrace {
    pub sample_rate: f64,
    pub timestamps: Vec<f64>,
    pub liquid_height: Vec<f64>,
    pub air_column: Vec<f64>,
    pub weight: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    liquid_height_mm: f64,
    air_column_mm: f64,
    weight_g: f64,
}

impl PourTrace {
    pub fn with_capacity(sample_rate: f64, n: usize) -> Self {
        Self {
            sample_rate,
            timestamps: Vec::with_capacity(n),
            liquid_height: Vec::with_capacity(n),
            air_column: Vec::with_capacity(n),
            weight: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, t: f64, liquid_mm: f64, air_mm: f64, weight_g: f64) {
        self.timestamps.push(t);
        self.liquid_height.push(liquid_mm);
        self.air_column.push(air_mm);
        self.weight.push(weight_g);
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Air column at time `t`, linearly interpolated and clamped to the ends.
    pub fn air_column_at(&self, t: f64) -> f64 {
        interp_uniform(&self.air_column, self.timestamps.first().copied().unwrap_or(0.0), self.sample_rate, t)
    }

    pub fn liquid_height_at(&self, t: f64) -> f64 {
        interp_uniform(&self.liquid_height, self.timestamps.first().copied().unwrap_or(0.0), self.sample_rate, t)
    }

    /// Keeps every `step`-th sample.
    pub fn decimate(&self, step: usize) -> PourTrace {
        let step = step.max(1);
        let pick = |v: &Vec<f64>| v.iter().step_by(step).copied().collect::<Vec<_>>();
        PourTrace {
            sample_rate: self.sample_rate / step as f64,
            timestamps: pick(&self.timestamps),
            liquid_height: pick(&self.liquid_height),
            air_column: pick(&self.air_column),
            weight: pick(&self.weight),
        }
    }

    /// CSV with header `t,liquid_height_mm,air_column_mm,weight_g`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FormatError> {
        let mut wtr = csv::Writer::from_writer(w);
        for i in 0..self.len() {
            wtr.serialize(TraceRow {
                t: self.timestamps[i],
                liquid_height_mm: self.liquid_height[i],
                air_column_mm: self.air_column[i],
                weight_g: self.weight[i],
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`PourTrace::write_csv`]. The sample rate is
    /// inferred from the first two timestamps.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, FormatError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut trace = PourTrace::default();
        for row in rdr.deserialize() {
            let row: TraceRow = row?;
            trace.push(row.t, row.liquid_height_mm, row.air_column_mm, row.weight_g);
        }
        if trace.len() < 2 {
            return Err(FormatError::Malformed("trace needs at least two rows".into()));
        }
        let dt = trace.timestamps[1] - trace.timestamps[0];
        if !(dt > 0.0) {
            return Err(FormatError::Malformed("timestamps must increase".into()));
        }
        trace.sample_rate = 1.0 / dt;
        Ok(trace)
    }
}

fn interp_uniform(v: &[f64], t0: f64, rate: f64, t: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let x = ((t - t0) * rate).max(0.0);
    let i = x.floor() as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    let frac = x - i as f64;
    v[i] + (v[i + 1] - v[i]) * frac
}
