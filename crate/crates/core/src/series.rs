//! Mid-price time series and its `t,mid_price` CSV form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgps::PgpsParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidPriceSeries {
    pub values: Vec<f64>,
    /// Seed that generated the series; absent for ingested data.
    pub seed: Option<u64>,
    pub params: Option<PgpsParams>,
}

impl MidPriceSeries {
    pub fn observed(values: Vec<f64>) -> Self {
        MidPriceSeries { values, seed: None, params: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every `stride`-th value starting from the first.
    pub fn downsample(&self, stride: usize) -> MidPriceSeries {
        let stride = stride.max(1);
        MidPriceSeries {
            values: self.values.iter().step_by(stride).copied().collect(),
            seed: self.seed,
            params: self.params,
        }
    }

    /// Converts decimal prices to tick units.
    pub fn to_ticks(&self, tick_size: f64) -> Result<MidPriceSeries> {
        if !(tick_size > 0.0 && tick_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("tick size must be positive, got {tick_size}")));
        }
        Ok(MidPriceSeries {
            values: self.values.iter().map(|v| v / tick_size).collect(),
            ..self.clone()
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 12 + 12);
        out.push_str("t,mid_price\n");
        for (t, v) in self.values.iter().enumerate() {
            // half-tick values print with one fractional digit, anything else round-trips
            if (v * 2.0).fract() == 0.0 {
                let _ = writeln!(out, "{},{:.1}", t + 1, v);
            } else {
                let _ = writeln!(out, "{},{}", t + 1, v);
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<MidPriceSeries> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "t,mid_price" => {}
            Some((_, header)) => {
                return Err(Error::Parse { line: 1, msg: format!("expected header `t,mid_price`, got `{header}`") })
            }
            None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
        }
        let mut values = Vec::new();
        let mut prev_t: Option<i64> = None;
        for (idx, raw) in lines {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let (t, price) = raw
                .split_once(',')
                .ok_or_else(|| Error::Parse { line, msg: format!("expected two fields, got `{raw}`") })?;
            let t: i64 = t
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("invalid time index `{t}`") })?;
            if prev_t.is_some_and(|p| t <= p) {
                return Err(Error::Parse { line, msg: format!("time index {t} out of order") });
            }
            prev_t = Some(t);
            let price: f64 = price
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("invalid price `{price}`") })?;
            if !price.is_finite() || price <= 0.0 {
                return Err(Error::Parse { line, msg: format!("price must be positive, got {price}") });
            }
            values.push(price);
        }
        if values.len() < 2 {
            return Err(Error::SeriesTooShort { need: 2, got: values.len() });
        }
        Ok(MidPriceSeries::observed(values))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<MidPriceSeries> {
        Self::parse_csv(&fs::read_to_string(path)?)
    }
}
