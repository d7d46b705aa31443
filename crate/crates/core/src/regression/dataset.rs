use core::fmt::Write;

use serde::Serialize;

use super::RegressionFamily;
use crate::distributions::Seed;
use crate::prelude::*;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub family: Option<RegressionFamily>,
    pub seed: Option<Seed>,
    pub n: usize,
    pub description: String,
}

/// Records `(y, x, w)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Vec<f64>, w: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if y.is_empty() || y.len() != x.len() || y.len() != w.len() {
            return Err(Error::params("a dataset needs equally many y, x and w values, at least one"));
        }
        if y.iter().chain(&x).chain(&w).any(|v| !v.is_finite()) {
            return Err(Error::params("dataset values must be finite"));
        }
        Ok(Self { y, x, w, provenance })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// The records whose `w` equals `level`.
    pub fn stratum(&self, level: f64) -> Option<Dataset> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.w[i] == level).collect();
        if idx.is_empty() {
            return None;
        }
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Some(Dataset {
            y: pick(&self.y),
            x: pick(&self.x),
            w: pick(&self.w),
            provenance: Provenance {
                n: idx.len(),
                description: format!("{} | w = {level}", self.provenance.description),
                ..self.provenance.clone()
            },
        })
    }

    /// CSV with header `y,x,w`; values round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,x,w\n");
        for i in 0..self.len() {
            let _ = writeln!(out, "{},{},{}", self.y[i], self.x[i], self.w[i]);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::params("empty CSV"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let pos = |name: &str| {
            cols.iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::params(format!("CSV header lacks column `{name}`")))
        };
        let (iy, ix, iw) = (pos("y")?, pos("x")?, pos("w")?);
        let (mut y, mut x, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::params(format!(
                    "CSV line {} has {} fields, expected {}",
                    lineno + 1,
                    fields.len(),
                    cols.len()
                )));
            }
            let num = |i: usize| {
                fields[i].parse::<f64>().map_err(|_| {
                    Error::params(format!("CSV line {}: `{}` is not a number", lineno + 1, fields[i]))
                })
            };
            y.push(num(iy)?);
            x.push(num(ix)?);
            w.push(num(iw)?);
        }
        let n = y.len();
        Dataset::new(
            y,
            x,
            w,
            Provenance {
                family: None,
                seed: None,
                n,
                description: "imported CSV".into(),
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(
            vec![1.0, 0.1 + 0.2, -3.5e-9],
            vec![0.0, 1.0 / 3.0, 2.0],
            vec![1.0, 0.0, 1.0],
            Provenance {
                family: None,
                seed: None,
                n: 3,
                description: "t".into(),
            },
        )
        .unwrap();
        let back = Dataset::from_csv(&d.to_csv()).unwrap();
        assert_eq!(back.y, d.y);
        assert_eq!(back.x, d.x);
        assert_eq!(back.w, d.w);
        assert_eq!(d.stratum(1.0).unwrap().len(), 2);
        assert!(d.stratum(5.0).is_none());
    }

    #[test]
    fn csv_errors() {
        assert!(Dataset::from_csv("").is_err());
        assert!(Dataset::from_csv("y,x\n1,2\n").is_err());
        assert!(Dataset::from_csv("y,x,w\n1,2\n").is_err());
        assert!(Dataset::from_csv("y,x,w\n1,a,2\n").is_err());
        assert!(Dataset::from_csv("x,w,y\n1,2,3\n").unwrap().y == vec![3.0]);
    }
}
