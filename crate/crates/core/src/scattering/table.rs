//! Tabulated amplitudes on a `(|p|, cos theta)` grid per channel.
//!
//! CSV layout: header `p_mag,cos_theta,i,j,k,l,re,im`, one row per grid
//! node. Within a channel both axes must be strictly increasing and every
//! `(p_mag, cos_theta)` combination must be present exactly once.
//! Lookups are bilinear; points outside the grid are clamped to the edge and
//! flagged.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type ChannelKey = (usize, usize, usize, usize);

#[derive(Clone, Debug, PartialEq)]
struct Grid {
    p: Vec<f64>,
    cos: Vec<f64>,
    // row-major in p, then cos
    values: Vec<C64>,
}

impl Grid {
    fn at(&self, ip: usize, ic: usize) -> C64 {
        self.values[ip * self.cos.len() + ic]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AmplitudeTable {
    grids: BTreeMap<ChannelKey, Grid>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    p_mag: f64,
    cos_theta: f64,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    re: f64,
    im: f64,
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

/// `(index, weight)` of the lower bracketing node, with clamping.
fn bracket(xs: &[f64], x: f64) -> (usize, f64, bool) {
    let n = xs.len();
    if n == 1 {
        return (0, 0.0, x != xs[0]);
    }
    if x <= xs[0] {
        return (0, 0.0, x < xs[0]);
    }
    if x >= xs[n - 1] {
        return (n - 2, 1.0, x > xs[n - 1]);
    }
    let hi = xs.partition_point(|&v| v <= x).min(n - 1);
    let lo = hi - 1;
    (lo, (x - xs[lo]) / (xs[hi] - xs[lo]), false)
}

impl AmplitudeTable {
    pub fn new() -> Self {
        AmplitudeTable::default()
    }

    /// Adds one channel. `values[ip][ic]` belongs to `(p[ip], cos[ic])`.
    pub fn insert(&mut self, key: ChannelKey, p: Vec<f64>, cos: Vec<f64>, values: Vec<Vec<C64>>) -> Result<()> {
        if p.is_empty() || cos.is_empty() {
            return Err(invalid(format!("channel {key:?}: empty grid")));
        }
        if !strictly_increasing(&p) || !strictly_increasing(&cos) {
            return Err(invalid(format!("channel {key:?}: grid is not strictly increasing")));
        }
        if p[0] < 0.0 || cos[0] < -1.0 || cos[cos.len() - 1] > 1.0 {
            return Err(invalid(format!("channel {key:?}: grid outside p >= 0, |cos| <= 1")));
        }
        if values.len() != p.len() || values.iter().any(|r| r.len() != cos.len()) {
            return Err(invalid(format!("channel {key:?}: value array does not match the grid")));
        }
        let flat: Vec<C64> = values.into_iter().flatten().collect();
        if flat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid(format!("channel {key:?}: non-finite amplitude")));
        }
        self.grids.insert(key, Grid { p, cos, values: flat });
        Ok(())
    }

    /// Fills a channel by evaluating `f(|p|, cos theta)` on the grid.
    pub fn insert_fn(&mut self, key: ChannelKey, p: &[f64], cos: &[f64], f: impl Fn(f64, f64) -> C64) -> Result<()> {
        let values = p.iter().map(|&pm| cos.iter().map(|&c| f(pm, c)).collect()).collect();
        self.insert(key, p.to_vec(), cos.to_vec(), values)
    }

    /// Overwrites one grid node.
    pub fn set(&mut self, key: ChannelKey, ip: usize, ic: usize, value: C64) -> Result<()> {
        let g = self
            .grids
            .get_mut(&key)
            .ok_or_else(|| invalid(format!("no channel {key:?} in table")))?;
        if ip >= g.p.len() || ic >= g.cos.len() {
            return Err(invalid(format!("grid node ({ip}, {ic}) out of range")));
        }
        let nc = g.cos.len();
        g.values[ip * nc + ic] = value;
        Ok(())
    }

    pub fn channels(&self) -> impl Iterator<Item = ChannelKey> + '_ {
        self.grids.keys().copied()
    }

    pub fn has_channel(&self, i: usize, j: usize, k: usize, l: usize) -> bool {
        self.grids.contains_key(&(i, j, k, l))
    }

    pub fn p_range(&self, key: ChannelKey) -> Option<(f64, f64)> {
        self.grids.get(&key).map(|g| (g.p[0], g.p[g.p.len() - 1]))
    }

    pub fn grid_nodes(&self, key: ChannelKey) -> Vec<(f64, f64)> {
        match self.grids.get(&key) {
            Some(g) => g
                .p
                .iter()
                .flat_map(|&p| g.cos.iter().map(move |&c| (p, c)))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut t = self.clone();
        for g in t.grids.values_mut() {
            for v in g.values.iter_mut() {
                *v *= c;
            }
        }
        t
    }

    /// Bilinear value at `(|p|, cos theta)`; the flag is set when clamped.
    /// Channels absent from the table have zero amplitude.
    pub fn lookup(&self, i: usize, j: usize, k: usize, l: usize, p_mag: f64, cos: f64) -> (C64, bool) {
        let Some(g) = self.grids.get(&(i, j, k, l)) else {
            return (C64::new(0.0, 0.0), false);
        };
        let (ip, wp, xp) = bracket(&g.p, p_mag);
        let (ic, wc, xc) = bracket(&g.cos, cos);
        let ip1 = (ip + 1).min(g.p.len() - 1);
        let ic1 = (ic + 1).min(g.cos.len() - 1);
        let v = g.at(ip, ic) * ((1.0 - wp) * (1.0 - wc))
            + g.at(ip1, ic) * (wp * (1.0 - wc))
            + g.at(ip, ic1) * ((1.0 - wp) * wc)
            + g.at(ip1, ic1) * (wp * wc);
        (v, xp || xc)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["p_mag", "cos_theta", "i", "j", "k", "l", "re", "im"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(invalid(format!(
                "amplitude table header must be `{}`, got `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows: BTreeMap<ChannelKey, Vec<Row>> = BTreeMap::new();
        for rec in rdr.deserialize() {
            let row: Row = rec?;
            rows.entry((row.i, row.j, row.k, row.l)).or_default().push(row);
        }
        let mut table = AmplitudeTable::new();
        for (key, rows) in rows {
            let mut p: Vec<f64> = Vec::new();
            let mut cos: Vec<f64> = Vec::new();
            for r in &rows {
                if !p.contains(&r.p_mag) {
                    p.push(r.p_mag);
                }
                if !cos.contains(&r.cos_theta) {
                    cos.push(r.cos_theta);
                }
            }
            if !strictly_increasing(&p) || !strictly_increasing(&cos) {
                return Err(invalid(format!("channel {key:?}: grid is not strictly increasing")));
            }
            if rows.len() != p.len() * cos.len() {
                return Err(invalid(format!(
                    "channel {key:?}: {} rows do not form a {}x{} grid",
                    rows.len(),
                    p.len(),
                    cos.len()
                )));
            }
            let mut values = vec![vec![None; cos.len()]; p.len()];
            for r in &rows {
                let ip = p.iter().position(|&x| x == r.p_mag).unwrap_or(0);
                let ic = cos.iter().position(|&x| x == r.cos_theta).unwrap_or(0);
                if values[ip][ic].replace(C64::new(r.re, r.im)).is_some() {
                    return Err(invalid(format!(
                        "channel {key:?}: duplicate node ({}, {})",
                        r.p_mag, r.cos_theta
                    )));
                }
            }
            let values = values
                .into_iter()
                .map(|row| row.into_iter().map(|v| v.unwrap_or_default()).collect())
                .collect();
            table.insert(key, p, cos, values)?;
        }
        Ok(table)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        AmplitudeTable::from_reader(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(["p_mag", "cos_theta", "i", "j", "k", "l", "re", "im"])?;
        for (&(i, j, k, l), g) in &self.grids {
            for (ip, &p) in g.p.iter().enumerate() {
                for (ic, &c) in g.cos.iter().enumerate() {
                    let v = g.at(ip, ic);
                    w.write_record([
                        crate::cli::fmt17(p),
                        crate::cli::fmt17(c),
                        i.to_string(),
                        j.to_string(),
                        k.to_string(),
                        l.to_string(),
                        crate::cli::fmt17(v.re),
                        crate::cli::fmt17(v.im),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
