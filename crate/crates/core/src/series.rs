//! Uniformly sampled observable series and their file formats.
//!
//! CSV files start with one `# {json}` metadata line followed by a header row.
//! The binary cache is little-endian:
//!
//! ```text
//! magic "DTCS" | version u32 | params hash u64 | S u32 | dt f64 |
//! metadata length u32 | metadata json | n_columns u32 |
//! (name length u16, name utf8) * n_columns | n_rows u64 | rows of f64 (t first)
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;

const MAGIC: &[u8; 4] = b"DTCS";
const BINARY_VERSION: u32 = 1;

/// Provenance attached to every series.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    pub omega_d: f64,
    pub samples_per_period: usize,
    /// Integration step bound used to produce the series.
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Whether the coupling actually switched within the horizon.
    #[serde(default = "default_true")]
    pub drive_active: bool,
    /// Full parameter record (model constants, drive, initial state, level).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

fn default_true() -> bool {
    true
}

impl SeriesMeta {
    /// FNV-1a hash of the serialized parameter record.
    pub fn params_hash(&self) -> u64 {
        let text = self
            .params
            .as_ref()
            .map(|p| p.to_string())
            .unwrap_or_default();
        fnv1a(text.as_bytes())
    }

    pub fn drive_period(&self) -> f64 {
        std::f64::consts::TAU / self.omega_d
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// Sample times plus named observable columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySeries {
    pub meta: SeriesMeta,
    pub t: Vec<f64>,
    pub columns: Vec<Column>,
}

impl TrajectorySeries {
    /// Empty series with the given column names, preallocated for `len` rows.
    pub fn with_columns(meta: SeriesMeta, names: &[&str], len: usize) -> Self {
        TrajectorySeries {
            meta,
            t: Vec::with_capacity(len),
            columns: names
                .iter()
                .map(|n| Column {
                    name: n.to_string(),
                    values: Vec::with_capacity(len),
                })
                .collect(),
        }
    }

    pub fn push(&mut self, t: f64, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.t.push(t);
        for (c, v) in self.columns.iter_mut().zip(row) {
            c.values.push(*v);
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::Domain(format!("series has no `{name}` column")))
    }

    pub fn add_column(&mut self, name: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.t.len(), "column length mismatch");
        self.columns.push(Column {
            name: name.to_string(),
            values,
        });
    }

    /// The `j_x` observable: `jx` for classical runs, `jx_mean` for quantum ones.
    pub fn jx(&self) -> Result<&[f64]> {
        self.column("jx")
            .or_else(|| self.column("jx_mean"))
            .ok_or_else(|| Error::Domain("series has no j_x column".into()))
    }

    /// Sample stride in time.
    pub fn stride(&self) -> f64 {
        self.meta.drive_period() / self.meta.samples_per_period as f64
    }

    /// Index of the sample nearest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.stride()).round().max(0.0) as usize).min(self.len().saturating_sub(1))
    }

    /// Samples of a column at integer multiples of the drive period.
    pub fn stroboscopic(&self, name: &str) -> Result<Vec<f64>> {
        let col = self.require(name)?;
        Ok(col
            .iter()
            .step_by(self.meta.samples_per_period)
            .copied()
            .collect())
    }

    /// Number of whole drive periods covered.
    pub fn n_periods(&self) -> usize {
        (self.len().saturating_sub(1)) / self.meta.samples_per_period
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "# {}", serde_json::to_string(&self.meta)?)?;
        let mut header = String::from("t");
        for c in &self.columns {
            header.push(',');
            header.push_str(&c.name);
        }
        writeln!(w, "{header}")?;
        for (i, t) in self.t.iter().enumerate() {
            write!(w, "{t:.17e}")?;
            for c in &self.columns {
                write!(w, ",{:.17e}", c.values[i])?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut meta: Option<SeriesMeta> = None;
        let mut names: Option<Vec<String>> = None;
        let mut t = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if meta.is_none() {
                    meta = Some(serde_json::from_str(rest.trim())?);
                }
                continue;
            }
            if names.is_none() {
                let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                if fields.first().map(String::as_str) != Some("t") {
                    return Err(Error::Config(format!(
                        "line {}: first column must be `t`",
                        lineno + 1
                    )));
                }
                cols = vec![Vec::new(); fields.len() - 1];
                names = Some(fields[1..].to_vec());
                continue;
            }
            let mut it = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Config(format!("line {}: missing field", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))
            };
            t.push(parse(it.next())?);
            for c in cols.iter_mut() {
                c.push(parse(it.next())?);
            }
        }
        let meta = meta.ok_or_else(|| Error::Config("missing `#` metadata line".into()))?;
        let names = names.ok_or_else(|| Error::Config("missing header row".into()))?;
        Ok(TrajectorySeries {
            meta,
            t,
            columns: names
                .into_iter()
                .zip(cols)
                .map(|(name, values)| Column { name, values })
                .collect(),
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(BINARY_VERSION)?;
        w.write_u64::<LittleEndian>(self.meta.params_hash())?;
        w.write_u32::<LittleEndian>(self.meta.samples_per_period as u32)?;
        w.write_f64::<LittleEndian>(self.meta.dt)?;
        let meta = serde_json::to_vec(&self.meta)?;
        w.write_u32::<LittleEndian>(meta.len() as u32)?;
        w.write_all(&meta)?;
        w.write_u32::<LittleEndian>(self.columns.len() as u32)?;
        for c in &self.columns {
            w.write_u16::<LittleEndian>(c.name.len() as u16)?;
            w.write_all(c.name.as_bytes())?;
        }
        w.write_u64::<LittleEndian>(self.t.len() as u64)?;
        for (i, t) in self.t.iter().enumerate() {
            w.write_f64::<LittleEndian>(*t)?;
            for c in &self.columns {
                w.write_f64::<LittleEndian>(c.values[i])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config("not a series cache file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != BINARY_VERSION {
            return Err(Error::Config(format!("unsupported cache version {version}")));
        }
        let hash = r.read_u64::<LittleEndian>()?;
        let _s = r.read_u32::<LittleEndian>()?;
        let _dt = r.read_f64::<LittleEndian>()?;
        let meta_len = r.read_u32::<LittleEndian>()? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta: SeriesMeta = serde_json::from_slice(&meta)?;
        if meta.params_hash() != hash {
            return Err(Error::Config("cache header hash does not match metadata".into()));
        }
        let n_cols = r.read_u32::<LittleEndian>()? as usize;
        let mut names = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let len = r.read_u16::<LittleEndian>()? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            names.push(
                String::from_utf8(buf).map_err(|e| Error::Config(format!("column name: {e}")))?,
            );
        }
        let n_rows = r.read_u64::<LittleEndian>()? as usize;
        let mut t = Vec::with_capacity(n_rows);
        let mut cols = vec![Vec::with_capacity(n_rows); n_cols];
        for _ in 0..n_rows {
            t.push(r.read_f64::<LittleEndian>()?);
            for c in cols.iter_mut() {
                c.push(r.read_f64::<LittleEndian>()?);
            }
        }
        Ok(TrajectorySeries {
            meta,
            t,
            columns: names
                .into_iter()
                .zip(cols)
                .map(|(name, values)| Column { name, values })
                .collect(),
        })
    }
}
