//! Plain-text model files.
//!
//! ```text
//! RESPIRE-MODEL v1
//! family gaussian
//! length_scale 0.25
//! lambda 1
//! norm_params 12.5 31.75
//! N 3
//! 0,0.1,-0.2,0.5
//! ...
//! CORRUPTION 1
//! 7,2.5
//! ```
//!
//! Coefficient rows are `z_i,m_i,n_i,o_i`. Floats use Rust's shortest
//! round-trip rendering, so reading a written model reproduces it bit for
//! bit. The `CORRUPTION` section is optional and lists the non-zero entries
//! of a robust fit's corruption estimate.

use std::io::{BufRead, BufReader, Read, Write};

use crate::dataio::NormParams;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::spr::SemiParamModel;

pub const MAGIC: &str = "RESPIRE-MODEL v1";

/// A model together with the optional corruption estimate of its fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: SemiParamModel,
    /// Dense corruption vector over the training points.
    pub corruption: Option<Vec<f64>>,
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::ModelFormat(format!("{what} is not finite")))
    }
}

pub fn write_model<W: Write>(file: &ModelFile, mut sink: W) -> Result<()> {
    let m = &file.model;
    let all = m
        .z_train
        .iter()
        .chain(m.m())
        .chain(m.n())
        .chain(m.o())
        .chain([&m.lambda, &m.norm.min, &m.norm.max]);
    for &v in all {
        check_finite(v, "model value")?;
    }
    writeln!(sink, "{MAGIC}")?;
    writeln!(sink, "family {}", m.spec.family)?;
    writeln!(sink, "length_scale {}", m.spec.length_scale())?;
    writeln!(sink, "lambda {}", m.lambda)?;
    writeln!(sink, "norm_params {} {}", m.norm.min, m.norm.max)?;
    writeln!(sink, "N {}", m.len())?;
    for i in 0..m.len() {
        writeln!(sink, "{},{},{},{}", m.z_train[i], m.m()[i], m.n()[i], m.o()[i])?;
    }
    if let Some(c) = &file.corruption {
        if c.len() != m.len() {
            return Err(Error::ModelFormat("corruption length differs from N".into()));
        }
        let nz: Vec<(usize, f64)> = c.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        writeln!(sink, "CORRUPTION {}", nz.len())?;
        for (i, v) in nz {
            check_finite(v, "corruption value")?;
            writeln!(sink, "{i},{v}")?;
        }
    }
    sink.flush()?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<BufReader<R>>,
    line: usize,
}

impl<R: Read> Lines<R> {
    fn next_line(&mut self) -> Result<Option<String>> {
        match self.inner.next() {
            None => Ok(None),
            Some(l) => {
                self.line += 1;
                Ok(Some(l?.trim_end_matches('\r').to_string()))
            }
        }
    }

    fn expect(&mut self, what: &str) -> Result<String> {
        self.next_line()?.ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Reads `key v1 v2 ...` and returns the values.
    fn keyed(&mut self, key: &str, count: usize) -> Result<Vec<String>> {
        let l = self.expect(key)?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        let vals: Vec<String> = parts.map(str::to_string).collect();
        if vals.len() != count {
            return Err(self.err(format!("`{key}` takes {count} value(s)")));
        }
        Ok(vals)
    }

    fn float(&self, s: &str) -> Result<f64> {
        let v: f64 = s.trim().parse().map_err(|_| self.err(format!("invalid number {s:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("non-finite number {s:?}")))
        }
    }

    fn count(&self, s: &str) -> Result<usize> {
        s.trim().parse().map_err(|_| self.err(format!("invalid count {s:?}")))
    }
}

pub fn read_model<R: Read>(source: R) -> Result<ModelFile> {
    let mut r = Lines {
        inner: BufReader::new(source).lines(),
        line: 0,
    };
    if r.expect("magic line")? != MAGIC {
        return Err(r.err(format!("not a model file (expected `{MAGIC}`)")));
    }
    let family: KernelFamily = {
        let v = r.keyed("family", 1)?;
        v[0].parse().map_err(|e: Error| r.err(e.to_string()))?
    };
    let ls = {
        let v = r.keyed("length_scale", 1)?;
        r.float(&v[0])?
    };
    let lambda = {
        let v = r.keyed("lambda", 1)?;
        r.float(&v[0])?
    };
    let norm = {
        let v = r.keyed("norm_params", 2)?;
        NormParams {
            min: r.float(&v[0])?,
            max: r.float(&v[1])?,
        }
    };
    let n = {
        let v = r.keyed("N", 1)?;
        r.count(&v[0])?
    };
    let (mut z, mut m, mut nn, mut o) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let l = r.expect("coefficient row")?;
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 4 {
            return Err(r.err("coefficient rows have 4 fields"));
        }
        z.push(r.float(cols[0])?);
        m.push(r.float(cols[1])?);
        nn.push(r.float(cols[2])?);
        o.push(r.float(cols[3])?);
    }
    let mut corruption = None;
    if let Some(l) = r.next_line()? {
        let k = match l.split_once(' ') {
            Some(("CORRUPTION", k)) => r.count(k)?,
            _ => return Err(r.err("expected `CORRUPTION` section or end of file")),
        };
        let mut c = vec![0.0; n];
        for _ in 0..k {
            let l = r.expect("corruption entry")?;
            let (i, v) = l.split_once(',').ok_or_else(|| r.err("corruption entries are `index,value`"))?;
            let i = r.count(i)?;
            if i >= n {
                return Err(r.err(format!("corruption index {i} out of range")));
            }
            c[i] = r.float(v)?;
        }
        corruption = Some(c);
    }
    if let Some(l) = r.next_line()? {
        if !l.trim().is_empty() {
            return Err(r.err("trailing content after model"));
        }
    }
    let spec = KernelSpec::new(family, ls).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let model = SemiParamModel::from_parts(spec, lambda, norm, z, m, nn, o)
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    Ok(ModelFile { model, corruption })
}
