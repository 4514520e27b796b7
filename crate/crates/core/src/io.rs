//! Plain-text files used by the command-line tool.
//!
//! Operators: the dimension on the first line, then one line per row with
//! whitespace-separated `re,im` entries. Lines starting with `#` are ignored.
//!
//! Counts: CSV `index,role,count` with role `well` or `ill` and a global index.
//!
//! Setups: a directory holding `manifest.txt` with `key = value` lines and
//! `outcome <role> <idx> <file>` lines (roles `well`, `intended`, `actual`),
//! next to one operator file per outcome.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mwe::CoarseCounts;
use crate::qops::{CMatrix, PovmElement, C64};
use crate::randgen::MeasurementSetup;
use crate::sampler::Counts;

pub const MANIFEST: &str = "manifest.txt";

pub fn format_operator(m: &CMatrix) -> String {
    let mut s = format!("{}\n", m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{},{}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_operator(text: &str) -> Result<CMatrix> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let d: usize = lines
        .next()
        .ok_or_else(|| Error::Parse("empty operator file".into()))?
        .parse()
        .map_err(|_| Error::Parse("first line must be the dimension".into()))?;
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing row {i}")))?;
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != d {
            return Err(Error::Parse(format!("row {i} has {} entries, expected {d}", entries.len())));
        }
        for (j, e) in entries.iter().enumerate() {
            let (re, im) = e
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("entry {e:?} is not re,im")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {s:?}")))
            };
            m[(i, j)] = C64::new(num(re)?, num(im)?);
        }
    }
    if let Some(extra) = lines.next() {
        return Err(Error::Parse(format!("trailing data {extra:?}")));
    }
    Ok(m)
}

pub fn write_operator(path: &Path, m: &CMatrix) -> Result<()> {
    fs::write(path, format_operator(m))?;
    Ok(())
}

pub fn read_operator(path: &Path) -> Result<CMatrix> {
    parse_operator(&fs::read_to_string(path)?)
}

fn write_count_rows<T: ToString>(path: &Path, well: &[T], ill: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["index", "role", "count"])?;
    let rows = well
        .iter()
        .map(|n| ("well", n))
        .chain(ill.iter().map(|n| ("ill", n)));
    for (idx, (role, n)) in rows.enumerate() {
        wtr.write_record([idx.to_string(), role.to_string(), n.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

fn read_count_rows(path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(["index", "role", "count"]) {
        return Err(Error::Parse("counts header must be index,role,count".into()));
    }
    let (mut well, mut ill) = (Vec::new(), Vec::new());
    for (expected, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let idx: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad index {:?}", &rec[0])))?;
        if idx != expected {
            return Err(Error::Parse(format!("index {idx} out of order, expected {expected}")));
        }
        let value = rec[2].trim().to_string();
        match rec[1].trim() {
            "well" if ill.is_empty() => well.push(value),
            "well" => return Err(Error::Parse("well rows must precede ill rows".into())),
            "ill" => ill.push(value),
            other => return Err(Error::Parse(format!("unknown role {other:?}"))),
        }
    }
    Ok((well, ill))
}

pub fn write_counts(path: &Path, counts: &Counts) -> Result<()> {
    write_count_rows(path, &counts.well, &counts.ill)
}

pub fn read_counts(path: &Path) -> Result<Counts> {
    let (well, ill) = read_count_rows(path)?;
    let parse = |v: Vec<String>| -> Result<Vec<u64>> {
        v.iter()
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("count {s:?} is not a non-negative integer"))))
            .collect()
    };
    Counts::new(parse(well)?, parse(ill)?)
}

pub fn write_coarse_counts(path: &Path, counts: &CoarseCounts) -> Result<()> {
    write_count_rows(path, &counts.well, &counts.ill)
}

pub fn read_coarse_counts(path: &Path) -> Result<CoarseCounts> {
    let (well, ill) = read_count_rows(path)?;
    let parse = |v: Vec<String>| -> Result<Vec<f64>> {
        v.iter()
            .map(|s| match s.parse::<f64>() {
                Ok(x) if x >= 0.0 && x.is_finite() => Ok(x),
                _ => Err(Error::Parse(format!("count {s:?} is not a non-negative number"))),
            })
            .collect()
    };
    Ok(CoarseCounts {
        well: parse(well)?,
        ill: parse(ill)?,
    })
}

/// Writes `setup` into `dir`, creating it if needed.
pub fn write_setup(dir: &Path, setup: &MeasurementSetup) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "dim = {}", setup.dim);
    let _ = writeln!(manifest, "m_total = {}", setup.m_total);
    let _ = writeln!(manifest, "m_well = {}", setup.m_well);
    let _ = writeln!(manifest, "mu = {}", setup.mu);
    let _ = writeln!(manifest, "scale = {}", setup.scale);
    for (role, set) in [
        ("well", &setup.well),
        ("intended", &setup.intended),
        ("actual", &setup.actual_ill),
    ] {
        for (i, p) in set.iter().enumerate() {
            let file = format!("{role}_{i}.txt");
            write_operator(&dir.join(&file), p.matrix())?;
            let _ = writeln!(manifest, "outcome {role} {i} {file}");
        }
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

/// Reads a setup directory. Without `actual` outcomes the intended ones are
/// taken as measured.
pub fn read_setup(dir: &Path) -> Result<MeasurementSetup> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let (mut dim, mut m_total, mut m_well) = (None, None, None);
    let (mut mu, mut scale) = (0.0, 1.0);
    let mut entries: [Vec<(usize, PovmElement)>; 3] = Default::default();
    let number_err = |k: &str, v: &str| Error::Parse(format!("bad value {v:?} for {k}"));
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("outcome ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let [role, idx, file] = parts[..] else {
                return Err(Error::Parse(format!("bad outcome line {line:?}")));
            };
            let slot = match role {
                "well" => 0,
                "intended" => 1,
                "actual" => 2,
                _ => return Err(Error::Parse(format!("unknown outcome role {role:?}"))),
            };
            let idx: usize = idx.parse().map_err(|_| number_err("outcome index", idx))?;
            let p = PovmElement::from_matrix(read_operator(&dir.join(file))?)?;
            entries[slot].push((idx, p));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Parse(format!("bad manifest line {line:?}")))?;
        match k {
            "dim" => dim = Some(v.parse().map_err(|_| number_err(k, v))?),
            "m_total" => m_total = Some(v.parse().map_err(|_| number_err(k, v))?),
            "m_well" => m_well = Some(v.parse().map_err(|_| number_err(k, v))?),
            "mu" => mu = v.parse().map_err(|_| number_err(k, v))?,
            "scale" => scale = v.parse().map_err(|_| number_err(k, v))?,
            _ => return Err(Error::Parse(format!("unknown manifest key {k:?}"))),
        }
    }
    let missing = |k: &str| Error::Parse(format!("manifest lacks {k}"));
    let dim: usize = dim.ok_or_else(|| missing("dim"))?;
    let m_total: usize = m_total.ok_or_else(|| missing("m_total"))?;
    let m_well: usize = m_well.ok_or_else(|| missing("m_well"))?;

    let [well, intended, actual] = entries.map(|mut v| {
        v.sort_by_key(|(i, _)| *i);
        v
    });
    let ordered = |v: Vec<(usize, PovmElement)>, role: &str| -> Result<Vec<PovmElement>> {
        if v.iter().enumerate().any(|(k, (i, _))| k != *i) {
            return Err(Error::Parse(format!("{role} outcome indices are not 0..n")));
        }
        Ok(v.into_iter().map(|(_, p)| p).collect())
    };
    let well = ordered(well, "well")?;
    let intended = ordered(intended, "intended")?;
    let actual_ill = if actual.is_empty() {
        intended.clone()
    } else {
        ordered(actual, "actual")?
    };
    if let Some(p) = well.iter().chain(&intended).chain(&actual_ill).find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch(p.dim(), dim));
    }
    if m_well > m_total {
        return Err(Error::InvalidSetup(format!("m_well = {m_well} exceeds m_total = {m_total}")));
    }
    let setup = MeasurementSetup {
        dim,
        m_total,
        m_well,
        well,
        intended,
        actual_ill,
        scale,
        mu,
    };
    setup.validate(crate::qops::INPUT_TOL)?;
    Ok(setup)
}
