//! File formats: point-cloud and distance-matrix CSV, the lattice field file and
//! flat key-value reports.

use std::fmt::Display;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Check, Error, Result};
use crate::grid::{GridDomain, NodeKind};
use crate::metric::{MetricSpace, Norm, NormContext};
use crate::scalar::Real;

/// Role of a point in a point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointTag {
    Interior,
    Boundary,
    None,
}

impl PointTag {
    pub fn tag(self) -> &'static str {
        match self {
            PointTag::Interior => "interior",
            PointTag::Boundary => "boundary",
            PointTag::None => "none",
        }
    }
}

impl FromStr for PointTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(PointTag::Interior),
            "boundary" => Ok(PointTag::Boundary),
            "none" | "" => Ok(PointTag::None),
            other => Err(Error::Domain(format!("unknown tag `{other}` (expected interior, boundary or none)"))),
        }
    }
}

/// Rows of `id,x1,...,xd,value,tag`. Empty values are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    pub dim: usize,
    pub ids: Vec<String>,
    /// Row-major coordinates, `dim` per point.
    pub coords: Vec<T>,
    pub values: Vec<Option<T>>,
    pub tags: Vec<PointTag>,
}

impl<T: Real> PointCloud<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn space(&self, norm: Norm) -> Result<MetricSpace<T>> {
        MetricSpace::from_coords(self.dim, self.coords.clone(), norm)
    }

    pub fn tagged(&self, tag: PointTag) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.tags[i] == tag).collect()
    }

    /// Values with missing entries reported as an error naming the point.
    pub fn required_values(&self, idx: &[usize]) -> Result<Vec<T>> {
        idx.iter()
            .map(|&i| self.values[i].ok_or_else(|| Error::Domain(format!("point `{}` has no value", self.ids[i]))))
            .collect()
    }
}

fn parse_num<T: Real>(s: &str, line: usize, what: &str) -> Result<T> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("{what}: `{s}` is not a number") })?;
    if !x.is_finite() {
        return Err(Error::Parse { line, msg: format!("{what}: `{s}` is not finite") });
    }
    T::from_f64(x).ok_or_else(|| Error::Parse { line, msg: format!("{what}: `{s}` out of range") })
}

fn csv_line(r: &csv::StringRecord) -> usize {
    r.position().map_or(0, |p| p.line() as usize)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, msg: e.to_string() }
}

pub fn read_point_cloud<T: Real>(reader: impl std::io::Read) -> Result<PointCloud<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let n = cols.len();
    let dim = n.saturating_sub(3);
    let well_formed = n >= 4
        && cols[0] == "id"
        && cols[n - 2] == "value"
        && cols[n - 1] == "tag"
        && (0..dim).all(|a| cols[a + 1] == format!("x{}", a + 1));
    if !well_formed {
        return Err(Error::Parse { line: 1, msg: format!("header must be id,x1,...,xd,value,tag, got `{}`", cols.join(",")) });
    }
    let mut cloud = PointCloud { dim, ids: Vec::new(), coords: Vec::new(), values: Vec::new(), tags: Vec::new() };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = csv_line(&rec);
        if rec.len() != n {
            return Err(Error::Parse { line, msg: format!("expected {n} fields, found {}", rec.len()) });
        }
        cloud.ids.push(rec[0].to_string());
        for a in 0..dim {
            cloud.coords.push(parse_num(&rec[a + 1], line, &format!("x{}", a + 1))?);
        }
        let v = &rec[n - 2];
        cloud.values.push(if v.is_empty() { None } else { Some(parse_num(v, line, "value")?) });
        cloud.tags.push(rec[n - 1].parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?);
    }
    if cloud.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no points".into() });
    }
    Ok(cloud)
}

pub fn write_point_cloud<T: Real>(mut w: impl Write, cloud: &PointCloud<T>) -> Result<()> {
    let xs: Vec<String> = (1..=cloud.dim).map(|a| format!("x{a}")).collect();
    writeln!(w, "id,{},value,tag", xs.join(","))?;
    for i in 0..cloud.len() {
        write!(w, "{}", cloud.ids[i])?;
        for x in &cloud.coords[i * cloud.dim..(i + 1) * cloud.dim] {
            write!(w, ",{x}")?;
        }
        match cloud.values[i] {
            Some(v) => write!(w, ",{v}")?,
            None => write!(w, ",")?,
        }
        writeln!(w, ",{}", cloud.tags[i].tag())?;
    }
    Ok(())
}

/// Square matrix with a header row of point ids.
pub fn read_distance_matrix<T: Real>(reader: impl std::io::Read, tol: T) -> Result<(Vec<String>, MetricSpace<T>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let ids: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let n = ids.len();
    let mut d = Vec::with_capacity(n * n);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = csv_line(&rec);
        if rec.len() != n {
            return Err(Error::Parse { line, msg: format!("expected {n} distances, found {}", rec.len()) });
        }
        if rows == n {
            return Err(Error::Parse { line, msg: format!("more than {n} rows") });
        }
        for x in rec.iter() {
            d.push(parse_num(x, line, "distance")?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse { line: rows + 2, msg: format!("{rows} rows for {n} ids") });
    }
    Ok((ids, MetricSpace::from_matrix(n, d, tol)?))
}

pub fn write_distance_matrix<T: Real>(mut w: impl Write, ids: &[String], space: &MetricSpace<T>) -> Result<()> {
    writeln!(w, "{}", ids.join(","))?;
    for i in 0..space.len() {
        let row: Vec<String> = (0..space.len()).map(|j| space.dist(i, j).to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// A named per-node field; `None` marks nodes where the field is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    pub name: String,
    pub values: Vec<Option<T>>,
}

impl<T: Real> GridField<T> {
    pub fn full(name: impl Into<String>, values: &[T]) -> Self {
        Self { name: name.into(), values: values.iter().map(|&v| Some(v)).collect() }
    }

    pub fn partial(name: impl Into<String>, values: Vec<Option<T>>) -> Self {
        Self { name: name.into(), values }
    }

    /// All values, failing on the first undefined node.
    pub fn dense(&self) -> Result<Vec<T>> {
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| v.ok_or_else(|| Error::Domain(format!("field `{}` undefined at node {k}", self.name))))
            .collect()
    }
}

/// Writes the header (`dim`, `norm`, `lo`, `h`, `shape`, `fields`) followed by one
/// line per node in row-major order: the node kind code then each field value,
/// `-` where undefined.
pub fn write_grid<T: Real>(mut w: impl Write, grid: &GridDomain<T>, fields: &[GridField<T>]) -> Result<()> {
    let d = grid.dim();
    let join = |xs: &[String]| xs.join(" ");
    writeln!(w, "dim {d}")?;
    writeln!(w, "norm {}", grid.norm().p)?;
    writeln!(w, "lo {}", join(&grid.lo()[..d].iter().map(|x| x.to_string()).collect::<Vec<_>>()))?;
    writeln!(w, "h {}", join(&grid.spacing()[..d].iter().map(|x| x.to_string()).collect::<Vec<_>>()))?;
    writeln!(w, "shape {}", join(&grid.shape()[..d].iter().map(|x| x.to_string()).collect::<Vec<_>>()))?;
    writeln!(w, "fields {}", join(&fields.iter().map(|f| f.name.clone()).collect::<Vec<_>>()))?;
    writeln!(w, "nodes")?;
    for k in 0..grid.len() {
        write!(w, "{}", grid.kind(k).code())?;
        for f in fields {
            if f.values.len() != grid.len() {
                return Err(Error::Domain(format!("field `{}` has {} values for {} nodes", f.name, f.values.len(), grid.len())));
            }
            match f.values[k] {
                Some(v) => write!(w, " {v}")?,
                None => write!(w, " -")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_grid<T: Real>(reader: impl BufRead) -> Result<(GridDomain<T>, Vec<GridField<T>>)> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut header = std::collections::BTreeMap::new();
    let mut last = 0;
    loop {
        let Some((line, text)) = lines.next() else {
            return Err(Error::Parse { line: last + 1, msg: "missing `nodes` line".into() });
        };
        let text = text?;
        last = line;
        let text = text.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if text == "nodes" {
            break;
        }
        let (key, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        header.insert(key.to_string(), (line, rest.trim().to_string()));
    }
    let get = |key: &str| header.get(key).ok_or_else(|| Error::Parse { line: last, msg: format!("missing header `{key}`") });
    let (l, dim) = get("dim")?;
    let dim: usize = dim.parse().map_err(|_| Error::Parse { line: *l, msg: format!("bad dim `{dim}`") })?;
    if !(dim == 1 || dim == 2) {
        return Err(Error::Parse { line: *l, msg: format!("grid dimension {dim} is not 1 or 2") });
    }
    let (l, norm) = get("norm")?;
    let norm: Norm = norm.parse().map_err(|e: Error| Error::Parse { line: *l, msg: e.to_string() })?;
    let per_axis = |key: &str| -> Result<(usize, Vec<String>)> {
        let (l, s) = get(key)?;
        let parts: Vec<String> = s.split_whitespace().map(str::to_string).collect();
        if parts.len() != dim {
            return Err(Error::Parse { line: *l, msg: format!("`{key}` needs {dim} entries") });
        }
        Ok((*l, parts))
    };
    let (l, lo) = per_axis("lo")?;
    let lo: Vec<T> = lo.iter().map(|s| parse_num(s, l, "lo")).collect::<Result<_>>()?;
    let (l, h) = per_axis("h")?;
    let h: Vec<T> = h.iter().map(|s| parse_num(s, l, "h")).collect::<Result<_>>()?;
    let (l, shape) = per_axis("shape")?;
    let shape: Vec<usize> = shape
        .iter()
        .map(|s| s.parse().map_err(|_| Error::Parse { line: l, msg: format!("bad node count `{s}`") }))
        .collect::<Result<_>>()?;
    let names: Vec<String> = get("fields")?.1.split_whitespace().map(str::to_string).collect();
    let pad = |v: &[T], fill: T| if dim == 1 { [v[0], fill] } else { [v[0], v[1]] };
    let n = if dim == 1 { [shape[0], 1] } else { [shape[0], shape[1]] };
    let count = n[0] * n[1];
    let mut kinds = Vec::with_capacity(count);
    let mut columns: Vec<Vec<Option<T>>> = vec![Vec::with_capacity(count); names.len()];
    for (line, text) in lines {
        let text = text?;
        last = line;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let mut parts = text.split_whitespace();
        let code = parts.next().unwrap_or_default();
        kinds.push(NodeKind::from_code(code).ok_or_else(|| Error::Parse { line, msg: format!("unknown node kind `{code}`") })?);
        let vals: Vec<&str> = parts.collect();
        if vals.len() != names.len() {
            return Err(Error::Parse { line, msg: format!("expected {} values, found {}", names.len(), vals.len()) });
        }
        for (c, s) in columns.iter_mut().zip(vals) {
            c.push(if s == "-" { None } else { Some(parse_num(s, line, "value")?) });
        }
    }
    if kinds.len() != count {
        return Err(Error::Parse { line: last + 1, msg: format!("{} nodes for shape {:?}", kinds.len(), &shape) });
    }
    let grid = GridDomain::from_kinds(dim, pad(&lo, T::zero()), pad(&h, T::one()), n, NormContext::new(norm), kinds)?;
    let fields = names.into_iter().zip(columns).map(|(name, values)| GridField { name, values }).collect();
    Ok((grid, fields))
}

/// A flat record of `key = value` lines followed by inequality lines
/// `check = name | lhs x | bound y | margin z | pass`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
    checks: Vec<Check>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Parses the value of `key`, reporting a missing or malformed entry.
    pub fn parse<V: FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.get(key).ok_or_else(|| Error::Domain(format!("report has no `{key}`")))?;
        raw.parse().map_err(|_| Error::Domain(format!("report entry `{key}` = `{raw}` is malformed")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn push_check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend_checks(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks);
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "{k} = {v}")?;
        }
        for c in &self.checks {
            let status = if c.passed() { "pass" } else { "FAIL" };
            writeln!(w, "check = {} | lhs {} | bound {} | margin {} | {status}", c.name, c.lhs, c.bound, c.margin())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("report text is UTF-8")
    }

    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut r = Report::new();
        for (i, text) in reader.lines().enumerate() {
            let line = i + 1;
            let text = text?;
            if text.trim().is_empty() {
                continue;
            }
            let (key, value) = text
                .split_once(" = ")
                .ok_or_else(|| Error::Parse { line, msg: format!("expected `key = value`, got `{text}`") })?;
            if key != "check" {
                r.entries.push((key.to_string(), value.to_string()));
                continue;
            }
            let parts: Vec<&str> = value.split(" | ").collect();
            let field = |idx: usize, label: &str| -> Result<f64> {
                parts
                    .get(idx)
                    .and_then(|p| p.strip_prefix(label))
                    .and_then(|p| p.trim().parse().ok())
                    .ok_or_else(|| Error::Parse { line, msg: format!("check line lacks `{label}`") })
            };
            if parts.len() != 5 {
                return Err(Error::Parse { line, msg: "check line needs name, lhs, bound, margin and status".into() });
            }
            r.checks.push(Check::new(parts[0], field(1, "lhs ")?, field(2, "bound ")?));
        }
        Ok(r)
    }
}
