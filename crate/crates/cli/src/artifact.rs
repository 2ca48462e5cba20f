//! Emitted files: point clouds (`.csv`), lattice fields (`.grid`) and plain
//! column data (`.dat`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use lipschitz_approx::io::{read_grid, read_point_cloud, write_grid, write_point_cloud};
use lipschitz_approx::{GridDomain, GridField, PointCloud};

use crate::CliError;

/// Whitespace-separated columns under a `# name name ...` header line.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let c = self
            .columns
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CliError::Input(format!("table has no column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[c]).collect())
    }

    fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# {}", self.columns.join(" "))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", cells.join(" "))?;
        }
        Ok(())
    }

    fn read(r: impl BufRead) -> Result<Self, CliError> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let columns: Vec<String> = header
            .strip_prefix('#')
            .ok_or_else(|| CliError::Input("line 1: table header must start with `#`".into()))?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| CliError::Input(format!("line {}: `{s}` is not a number", i + 2))))
                .collect::<Result<_, _>>()?;
            if row.len() != columns.len() {
                return Err(CliError::Input(format!("line {}: expected {} columns", i + 2, columns.len())));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }
}

#[derive(Debug, Clone)]
pub enum Body {
    Cloud(PointCloud<f64>),
    Grid(GridDomain<f64>, Vec<GridField<f64>>),
    Table(Table),
}

/// A named output file.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub file: String,
    pub body: Body,
}

impl Artifact {
    pub fn cloud(file: &str, cloud: PointCloud<f64>) -> Self {
        Self { file: file.into(), body: Body::Cloud(cloud) }
    }

    pub fn grid(file: &str, grid: GridDomain<f64>, fields: Vec<GridField<f64>>) -> Self {
        Self { file: file.into(), body: Body::Grid(grid, fields) }
    }

    pub fn table(file: &str, table: Table) -> Self {
        Self { file: file.into(), body: Body::Table(table) }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(dir.join(&self.file))?);
        match &self.body {
            Body::Cloud(c) => write_point_cloud(&mut w, c)?,
            Body::Grid(g, f) => write_grid(&mut w, g, f)?,
            Body::Table(t) => t.write(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `dir/file`, choosing the format by extension.
    pub fn read(dir: &Path, file: &str) -> Result<Self, CliError> {
        let path = dir.join(file);
        let f = File::open(&path).map_err(|e| CliError::Input(format!("missing artifact {}: {e}", path.display())))?;
        let ctx = |e: CliError| CliError::Input(format!("{}: {e}", path.display()));
        let body = match Path::new(file).extension().and_then(|e| e.to_str()) {
            Some("csv") => Body::Cloud(read_point_cloud(f).map_err(|e| ctx(e.into()))?),
            Some("grid") => {
                let (g, fields) = read_grid(BufReader::new(f)).map_err(|e| ctx(e.into()))?;
                Body::Grid(g, fields)
            }
            Some("dat") => Body::Table(Table::read(BufReader::new(f)).map_err(ctx)?),
            _ => return Err(CliError::Input(format!("unknown artifact type {file}"))),
        };
        Ok(Self { file: file.into(), body })
    }

    /// All numbers in a fixed order, `NaN` for undefined grid values.
    pub fn numbers(&self) -> Vec<f64> {
        match &self.body {
            Body::Cloud(c) => c.coords.iter().copied().chain(c.values.iter().map(|v| v.unwrap_or(f64::NAN))).collect(),
            Body::Grid(_, fields) => {
                fields.iter().flat_map(|f| f.values.iter().map(|v| v.unwrap_or(f64::NAN))).collect()
            }
            Body::Table(t) => t.rows.iter().flatten().copied().collect(),
        }
    }

    pub fn as_cloud(&self) -> Result<&PointCloud<f64>, CliError> {
        match &self.body {
            Body::Cloud(c) => Ok(c),
            _ => Err(CliError::Input(format!("{} is not a point cloud", self.file))),
        }
    }

    pub fn as_grid(&self) -> Result<(&GridDomain<f64>, &[GridField<f64>]), CliError> {
        match &self.body {
            Body::Grid(g, f) => Ok((g, f)),
            _ => Err(CliError::Input(format!("{} is not a grid file", self.file))),
        }
    }

    pub fn as_table(&self) -> Result<&Table, CliError> {
        match &self.body {
            Body::Table(t) => Ok(t),
            _ => Err(CliError::Input(format!("{} is not a table", self.file))),
        }
    }
}

/// Largest absolute difference between two artifacts' numbers; infinite when
/// their shapes differ or exactly one side is undefined.
pub fn max_difference(a: &Artifact, b: &Artifact) -> f64 {
    let (x, y) = (a.numbers(), b.numbers());
    if x.len() != y.len() {
        return f64::INFINITY;
    }
    x.iter().zip(&y).fold(0.0, |m: f64, (p, q)| match (p.is_nan(), q.is_nan()) {
        (true, true) => m,
        (false, false) => m.max((p - q).abs()),
        _ => f64::INFINITY,
    })
}

/// Looks up a field by name.
pub fn field<'a>(fields: &'a [GridField<f64>], name: &str) -> Result<&'a GridField<f64>, CliError> {
    fields
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| CliError::Input(format!("grid has no field `{name}`")))
}
