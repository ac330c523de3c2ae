use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::eigenmodes::FieldMap;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// A CSV cell. Floats use the shortest round-trip form; missing values are
/// written as `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(usize),
    Text(String),
    Missing,
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }

    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
            Cell::Missing => "NaN".to_string(),
        }
    }
}

/// Column name and unit.
pub type Column = (&'static str, &'static str);

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `# key: value` lines after the fixed header.
    pub meta: Vec<(String, String)>,
}

impl Table {
    pub fn new(columns: &[Column]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self, sha256: &str, task: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# tool: {TOOL_VERSION}\n"));
        out.push_str(&format!("# config_sha256: {sha256}\n"));
        out.push_str(&format!("# task: {task}\n"));
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let units: Vec<String> = self.columns.iter().map(|(n, u)| format!("{n}[{u}]")).collect();
        out.push_str(&format!("# units: {}\n", units.join(" ")));
        let names: Vec<&str> = self.columns.iter().map(|(n, _)| *n).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path, sha256: &str, task: &str) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.render(sha256, task).as_bytes())
    }
}

pub const GAIN_COLUMNS: [Column; 6] = [
    ("F_db", "dB"),
    ("g_closed", "linear"),
    ("g_numeric", "linear"),
    ("g_friis", "linear"),
    ("g_large_lis", "linear"),
    ("normalized_gain", "linear"),
];

pub const DOF_COLUMNS: [Column; 6] = [
    ("F_db", "dB"),
    ("d_closed", "modes"),
    ("d_numeric", "modes"),
    ("d_farfield_miller", "modes"),
    ("d_asymptotic", "modes"),
    ("d_rounded", "modes"),
];

pub const SPECTRUM_COLUMNS: [Column; 3] = [("n", "index"), ("xi", "ohm"), ("xi_sq_db", "dB")];

pub const FIELD_COLUMNS: [Column; 13] = [
    ("u_index", "index"),
    ("v_index", "index"),
    ("x_m", "m"),
    ("y_m", "m"),
    ("z_m", "m"),
    ("re_Ex", "arb"),
    ("im_Ex", "arb"),
    ("re_Ey", "arb"),
    ("im_Ey", "arb"),
    ("re_Ez", "arb"),
    ("im_Ez", "arb"),
    ("amp_Ex", "arb"),
    ("phase_Ex", "rad"),
];

/// One row per sample; `y`/`z` components are `NaN` for scalar maps.
pub fn field_table(map: &FieldMap) -> Table {
    let mut t = Table::new(&FIELD_COLUMNS);
    let grid = map.grid();
    let amp = map.amplitude(0);
    let phase = map.phase(0);
    for (k, s) in map.samples().iter().enumerate() {
        let (iu, iv) = grid.unindex(k);
        let p = grid.point(k);
        let comp = |c: usize, im: bool| {
            if c >= map.components() {
                Cell::Missing
            } else if im {
                Cell::Float(s[c].im)
            } else {
                Cell::Float(s[c].re)
            }
        };
        t.push(vec![
            Cell::Int(iu),
            Cell::Int(iv),
            Cell::Float(p.x),
            Cell::Float(p.y),
            Cell::Float(p.z),
            comp(0, false),
            comp(0, true),
            comp(1, false),
            comp(1, true),
            comp(2, false),
            comp(2, true),
            Cell::Float(amp[k]),
            Cell::Float(phase[k]),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{RectSurface, SurfaceGrid, Vec3};
    use num_complex::Complex64;

    #[test]
    fn renders_header_and_rows() {
        let mut t = Table::new(&[("a", "m"), ("b", "dB")]);
        t.meta("aspect_ratio", 2);
        t.push(vec![Cell::Float(0.1), Cell::Missing]);
        t.push(vec![Cell::Int(3), Cell::Float(-1e-20)]);
        let s = t.render("abc", "gain");
        let expected = format!(
            "# tool: {TOOL_VERSION}\n# config_sha256: abc\n# task: gain\n# aspect_ratio: 2\n# units: a[m] b[dB]\na,b\n0.1,NaN\n3,-0.00000000000000000001\n"
        );
        assert_eq!(s, expected);
    }

    #[test]
    fn field_rows() {
        let surface = RectSurface::horizontal(Vec3::zeros(), 1.0, 1.0).unwrap();
        let grid = SurfaceGrid::new(surface, 0.5).unwrap();
        let v: Vec<Complex64> = (0..4).map(|k| Complex64::new(k as f64, -1.0)).collect();
        let map = FieldMap::from_vector(grid, 1, &v).unwrap();
        let t = field_table(&map);
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[1][0], Cell::Int(0));
        assert_eq!(t.rows[1][1], Cell::Int(1));
        assert_eq!(t.rows[1][2], Cell::Float(-0.25));
        assert_eq!(t.rows[1][7], Cell::Missing);
        assert_eq!(t.rows[0][12], Cell::Float(-std::f64::consts::FRAC_PI_2));
    }
}
