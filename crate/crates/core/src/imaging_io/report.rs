use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, IoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellUnit {
    #[serde(rename = "%")]
    Percent,
    #[serde(rename = "mm")]
    Mm,
    #[serde(rename = "lux")]
    Lux,
}

impl CellUnit {
    fn symbol(self) -> &'static str {
        match self {
            CellUnit::Percent => "%",
            CellUnit::Mm => "mm",
            CellUnit::Lux => "lux",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub value: f64,
    pub spread: Option<f64>,
    pub unit: CellUnit,
}

impl ReportCell {
    pub fn new(value: f64, unit: CellUnit) -> Self {
        Self {
            value,
            spread: None,
            unit,
        }
    }

    pub fn with_spread(value: f64, spread: f64, unit: CellUnit) -> Self {
        Self {
            value,
            spread: Some(spread),
            unit,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        let (num, unit) = s.rsplit_once(' ')?;
        let unit = match unit {
            "%" => CellUnit::Percent,
            "mm" => CellUnit::Mm,
            "lux" => CellUnit::Lux,
            _ => return None,
        };
        let (value, spread) = match num.split_once(" : ") {
            Some((v, sp)) => (v.trim().parse().ok()?, Some(sp.trim().parse().ok()?)),
            None => (num.trim().parse().ok()?, None),
        };
        Some(Self {
            value,
            spread,
            unit,
        })
    }
}

/// `mean : spread unit`, full round-trip precision.
impl fmt::Display for ReportCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.spread {
            Some(s) => write!(f, "{} : {} {}", self.value, s, self.unit.symbol()),
            None => write!(f, "{} {}", self.value, self.unit.symbol()),
        }
    }
}

/// Rectangular table of labelled cells; a `None` cell is a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub row_header: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<Option<ReportCell>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportTable {
    pub fn new(
        title: &str,
        row_header: &str,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Self {
        let cells = vec![vec![None; col_labels.len()]; row_labels.len()];
        Self {
            title: title.to_string(),
            row_header: row_header.to_string(),
            row_labels,
            col_labels,
            cells,
        }
    }

    pub fn set(&mut self, row: usize, col: usize, cell: ReportCell) {
        self.cells[row][col] = Some(cell);
    }

    pub fn get(&self, row: usize, col: usize) -> Option<ReportCell> {
        self.cells[row][col]
    }

    pub fn is_rectangular(&self) -> bool {
        self.cells.len() == self.row_labels.len()
            && self.cells.iter().all(|r| r.len() == self.col_labels.len())
    }

    pub fn to_csv(&self) -> Result<String> {
        if !self.is_rectangular() {
            return Err(IoError::MalformedTable("ragged table".into()));
        }
        let mut out = String::new();
        let header: Vec<String> = std::iter::once(&self.row_header)
            .chain(&self.col_labels)
            .map(|s| csv_field(s))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            out.push_str(&csv_field(label));
            for cell in row {
                out.push(',');
                if let Some(c) = cell {
                    out.push_str(&c.to_string());
                }
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Inverse of [`ReportTable::to_csv`]; the title is not stored in CSV.
    pub fn from_csv(text: &str) -> Result<ReportTable> {
        let mut lines = text.lines();
        let header = split_csv(
            lines
                .next()
                .ok_or_else(|| IoError::MalformedTable("empty CSV".into()))?,
        );
        if header.is_empty() {
            return Err(IoError::MalformedTable("empty header".into()));
        }
        let mut table = ReportTable::new("", &header[0], Vec::new(), header[1..].to_vec());
        for (n, line) in lines.enumerate() {
            let fields = split_csv(line);
            if fields.len() != header.len() {
                return Err(IoError::MalformedTable(format!(
                    "line {}: {} fields, expected {}",
                    n + 2,
                    fields.len(),
                    header.len()
                )));
            }
            table.row_labels.push(fields[0].clone());
            let row = fields[1..]
                .iter()
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        ReportCell::parse(f).map(Some).ok_or_else(|| {
                            IoError::MalformedTable(format!("line {}: bad cell {f:?}", n + 2))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            table.cells.push(row);
        }
        Ok(table)
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.is_rectangular() {
            return Err(IoError::MalformedTable("ragged table".into()));
        }
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<ReportTable> {
        let t: ReportTable = serde_json::from_str(text)?;
        if !t.is_rectangular() {
            return Err(IoError::MalformedTable("ragged table".into()));
        }
        Ok(t)
    }

    /// Fixed-precision rendering for terminals, `mean : std` per cell.
    pub fn to_pretty(&self, decimals: usize) -> String {
        let mut rows = vec![std::iter::once(self.row_header.clone())
            .chain(self.col_labels.iter().cloned())
            .collect::<Vec<_>>()];
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            let mut r = vec![label.clone()];
            for c in row {
                r.push(match c {
                    Some(ReportCell {
                        value,
                        spread: Some(s),
                        ..
                    }) => format!("{value:.decimals$} : {s:.decimals$}"),
                    Some(ReportCell {
                        value,
                        spread: None,
                        ..
                    }) => format!("{value:.decimals$}"),
                    None => "-".to_string(),
                });
            }
            rows.push(r);
        }
        let ncol = rows[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{}\n", self.title);
        for r in rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect();
            out.push_str(line.join(" | ").trim_end());
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

pub fn write_report(table: &ReportTable, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => table.to_csv()?,
        ReportFormat::Json => table.to_json()?,
    };
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_by_one_has_one_data_row() {
        let mut t = ReportTable::new("t", "dist", vec!["100".into()], vec!["m".into()]);
        t.set(0, 0, ReportCell::new(1.5, CellUnit::Percent));
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv, "dist,m\n100,1.5 %\n");
    }

    #[test]
    fn opacity_shaped_report_has_six_rows() {
        let rows = [
            "No membrane",
            "Transparent",
            "Semi-Trans. Reflective",
            "Semi-Trans. Matte",
            "Opaque Reflective",
            "Opaque Matte",
        ];
        let t = ReportTable::new(
            "opacity",
            "membrane",
            rows.iter().map(|s| s.to_string()).collect(),
            vec!["total light (lux)".into(), "opacity".into()],
        );
        assert_eq!(t.to_csv().unwrap().lines().count() - 1, 6);
    }

    #[test]
    fn distance_shaped_report_has_five_rows() {
        let rows = (0..5).map(|i| format!("{} mm", 100 + 50 * i)).collect();
        let cols = ["intel", "transparent", "semi_matte", "semi_reflective"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let t = ReportTable::new("rmse", "distance", rows, cols);
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().count() - 1, 5);
        assert_eq!(
            csv.lines().next().unwrap(),
            "distance,intel,transparent,semi_matte,semi_reflective"
        );
    }

    #[test]
    fn gaps_are_empty_not_zero() {
        let t = ReportTable::new("", "r", vec!["a".into()], vec!["x".into(), "y".into()]);
        assert_eq!(t.to_csv().unwrap(), "r,x,y\na,,\n");
        assert_eq!(
            ReportTable::from_csv("r,x,y\na,,\n").unwrap().get(0, 1),
            None
        );
    }

    #[test]
    fn bad_csv_reports_line() {
        let err = ReportTable::from_csv("r,x\na,1 %\nb,oops\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    proptest! {
        #[test]
        fn csv_and_json_are_lossless(
            vals in proptest::collection::vec((any::<f64>().prop_filter("finite", |v| v.is_finite()), proptest::option::of(0.0f64..1e3), any::<bool>(), any::<bool>()), 6)
        ) {
            let mut t = ReportTable::new("t", "row, label", vec!["a".into(), "b\"q".into()], vec!["x".into(), "y".into(), "z".into()]);
            for (i, (v, s, pct, gap)) in vals.into_iter().enumerate() {
                if gap { continue; }
                let unit = if pct { CellUnit::Percent } else { CellUnit::Mm };
                t.set(i / 3, i % 3, ReportCell { value: v, spread: s, unit });
            }
            let mut back = ReportTable::from_csv(&t.to_csv().unwrap()).unwrap();
            back.title = t.title.clone();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(ReportTable::from_json(&t.to_json().unwrap()).unwrap(), t);
        }
    }
}
