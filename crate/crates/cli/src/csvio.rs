use std::path::Path;

use rdr_core::numerics::{Matrix, SampleMatrix};

use crate::error::{data, CliError};

/// Optional leading identifier column.
pub const ID_COLUMN: &str = "id";
/// Optional string label column, never used as a feature.
pub const LABEL_COLUMN: &str = "label";

/// Raw header and string cells of a CSV file.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let shown = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data(format!("{shown}: {}", io_message(&e))))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| data(format!("{shown}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(data(format!("{shown}: missing header row")));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| data(format!("{shown}: {e}")))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { headers, rows })
}

fn io_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Io(io) => io.to_string(),
        _ => e.to_string(),
    }
}

pub fn parse_float(cell: &str, path: &Path, line: usize, column: &str) -> Result<f64, CliError> {
    cell.parse::<f64>().map_err(|_| {
        data(format!(
            "{}: line {line}, column {column}: cannot parse {cell:?} as a number",
            path.display()
        ))
    })
}

/// Numeric CSV sample. An `id` column is kept for joins and output; a `label`
/// column is skipped.
pub struct CsvDataset {
    pub ids: Option<Vec<String>>,
    pub data: SampleMatrix,
}

impl CsvDataset {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let table = read_table(path)?;
        let id_col = table.column(ID_COLUMN);
        let label_col = table.column(LABEL_COLUMN);
        let features: Vec<usize> = (0..table.headers.len())
            .filter(|&j| Some(j) != id_col && Some(j) != label_col)
            .collect();
        if features.is_empty() {
            return Err(data(format!("{}: no numeric columns", path.display())));
        }
        let mut values = Vec::with_capacity(table.rows.len() * features.len());
        for (r, row) in table.rows.iter().enumerate() {
            for &j in &features {
                let v = parse_float(&row[j], path, r + 2, &table.headers[j])?;
                if !v.is_finite() {
                    return Err(data(format!(
                        "{}: line {}, column {}: value {v} is not finite",
                        path.display(),
                        r + 2,
                        table.headers[j]
                    )));
                }
                values.push(v);
            }
        }
        let names = features.iter().map(|&j| table.headers[j].clone()).collect();
        let matrix = Matrix::from_vec(table.rows.len(), features.len(), values)?;
        let pick = |col: Option<usize>| col.map(|j| table.rows.iter().map(|r| r[j].clone()).collect());
        Ok(CsvDataset {
            ids: pick(id_col),
            data: SampleMatrix::new(matrix, Some(names))?,
        })
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    /// Identifier of row `i`: the id column when present, else the row index.
    pub fn id(&self, i: usize) -> String {
        match &self.ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        }
    }
}

/// Shortest decimal that reads back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(v).to_string()
}

/// Serializes rows to CSV bytes.
pub fn csv_bytes<I>(headers: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}
