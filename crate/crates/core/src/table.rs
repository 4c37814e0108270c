//! Tidy result tables and CSV export.

use std::fmt;
use std::io;

use crate::model::Trace;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(i64),
    Text(String),
    /// A measurement that could not be made, e.g. an unmeasurable delay.
    Undefined,
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Display for f64 is the shortest string that round-trips
            Value::Num(x) => write!(f, "{x}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Text(s) => f.write_str(s),
            Value::Undefined => f.write_str("undefined"),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<Option<f64>> for Value {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Value::Undefined, Value::Num)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics if its width does not match the header.
    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column; non-numeric cells map to `None`.
    pub fn numbers(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.column_index(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[i] {
                    Value::Num(x) => Some(x),
                    Value::Int(n) => Some(n as f64),
                    _ => None,
                })
                .collect(),
        )
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(ToString::to_string))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Writes a trace as CSV with a leading `time_s` column.
pub fn write_trace_csv<W: io::Write>(trace: &Trace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time_s".to_string()];
    header.extend(trace.channel_names().map(str::to_string));
    w.write_record(&header)?;
    let cols: Vec<&[f64]> = trace.channels().map(|(_, v)| v).collect();
    let mut record = Vec::with_capacity(header.len());
    for i in 0..trace.len() {
        record.clear();
        record.push(trace.time(i).to_string());
        record.extend(cols.iter().map(|c| c[i].to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum TraceCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("first column must be `time_s`")]
    MissingTime,
    #[error("row {row}: cannot parse `{text}` as a number")]
    BadNumber { row: usize, text: String },
    #[error("trace needs at least two rows to infer its time step")]
    TooShort,
    #[error("time column is not uniformly sampled near row {0}")]
    NonUniform(usize),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Reads a CSV trace in the format produced by [`write_trace_csv`].
pub fn read_trace_csv<R: io::Read>(input: R) -> Result<Trace, TraceCsvError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("time_s") {
        return Err(TraceCsvError::MissingTime);
    }
    let mut columns = vec![Vec::new(); header.len()];
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        for (col, field) in columns.iter_mut().zip(rec.iter()) {
            let v: f64 = field.trim().parse().map_err(|_| TraceCsvError::BadNumber {
                row: row + 1,
                text: field.to_string(),
            })?;
            col.push(v);
        }
    }
    let times = &columns[0];
    if times.len() < 2 {
        return Err(TraceCsvError::TooShort);
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (i, t) in times.iter().enumerate() {
        let expected = times[0] + i as f64 * dt;
        if (t - expected).abs() > 1e-6 * dt.abs().max(f64::MIN_POSITIVE) + 1e-15 {
            return Err(TraceCsvError::NonUniform(i + 1));
        }
    }
    let t0 = times[0];
    let channels = header.into_iter().zip(columns).skip(1);
    Ok(Trace::new(dt, t0, channels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_formats() {
        let mut t = ResultTable::new(["name", "value", "delay_s"]);
        t.push(vec!["a,b".into(), 0.1.into(), None.into()]);
        t.push(vec!["plain".into(), 1e-7.into(), Some(2e-3).into()]);
        assert_eq!(
            t.to_csv_string(),
            "name,value,delay_s\n\"a,b\",0.1,undefined\nplain,0.0000001,0.002\n"
        );
    }

    #[test]
    fn trace_csv_round_trip() {
        let trace = Trace::new(
            1e-6,
            0.0,
            vec![
                ("s1".to_string(), vec![0.0, 1.7, 1.7, 0.0]),
                ("d1.m".to_string(), vec![5.0, 4.99, 4.5, 4.25]),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time_s,s1,d1.m\n0,0,5\n"));
        let back = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(back.channel("d1.m"), trace.channel("d1.m"));
        assert!((back.dt() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn trace_csv_rejects_garbage() {
        assert!(matches!(
            read_trace_csv("t,a\n0,1\n1,2\n".as_bytes()),
            Err(TraceCsvError::MissingTime)
        ));
        assert!(matches!(
            read_trace_csv("time_s,a\n0,x\n1,2\n".as_bytes()),
            Err(TraceCsvError::BadNumber { .. })
        ));
        assert!(matches!(
            read_trace_csv("time_s,a\n0,1\n1,2\n5,3\n".as_bytes()),
            Err(TraceCsvError::NonUniform(_))
        ));
    }
}
