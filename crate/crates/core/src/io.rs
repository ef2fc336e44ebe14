//! Serialization helpers: JSON with 17 significant digits per float, sample
//! CSV files and atomic writes.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::envelope::SampledFunction;
use crate::error::{Error, Result};

/// `{:.16e}`, or `null` for non-finite values.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

/// Pretty JSON whose floats carry 17 significant digits.
struct ExactFloats<'a>(PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_float(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(v))
    }

    forward!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );
}

pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Input(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// CSV with a header row and float cells from `format_float`.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::Input(format!("csv: {e}"));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Input(format!("csv: {e}")))
}

pub fn coordinate_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("x{k}")).collect()
}

/// Columns `x1..xd, f`.
pub fn samples_to_csv(s: &SampledFunction) -> Result<Vec<u8>> {
    let mut header = coordinate_header(s.dim());
    header.push("f".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = s.points().iter().zip(s.values()).map(|(p, v)| {
        p.iter()
            .chain(std::iter::once(v))
            .map(|&c| format_float(c))
            .collect()
    });
    csv_table(&header, rows)
}

/// Reads columns `x1..xd, f`; the dimension is the column count minus one.
pub fn samples_from_csv(bytes: &[u8]) -> Result<SampledFunction> {
    let mut r = csv::Reader::from_reader(bytes);
    let headers = r
        .headers()
        .map_err(|e| Error::Input(format!("csv header: {e}")))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Input("sample file needs coordinate columns and f".into()));
    }
    let dim = headers.len() - 1;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("csv row {}: {e}", line + 2)))?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("csv row {}: {e}", line + 2)))?;
        if nums.len() != dim + 1 {
            return Err(Error::Input(format!("csv row {} has {} cells", line + 2, nums.len())));
        }
        values.push(nums[dim]);
        points.push(nums[..dim].to_vec());
    }
    SampledFunction::new(points, values)
}
