use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DatasetError, Sample, FEATURE_COUNT};
use crate::flight::Label;

pub const DATASET_CSV_HEADER: [&str; FEATURE_COUNT + 1] = [
    "altitude_m",
    "v_vertical_mps",
    "accel_x_mps2",
    "accel_y_mps2",
    "accel_z_mps2",
    "airbrake_state",
];

/// Writes the dataset CSV. Floats use Rust's shortest round-trip form, which
/// reads back bit-identically.
pub fn write_samples<W: Write>(samples: &[Sample], out: W) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(DATASET_CSV_HEADER).map_err(csv_error)?;
    let mut record: Vec<String> = Vec::with_capacity(FEATURE_COUNT + 1);
    for s in samples {
        record.clear();
        record.extend(s.features.iter().map(|f| f.to_string()));
        record.push(s.label.index().to_string());
        writer.write_record(&record).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv(samples: &[Sample], path: &Path) -> Result<(), DatasetError> {
    write_samples(samples, BufWriter::new(File::create(path)?))
}

pub fn read_samples<R: Read>(input: R) -> Result<Vec<Sample>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        Some(record) => record.map_err(csv_error)?,
        None => return Err(DatasetError::Header(String::new())),
    };
    if header.iter().ne(DATASET_CSV_HEADER.iter().copied()) {
        return Err(DatasetError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut samples = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != FEATURE_COUNT + 1 {
            return Err(DatasetError::Schema {
                line,
                expected: FEATURE_COUNT + 1,
                found: record.len(),
            });
        }
        let mut features = [0.0; FEATURE_COUNT];
        for (i, field) in record.iter().take(FEATURE_COUNT).enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| DatasetError::Parse {
                line,
                message: format!("column {} is not a number: `{field}`", DATASET_CSV_HEADER[i]),
            })?;
            if !value.is_finite() {
                return Err(DatasetError::Parse {
                    line,
                    message: format!("column {} is not finite", DATASET_CSV_HEADER[i]),
                });
            }
            features[i] = value;
        }
        let raw = record[FEATURE_COUNT].trim();
        let label = raw
            .parse::<usize>()
            .ok()
            .and_then(Label::from_index)
            .ok_or_else(|| DatasetError::Parse {
                line,
                message: format!("airbrake_state must be 0 or 1, got `{raw}`"),
            })?;
        samples.push(Sample::new(features, label));
    }
    Ok(samples)
}

pub fn read_csv(path: &Path) -> Result<Vec<Sample>, DatasetError> {
    read_samples(BufReader::new(File::open(path)?))
}

fn csv_error(err: csv::Error) -> DatasetError {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        other => DatasetError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}
