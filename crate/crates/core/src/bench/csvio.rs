use std::io::{Read, Write};
use std::path::Path;

use super::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Reads `label,f0,f1,…` rows. Row numbers in errors are file lines (the
/// header is line 1).
pub fn read_csv(reader: impl Read, domain_tag: &str) -> Result<EmbeddingDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    if columns.first().map(String::as_str) != Some("label") || columns.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            column: columns.first().cloned().unwrap_or_default(),
            message: "header must be label,f0,f1,...".into(),
        });
    }
    for (j, name) in columns[1..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::Parse {
                row: 1,
                column: name.clone(),
                message: format!("expected column f{j}"),
            });
        }
    }
    let dim = columns.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        for (j, name) in columns.iter().enumerate() {
            let field = record.get(j).map(str::trim).unwrap_or("");
            let fail = |message: &str| Error::Parse {
                row,
                column: name.clone(),
                message: message.to_string(),
            };
            if field.is_empty() {
                return Err(fail("missing value"));
            }
            if j == 0 {
                labels.push(field.parse::<usize>().map_err(|_| fail("label must be a non-negative integer"))?);
            } else {
                let v: f32 = field.parse().map_err(|_| fail("not a decimal number"))?;
                if !v.is_finite() {
                    return Err(fail("non-finite value"));
                }
                data.push(v);
            }
        }
        if record.len() > columns.len() {
            return Err(Error::Parse {
                row,
                column: format!("f{dim}"),
                message: "more fields than the header".into(),
            });
        }
    }
    EmbeddingDataset::new(Matrix::new(labels.len(), dim, data)?, labels, None, domain_tag)
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let tag = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    read_csv(std::fs::File::open(path)?, &tag)
}

/// Shortest round-trip decimals, `\n` line endings.
pub fn write_csv(ds: &EmbeddingDataset, mut out: impl Write) -> Result<()> {
    let mut line = String::from("label");
    for j in 0..ds.features.cols() {
        line.push_str(&format!(",f{j}"));
    }
    writeln!(out, "{line}")?;
    for (row, y) in ds.features.iter_rows().zip(&ds.labels) {
        line.clear();
        line.push_str(&y.to_string());
        for v in row {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn export_csv(ds: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(ds, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_fixture() {
        let ds = read_csv("label,f0,f1,f2\n0,1.5,-2,3e-1\n1,0,0.25,7\n".as_bytes(), "t").unwrap();
        assert_eq!(ds.features.shape(), (2, 3));
        assert_eq!(ds.labels, [0, 1]);
        assert_eq!(ds.features.row(0), &[1.5, -2.0, 0.3]);
    }

    #[test]
    fn nan_cites_row_and_column() {
        let err = read_csv("label,f0,f1,f2,f3\n0,1,2,3,NaN\n".as_bytes(), "t").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (2, "f3")),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_and_malformed_fields() {
        let err = read_csv("label,f0,f1\n0,1\n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, ref column, .. } if column == "f1"), "{err}");
        let err = read_csv("label,f0\n0,1\nx,2\n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, ref column, .. } if column == "label"), "{err}");
        assert!(read_csv("lbl,f0\n".as_bytes(), "t").is_err());
        assert!(read_csv("label,f1\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn export_then_ingest_is_identity() {
        let x = Matrix::new(3, 2, vec![0.1f32, -1e-7, 3.4028235e38, 1.0 / 3.0, -0.0, 12345.678]).unwrap();
        let ds = EmbeddingDataset::new(x, vec![2, 0, 1], None, "t").unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "t").unwrap();
        assert_eq!(back.labels, ds.labels);
        let bits = |d: &EmbeddingDataset| d.features.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&ds));
    }
}
