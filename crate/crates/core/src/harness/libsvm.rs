//! libsvm text format: `label idx:val idx:val ...` with 1-based indices.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::targets::BlrData;

/// Raw label value to class in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub positive: f64,
    pub negative: f64,
}

impl LabelMap {
    /// covtype.binary: 2 -> +1, 1 -> -1.
    pub fn covtype() -> Self {
        Self {
            positive: 2.0,
            negative: 1.0,
        }
    }

    /// +1 -> +1, -1 -> -1.
    pub fn signed() -> Self {
        Self {
            positive: 1.0,
            negative: -1.0,
        }
    }

    fn map(&self, raw: f64) -> Option<f64> {
        if raw == self.positive {
            Some(1.0)
        } else if raw == self.negative {
            Some(-1.0)
        } else {
            None
        }
    }

    fn unmap(&self, class: f64) -> f64 {
        if class > 0.0 {
            self.positive
        } else {
            self.negative
        }
    }
}

impl Default for LabelMap {
    fn default() -> Self {
        Self::covtype()
    }
}

/// Parses libsvm text into dense rows. The feature count is the largest index
/// seen, or `features` when given (larger indices are then an error).
pub fn parse_libsvm(text: &str, labels: &LabelMap, features: Option<usize>) -> Result<BlrData> {
    let mut rows: Vec<BTreeMap<usize, f64>> = Vec::new();
    let mut classes = Vec::new();
    let mut max_index = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let mut parts = line.split_whitespace();
        let label_text = parts.next().expect("nonempty line has a token");
        let raw_label: f64 = label_text
            .parse()
            .map_err(|_| err(format!("label '{label_text}' is not a number")))?;
        let class = labels
            .map(raw_label)
            .ok_or_else(|| err(format!("label {raw_label} is not in the label map")))?;
        let mut row = BTreeMap::new();
        for token in parts {
            let (idx, val) = token
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, got '{token}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("feature index '{idx}' is not a positive integer")))?;
            if idx == 0 {
                return Err(err("feature indices start at 1".into()));
            }
            if let Some(limit) = features {
                if idx > limit {
                    return Err(err(format!("feature index {idx} exceeds {limit}")));
                }
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("feature value '{val}' is not a number")))?;
            if !val.is_finite() {
                return Err(err(format!("feature value {val} is not finite")));
            }
            max_index = max_index.max(idx);
            row.insert(idx, val);
        }
        rows.push(row);
        classes.push(class);
    }
    let width = features.unwrap_or(max_index);
    let dense = rows
        .into_iter()
        .map(|row| {
            let mut x = vec![0.0; width];
            for (idx, val) in row {
                x[idx - 1] = val;
            }
            x
        })
        .collect();
    BlrData::new(dense, classes)
}

/// Reads and parses a libsvm file.
pub fn load_libsvm(path: &Path, labels: &LabelMap, features: Option<usize>) -> Result<BlrData> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_libsvm(&text, labels, features)
}

/// Writes rows in libsvm format, omitting zero entries. Values use the
/// shortest representation that reads back exactly.
pub fn write_libsvm<W: Write>(data: &BlrData, labels: &LabelMap, out: &mut W) -> Result<()> {
    for (x, c) in data.features().iter().zip(data.labels()) {
        write!(out, "{}", labels.unmap(*c))?;
        for (i, v) in x.iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{v:?}", i + 1)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Per-feature affine map to mean 0, variance 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant features keep scale 1.
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Statistics of `data`.
    pub fn fit(data: &BlrData) -> Self {
        let n = data.len().max(1) as f64;
        let l = data.feature_count();
        let mut mean = vec![0.0; l];
        for x in data.features() {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; l];
        for x in data.features() {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, data: &BlrData) -> Result<BlrData> {
        let rows = data
            .features()
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect();
        BlrData::new(rows, data.labels().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let d = parse_libsvm("1 1:0.5 3:2\n", &LabelMap::covtype(), Some(3)).unwrap();
        assert_eq!(d.features()[0], vec![0.5, 0.0, 2.0]);
        assert_eq!(d.labels(), &[-1.0]);
        let d = parse_libsvm("2\n1 2:1\n", &LabelMap::covtype(), None).unwrap();
        assert_eq!(d.features()[0], vec![0.0, 0.0]);
        assert_eq!(d.labels(), &[1.0, -1.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let m = LabelMap::covtype();
        assert!(matches!(
            parse_libsvm("1 1:1\n3 1:1\n", &m, None),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_libsvm("1 1:1\n\n2 0:1\n", &m, None),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_libsvm("x 1:1\n", &m, None),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_libsvm("1 1-1\n", &m, None),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_libsvm("1 4:1\n", &m, Some(3)),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_libsvm("1 1:abc\n", &m, None),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_read_round_trips() {
        let rows = vec![
            vec![0.1, 0.0, -3.25],
            vec![0.0, 0.0, 0.0],
            vec![1e-17, 2.5, 7.0],
            vec![-0.3333333333333333, 1.0, 0.0],
            vec![4.0, 0.0, 1e300],
        ];
        let data = BlrData::new(rows.clone(), vec![1.0, -1.0, -1.0, 1.0, 1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("five.libsvm");
        let mut f = fs::File::create(&path).unwrap();
        write_libsvm(&data, &LabelMap::covtype(), &mut f).unwrap();
        drop(f);
        let back = load_libsvm(&path, &LabelMap::covtype(), Some(3)).unwrap();
        assert_eq!(back.features(), &rows[..]);
        assert_eq!(back.labels(), data.labels());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_libsvm(
                Path::new("/nonexistent/covtype"),
                &LabelMap::covtype(),
                None
            ),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn standardization_moments() {
        let data = BlrData::new(
            vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]],
            vec![1.0, -1.0, 1.0],
        )
        .unwrap();
        let s = Standardization::fit(&data);
        assert_eq!(s.mean, vec![3.0, 5.0]);
        assert_eq!(s.scale[1], 1.0);
        let z = s.apply(&data).unwrap();
        let col: Vec<f64> = z.features().iter().map(|x| x[0]).collect();
        let mean = col.iter().sum::<f64>() / 3.0;
        let var = col.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-14);
        assert!(z.features().iter().all(|x| x[1] == 0.0));
    }
}
