//! Reader and writer for the UEA/UCR `.ts` text format (equal-length,
//! complete, classification datasets only).

use std::fmt::Write as _;
use std::path::Path;

use super::MtsDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn load_ts_file(path: impl AsRef<Path>) -> Result<MtsDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ts(&text, path)
}

pub fn save_ts_file(dataset: &MtsDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_ts(dataset)).map_err(|e| Error::io(path, e))
}

#[derive(Default)]
struct Header {
    name: Option<String>,
    univariate: Option<bool>,
    dims: Option<usize>,
    length: Option<usize>,
    classes: Option<Vec<String>>,
}

/// Parses `.ts` text; `origin` is only used in error messages.
pub fn parse_ts(text: &str, origin: &Path) -> Result<MtsDataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut header = Header::default();
    let mut in_data = false;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut dims = 0;
    let mut length = 0;

    for (n, raw) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            if !line.starts_with('@') {
                return Err(parse_err(lineno, format!("unexpected line before @data: {line:?}")));
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default().to_ascii_lowercase();
            let rest: Vec<&str> = parts.collect();
            let flag = |rest: &[&str]| -> Result<bool> {
                match rest.first().map(|s| s.to_ascii_lowercase()).as_deref() {
                    Some("true") => Ok(true),
                    Some("false") => Ok(false),
                    _ => Err(parse_err(lineno, format!("{key} expects true/false"))),
                }
            };
            let number = |rest: &[&str]| -> Result<usize> {
                rest.first()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(lineno, format!("{key} expects an integer")))
            };
            match key.as_str() {
                "@problemname" => header.name = rest.first().map(|s| s.to_string()),
                "@timestamps" => {
                    if flag(&rest)? {
                        return Err(Error::UnsupportedDataset("timestamped series".into()));
                    }
                }
                "@missing" => {
                    flag(&rest)?;
                }
                "@univariate" => header.univariate = Some(flag(&rest)?),
                "@dimensions" | "@dimension" => header.dims = Some(number(&rest)?),
                "@equallength" => {
                    if !flag(&rest)? {
                        return Err(Error::UnsupportedDataset("unequal-length series".into()));
                    }
                }
                "@serieslength" => header.length = Some(number(&rest)?),
                "@classlabel" => {
                    if !flag(&rest)? {
                        return Err(Error::UnsupportedDataset("regression targets".into()));
                    }
                    header.classes = Some(rest[1..].iter().map(|s| s.to_string()).collect());
                }
                "@targetlabel" => {
                    return Err(Error::UnsupportedDataset("regression targets".into()));
                }
                "@data" => {
                    in_data = true;
                    dims = match (header.dims, header.univariate) {
                        (Some(d), _) => d,
                        (None, Some(true)) => 1,
                        _ => 0,
                    };
                    length = header.length.unwrap_or(0);
                }
                _ => {}
            }
            continue;
        }

        let classes = header
            .classes
            .as_ref()
            .ok_or_else(|| parse_err(lineno, "missing @classLabel directive".into()))?;
        let fields: Vec<&str> = line.split(':').collect();
        let (label_field, series) = fields
            .split_last()
            .ok_or_else(|| parse_err(lineno, "empty record".into()))?;
        if series.is_empty() {
            return Err(parse_err(lineno, "record has no dimensions".into()));
        }
        if dims == 0 {
            dims = series.len();
        }
        if series.len() != dims {
            return Err(parse_err(
                lineno,
                format!("record has {} dimensions, expected {dims}", series.len()),
            ));
        }
        let mut data = Vec::new();
        for dim in series {
            let before = data.len();
            for v in dim.split(',') {
                let v = v.trim();
                if v == "?" || v.eq_ignore_ascii_case("nan") {
                    return Err(Error::UnsupportedDataset(format!("missing value on line {lineno}")));
                }
                let x: f64 = v.parse().map_err(|_| parse_err(lineno, format!("bad value {v:?}")))?;
                data.push(x);
            }
            let got = data.len() - before;
            if length == 0 {
                length = got;
            }
            if got != length {
                return Err(Error::UnsupportedDataset(format!(
                    "series of length {got} on line {lineno}, expected {length}"
                )));
            }
        }
        let label = label_field.trim();
        let id = classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| parse_err(lineno, format!("unknown class label {label:?}")))?;
        samples.push(Tensor::new(vec![dims, length], data)?);
        labels.push(id);
    }

    if !in_data {
        return Err(parse_err(0, "no @data section".into()));
    }
    let classes = header.classes.unwrap_or_default();
    MtsDataset::new(header.name.unwrap_or_default(), dims, length, samples, labels, classes)
}

/// Serializes a dataset; values use the shortest decimal that round-trips.
pub fn write_ts(ds: &MtsDataset) -> String {
    let mut out = String::new();
    let name = if ds.name.is_empty() { "unnamed" } else { &ds.name };
    let _ = writeln!(out, "@problemName {name}");
    out.push_str("@timeStamps false\n@missing false\n");
    let _ = writeln!(out, "@univariate {}", ds.dims() == 1);
    let _ = writeln!(out, "@dimensions {}", ds.dims());
    out.push_str("@equalLength true\n");
    let _ = writeln!(out, "@seriesLength {}", ds.length());
    let _ = writeln!(out, "@classLabel true {}", ds.class_names().join(" "));
    out.push_str("@data\n");
    for (s, &l) in ds.samples().iter().zip(ds.labels()) {
        for row in s.data().chunks(ds.length()) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:?}");
            }
            out.push(':');
        }
        out.push_str(&ds.class_names()[l]);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<MtsDataset> {
        parse_ts(text, Path::new("inline.ts"))
    }

    const HEADER: &str = "@problemName toy\n@univariate false\n@dimensions 2\n@equalLength true\n@seriesLength 2\n@classLabel true label_a label_b\n@data\n";

    #[test]
    fn single_record() {
        let ds = parse(&format!("{HEADER}0.0,1.0:2.0,3.0:label_a\n")).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.sample(0).shape(), &[2, 2]);
        assert_eq!(ds.sample(0).data(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(ds.labels(), &[0]);
    }

    #[test]
    fn header_only_is_empty() {
        let ds = parse(HEADER).unwrap();
        assert!(ds.is_empty());
        assert_eq!((ds.dims(), ds.length(), ds.num_classes()), (2, 2, 2));
    }

    #[test]
    fn class_ids_follow_declaration_order() {
        let ds = parse(&format!("{HEADER}1,1:1,1:label_b\n0,0:0,0:label_a\n")).unwrap();
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn rejects_unsupported_features() {
        let unequal = HEADER.replace("@equalLength true", "@equalLength false");
        assert!(matches!(parse(&unequal), Err(Error::UnsupportedDataset(_))));
        let missing = format!("{HEADER}0.0,?:2.0,3.0:label_a\n");
        assert!(matches!(parse(&missing), Err(Error::UnsupportedDataset(_))));
        let ragged = format!("{HEADER}0.0,1.0,2.0:2.0,3.0,4.0:label_a\n");
        assert!(matches!(parse(&ragged), Err(Error::UnsupportedDataset(_))));
    }

    #[test]
    fn unknown_label_is_an_error() {
        let err = parse(&format!("{HEADER}0,1:2,3:label_c\n")).unwrap_err();
        assert!(err.to_string().contains("label_c"), "{err}");
        assert!(err.to_string().contains(":8:"), "{err}");
    }
}
