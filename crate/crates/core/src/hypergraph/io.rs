//! Plain-text hypergraph format.
//!
//! ```text
//! # comment lines start with '#'
//! n m d
//! <m lines: space-separated node ids of one hyperedge>
//! <n lines of d space-separated reals, present iff d > 0>
//! <optional single line of n integer labels>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{FeatureMatrix, Hypergraph, LabelVector};
use crate::diffnum::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub hypergraph: Hypergraph,
    pub features: Option<FeatureMatrix>,
    pub labels: Option<LabelVector>,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text)
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    fs::write(path, write_dataset(dataset)?)?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim_start().starts_with('#'));

    let (hline, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| parse_err(1, "missing header line \"n m d\""))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(parse_err(hline, "header must be \"n m d\""));
    }
    let parse_count = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(hline, format!("invalid {what} \"{s}\" in header")))
    };
    let n = parse_count(fields[0], "node count")?;
    let m = parse_count(fields[1], "hyperedge count")?;
    let d = parse_count(fields[2], "feature dimension")?;

    let mut edges = Vec::with_capacity(m);
    for j in 0..m {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(hline, format!("expected {m} hyperedges, found {j}")))?;
        let mut edge = Vec::new();
        for tok in l.split_whitespace() {
            let v: usize = tok
                .parse()
                .map_err(|_| parse_err(ln, format!("invalid node id \"{tok}\"")))?;
            if v >= n {
                return Err(parse_err(ln, format!("node id {v} out of range for {n} nodes")));
            }
            if edge.contains(&v) {
                return Err(parse_err(ln, format!("node id {v} repeated in hyperedge")));
            }
            edge.push(v);
        }
        if edge.is_empty() {
            return Err(parse_err(ln, "empty hyperedge"));
        }
        edges.push(edge);
    }

    let features = if d > 0 {
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(hline, format!("expected {n} feature rows, found {i}")))?;
            let before = data.len();
            for tok in l.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(ln, format!("invalid feature value \"{tok}\"")))?;
                if !v.is_finite() {
                    return Err(parse_err(ln, format!("non-finite feature value \"{tok}\"")));
                }
                data.push(v);
            }
            if data.len() - before != d {
                return Err(parse_err(
                    ln,
                    format!("expected {d} feature values, found {}", data.len() - before),
                ));
            }
        }
        Some(FeatureMatrix::new(Matrix::from_vec(n, d, data)?)?)
    } else {
        None
    };

    let mut rest = lines.filter(|(_, l)| !l.trim().is_empty());
    let labels = match rest.next() {
        None => None,
        Some((ln, l)) => {
            let labels = l
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>()
                        .map_err(|_| parse_err(ln, format!("invalid label \"{tok}\"")))
                })
                .collect::<Result<Vec<_>>>()?;
            if labels.len() != n {
                return Err(parse_err(
                    ln,
                    format!("expected {n} labels, found {}", labels.len()),
                ));
            }
            Some(LabelVector::new(labels).map_err(|e| parse_err(ln, e.to_string()))?)
        }
    };
    if let Some((ln, _)) = rest.next() {
        return Err(parse_err(ln, "unexpected content after label line"));
    }

    Ok(Dataset {
        hypergraph: Hypergraph::new(n, edges)?,
        features,
        labels,
    })
}

pub fn write_dataset(dataset: &Dataset) -> Result<String> {
    let hg = &dataset.hypergraph;
    let n = hg.num_nodes();
    let d = dataset.features.as_ref().map_or(0, FeatureMatrix::dim);
    if let Some(f) = &dataset.features {
        if f.num_nodes() != n {
            return Err(Error::invalid(format!(
                "{} feature rows for {n} nodes",
                f.num_nodes()
            )));
        }
    }
    if let Some(l) = &dataset.labels {
        if l.len() != n {
            return Err(Error::invalid(format!("{} labels for {n} nodes", l.len())));
        }
    }

    let mut out = String::new();
    // writing to a String cannot fail
    let _ = writeln!(out, "{n} {} {d}", hg.num_hyperedges());
    for e in hg.hyperedges() {
        out.push_str(&join(e.iter()));
        out.push('\n');
    }
    if let Some(f) = &dataset.features {
        for r in f.matrix().iter_rows() {
            out.push_str(&join(r.iter()));
            out.push('\n');
        }
    }
    if let Some(l) = &dataset.labels {
        out.push_str(&join(l.as_slice().iter()));
        out.push('\n');
    }
    Ok(out)
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    let mut s = String::new();
    for (k, v) in items.enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

/// Writes one row per node: `node,z0,z1,...` under a header line.
pub fn write_embeddings<W: std::io::Write>(out: W, z: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["node".to_string()];
    header.extend((0..z.cols()).map(|j| format!("z{j}")));
    w.write_record(&header)?;
    for (i, row) in z.iter_rows().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format of [`write_embeddings`]; rows must be listed in node
/// order.
pub fn read_embeddings<R: std::io::Read>(input: R) -> Result<Matrix> {
    let mut r = csv::Reader::from_reader(input);
    let cols = r.headers()?.len().saturating_sub(1);
    if cols == 0 {
        return Err(parse_err(1, "embedding header needs a node column and at least one value column"));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, record) in r.records().enumerate() {
        let record = record?;
        let line = k + 2;
        if record.len() != cols + 1 {
            return Err(parse_err(line, format!("expected {} fields, got {}", cols + 1, record.len())));
        }
        if record[0].trim().parse::<usize>().ok() != Some(k) {
            return Err(parse_err(line, format!("expected node {k}, got \"{}\"", &record[0])));
        }
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("invalid number \"{field}\"")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value \"{field}\"")));
            }
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_round_trip_exactly() {
        let z = Matrix::from_fn(4, 3, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) - 0.7);
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &z).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("node,z0,z1,z2\n0,"));
        assert_eq!(read_embeddings(buf.as_slice()).unwrap(), z);
    }

    #[test]
    fn embeddings_reject_out_of_order_rows() {
        assert!(read_embeddings("node,z0\n1,0.5\n".as_bytes()).is_err());
        assert!(read_embeddings("node,z0\n0,abc\n".as_bytes()).is_err());
        assert!(read_embeddings("node\n0\n".as_bytes()).is_err());
    }

    #[test]
    fn parses_small_file() {
        let text = "# toy\n3 2 2\n0 1\n1 2\n0.5 -1\n2 3.25\n0 0\n1 0 1\n";
        let ds = parse_dataset(text).unwrap();
        assert_eq!(ds.hypergraph.num_nodes(), 3);
        assert_eq!(ds.hypergraph.hyperedges(), &[vec![0, 1], vec![1, 2]]);
        let f = ds.features.unwrap();
        assert_eq!(f.matrix().row(1), &[2.0, 3.25]);
        assert_eq!(ds.labels.unwrap().as_slice(), &[1, 0, 1]);
    }

    #[test]
    fn topology_only_file() {
        let ds = parse_dataset("3 1 0\n2 0\n").unwrap();
        assert!(ds.features.is_none() && ds.labels.is_none());
        assert_eq!(ds.hypergraph.hyperedges(), &[vec![2, 0]]);
    }

    #[test]
    fn out_of_range_id_reports_line() {
        let err = parse_dataset("3 1 0\n# c\n5\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("out of range"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn empty_hyperedge_line_reports_line() {
        let err = parse_dataset("3 2 0\n0 1\n\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(
            parse_dataset("3 x 0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_dataset("# only\n3 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn feature_row_length_checked() {
        let err = parse_dataset("2 1 2\n0 1\n1 2\n3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn save_load_is_bit_exact() {
        let text = "3 2 2\n0 1\n1 2\n0.1 -0.30000000000000004\n1e-300 2\n0 0\n1 0 1\n";
        let ds = parse_dataset(text).unwrap();
        let written = write_dataset(&ds).unwrap();
        let again = parse_dataset(&written).unwrap();
        assert_eq!(ds, again);
        assert_eq!(written, write_dataset(&again).unwrap());
    }
}
