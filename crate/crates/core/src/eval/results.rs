use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One metric value from one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub task: String,
    pub seed: u64,
    pub split_id: usize,
    pub metric: String,
    pub value: f64,
}

/// Mean and sample standard deviation over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub task: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Groups by (method, task, metric) in sorted order. A single repetition
/// has standard deviation 0.
pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((&r.method, &r.task, &r.metric))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((method, task, metric), v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Summary {
                method: method.to_string(),
                task: task.to_string(),
                metric: metric.to_string(),
                count: v.len(),
                mean,
                std,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, seed: u64, value: f64) -> ResultRow {
        ResultRow {
            method: method.into(),
            task: "node".into(),
            seed,
            split_id: 0,
            metric: "accuracy".into(),
            value,
        }
    }

    #[test]
    fn summary_mean_and_std() {
        let rows = vec![row("a", 0, 1.0), row("a", 1, 3.0), row("b", 0, 0.5)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].mean, s[0].std, s[0].count), (2.0, 2f64.sqrt(), 2));
        assert_eq!((s[1].mean, s[1].std), (0.5, 0.0));
    }

    #[test]
    fn csv_columns() {
        let mut buf = Vec::new();
        write_results(&mut buf, &[row("raw", 7, 0.25)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "method,task,seed,split_id,metric,value\nraw,node,7,0,accuracy,0.25\n"
        );
    }
}
