//! Result rows and CSV emission.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "experiment",
    "estimator",
    "combiner",
    "n_r",
    "eta",
    "mu",
    "value",
    "stderr",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    Nmse,
    SumSe,
    Validate,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Nmse => "nmse",
            Experiment::SumSe => "sum_se",
            Experiment::Validate => "validate",
        })
    }
}

/// Estimator column. Validation rows carry the oracle name instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Estimator {
    Mmse,
    Ls,
    ApproxViaQ,
    ApproxRDirect,
    /// MMSE estimates with the instantaneous-SINR bound instead of UatF.
    MmseInstantaneous,
    Oracle(&'static str),
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Mmse => "mmse",
            Estimator::Ls => "ls",
            Estimator::ApproxViaQ => "approx_viaq",
            Estimator::ApproxRDirect => "approx_rdirect",
            Estimator::MmseInstantaneous => "mmse_instantaneous",
            Estimator::Oracle(name) => name,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combiner {
    None,
    Mrc,
    Rzf,
}

impl fmt::Display for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combiner::None => "none",
            Combiner::Mrc => "mrc",
            Combiner::Rzf => "rzf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: Experiment,
    pub estimator: Estimator,
    pub combiner: Combiner,
    pub n_r: usize,
    /// Regularization factors; empty for estimators without them.
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub value: f64,
    /// Standard error over outer realizations. Validation rows store the
    /// pass threshold here.
    pub stderr: f64,
    pub seed: u64,
}

impl ResultRow {
    fn fields(&self) -> [String; 9] {
        let opt = |v: Option<f64>| v.map(format_sig).unwrap_or_default();
        [
            self.experiment.to_string(),
            self.estimator.to_string(),
            self.combiner.to_string(),
            self.n_r.to_string(),
            opt(self.eta),
            opt(self.mu),
            format_sig(self.value),
            format_sig(self.stderr),
            self.seed.to_string(),
        ]
    }
}

/// `%.9g`: nine significant digits, trailing zeros removed, exponent form
/// outside `1e-4 <= |x| < 1e9`.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_csv_to<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv_to(rows, std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.1), "0.1");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig(-2.0 / 3.0), "-0.666666667");
        assert_eq!(format_sig(123456.789012), "123456.789");
        assert_eq!(format_sig(1234567891.0), "1.23456789e+09");
        assert_eq!(format_sig(1.5e-7), "1.5e-07");
        assert_eq!(format_sig(0.000123456789012), "0.000123456789");
        assert_eq!(format_sig(5.82215259e-5), "5.82215259e-05");
        assert_eq!(format_sig(99.9999999999), "100");
    }

    #[test]
    fn header_only_for_no_rows() {
        let mut buf = Vec::new();
        write_csv_to(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "experiment,estimator,combiner,n_r,eta,mu,value,stderr,seed\n");
    }

    #[test]
    fn row_encoding() {
        let row = ResultRow {
            experiment: Experiment::SumSe,
            estimator: Estimator::ApproxViaQ,
            combiner: Combiner::Rzf,
            n_r: 25,
            eta: Some(0.95),
            mu: None,
            value: 31.25,
            stderr: 0.0,
            seed: 7,
        };
        let mut buf = Vec::new();
        write_csv_to(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "sum_se,approx_viaq,rzf,25,0.95,,31.25,0,7");
    }

    #[test]
    fn unwritable_path_reports_it() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("out.csv");
        match write_csv(&[], &path) {
            Err(Error::Io { path: p, .. }) => assert_eq!(p, path),
            other => panic!("unexpected {other:?}"),
        }
    }
}
