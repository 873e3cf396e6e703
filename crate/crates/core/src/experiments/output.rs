//! Study files: `summary.json`, `table{1,2,3}.csv`, `curve_*.csv` and
//! `records.jsonl`. Numbers in CSV files carry 9 significant digits; JSON
//! keeps full precision. Nothing written here depends on wall-clock time.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{ExperimentSummary, StudyOutput};
use crate::error::{Error, Result};

/// Formats `x` with 9 significant digits, trailing zeros trimmed; plain
/// notation for exponents in `-5..9`, scientific otherwise.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        trim_zeros(format!("{:.*}", (8 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim_zeros(mant.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_else(|| "NA".into())
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(|e| Error::Io(e.into()))?;
    w.write_record(header).map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(dir: &Path, name: &str, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it)?);
        text.push('\n');
    }
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Writes every file for `output` into `dir` (created if missing) and
/// returns their names.
pub fn write_outputs(output: &StudyOutput, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = vec!["summary.json".to_string()];
    match output {
        StudyOutput::Estimate(s) => {
            write_json(dir, "summary.json", output)?;
            files.extend(write_tables(s, dir)?);
        }
        StudyOutput::ConsistencyCurve { summary, curve } => {
            write_json(dir, "summary.json", output)?;
            files.extend(write_tables(summary, dir)?);
            let mut header = vec!["n".to_string()];
            header.extend(summary.columns.iter().map(|c| c.label.clone()));
            header.push("true_lambda".into());
            let rows: Vec<Vec<String>> = curve
                .iter()
                .map(|p| {
                    let mut r = vec![p.n.to_string()];
                    r.extend(p.means.iter().map(|(_, m)| fmt_num(*m)));
                    r.push(opt(p.true_lambda));
                    r
                })
                .collect();
            write_csv(dir, "curve_consistency.csv", &header, &rows)?;
            files.push("curve_consistency.csv".into());
        }
        StudyOutput::BetaGapSweep(res) => {
            write_json(dir, "summary.json", output)?;
            let rows: Vec<Vec<String>> = res
                .points
                .iter()
                .map(|p| {
                    vec![
                        fmt_num(p.gap),
                        p.n.to_string(),
                        fmt_num(p.beta02),
                        fmt_num(p.mean),
                        opt(p.bias),
                        fmt_num(p.variance),
                    ]
                })
                .collect();
            write_csv(
                dir,
                "curve_beta_gap.csv",
                &strings(["gap", "n", "beta02", "mean", "bias", "variance"]),
                &rows,
            )?;
            write_jsonl(dir, "records.jsonl", &res.replicates)?;
            files.extend(["curve_beta_gap.csv".into(), "records.jsonl".into()]);
        }
        StudyOutput::OutlierStudy(res) => {
            write_json(dir, "summary.json", output)?;
            let curve: Vec<Vec<String>> = res
                .points
                .iter()
                .map(|p| {
                    vec![
                        fmt_num(p.delta),
                        fmt_num(p.lambda_i),
                        fmt_num(p.lambda_t),
                        opt(res.true_lambda),
                    ]
                })
                .collect();
            write_csv(
                dir,
                "curve_outlier.csv",
                &strings(["delta", "lambda_I", "lambda_T", "true_lambda"]),
                &curve,
            )?;
            let dev: Vec<Vec<String>> = res
                .points
                .iter()
                .map(|p| {
                    vec![
                        fmt_num(p.delta),
                        fmt_num(p.deviation_i),
                        fmt_num(p.deviation_t),
                        fmt_num(p.closed_form_deviation_i),
                    ]
                })
                .collect();
            write_csv(
                dir,
                "curve_outlier_deviation.csv",
                &strings(["delta", "deviation_I", "deviation_T", "closed_form_deviation_I"]),
                &dev,
            )?;
            files.extend(["curve_outlier.csv".into(), "curve_outlier_deviation.csv".into()]);
        }
        StudyOutput::OracleCheck(rep) => {
            write_json(dir, "summary.json", output)?;
            let rows: Vec<Vec<String>> = rep
                .comparisons
                .iter()
                .map(|c| {
                    vec![
                        c.quantity.clone(),
                        fmt_num(c.oracle),
                        fmt_num(c.mcmc),
                        fmt_num(c.mc_se),
                        fmt_num(c.z),
                        c.pass.to_string(),
                    ]
                })
                .collect();
            write_csv(
                dir,
                "oracle_check.csv",
                &strings(["quantity", "oracle", "mcmc", "mc_se", "z", "pass"]),
                &rows,
            )?;
            files.push("oracle_check.csv".into());
        }
    }
    Ok(files)
}

/// `table1.csv` (Mean/Bias/Variance/MSE per estimator), `table2.csv`
/// (variances of WBIC and `n T_n`), `table3.csv` (variance decomposition)
/// and `records.jsonl`.
pub fn write_tables(s: &ExperimentSummary, dir: &Path) -> Result<Vec<String>> {
    let mut header = strings(["n", "metric"]);
    header.extend(s.columns.iter().map(|c| c.label.clone()));
    let mut rows = Vec::new();
    for size in s.sizes.iter().filter(|z| z.replicates_used > 0) {
        let metrics: [(&str, Box<dyn Fn(usize) -> String>); 4] = [
            ("Mean", Box::new(|i| fmt_num(size.estimators[i].mean))),
            ("Bias", Box::new(|i| opt(size.estimators[i].bias))),
            ("Variance", Box::new(|i| fmt_num(size.estimators[i].variance))),
            ("MSE", Box::new(|i| opt(size.estimators[i].mse))),
        ];
        for (name, f) in metrics {
            let mut r = vec![size.n.to_string(), name.to_string()];
            r.extend((0..size.estimators.len()).map(f));
            rows.push(r);
        }
    }
    write_csv(dir, "table1.csv", &header, &rows)?;

    let beta0s = s.config.settings().required_beta0s();
    let mut header = strings(["n", "var_n_times_tn"]);
    header.extend(beta0s.iter().map(|b| format!("var_wbic({b})")));
    let rows: Vec<Vec<String>> = s
        .sizes
        .iter()
        .filter(|z| z.replicates_used > 0)
        .map(|z| {
            let mut r = vec![z.n.to_string(), fmt_num(z.n_times_tn_variance)];
            r.extend(z.wbic_variances.iter().map(|(_, v)| fmt_num(*v)));
            r
        })
        .collect();
    write_csv(dir, "table2.csv", &header, &rows)?;

    let mut header = strings(["n", "row"]);
    header.extend(s.config.pairs.iter().map(|(a, b)| format!("lambda_W({a},{b})")));
    header.push("lambda_T".into());
    let mut rows = Vec::new();
    for z in s.sizes.iter().filter(|z| !z.decomposition.is_empty()) {
        let parts: [(&str, fn(&super::DecompositionRow) -> f64); 3] = [
            ("Numerator", |d| d.numerator),
            ("Denominator", |d| d.denominator),
            ("Variance", |d| d.ratio),
        ];
        for (name, f) in parts {
            let mut r = vec![z.n.to_string(), name.to_string()];
            r.extend(z.decomposition.iter().map(|d| fmt_num(f(d))));
            rows.push(r);
        }
    }
    write_csv(dir, "table3.csv", &header, &rows)?;

    write_jsonl(dir, "records.jsonl", &s.records)?;
    Ok(vec![
        "table1.csv".into(),
        "table2.csv".into(),
        "table3.csv".into(),
        "records.jsonl".into(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(43.825365244), "43.8253652");
        assert_eq!(fmt_num(0.75801234567), "0.758012346");
        assert_eq!(fmt_num(-1234.5), "-1234.5");
        assert_eq!(fmt_num(9.9999999999), "10");
        assert_eq!(fmt_num(1.5e-7), "1.5e-7");
        assert_eq!(fmt_num(123456789012.0), "1.23456789e11");
        assert_eq!(fmt_num(f64::NAN), "NaN");
        for x in [3.0f64.sqrt(), -7.123456789e-3, 98765.4321, 2.5e12] {
            let back: f64 = fmt_num(x).parse().unwrap();
            assert!((back - x).abs() <= 5e-9 * x.abs());
        }
    }
}
