//! Side-by-side tables of metric reports and the distance-histogram plot files.

use std::fmt::Write as _;

use fusetrack::MetricReport;

/// Rows are reports, columns the union of every report's metrics; `None` marks a blank.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

/// Ranging bins keyed by their bounds, so reports with different bins line up.
fn bin_columns(reports: &[MetricReport]) -> Vec<(f64, f64)> {
    let mut bins: Vec<(f64, f64)> = reports
        .iter()
        .flat_map(|r| r.ranging.bins.iter().map(|b| (b.lo, b.hi)))
        .collect();
    bins.sort_by(|a, b| a.partial_cmp(b).expect("finite bin edges"));
    bins.dedup();
    bins
}

pub fn comparison(reports: &[MetricReport]) -> Comparison {
    let bins = bin_columns(reports);
    let mut columns: Vec<String> = bins.iter().map(|(lo, hi)| format!("{lo}-{hi}m")).collect();
    columns.extend(["Average", "CIPV", "d1", "AbsRel", "RMSE"].map(String::from));
    let rows = reports
        .iter()
        .map(|r| {
            let mut values: Vec<Option<f64>> = bins
                .iter()
                .map(|&(lo, hi)| {
                    r.ranging
                        .bins
                        .iter()
                        .find(|b| b.lo == lo && b.hi == hi)
                        .and_then(|b| b.accuracy())
                })
                .collect();
            values.push(r.average());
            values.push(r.cipv.accuracy());
            values.push(r.depth.map(|d| d.delta1));
            values.push(r.depth.map(|d| d.abs_rel));
            values.push(r.depth.map(|d| d.rmse));
            (r.label.clone(), values)
        })
        .collect();
    Comparison { columns, rows }
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let label_width = self.rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
        let width = self.columns.iter().map(String::len).max().unwrap_or(0).max(8) + 2;
        let mut s = format!("{:<label_width$}", "");
        for c in &self.columns {
            let _ = write!(s, "{c:>width$}");
        }
        s.push('\n');
        for (label, values) in &self.rows {
            let _ = write!(s, "{label:<label_width$}");
            for v in values {
                match v {
                    Some(v) => {
                        let _ = write!(s, "{v:>width$.4}");
                    }
                    None => {
                        let _ = write!(s, "{:>width$}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    /// Blank cells are empty fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label");
        for c in &self.columns {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (label, values) in &self.rows {
            s.push_str(&csv_field(label));
            for v in values {
                s.push(',');
                if let Some(v) = v {
                    let _ = write!(s, "{v:.6}");
                }
            }
            s.push('\n');
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `lo,hi` followed by ground-truth and predicted counts per report.
pub fn histogram_csv(reports: &[MetricReport]) -> String {
    let mut edges: Vec<(f64, f64)> = reports
        .iter()
        .flat_map(|r| {
            let w = r.histogram.width;
            (0..r.histogram.gt.len()).map(move |k| (k as f64 * w, (k + 1) as f64 * w))
        })
        .collect();
    edges.sort_by(|a, b| a.partial_cmp(b).expect("finite histogram edges"));
    edges.dedup();
    let mut s = String::from("lo,hi");
    for r in reports {
        let _ = write!(s, ",{},{}", csv_field(&format!("gt_{}", r.label)), csv_field(&format!("pred_{}", r.label)));
    }
    s.push('\n');
    for (lo, hi) in edges {
        let _ = write!(s, "{lo},{hi}");
        for r in reports {
            let h = &r.histogram;
            let slot = (0..h.gt.len()).find(|&k| k as f64 * h.width == lo && (k + 1) as f64 * h.width == hi);
            match slot {
                Some(k) => {
                    let _ = write!(s, ",{},{}", h.gt[k], h.pred[k]);
                }
                None => s.push_str(",,"),
            }
        }
        s.push('\n');
    }
    s
}

/// Gnuplot script drawing `histogram.csv` as grouped bars.
pub fn gnuplot_script(reports: &[MetricReport]) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 1000,500\n");
    s.push_str("set output 'histogram.png'\n");
    s.push_str("set style data histograms\n");
    s.push_str("set style histogram clustered gap 1\n");
    s.push_str("set style fill solid 0.8 border -1\n");
    s.push_str("set xlabel 'distance (m)'\n");
    s.push_str("set ylabel 'objects'\n");
    s.push_str("set xtics rotate by -45\n");
    let mut plots = vec!["'histogram.csv' using 3:xtic(1) title 'ground truth'".to_string()];
    for (k, r) in reports.iter().enumerate() {
        let title = r.label.replace('\'', "");
        plots.push(format!("'' using {} title '{title}'", 4 + 2 * k));
    }
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use fusetrack::eval::{evaluate, EvalConfig};

    fn empty(label: &str) -> MetricReport {
        evaluate(label, &[], &EvalConfig::default()).unwrap()
    }

    #[test]
    fn one_row_per_report() {
        let one = comparison(&[empty("a")]);
        assert_eq!(one.rows.len(), 1);
        let two = comparison(&[empty("a"), empty("b")]);
        assert_eq!(two.rows.len(), 2);
        assert_eq!(two.to_text().lines().count(), 3);
        assert_eq!(two.to_csv().lines().count(), 3);
    }

    #[test]
    fn disjoint_bins_take_the_union_and_leave_blanks() {
        let a = empty("a");
        let mut b = empty("b");
        for bin in &mut b.ranging.bins {
            bin.lo += 1000.0;
            bin.hi += 1000.0;
        }
        b.ranging.bins[0].total = 2;
        b.ranging.bins[0].correct = 1;
        let table = comparison(&[a.clone(), b.clone()]);
        assert_eq!(table.columns.len(), a.ranging.bins.len() * 2 + 5);
        let b_row = &table.rows[1].1;
        assert_eq!(b_row[a.ranging.bins.len()], Some(0.5));
        assert!(b_row[..a.ranging.bins.len()].iter().all(Option::is_none));
        let csv = table.to_csv();
        assert!(csv.lines().nth(2).unwrap().starts_with("b,,,"));
        assert!(table.to_text().contains(" -"));
    }

    #[test]
    fn histogram_has_a_column_pair_per_report() {
        let csv = histogram_csv(&[empty("x"), empty("y")]);
        assert_eq!(csv.lines().next().unwrap(), "lo,hi,gt_x,pred_x,gt_y,pred_y");
        let script = gnuplot_script(&[empty("x"), empty("y")]);
        assert!(script.contains("using 6 title 'y'"));
    }
}
