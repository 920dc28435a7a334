use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{chance_level, EvalError, Metrics, Result};

/// One line of the per-subject table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRow {
    pub subject: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SubjectRow {
    pub fn from_metrics(subject: impl Into<String>, m: &Metrics) -> Self {
        Self { subject: subject.into(), accuracy: m.accuracy, precision: m.macro_precision, recall: m.macro_recall, f1: m.macro_f1 }
    }
}

/// Column means labelled `average`.
pub fn average_rows(rows: &[SubjectRow]) -> Result<SubjectRow> {
    if rows.is_empty() {
        return Err(EvalError::Invalid("no subjects to average".into()));
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&SubjectRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(SubjectRow {
        subject: "average".into(),
        accuracy: mean(|r| r.accuracy),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub row: SubjectRow,
    /// Outer-fold metrics in fold order.
    pub folds: Vec<Metrics>,
    /// Hyperparameters picked in each outer fold, as JSON.
    pub chosen: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_start_s: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: String,
    pub input_type: String,
    pub n_classes: usize,
    pub chance_level: f64,
    pub fingerprint: String,
    pub seed: u64,
    pub subjects: Vec<SubjectReport>,
    pub average: SubjectRow,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<WindowRow>,
}

impl EvalReport {
    pub fn new(
        classifier: impl Into<String>,
        input_type: impl Into<String>,
        n_classes: usize,
        fingerprint: impl Into<String>,
        seed: u64,
        subjects: Vec<SubjectReport>,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(EvalError::Invalid(format!("{n_classes} classes")));
        }
        let rows: Vec<SubjectRow> = subjects.iter().map(|s| s.row.clone()).collect();
        Ok(Self {
            classifier: classifier.into(),
            input_type: input_type.into(),
            n_classes,
            chance_level: chance_level(n_classes),
            fingerprint: fingerprint.into(),
            seed,
            average: average_rows(&rows)?,
            subjects,
            windows: Vec::new(),
        })
    }

    pub fn accuracy(&self) -> f64 {
        self.average.accuracy
    }

    pub fn rows(&self) -> Vec<SubjectRow> {
        self.subjects.iter().map(|s| s.row.clone()).collect()
    }

    fn check(&self) -> Result<()> {
        if self.subjects.is_empty() {
            return Err(EvalError::Invalid("report has no subjects".into()));
        }
        let avg = average_rows(&self.rows())?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        if !(close(avg.accuracy, self.average.accuracy)
            && close(avg.precision, self.average.precision)
            && close(avg.recall, self.average.recall)
            && close(avg.f1, self.average.f1))
        {
            return Err(EvalError::Invalid("average row does not match the subject rows".into()));
        }
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn subjects_csv(rows: &[SubjectRow], average: &SubjectRow) -> String {
    let mut s = String::from("subject,accuracy,precision,recall,f1\n");
    for r in rows.iter().chain(std::iter::once(average)) {
        let _ = writeln!(s, "{},{},{},{},{}", r.subject, num(r.accuracy), num(r.precision), num(r.recall), num(r.f1));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub classifier: String,
    pub input_type: String,
    pub accuracy: f64,
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("classifier,input_type,accuracy\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.classifier, r.input_type, num(r.accuracy));
    }
    s
}

pub fn windows_csv(rows: &[WindowRow]) -> String {
    let mut s = String::from("window_start_s,accuracy\n");
    for r in rows {
        let _ = writeln!(s, "{},{}", num(r.window_start_s), num(r.accuracy));
    }
    s
}

/// Geometry of the accuracy chart; accuracies map linearly onto `[top, top + height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartFrame {
    pub left: f64,
    pub top: f64,
    pub height: f64,
    pub bar_pitch: f64,
    pub bar_width: f64,
}

pub const CHART: ChartFrame = ChartFrame { left: 50.0, top: 20.0, height: 300.0, bar_pitch: 50.0, bar_width: 30.0 };

impl ChartFrame {
    pub fn y(&self, fraction: f64) -> f64 {
        self.top + self.height * (1.0 - fraction.clamp(0.0, 1.0))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bar per subject on a 0-100 % axis with a red horizontal chance line.
pub fn accuracy_chart_svg(rows: &[SubjectRow], chance: f64, caption: &str) -> String {
    let c = CHART;
    let width = c.left + c.bar_pitch * rows.len() as f64 + 20.0;
    let height = c.top + c.height + 40.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#);
    let _ = writeln!(s, "<desc>{}</desc>", escape(caption));
    let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#, c.left, c.y(1.0), c.y(0.0));
    for tick in (0..=100).step_by(20) {
        let y = c.y(tick as f64 / 100.0);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black"/>"#, c.left - 4.0, c.left);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{tick}%</text>"#, c.left - 6.0, y + 3.0);
    }
    for (i, r) in rows.iter().enumerate() {
        let x = c.left + 10.0 + c.bar_pitch * i as f64;
        let y = c.y(r.accuracy);
        let h = c.y(0.0) - y;
        let _ = writeln!(
            s,
            r#"<rect class="bar" x="{x}" y="{y}" width="{}" height="{h}" fill="steelblue"><title>{} {:.2}%</title></rect>"#,
            c.bar_width,
            escape(&r.subject),
            100.0 * r.accuracy
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"#,
            x + c.bar_width / 2.0,
            c.y(0.0) + 14.0,
            escape(&r.subject)
        );
    }
    let _ = writeln!(
        s,
        r#"<line class="chance" x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="red" stroke-width="2"/>"#,
        c.left,
        c.y(chance),
        width - 10.0
    );
    s.push_str("</svg>\n");
    s
}

pub const REPORT_FILES: [&str; 4] = ["subjects.csv", "comparison.csv", "accuracy.svg", "report.json"];

/// Writes the per-subject table, the one-row comparison table, the chart,
/// the full JSON report and (when present) the window table. Nothing is
/// written unless the report is complete.
pub fn emit_report(report: &EvalReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    report.check()?;
    let io = |path: &Path, e: std::io::Error| EvalError::Io { path: path.display().to_string(), source: e };
    std::fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let caption = format!(
        "{} on {}: accuracy per subject, chance {:.2}%; config {} seed {}",
        report.classifier,
        report.input_type,
        100.0 * report.chance_level,
        report.fingerprint,
        report.seed
    );
    let json = serde_json::to_string_pretty(report).map_err(|e| EvalError::Invalid(e.to_string()))? + "\n";
    let mut files = vec![
        ("subjects.csv", subjects_csv(&report.rows(), &report.average)),
        (
            "comparison.csv",
            comparison_csv(&[ComparisonRow {
                classifier: report.classifier.clone(),
                input_type: report.input_type.clone(),
                accuracy: report.accuracy(),
            }]),
        ),
        ("accuracy.svg", accuracy_chart_svg(&report.rows(), report.chance_level, &caption)),
        ("report.json", json),
    ];
    if !report.windows.is_empty() {
        files.push(("windows.csv", windows_csv(&report.windows)));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(subject: &str, a: f64, p: f64, r: f64, f: f64) -> SubjectRow {
        SubjectRow { subject: subject.into(), accuracy: a, precision: p, recall: r, f1: f }
    }

    fn subject(r: SubjectRow) -> SubjectReport {
        SubjectReport { row: r, folds: vec![], chosen: vec![] }
    }

    #[test]
    fn table_two_average() {
        let t = [
            (38.60, 40.37, 38.93, 37.87),
            (40.17, 40.06, 40.43, 39.56),
            (37.60, 38.25, 37.50, 35.50),
            (33.67, 34.44, 33.69, 32.81),
            (31.67, 32.13, 31.94, 31.06),
            (34.81, 37.69, 33.00, 33.75),
            (34.83, 36.00, 34.94, 34.31),
            (36.60, 37.69, 36.88, 34.88),
            (38.00, 38.19, 37.75, 37.31),
            (35.33, 34.50, 34.94, 34.38),
        ];
        let rows: Vec<SubjectRow> =
            t.iter().enumerate().map(|(i, &(a, p, r, f))| row(&format!("sub{}", i + 1), a, p, r, f)).collect();
        let avg = average_rows(&rows).unwrap();
        for (got, want) in [(avg.accuracy, 36.12), (avg.precision, 36.93), (avg.recall, 36.00), (avg.f1, 35.14)] {
            assert!((got - want).abs() <= 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn bar_at_chance_touches_line() {
        let svg = accuracy_chart_svg(&[row("s1", 0.25, 0.25, 0.25, 0.25)], 0.25, "c");
        let attr = |tag: &str, name: &str| -> String {
            let start = svg.find(tag).unwrap();
            let rest = &svg[start..];
            let at = rest.find(&format!(" {name}=\"")).unwrap() + name.len() + 3;
            rest[at..at + rest[at..].find('"').unwrap()].to_string()
        };
        assert_eq!(attr("<rect", "y"), attr("class=\"chance\"", "y1"));
        assert_eq!(CHART.y(0.25), 245.0);
        assert!(svg.contains("stroke=\"red\""));
    }

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(EvalReport::new("svm", "psd_features", 4, "f", 0, vec![]).is_err());
        let mut r = EvalReport::new("svm", "psd_features", 4, "f", 0, vec![subject(row("s", 0.5, 0.5, 0.5, 0.5))]).unwrap();
        r.subjects.clear();
        let out = dir.path().join("out");
        assert!(emit_report(&r, &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn emits_schemas_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let subjects = vec![subject(row("s1", 0.5, 0.4, 0.3, 0.2)), subject(row("s2", 0.7, 0.6, 0.5, 0.4))];
        let mut r = EvalReport::new("bilstm", "raw_all", 4, "abc", 3, subjects).unwrap();
        r.windows = vec![WindowRow { window_start_s: 0.0, accuracy: 0.5 }, WindowRow { window_start_s: 0.25, accuracy: 0.6 }];
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        emit_report(&r, &a).unwrap();
        emit_report(&r, &b).unwrap();
        for f in REPORT_FILES.iter().chain(&["windows.csv"]) {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
        let subjects = std::fs::read_to_string(a.join("subjects.csv")).unwrap();
        assert_eq!(
            subjects,
            "subject,accuracy,precision,recall,f1\ns1,0.500000,0.400000,0.300000,0.200000\n\
             s2,0.700000,0.600000,0.500000,0.400000\naverage,0.600000,0.500000,0.400000,0.300000\n"
        );
        assert_eq!(
            std::fs::read_to_string(a.join("comparison.csv")).unwrap(),
            "classifier,input_type,accuracy\nbilstm,raw_all,0.600000\n"
        );
        assert!(std::fs::read_to_string(a.join("windows.csv")).unwrap().starts_with("window_start_s,accuracy\n0.000000,"));
        let back: EvalReport = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
