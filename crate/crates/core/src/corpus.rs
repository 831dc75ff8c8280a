//! Expected-diagnostic corpus harness.
//!
//! Corpus files carry `// expect-error@+N: CODE` comments naming the
//! diagnostic expected N lines below, and `// expect-fp@+N: CODE <cause>`
//! comments documenting known false positives. Results are classified per
//! expectation site into true/false positives and negatives, and
//! summarized per coding-style subdirectory.

use crate::diag::{Code, Severity};
use crate::lexer::tokenize;
use crate::pipeline::{analyze_source, AnalyzeOptions};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExpectKind {
    /// A real error must be reported here.
    Error,
    /// The analyzer reports here conservatively; documented false positive.
    FalsePositive,
}

#[derive(Clone, Debug)]
pub struct Expectation {
    pub line: u32,
    pub code: Code,
    pub kind: ExpectKind,
    pub cause: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}: {message}")]
    BadExpectation { file: String, message: String },
    #[error("{file}: {message}")]
    Frontend { file: String, message: String },
    #[error("cannot read corpus at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Extracts expectation comments from source text.
pub fn parse_expectations(source: &str) -> Result<Vec<Expectation>, String> {
    let file: Arc<str> = Arc::from("<expectations>");
    let (_, comments) = tokenize(source, &file);
    let mut out = Vec::new();
    for comment in comments {
        let text = comment.text.trim();
        let kind = if text.starts_with("expect-error@") {
            ExpectKind::Error
        } else if text.starts_with("expect-fp@") {
            ExpectKind::FalsePositive
        } else {
            continue;
        };
        let rest = text
            .split_once('@')
            .map(|(_, r)| r)
            .expect("prefix contains '@'");
        let (offset_part, code_part) = rest.split_once(':').ok_or_else(|| {
            format!(
                "line {}: expectation '{}' is missing ': CODE'",
                comment.line, text
            )
        })?;
        let offset: i64 = offset_part.trim().parse().map_err(|_| {
            format!(
                "line {}: bad line offset '{}' in expectation",
                comment.line, offset_part
            )
        })?;
        let mut parts = code_part.trim().splitn(2, char::is_whitespace);
        let code_text = parts.next().unwrap_or("");
        let cause = parts.next().unwrap_or("").trim().to_string();
        let code = Code::parse(code_text).ok_or_else(|| {
            format!(
                "line {}: unknown diagnostic code '{}'",
                comment.line, code_text
            )
        })?;
        let target = comment.line as i64 + offset;
        if target < 1 {
            return Err(format!(
                "line {}: expectation points before the start of the file",
                comment.line
            ));
        }
        if kind == ExpectKind::FalsePositive && cause.is_empty() {
            return Err(format!(
                "line {}: expect-fp must document its cause",
                comment.line
            ));
        }
        out.push(Expectation {
            line: target as u32,
            code,
            kind,
            cause,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct Counts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    /// Diagnostics at sites with no annotation at all.
    pub unexpected_false_positive: usize,
    /// expect-fp annotations that no longer fire.
    pub stale_fp_annotations: usize,
}

impl Counts {
    pub fn judgements(&self) -> usize {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.judgements();
        if total == 0 {
            return 1.0;
        }
        (self.true_positive + self.true_negative) as f64 / total as f64
    }

    fn add(&mut self, other: &Counts) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.false_negative += other.false_negative;
        self.true_negative += other.true_negative;
        self.unexpected_false_positive += other.unexpected_false_positive;
        self.stale_fp_annotations += other.stale_fp_annotations;
    }
}

#[derive(Clone, Debug)]
pub struct FileResult {
    pub path: PathBuf,
    pub counts: Counts,
}

#[derive(Clone, Debug)]
pub struct StyleRow {
    pub style: String,
    pub files: usize,
    pub counts: Counts,
}

#[derive(Clone, Debug, Default)]
pub struct CorpusReport {
    pub rows: Vec<StyleRow>,
    pub files: Vec<FileResult>,
}

impl CorpusReport {
    pub fn totals(&self) -> Counts {
        let mut totals = Counts::default();
        for row in &self.rows {
            totals.add(&row.counts);
        }
        totals
    }

    pub fn total_files(&self) -> usize {
        self.rows.iter().map(|r| r.files).sum()
    }

    pub fn row(&self, style: &str) -> Option<&StyleRow> {
        self.rows.iter().find(|r| r.style == style)
    }

    /// Zero false negatives and no undocumented false positives.
    pub fn passes(&self) -> bool {
        let t = self.totals();
        t.false_negative == 0 && t.unexpected_false_positive == 0 && t.stale_fp_annotations == 0
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>5} {:>5} {:>5} {:>5} {:>9}",
            "style", "files", "TP", "FP", "FN", "TN", "accuracy"
        );
        let mut render_row = |name: &str, files: usize, c: &Counts| {
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>5} {:>5} {:>5} {:>5} {:>8.2}%",
                name,
                files,
                c.true_positive,
                c.false_positive,
                c.false_negative,
                c.true_negative,
                c.accuracy() * 100.0
            );
        };
        for row in &self.rows {
            render_row(&row.style, row.files, &row.counts);
        }
        let totals = self.totals();
        render_row("total", self.total_files(), &totals);
        let _ = writeln!(
            out,
            "judgements: {} (TP+FP+FN+TN), undocumented FPs: {}, stale FP annotations: {}",
            totals.judgements(),
            totals.unexpected_false_positive,
            totals.stale_fp_annotations
        );
        out
    }
}

/// Analyzes one corpus file and classifies its diagnostics against the
/// expectations.
pub fn judge_file(
    path: &Path,
    source: &str,
    opts: &AnalyzeOptions,
) -> Result<Counts, CorpusError> {
    let file_name = path.to_string_lossy().to_string();
    let expectations = parse_expectations(source).map_err(|message| CorpusError::BadExpectation {
        file: file_name.clone(),
        message,
    })?;
    let analysis =
        analyze_source(source, &file_name, opts).map_err(|e| CorpusError::Frontend {
            file: file_name.clone(),
            message: e.to_string(),
        })?;

    let emitted: BTreeSet<(u32, Code)> = analysis
        .diagnostics
        .iter()
        .filter(|d| d.severity() == Severity::Error)
        .map(|d| (d.loc.line, d.code))
        .collect();

    let mut counts = Counts::default();
    let mut claimed: BTreeSet<(u32, Code)> = BTreeSet::new();
    for exp in &expectations {
        let site = (exp.line, exp.code);
        let hit = emitted.contains(&site);
        claimed.insert(site);
        match (exp.kind, hit) {
            (ExpectKind::Error, true) => counts.true_positive += 1,
            (ExpectKind::Error, false) => counts.false_negative += 1,
            (ExpectKind::FalsePositive, true) => counts.false_positive += 1,
            (ExpectKind::FalsePositive, false) => {
                counts.true_negative += 1;
                counts.stale_fp_annotations += 1;
            }
        }
    }
    for site in &emitted {
        if !claimed.contains(site) {
            counts.false_positive += 1;
            counts.unexpected_false_positive += 1;
        }
    }
    if expectations.is_empty() && emitted.is_empty() {
        counts.true_negative += 1;
    }
    Ok(counts)
}

/// Runs every `.lt` file under the style subdirectories of `dir`.
pub fn run_corpus(dir: &Path, opts: &AnalyzeOptions) -> Result<CorpusReport, CorpusError> {
    let mut report = CorpusReport::default();
    let mut styles: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    styles.sort();
    for style_dir in styles {
        let style = style_dir
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&style_dir)
            .map_err(|source| CorpusError::Io {
                path: style_dir.clone(),
                source,
            })?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "lt").unwrap_or(false))
            .collect();
        files.sort();
        let mut row = StyleRow {
            style,
            files: 0,
            counts: Counts::default(),
        };
        for file in files {
            let source = std::fs::read_to_string(&file).map_err(|source| CorpusError::Io {
                path: file.clone(),
                source,
            })?;
            let counts = judge_file(&file, &source, opts)?;
            row.files += 1;
            row.counts.add(&counts);
            report.files.push(FileResult {
                path: file,
                counts,
            });
        }
        report.rows.push(row);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_error_expectation() {
        let src = "// expect-error@+2: E001\nfn main() {\n}\n";
        let exps = parse_expectations(src).unwrap();
        assert_eq!(exps.len(), 1);
        assert_eq!(exps[0].line, 3);
        assert_eq!(exps[0].code, Code::E001);
        assert_eq!(exps[0].kind, ExpectKind::Error);
    }

    #[test]
    fn parses_fp_expectation_with_cause() {
        let src = "// expect-fp@+1: E004 aliasing is conservatively rejected\nfn main() {}\n";
        let exps = parse_expectations(src).unwrap();
        assert_eq!(exps[0].kind, ExpectKind::FalsePositive);
        assert!(exps[0].cause.contains("conservatively"));
    }

    #[test]
    fn malformed_expectation_is_an_error() {
        assert!(parse_expectations("// expect-error@+1: E42\n").is_err());
        assert!(parse_expectations("// expect-error@x: E001\n").is_err());
        assert!(parse_expectations("// expect-fp@+1: E004\n").is_err());
    }

    #[test]
    fn matched_expectation_counts_tp() {
        let src = "\
fn main() {
    let p: Pointer;
    {
        let x: Value;
        p = &x;
    }
    // expect-error@+1: E001
    [p] = 1;
}
";
        let counts = judge_file(Path::new("t.lt"), src, &AnalyzeOptions::default()).unwrap();
        assert_eq!(counts.true_positive, 1);
        assert_eq!(counts.false_negative, 0);
        assert_eq!(counts.unexpected_false_positive, 0);
    }

    #[test]
    fn clean_file_counts_tn() {
        let src = "fn main() { let v: Value; v = 1; }\n";
        let counts = judge_file(Path::new("t.lt"), src, &AnalyzeOptions::default()).unwrap();
        assert_eq!(counts.true_negative, 1);
        assert_eq!(counts.judgements(), 1);
    }

    #[test]
    fn unmet_expectation_counts_fn() {
        let src = "// expect-error@+1: E001\nfn main() { let v: Value; v = 1; }\n";
        let counts = judge_file(Path::new("t.lt"), src, &AnalyzeOptions::default()).unwrap();
        assert_eq!(counts.false_negative, 1);
    }
}
