//! Post-hoc wrapper over externally produced membership scores.
//!
//! Any attack that emits a scalar score per sample (softmax confidence,
//! entropy, loss, likelihood ratio, quantile residual, ...) can be wrapped:
//! its held-out non-member scores become the calibration set, its test
//! scores become conformity scores directly — no re-scoring — and the
//! conformal + FDR layers run unchanged on top. The file contract requires
//! the caller to certify calibration records as non-members.
//!
//! Score files declare an orientation. Internally higher always means more
//! non-member-like; `higher_is_member` files are negated on the way in and
//! records keep their original signs for export.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{batch_pvalues, build_calibration, ConformalError, ConformityScore};
use crate::fdr::{
    bh_adjust, compute_fdr, decide, AdjustedPValues, DecisionSet, FdrError, FdrReport, Membership,
    PValueVector, SignificanceLevel,
};

#[derive(Debug, Error)]
pub enum ScoreIoError {
    /// Malformed input; maps to exit code 2.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Well-formed input that violates the file contract; exit code 3.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Conformal(#[from] ConformalError),

    #[error(transparent)]
    Fdr(#[from] FdrError),
}

/// Whether a record belongs to the calibration partition or the test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Calibration,
    Test,
}

impl Role {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "calibration" => Some(Role::Calibration),
            "test" => Some(Role::Test),
            _ => None,
        }
    }
}

/// Declared direction of the raw scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherIsNonMember,
    HigherIsMember,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::HigherIsNonMember => "higher_is_non_member",
            Orientation::HigherIsMember => "higher_is_member",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "higher_is_non_member" => Some(Orientation::HigherIsNonMember),
            "higher_is_member" => Some(Orientation::HigherIsMember),
            _ => None,
        }
    }
}

/// One externally produced score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub raw_score: f64,
    pub truth: Option<Membership>,
    pub role: Role,
}

/// A parsed score file. Raw scores keep their original signs; use
/// [`ScoreFile::internal_score`] for the normalized direction.
#[derive(Debug, Clone)]
pub struct ScoreFile {
    pub records: Vec<ScoreRecord>,
    pub orientation: Orientation,
}

/// Supported on-disk encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFormat {
    Csv,
    Jsonl,
}

impl ScoreFile {
    /// Normalized score: higher always means more non-member-like.
    pub fn internal_score(&self, record: &ScoreRecord) -> f64 {
        match self.orientation {
            Orientation::HigherIsNonMember => record.raw_score,
            Orientation::HigherIsMember => -record.raw_score,
        }
    }

    fn partition(&self) -> (Vec<&ScoreRecord>, Vec<&ScoreRecord>) {
        self.records
            .iter()
            .partition(|r| r.role == Role::Calibration)
    }
}

/// JSONL record body (every line after the header object).
#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    sample_id: String,
    score: f64,
    role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Membership>,
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    orientation: Orientation,
}

/// Parse a score file, validating every record.
pub fn import_scores(path: &Path, format: ScoreFormat) -> Result<ScoreFile, ScoreIoError> {
    let text = std::fs::read_to_string(path)?;
    match format {
        ScoreFormat::Csv => parse_csv(&text),
        ScoreFormat::Jsonl => parse_jsonl(&text),
    }
}

fn check_record(record: &ScoreRecord, line: usize) -> Result<(), ScoreIoError> {
    if !record.raw_score.is_finite() {
        return Err(ScoreIoError::Parse {
            line,
            msg: format!("non-finite score {}", record.raw_score),
        });
    }
    if record.role == Role::Calibration && record.truth == Some(Membership::Member) {
        return Err(ScoreIoError::Contract(format!(
            "line {line}: calibration record {:?} labeled member; calibration must be non-member",
            record.sample_id
        )));
    }
    Ok(())
}

fn parse_csv(text: &str) -> Result<ScoreFile, ScoreIoError> {
    let mut lines = text.lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| ScoreIoError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let orientation = first
        .strip_prefix("# orientation=")
        .and_then(|v| Orientation::parse(v.trim()))
        .ok_or_else(|| {
            ScoreIoError::Contract(format!(
                "first line must declare `# orientation=<higher_is_non_member|higher_is_member>`, got {first:?}"
            ))
        })?;

    let (_, header) = lines.next().ok_or_else(|| ScoreIoError::Parse {
        line: 2,
        msg: "missing column header".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| columns.iter().position(|c| *c == name);
    let col_id = find("sample_id").ok_or_else(|| ScoreIoError::Parse {
        line: 2,
        msg: "missing column sample_id".into(),
    })?;
    let col_score = find("score").ok_or_else(|| ScoreIoError::Parse {
        line: 2,
        msg: "missing column score".into(),
    })?;
    let col_role = find("role").ok_or_else(|| ScoreIoError::Parse {
        line: 2,
        msg: "missing column role".into(),
    })?;
    let col_truth = find("truth");

    let mut records = Vec::new();
    for (idx, raw_line) in lines {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < columns.len() - usize::from(col_truth.is_some()) {
            return Err(ScoreIoError::Parse {
                line: line_no,
                msg: format!("expected {} fields, got {}", columns.len(), fields.len()),
            });
        }
        let get = |col: usize| fields.get(col).copied().unwrap_or("");
        let raw_score: f64 = get(col_score).parse().map_err(|_| ScoreIoError::Parse {
            line: line_no,
            msg: format!("bad score {:?}", get(col_score)),
        })?;
        let role = Role::parse(get(col_role)).ok_or_else(|| ScoreIoError::Parse {
            line: line_no,
            msg: format!("bad role {:?} (want calibration|test)", get(col_role)),
        })?;
        let truth = match col_truth.map(get) {
            None | Some("") => None,
            Some(t) => Some(t.parse::<Membership>().map_err(|e| ScoreIoError::Parse {
                line: line_no,
                msg: e,
            })?),
        };
        let record = ScoreRecord {
            sample_id: get(col_id).to_string(),
            raw_score,
            truth,
            role,
        };
        check_record(&record, line_no)?;
        records.push(record);
    }

    Ok(ScoreFile {
        records,
        orientation,
    })
}

fn parse_jsonl(text: &str) -> Result<ScoreFile, ScoreIoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| ScoreIoError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let header: JsonlHeader = serde_json::from_str(first).map_err(|e| ScoreIoError::Parse {
        line: 1,
        msg: format!("bad header object: {e}"),
    })?;

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| ScoreIoError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let record = ScoreRecord {
            sample_id: rec.sample_id,
            raw_score: rec.score,
            truth: rec.truth,
            role: rec.role,
        };
        check_record(&record, line_no)?;
        records.push(record);
    }

    Ok(ScoreFile {
        records,
        orientation: header.orientation,
    })
}

/// Write a score file back out in the same formats `import_scores` reads.
pub fn export_scores(file: &ScoreFile, path: &Path, format: ScoreFormat) -> Result<(), ScoreIoError> {
    let mut text = String::new();
    match format {
        ScoreFormat::Csv => {
            let _ = writeln!(text, "# orientation={}", file.orientation.as_str());
            let _ = writeln!(text, "sample_id,score,role,truth");
            for r in &file.records {
                let role = match r.role {
                    Role::Calibration => "calibration",
                    Role::Test => "test",
                };
                let truth = r.truth.map_or("", Membership::as_str);
                let _ = writeln!(text, "{},{},{},{}", r.sample_id, r.raw_score, role, truth);
            }
        }
        ScoreFormat::Jsonl => {
            let header = serde_json::to_string(&JsonlHeader {
                orientation: file.orientation,
            })
            .expect("header serializes");
            let _ = writeln!(text, "{header}");
            for r in &file.records {
                let rec = JsonlRecord {
                    sample_id: r.sample_id.clone(),
                    score: r.raw_score,
                    role: r.role,
                    truth: r.truth,
                };
                let _ = writeln!(text, "{}", serde_json::to_string(&rec).expect("record serializes"));
            }
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Wrapper-mode result for one score file.
#[derive(Debug, Clone)]
pub struct WrapOutcome {
    /// Test-record ids, file order.
    pub sample_ids: Vec<String>,
    /// Test-record truth, file order.
    pub truth: Vec<Option<Membership>>,
    /// Normalized (non-member-oriented) test scores.
    pub internal_scores: Vec<f64>,
    pub pvalues: PValueVector,
    pub adjusted: AdjustedPValues,
    pub decisions: DecisionSet,
    pub alpha: SignificanceLevel,
    /// Present iff every test record carries truth.
    pub report: Option<FdrReport>,
}

/// Apply the conformal + FDR layers to an external score file.
///
/// Calibration-role raw scores become the calibration set directly (they
/// are already conformity-like); test records get conformal p-values,
/// step-up adjustment, and decisions.
pub fn wrap_external(
    file: &ScoreFile,
    alpha: SignificanceLevel,
) -> Result<WrapOutcome, ScoreIoError> {
    let (calibration, tests) = file.partition();
    if calibration.is_empty() {
        return Err(ScoreIoError::Contract("no calibration records".into()));
    }
    if tests.is_empty() {
        return Err(ScoreIoError::Contract("no test records".into()));
    }

    let calib_scores: Vec<f64> = calibration.iter().map(|r| file.internal_score(r)).collect();
    let calib = build_calibration(&calib_scores)?;

    let internal_scores: Vec<f64> = tests.iter().map(|r| file.internal_score(r)).collect();
    let conformity: Vec<ConformityScore> = internal_scores
        .iter()
        .map(|&s| ConformityScore::new(s))
        .collect::<Result<_, _>>()?;
    let pvalues = batch_pvalues(&calib, &conformity)?;
    let adjusted = bh_adjust(&pvalues);
    let decisions = decide(&adjusted, alpha);

    let truth: Vec<Option<Membership>> = tests.iter().map(|r| r.truth).collect();
    let report = if truth.iter().all(Option::is_some) {
        let labels: Vec<Membership> = truth.iter().map(|t| t.unwrap()).collect();
        Some(compute_fdr(&decisions, &labels, alpha)?)
    } else {
        None
    };

    Ok(WrapOutcome {
        sample_ids: tests.iter().map(|r| r.sample_id.clone()).collect(),
        truth,
        internal_scores,
        pvalues,
        adjusted,
        decisions,
        alpha,
        report,
    })
}

/// Summary written alongside the per-sample table when no ground truth is
/// available.
#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub alpha: f64,
    pub n_tests: usize,
    pub n_rejected: usize,
}

/// Write the JSON report (full [`FdrReport`] when truth was known, a
/// [`DecisionSummary`] otherwise) and the per-sample CSV
/// `sample_id,p_value,p_adjusted,verdict,truth`.
pub fn export_report(
    outcome: &WrapOutcome,
    report_path: &Path,
    samples_path: &Path,
) -> Result<(), ScoreIoError> {
    let json = match &outcome.report {
        Some(report) => serde_json::to_string_pretty(report),
        None => serde_json::to_string_pretty(&DecisionSummary {
            alpha: outcome.alpha.value(),
            n_tests: outcome.decisions.n_tests(),
            n_rejected: outcome.decisions.n_rejected(),
        }),
    }
    .expect("report serializes");
    std::fs::write(report_path, json)?;

    let mut text = String::from("sample_id,p_value,p_adjusted,verdict,truth\n");
    for (i, id) in outcome.sample_ids.iter().enumerate() {
        let verdict = if outcome.decisions.is_member(i) {
            "member"
        } else {
            "non_member"
        };
        let truth = outcome.truth[i].map_or("", Membership::as_str);
        let _ = writeln!(
            text,
            "{id},{},{},{verdict},{truth}",
            outcome.pvalues.values()[i],
            outcome.adjusted.values()[i],
        );
    }
    std::fs::write(samples_path, text)?;
    Ok(())
}

/// One row of the exported per-sample table.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub sample_id: String,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub is_member: bool,
    pub truth: Option<Membership>,
}

/// Read back a per-sample CSV written by [`export_report`].
pub fn read_sample_report(path: &Path) -> Result<Vec<SampleRow>, ScoreIoError> {
    parse_sample_report(&std::fs::read_to_string(path)?)
}

fn parse_sample_report(text: &str) -> Result<Vec<SampleRow>, ScoreIoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| ScoreIoError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    if header != "sample_id,p_value,p_adjusted,verdict,truth" {
        return Err(ScoreIoError::Parse {
            line: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(ScoreIoError::Parse {
                line: line_no,
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64, ScoreIoError> {
            s.parse().map_err(|_| ScoreIoError::Parse {
                line: line_no,
                msg: format!("bad number {s:?}"),
            })
        };
        rows.push(SampleRow {
            sample_id: fields[0].to_string(),
            p_value: parse_f(fields[1])?,
            p_adjusted: parse_f(fields[2])?,
            is_member: fields[3] == "member",
            truth: match fields[4] {
                "" => None,
                t => Some(t.parse::<Membership>().map_err(|e| ScoreIoError::Parse {
                    line: line_no,
                    msg: e,
                })?),
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::build_calibration as build_calib;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    const BASIC_CSV: &str = "\
# orientation=higher_is_non_member
sample_id,score,role,truth
c1,0.1,calibration,non_member
c2,0.4,calibration,
c3,0.7,calibration,non_member
t1,0.5,test,member
t2,0.9,test,non_member
";

    #[test]
    fn csv_import_preserves_roles_and_truth() {
        let (_dir, path) = write_tmp(BASIC_CSV);
        let file = import_scores(&path, ScoreFormat::Csv).unwrap();
        assert_eq!(file.records.len(), 5);
        assert_eq!(file.orientation, Orientation::HigherIsNonMember);
        let (calib, tests) = file.partition();
        assert_eq!(calib.len(), 3);
        assert_eq!(tests.len(), 2);
        assert_eq!(tests[0].truth, Some(Membership::Member));
        assert_eq!(calib[1].truth, None);
    }

    #[test]
    fn orientation_negates_internal_scores() {
        let text = "\
# orientation=higher_is_member
sample_id,score,role,truth
c1,1.0,calibration,
t1,2.0,test,
";
        let (_dir, path) = write_tmp(text);
        let file = import_scores(&path, ScoreFormat::Csv).unwrap();
        assert_eq!(file.internal_score(&file.records[0]), -1.0);
        assert_eq!(file.internal_score(&file.records[1]), -2.0);
        // Raw scores keep their signs.
        assert_eq!(file.records[0].raw_score, 1.0);
    }

    #[test]
    fn malformed_number_names_its_line() {
        let text = "\
# orientation=higher_is_non_member
sample_id,score,role,truth
c1,0.1,calibration,
c2,0.2,calibration,
t1,0.3,test,
t2,0.4,test,
t3,oops,test,
";
        let (_dir, path) = write_tmp(text);
        match import_scores(&path, ScoreFormat::Csv) {
            Err(ScoreIoError::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_orientation_is_contract_violation() {
        let text = "sample_id,score,role,truth\nc1,0.1,calibration,\n";
        let (_dir, path) = write_tmp(text);
        assert!(matches!(
            import_scores(&path, ScoreFormat::Csv),
            Err(ScoreIoError::Contract(_))
        ));
    }

    #[test]
    fn member_labeled_calibration_rejected() {
        let text = "\
# orientation=higher_is_non_member
sample_id,score,role,truth
c1,0.1,calibration,member
";
        let (_dir, path) = write_tmp(text);
        assert!(matches!(
            import_scores(&path, ScoreFormat::Csv),
            Err(ScoreIoError::Contract(_))
        ));
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        let file = ScoreFile {
            orientation: Orientation::HigherIsMember,
            records: vec![
                ScoreRecord {
                    sample_id: "a".into(),
                    raw_score: 0.25,
                    truth: Some(Membership::NonMember),
                    role: Role::Calibration,
                },
                ScoreRecord {
                    sample_id: "b".into(),
                    raw_score: -1.5,
                    truth: None,
                    role: Role::Test,
                },
            ],
        };
        export_scores(&file, &path, ScoreFormat::Jsonl).unwrap();
        let loaded = import_scores(&path, ScoreFormat::Jsonl).unwrap();
        assert_eq!(loaded.orientation, file.orientation);
        assert_eq!(loaded.records, file.records);
    }

    #[test]
    fn jsonl_bad_record_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        std::fs::write(
            &path,
            "{\"orientation\":\"higher_is_non_member\"}\n{\"sample_id\":\"a\",\"score\":0.5,\"role\":\"calibration\"}\nnot json\n",
        )
        .unwrap();
        match import_scores(&path, ScoreFormat::Jsonl) {
            Err(ScoreIoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_roundtrip_preserves_orientation_and_signs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let (_d2, src) = write_tmp(BASIC_CSV);
        let file = import_scores(&src, ScoreFormat::Csv).unwrap();
        export_scores(&file, &path, ScoreFormat::Csv).unwrap();
        let again = import_scores(&path, ScoreFormat::Csv).unwrap();
        assert_eq!(again.orientation, file.orientation);
        assert_eq!(again.records, file.records);
    }

    #[test]
    fn wrap_worked_example() {
        // calibration [0.1, 0.4, 0.7, 0.9], test 0.5 -> p = 0.6; single
        // test so adjusted = 0.6; alpha 0.5 -> not rejected.
        let text = "\
# orientation=higher_is_non_member
sample_id,score,role,truth
c1,0.1,calibration,
c2,0.4,calibration,
c3,0.7,calibration,
c4,0.9,calibration,
t1,0.5,test,
";
        let (_dir, path) = write_tmp(text);
        let file = import_scores(&path, ScoreFormat::Csv).unwrap();
        let outcome = wrap_external(&file, SignificanceLevel::new(0.5).unwrap()).unwrap();
        assert_eq!(outcome.pvalues.values(), &[0.6]);
        assert_eq!(outcome.adjusted.values(), &[0.6]);
        assert_eq!(outcome.decisions.n_rejected(), 0);
        assert!(outcome.report.is_none());
    }

    #[test]
    fn wrap_all_above_calibration_max() {
        let text = "\
# orientation=higher_is_non_member
sample_id,score,role,truth
c1,0.1,calibration,
c2,0.2,calibration,
t1,5.0,test,
t2,9.0,test,
";
        let (_dir, path) = write_tmp(text);
        let file = import_scores(&path, ScoreFormat::Csv).unwrap();
        let outcome = wrap_external(&file, SignificanceLevel::new(0.2).unwrap()).unwrap();
        assert!(outcome.pvalues.values().iter().all(|&p| p == 1.0));
        assert_eq!(outcome.decisions.n_rejected(), 0);
    }

    #[test]
    fn wrap_equals_manual_composition() {
        let (_dir, path) = write_tmp(BASIC_CSV);
        let file = import_scores(&path, ScoreFormat::Csv).unwrap();
        let alpha = SignificanceLevel::new(0.3).unwrap();
        let outcome = wrap_external(&file, alpha).unwrap();

        let (calibration, tests) = file.partition();
        let calib_scores: Vec<f64> = calibration.iter().map(|r| file.internal_score(r)).collect();
        let calib = build_calib(&calib_scores).unwrap();
        let conf: Vec<ConformityScore> = tests
            .iter()
            .map(|r| ConformityScore::new(file.internal_score(r)).unwrap())
            .collect();
        let pvalues = batch_pvalues(&calib, &conf).unwrap();
        let adjusted = bh_adjust(&pvalues);
        let decisions = decide(&adjusted, alpha);
        assert_eq!(outcome.pvalues, pvalues);
        assert_eq!(outcome.adjusted.values(), adjusted.values());
        assert_eq!(outcome.decisions, decisions);
        // Full truth present, so the report exists.
        let report = outcome.report.expect("truth on every test record");
        assert_eq!(report.n_tests, 2);
    }

    #[test]
    fn wrap_requires_both_partitions() {
        let only_calib = "\
# orientation=higher_is_non_member
sample_id,score,role,truth
c1,0.1,calibration,
";
        let (_dir, path) = write_tmp(only_calib);
        let file = import_scores(&path, ScoreFormat::Csv).unwrap();
        assert!(matches!(
            wrap_external(&file, SignificanceLevel::new(0.1).unwrap()),
            Err(ScoreIoError::Contract(_))
        ));
    }

    #[test]
    fn export_report_roundtrips_pvalues_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let (_d2, src) = write_tmp(BASIC_CSV);
        let file = import_scores(&src, ScoreFormat::Csv).unwrap();
        let outcome = wrap_external(&file, SignificanceLevel::new(0.3).unwrap()).unwrap();

        let report_path = dir.path().join("report.json");
        let samples_path = dir.path().join("samples.csv");
        export_report(&outcome, &report_path, &samples_path).unwrap();

        let rows = read_sample_report(&samples_path).unwrap();
        assert_eq!(rows.len(), outcome.sample_ids.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.sample_id, outcome.sample_ids[i]);
            assert_eq!(row.p_value, outcome.pvalues.values()[i]);
            assert_eq!(row.p_adjusted, outcome.adjusted.values()[i]);
            assert_eq!(row.is_member, outcome.decisions.is_member(i));
            assert_eq!(row.truth, outcome.truth[i]);
        }

        let report: FdrReport =
            serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
        assert_eq!(&report, outcome.report.as_ref().unwrap());
    }

    #[test]
    fn export_without_truth_writes_summary() {
        let text = "\
# orientation=higher_is_non_member
sample_id,score,role,truth
c1,0.1,calibration,
c2,0.9,calibration,
t1,5.0,test,
";
        let dir = tempfile::tempdir().unwrap();
        let (_d2, src) = write_tmp(text);
        let file = import_scores(&src, ScoreFormat::Csv).unwrap();
        let outcome = wrap_external(&file, SignificanceLevel::new(0.1).unwrap()).unwrap();
        let report_path = dir.path().join("report.json");
        let samples_path = dir.path().join("samples.csv");
        export_report(&outcome, &report_path, &samples_path).unwrap();
        let summary: DecisionSummary =
            serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
        assert_eq!(summary.n_rejected, 0);
        assert_eq!(summary.n_tests, 1);
    }

    #[test]
    fn verdict_order_consistent_with_scores() {
        // Ranking preservation: ordering by adjusted p-value agrees with
        // ordering by normalized raw score up to ties.
        let mut text = String::from("# orientation=higher_is_non_member\nsample_id,score,role,truth\n");
        for i in 0..40 {
            text.push_str(&format!("c{i},{},calibration,\n", i as f64 * 0.25 - 5.0));
        }
        for i in 0..20 {
            text.push_str(&format!("t{i},{},test,\n", (i as f64 * 0.37).sin() * 4.0));
        }
        let (_dir, path) = write_tmp(&text);
        let file = import_scores(&path, ScoreFormat::Csv).unwrap();
        let outcome = wrap_external(&file, SignificanceLevel::new(0.2).unwrap()).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                if outcome.internal_scores[i] < outcome.internal_scores[j] {
                    assert!(outcome.adjusted.values()[i] <= outcome.adjusted.values()[j]);
                    assert!(outcome.pvalues.values()[i] <= outcome.pvalues.values()[j]);
                }
            }
        }
    }
}
