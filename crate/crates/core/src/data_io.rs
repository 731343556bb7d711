//! Choice and design files, plus the built-in 20-budget designs.
//!
//! Choices: `subject_id,task,question_id,type,z1,z2,a1,a2[,ell_q1,ell_q2,ell_q3]`
//! as CSV with a header, or a JSON array of objects with the same keys.
//! Designs: `question_id,type,order,z1,z2` as CSV.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    same_value, EllsbergAnswers, EllsbergChoice, Observation, QuestionType, SubjectDataset, Task,
};

pub const DESIGN_ROWS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignScale {
    Lab,
    Panel,
    Custom,
}

/// Presentation order of a question.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderTag {
    Random,
    /// Shown at a fixed position (1-based) when known.
    Fixed(Option<u32>),
}

impl OrderTag {
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "random" {
            return Ok(OrderTag::Random);
        }
        if t == "fixed" {
            return Ok(OrderTag::Fixed(None));
        }
        if let Some(pos) = t.strip_prefix("fixed:") {
            let p = pos
                .parse::<u32>()
                .map_err(|_| Error::validation(format!("bad order position '{pos}'")))?;
            return Ok(OrderTag::Fixed(Some(p)));
        }
        Err(Error::validation(format!("unknown order tag '{s}'")))
    }
}

impl fmt::Display for OrderTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderTag::Random => f.write_str("random"),
            OrderTag::Fixed(None) => f.write_str("fixed"),
            OrderTag::Fixed(Some(p)) => write!(f, "fixed:{p}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub question_id: u32,
    pub qtype: QuestionType,
    pub order: OrderTag,
    pub z1: f64,
    pub z2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignTable {
    pub rows: Vec<DesignRow>,
    pub scale: DesignScale,
}

// (type, order, lab z1, lab z2, panel z1, panel z2), kept as text so both
// scales parse to the nearest double of the printed decimal.
const BUILTIN: [(u8, &str, &str, &str, &str, &str); DESIGN_ROWS] = [
    (1, "random", "0.30", "0.18", "3.0", "1.8"),
    (1, "random", "0.30", "0.24", "3.0", "2.4"),
    (1, "random", "0.38", "0.30", "3.8", "3.0"),
    (1, "random", "0.40", "0.40", "4.0", "4.0"),
    (1, "random", "0.50", "0.12", "5.0", "1.2"),
    (1, "random", "0.50", "0.24", "5.0", "2.4"),
    (1, "random", "0.50", "0.34", "5.0", "3.4"),
    (1, "random", "0.50", "0.44", "5.0", "4.4"),
    (1, "random", "0.60", "0.30", "6.0", "3.0"),
    (1, "fixed:5", "0.32", "0.28", "3.2", "2.8"),
    (2, "random", "0.14", "0.50", "1.4", "5.0"),
    (2, "random", "0.24", "0.50", "2.4", "5.0"),
    (2, "random", "0.28", "0.32", "2.8", "3.2"),
    (2, "random", "0.30", "0.36", "3.0", "3.6"),
    (2, "random", "0.30", "0.42", "3.0", "4.2"),
    (2, "random", "0.30", "0.56", "3.0", "5.6"),
    (2, "random", "0.38", "0.52", "3.8", "5.2"),
    (2, "random", "0.40", "0.50", "4.0", "5.0"),
    (2, "random", "0.50", "0.56", "5.0", "5.6"),
    (2, "fixed:6", "0.32", "0.28", "3.2", "2.8"),
];

impl DesignTable {
    pub fn builtin(scale: DesignScale) -> DesignTable {
        let panel = match scale {
            DesignScale::Lab => false,
            DesignScale::Panel => true,
            DesignScale::Custom => panic!("no built-in custom design"),
        };
        let rows = BUILTIN
            .iter()
            .enumerate()
            .map(|(i, &(t, order, l1, l2, p1, p2))| {
                let (z1, z2) = if panel { (p1, p2) } else { (l1, l2) };
                DesignRow {
                    question_id: i as u32 + 1,
                    qtype: QuestionType::from_code(t).expect("built-in type"),
                    order: OrderTag::parse(order).expect("built-in order"),
                    z1: z1.parse().expect("built-in value"),
                    z2: z2.parse().expect("built-in value"),
                }
            })
            .collect();
        DesignTable { rows, scale }
    }

    pub fn lab() -> DesignTable {
        Self::builtin(DesignScale::Lab)
    }

    pub fn panel() -> DesignTable {
        Self::builtin(DesignScale::Panel)
    }

    pub fn row(&self, question_id: u32) -> Option<&DesignRow> {
        self.rows.iter().find(|r| r.question_id == question_id)
    }

    /// The fixed-order type 1 / type 2 questions sharing one budget.
    pub fn fixed_pair(&self) -> Option<(u32, u32)> {
        let fixed = |t| {
            self.rows
                .iter()
                .find(|r| r.qtype == t && matches!(r.order, OrderTag::Fixed(_)))
        };
        let (a, b) = (fixed(QuestionType::Type1)?, fixed(QuestionType::Type2)?);
        (same_value(a.z1, b.z1) && same_value(a.z2, b.z2)).then_some((a.question_id, b.question_id))
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != DESIGN_ROWS {
            return Err(Error::validation(format!(
                "design must have {DESIGN_ROWS} rows, found {}",
                self.rows.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &self.rows {
            if !seen.insert(r.question_id) {
                return Err(Error::validation(format!(
                    "duplicate question id {} in design",
                    r.question_id
                )));
            }
            crate::model::derive_prices(r.z1, r.z2)?;
        }
        let n1 = self
            .rows
            .iter()
            .filter(|r| r.qtype == QuestionType::Type1)
            .count();
        if n1 != DESIGN_ROWS / 2 {
            return Err(Error::validation(format!(
                "design needs 10 rows per type, found {n1} type 1 rows"
            )));
        }
        Ok(())
    }
}

/// `builtin:lab`, `builtin:panel`, or a path to a design CSV.
pub fn load_design(spec: &str) -> Result<DesignTable> {
    match spec.trim() {
        "builtin:lab" | "lab" => Ok(DesignTable::lab()),
        "builtin:panel" | "panel" => Ok(DesignTable::panel()),
        other if other.starts_with("builtin:") => Err(Error::validation(format!(
            "unknown built-in design '{other}'"
        ))),
        path => read_design_csv(std::fs::File::open(path)?),
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct DesignRecord {
    question_id: u32,
    #[serde(rename = "type")]
    qtype: String,
    order: String,
    z1: f64,
    z2: f64,
}

pub fn read_design_csv<R: Read>(reader: R) -> Result<DesignTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<DesignRecord>() {
        let rec = rec?;
        rows.push(DesignRow {
            question_id: rec.question_id,
            qtype: parse_type(&rec.qtype)?,
            order: OrderTag::parse(&rec.order)?,
            z1: rec.z1,
            z2: rec.z2,
        });
    }
    let table = DesignTable {
        rows,
        scale: DesignScale::Custom,
    };
    table.validate()?;
    Ok(table)
}

pub fn write_design_csv<W: Write>(design: &DesignTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in &design.rows {
        w.serialize(DesignRecord {
            question_id: r.question_id,
            qtype: r.qtype.code().to_string(),
            order: r.order.to_string(),
            z1: r.z1,
            z2: r.z2,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn parse_type(s: &str) -> Result<QuestionType> {
    match s.trim().parse::<u8>() {
        Ok(code) => QuestionType::from_code(code),
        Err(_) => Err(Error::validation(format!(
            "unknown question type '{}'",
            s.trim()
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParseOptions {
    /// Require type and exchange values to match the design row.
    pub check_design: bool,
    /// Accept subjects with fewer questions than the design.
    pub allow_partial: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            check_design: true,
            allow_partial: false,
        }
    }
}

/// One line of a choices file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub subject_id: String,
    pub task: String,
    pub question_id: u32,
    #[serde(rename = "type", deserialize_with = "string_or_number")]
    pub qtype: String,
    pub z1: f64,
    pub z2: f64,
    pub a1: f64,
    pub a2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_q1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_q2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_q3: Option<String>,
}

fn string_or_number<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        S(String),
        N(i64),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::S(s) => s,
        Raw::N(n) => n.to_string(),
    })
}

pub fn read_choices_csv<R: Read>(
    reader: R,
    design: &DesignTable,
    opts: ParseOptions,
) -> Result<Vec<SubjectDataset>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for required in [
        "subject_id",
        "task",
        "question_id",
        "type",
        "z1",
        "z2",
        "a1",
        "a2",
    ] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::parse(1, format!("missing column '{required}'")));
        }
    }
    let mut records = Vec::new();
    for raw in rdr.records() {
        let raw = raw?;
        let line = raw.position().map_or(0, |p| p.line() as usize);
        let rec: ChoiceRecord = raw
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(line, e.to_string()))?;
        records.push((line, rec));
    }
    assemble(records, design, opts)
}

pub fn read_choices_json(
    text: &str,
    design: &DesignTable,
    opts: ParseOptions,
) -> Result<Vec<SubjectDataset>> {
    let recs: Vec<ChoiceRecord> = serde_json::from_str(text)?;
    // JSON has no line numbers; report the 1-based record index instead.
    assemble(
        recs.into_iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r))
            .collect(),
        design,
        opts,
    )
}

/// Dispatches on the extension: `.json` is JSON, anything else CSV.
pub fn read_choices_path(
    path: &Path,
    design: &DesignTable,
    opts: ParseOptions,
) -> Result<Vec<SubjectDataset>> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        read_choices_json(&std::fs::read_to_string(path)?, design, opts)
    } else {
        read_choices_csv(std::fs::File::open(path)?, design, opts)
    }
}

fn ellsberg_of(rec: &ChoiceRecord) -> Result<Option<EllsbergAnswers>> {
    let cells = [&rec.ell_q1, &rec.ell_q2, &rec.ell_q3];
    let present: Vec<&str> = cells
        .iter()
        .filter_map(|c| c.as_deref().map(str::trim).filter(|s| !s.is_empty()))
        .collect();
    match present.len() {
        0 => Ok(None),
        3 => Ok(Some(EllsbergAnswers {
            q1: EllsbergChoice::parse(present[0])?,
            q2: EllsbergChoice::parse(present[1])?,
            q3: EllsbergChoice::parse(present[2])?,
        })),
        _ => Err(Error::validation(
            "Ellsberg answers must be all present or all absent",
        )),
    }
}

struct Pending {
    subject_id: String,
    task: Task,
    observations: Vec<Observation>,
    ellsberg: Option<EllsbergAnswers>,
}

fn assemble(
    records: Vec<(usize, ChoiceRecord)>,
    design: &DesignTable,
    opts: ParseOptions,
) -> Result<Vec<SubjectDataset>> {
    let mut order: Vec<(String, Task)> = Vec::new();
    let mut groups: HashMap<(String, Task), Pending> = HashMap::new();
    for (line, rec) in records {
        let at = |e: Error| match e {
            Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
            other => other,
        };
        let task = Task::parse(&rec.task).map_err(at)?;
        let qtype = parse_type(&rec.qtype).map_err(at)?;
        if opts.check_design {
            let row = design.row(rec.question_id).ok_or_else(|| {
                at(Error::validation(format!(
                    "question {} not in design",
                    rec.question_id
                )))
            })?;
            if row.qtype != qtype {
                return Err(at(Error::validation(format!(
                    "question {} has type {} but the design says {}",
                    rec.question_id,
                    qtype.code(),
                    row.qtype.code()
                ))));
            }
            if !same_value(row.z1, rec.z1) || !same_value(row.z2, rec.z2) {
                return Err(at(Error::validation(format!(
                    "question {} exchange values ({}, {}) do not match the design ({}, {})",
                    rec.question_id, rec.z1, rec.z2, row.z1, row.z2
                ))));
            }
        }
        let obs =
            Observation::new(rec.question_id, qtype, rec.z1, rec.z2, rec.a1, rec.a2).map_err(at)?;
        let ell = ellsberg_of(&rec).map_err(at)?;
        let key = (rec.subject_id.clone(), task);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Pending {
                subject_id: rec.subject_id.clone(),
                task,
                observations: Vec::new(),
                ellsberg: None,
            }
        });
        if entry
            .observations
            .iter()
            .any(|o| o.question_id == rec.question_id)
        {
            return Err(at(Error::validation(format!(
                "duplicate question {} for subject {} in task {}",
                rec.question_id, rec.subject_id, task
            ))));
        }
        if let Some(e) = ell {
            match entry.ellsberg {
                Some(prev) if prev != e => {
                    return Err(at(Error::validation(format!(
                        "conflicting Ellsberg answers for subject {}",
                        rec.subject_id
                    ))))
                }
                _ => entry.ellsberg = Some(e),
            }
        }
        entry.observations.push(obs);
    }

    let fixed = design.fixed_pair();
    let mut out = Vec::with_capacity(order.len());
    for key in order {
        let p = groups.remove(&key).expect("grouped subject");
        if !opts.allow_partial && p.observations.len() < design.rows.len() {
            return Err(Error::validation(format!(
                "subject {} ({}) answered {} of {} questions; use --allow-partial to keep partial subjects",
                p.subject_id,
                p.task,
                p.observations.len(),
                design.rows.len()
            )));
        }
        let pair = fixed.filter(|(a, b)| {
            p.observations.iter().any(|o| o.question_id == *a)
                && p.observations.iter().any(|o| o.question_id == *b)
        });
        out.push(SubjectDataset::new(
            p.subject_id,
            p.task,
            p.observations,
            p.ellsberg,
            pair,
        )?);
    }
    Ok(out)
}

pub fn to_records(datasets: &[SubjectDataset]) -> Vec<ChoiceRecord> {
    let mut out = Vec::new();
    for ds in datasets {
        let ell = ds
            .ellsberg
            .map(|e| [e.q1, e.q2, e.q3].map(|c| c.as_str().to_string()));
        for o in &ds.observations {
            let cell = |i: usize| ell.as_ref().map(|a| a[i].clone());
            out.push(ChoiceRecord {
                subject_id: ds.subject_id.clone(),
                task: ds.task.as_str().to_string(),
                question_id: o.question_id,
                qtype: o.qtype.code().to_string(),
                z1: o.budget.z1,
                z2: o.budget.z2,
                a1: o.a1,
                a2: o.a2,
                ell_q1: cell(0),
                ell_q2: cell(1),
                ell_q3: cell(2),
            });
        }
    }
    out
}

/// Writes choices as CSV; the Ellsberg columns appear when any subject has answers.
pub fn write_choices_csv<W: Write>(datasets: &[SubjectDataset], writer: W) -> Result<()> {
    let with_ell = datasets.iter().any(|d| d.ellsberg.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "subject_id",
        "task",
        "question_id",
        "type",
        "z1",
        "z2",
        "a1",
        "a2",
    ];
    if with_ell {
        header.extend(["ell_q1", "ell_q2", "ell_q3"]);
    }
    w.write_record(&header)?;
    for r in to_records(datasets) {
        let mut row = vec![
            r.subject_id,
            r.task,
            r.question_id.to_string(),
            r.qtype,
            r.z1.to_string(),
            r.z2.to_string(),
            r.a1.to_string(),
            r.a2.to_string(),
        ];
        if with_ell {
            row.extend([r.ell_q1, r.ell_q2, r.ell_q3].map(Option::unwrap_or_default));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_choices_json<W: Write>(datasets: &[SubjectDataset], writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, &to_records(datasets))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_rows_match_the_table() {
        let lab = DesignTable::lab();
        let r5 = lab.row(5).unwrap();
        assert_eq!((r5.qtype, r5.z1, r5.z2), (QuestionType::Type1, 0.50, 0.12));
        let panel = DesignTable::panel();
        let r11 = panel.row(11).unwrap();
        assert_eq!((r11.qtype, r11.z1, r11.z2), (QuestionType::Type2, 1.4, 5.0));
        lab.validate().unwrap();
        panel.validate().unwrap();
        assert_eq!(lab.fixed_pair(), Some((10, 20)));
        assert_eq!(panel.fixed_pair(), Some((10, 20)));
    }

    #[test]
    fn panel_is_ten_times_lab_with_equal_prices() {
        for (l, p) in DesignTable::lab()
            .rows
            .iter()
            .zip(&DesignTable::panel().rows)
        {
            assert!(same_value(10.0 * l.z1, p.z1) && same_value(10.0 * l.z2, p.z2));
            let (bl, bp) = (
                crate::model::derive_prices(l.z1, l.z2).unwrap(),
                crate::model::derive_prices(p.z1, p.z2).unwrap(),
            );
            assert!((bl.p2 - bp.p2).abs() <= 1e-12 * bl.p2);
        }
    }

    #[test]
    fn design_csv_round_trip_and_row_count() {
        let mut buf = Vec::new();
        write_design_csv(&DesignTable::lab(), &mut buf).unwrap();
        let back = read_design_csv(&buf[..]).unwrap();
        assert_eq!(back.rows, DesignTable::lab().rows);

        let text = String::from_utf8(buf).unwrap();
        let short: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        let err = read_design_csv(short.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("20 rows"), "{err}");
    }

    #[test]
    fn single_row_parses_to_payoffs() {
        let text = "subject_id,task,question_id,type,z1,z2,a1,a2\ns1,stock,1,1,0.30,0.18,50,50\n";
        let opts = ParseOptions {
            allow_partial: true,
            ..Default::default()
        };
        let ds = read_choices_csv(text.as_bytes(), &DesignTable::lab(), opts).unwrap();
        let o = &ds[0].observations[0];
        assert!((o.x1 - 15.0).abs() < 1e-12 && (o.x2 - 9.0).abs() < 1e-12);
    }

    #[test]
    fn bad_rows_are_rejected() {
        let opts = ParseOptions {
            allow_partial: true,
            ..Default::default()
        };
        let head = "subject_id,task,question_id,type,z1,z2,a1,a2\n";
        let sum = format!("{head}s1,stock,1,1,0.30,0.18,60,50\n");
        let e = read_choices_csv(sum.as_bytes(), &DesignTable::lab(), opts).unwrap_err();
        assert!(e.to_string().contains("allocation sum"), "{e}");
        let ty = format!("{head}s1,stock,1,3,0.30,0.18,50,50\n");
        let e = read_choices_csv(ty.as_bytes(), &DesignTable::lab(), opts).unwrap_err();
        assert!(e.to_string().contains("unknown question type"), "{e}");
        let z = format!("{head}s1,stock,1,1,0.31,0.18,50,50\n");
        assert!(read_choices_csv(z.as_bytes(), &DesignTable::lab(), opts).is_err());
        let skip = ParseOptions {
            check_design: false,
            allow_partial: true,
        };
        assert!(read_choices_csv(z.as_bytes(), &DesignTable::lab(), skip).is_ok());
        let dup = format!("{head}s1,stock,1,1,0.30,0.18,50,50\ns1,stock,1,1,0.30,0.18,40,60\n");
        assert!(read_choices_csv(dup.as_bytes(), &DesignTable::lab(), opts).is_err());
    }

    #[test]
    fn partial_subjects_need_the_flag() {
        let text = "subject_id,task,question_id,type,z1,z2,a1,a2\ns1,stock,1,1,0.30,0.18,50,50\n";
        let e = read_choices_csv(
            text.as_bytes(),
            &DesignTable::lab(),
            ParseOptions::default(),
        )
        .unwrap_err();
        assert!(e.to_string().contains("allow-partial"));
    }

    #[test]
    fn ellsberg_columns_round_trip() {
        let text = "subject_id,task,question_id,type,z1,z2,a1,a2,ell_q1,ell_q2,ell_q3\n\
                    s1,ellsberg,1,1,0.30,0.18,12.5,87.5,Risky,risky,AMBIGUOUS\n\
                    s2,ellsberg,1,1,0.30,0.18,100,0,,,\n";
        let opts = ParseOptions {
            allow_partial: true,
            ..Default::default()
        };
        let ds = read_choices_csv(text.as_bytes(), &DesignTable::lab(), opts).unwrap();
        assert_eq!(ds[0].ellsberg.unwrap().q3, EllsbergChoice::Ambiguous);
        assert!(ds[1].ellsberg.is_none());
        let mut buf = Vec::new();
        write_choices_csv(&ds, &mut buf).unwrap();
        let again = read_choices_csv(&buf[..], &DesignTable::lab(), opts).unwrap();
        assert_eq!(again, ds);

        let mut js = Vec::new();
        write_choices_json(&ds, &mut js).unwrap();
        let from_json =
            read_choices_json(std::str::from_utf8(&js).unwrap(), &DesignTable::lab(), opts)
                .unwrap();
        assert_eq!(from_json, ds);
    }
}
