use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bingear_core::eval::evaluate_test;
use bingear_core::graph::{load_dataset, read_dataset_cache, validate_dataset, write_dataset_cache};
use bingear_core::inference::bench::bench_scoring;
use bingear_core::inference::{BitwiseScorer, FusedScorer, Scorer};
use bingear_core::quantize::MODEL_MAGIC;
use bingear_core::trainer::{
    train_student, train_teacher, MetricsRecord, TrainStatus, TEACHER_MAGIC,
};
use bingear_core::{BinarizedModel, Dataset, TeacherModel};

use crate::config::RunConfig;
use crate::error::CliError;

pub const DATASET_FILE: &str = "dataset.bin";
pub const REPORT_FILE: &str = "report.txt";
pub const TEACHER_FILE: &str = "teacher.bgt";
pub const STUDENT_FILE: &str = "student.bgm";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const RUN_FILE: &str = "run.txt";

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} not found: {}", path.display())))
    }
}

fn dataset_bytes(data_dir: &Path) -> Result<Vec<u8>, CliError> {
    let path = data_dir.join(DATASET_FILE);
    require_file(&path, "dataset cache")?;
    Ok(fs::read(path)?)
}

fn decode_dataset(bytes: &[u8]) -> Result<Dataset, CliError> {
    Ok(read_dataset_cache(bytes)?)
}

pub fn ingest(train: &Path, test: &Path, out: &Path) -> Result<String, CliError> {
    require_file(train, "train file")?;
    require_file(test, "test file")?;
    let ds = load_dataset(train, test)?;
    let report = validate_dataset(&ds);
    if !report.evaluable() {
        return Err(CliError::data(report.to_string()));
    }
    fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    write_dataset_cache(&ds, &mut buf)?;
    fs::write(out.join(DATASET_FILE), &buf)?;
    let text = format!("{report}\n");
    fs::write(out.join(REPORT_FILE), &text)?;
    Ok(text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainPhase {
    Teacher,
    Student,
    Both,
}

/// Summary of a training run.
#[derive(Debug)]
pub struct TrainSummary {
    pub config_hash: u64,
    pub records: usize,
}

fn write_log(path: &Path, hash: u64, seed: u64, logs: &[&[MetricsRecord]]) -> Result<usize, CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{{\"config_hash\":\"{hash:016x}\",\"seed\":{seed}}}")?;
    let mut n = 0;
    for log in logs {
        for r in *log {
            writeln!(w, "{}", r.to_json_line())?;
            n += 1;
        }
    }
    w.flush()?;
    Ok(n)
}

fn check_status(phase: &str, status: &TrainStatus) -> Result<(), CliError> {
    match status {
        TrainStatus::Completed { .. } => Ok(()),
        TrainStatus::Diverged { epoch, message } => {
            Err(CliError::numeric(format!("{phase} diverged at epoch {epoch}: {message}")))
        }
    }
}

pub fn train(cfg: &RunConfig, phase: TrainPhase, deterministic: bool) -> Result<TrainSummary, CliError> {
    let bytes = dataset_bytes(&cfg.data)?;
    let ds = decode_dataset(&bytes)?;
    let hash = cfg.hash(&bytes);
    let mut tc = cfg.train.clone();
    tc.config_hash = hash;
    tc.record_wall_time = !deterministic;
    fs::create_dir_all(&cfg.out)?;
    fs::write(
        cfg.out.join(RUN_FILE),
        format!("config_hash={hash:016x}\n{}", cfg.canonical()),
    )?;

    let teacher_path = cfg.out.join(TEACHER_FILE);
    let metrics_path = cfg.out.join(METRICS_FILE);
    let (teacher, teacher_log) = match phase {
        TrainPhase::Student => {
            if !teacher_path.is_file() {
                return Err(CliError::usage(format!(
                    "student phase needs a teacher checkpoint at {}; run --phase teacher first",
                    teacher_path.display()
                )));
            }
            (TeacherModel::read(File::open(&teacher_path)?)?, Vec::new())
        }
        TrainPhase::Teacher | TrainPhase::Both => {
            let out = train_teacher(&ds, &tc)?;
            let mut w = BufWriter::new(File::create(&teacher_path)?);
            out.teacher.write(&mut w)?;
            w.flush()?;
            if let Err(e) = check_status("teacher", &out.status) {
                write_log(&metrics_path, hash, tc.seed, &[&out.log])?;
                return Err(e);
            }
            (out.teacher, out.log)
        }
    };
    if phase == TrainPhase::Teacher {
        let records = write_log(&metrics_path, hash, tc.seed, &[&teacher_log])?;
        return Ok(TrainSummary { config_hash: hash, records });
    }

    let out = train_student(&ds, &teacher, &tc, None)?;
    let mut w = BufWriter::new(File::create(cfg.out.join(STUDENT_FILE))?);
    out.model.write(&mut w)?;
    w.flush()?;
    let records = write_log(&metrics_path, hash, tc.seed, &[&teacher_log, &out.log])?;
    check_status("student", &out.status)?;
    Ok(TrainSummary { config_hash: hash, records })
}

/// A model file of either kind, told apart by its magic.
pub enum AnyModel {
    Student(BinarizedModel),
    Teacher(TeacherModel),
}

pub fn load_model(path: &Path) -> Result<AnyModel, CliError> {
    require_file(path, "model file")?;
    let bytes = fs::read(path)?;
    if bytes.starts_with(TEACHER_MAGIC) {
        Ok(AnyModel::Teacher(TeacherModel::read(bytes.as_slice())?))
    } else if bytes.starts_with(MODEL_MAGIC) {
        Ok(AnyModel::Student(BinarizedModel::read(bytes.as_slice())?))
    } else {
        Err(CliError::data(format!(
            "format error: {} is neither a student nor a teacher model (bad magic)",
            path.display()
        )))
    }
}

fn load_student(path: &Path) -> Result<BinarizedModel, CliError> {
    match load_model(path)? {
        AnyModel::Student(m) => Ok(m),
        AnyModel::Teacher(_) => Err(CliError::usage(format!(
            "{} is a teacher checkpoint; a binarized model is required",
            path.display()
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScorerKind {
    Bitwise,
    Float,
}

/// Returns `(csv, table)`.
pub fn eval(model: &Path, data: &Path, ks: &[usize], scorer: ScorerKind) -> Result<(String, String), CliError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::usage("--k needs at least one positive cutoff"));
    }
    let model = load_model(model)?;
    let ds = decode_dataset(&dataset_bytes(data)?)?;
    let scorer: Box<dyn Scorer + '_> = match (&model, scorer) {
        (AnyModel::Student(m), ScorerKind::Bitwise) => Box::new(BitwiseScorer::new(&m.table, &m.weights)),
        (AnyModel::Student(m), ScorerKind::Float) => Box::new(FusedScorer::from_table(&m.table, &m.weights)),
        (AnyModel::Teacher(t), ScorerKind::Float) => Box::new(FusedScorer::from_layers(&t.embeddings, &t.weights)),
        (AnyModel::Teacher(_), ScorerKind::Bitwise) => {
            return Err(CliError::usage("the bitwise scorer needs a binarized model"))
        }
    };
    let (m, n) = match &model {
        AnyModel::Student(s) => (s.table.num_users(), s.table.num_items()),
        AnyModel::Teacher(t) => (t.embeddings.num_users(), t.embeddings.num_items()),
    };
    if (m, n) != (ds.num_users(), ds.num_items()) {
        return Err(CliError::data(format!(
            "model is {m}x{n} but dataset is {}x{}",
            ds.num_users(),
            ds.num_items()
        )));
    }
    let report = evaluate_test(scorer.as_ref(), &ds, ks)?;
    Ok((report.to_csv(), report.to_string()))
}

/// Returns `(csv, summary)`.
pub fn bench(model: &Path, queries: usize, repeat: usize, seed: u64) -> Result<(String, String), CliError> {
    let model = load_student(model)?;
    let report = bench_scoring(&model, queries, repeat.max(1), seed);
    let mut summary = format!(
        "model_bytes={}\nfull_precision_bytes={}\ncompression={:.3}\n",
        report.model_bytes,
        report.full_precision_bytes,
        report.compression()
    );
    if let Some(s) = report.speedup() {
        summary.push_str(&format!("speedup={s:.3}\n"));
    }
    Ok((report.to_csv(), summary))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Binary,
    Csv,
}

pub const EXPORT_CSV_HEADER: &str = "node,kind,index,layer,scaler,bits";

/// One row per node and layer; `bits` lists the codes in dimension order,
/// `1` for +1 and `0` for -1.
pub fn model_csv(model: &BinarizedModel) -> String {
    let t = &model.table;
    let mut out = String::from(EXPORT_CSV_HEADER);
    out.push('\n');
    for node in 0..t.num_nodes() {
        let (kind, index) = if node < t.num_users() {
            ("user", node)
        } else {
            ("item", node - t.num_users())
        };
        for l in 0..=t.num_layers() {
            let bits = t.bits(node, l);
            let codes: String = (0..t.dim()).map(|j| if bits.bit(j) { '1' } else { '0' }).collect();
            out.push_str(&format!("{node},{kind},{index},{l},{:e},{codes}\n", t.scaler(node, l)));
        }
    }
    out
}

pub fn export(model: &Path, format: ExportFormat, out: &PathBuf) -> Result<(), CliError> {
    let model = load_student(model)?;
    match format {
        ExportFormat::Binary => fs::write(out, model.to_bytes())?,
        ExportFormat::Csv => fs::write(out, model_csv(&model))?,
    }
    Ok(())
}
