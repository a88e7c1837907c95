//! Command-line front end. Every subcommand is a thin adapter over the
//! library; exit status is 0 on success, 1 on a data error and 2 on a usage
//! error, and every nonzero exit writes a diagnostic to the error stream.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::codec::{self, MinutiaeRecord};
use crate::dataset::{self, DatabaseManifest, DbSpec, ImageRef, SensorKind};
use crate::eval::{
    self, ExternalMatcher, MatchPair, PairMatcher, Provenance, ReferenceMatcher, ReportScenario, ScoreSet,
};
use crate::marking::{self, MarkingService, ServiceConfig, SystemClock};
use crate::matcher::MatcherParams;

#[derive(Parser, Debug)]
#[command(name = "ridgemark", version, about = "Finger minutiae templates: codec, evaluation and marking service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decode and check template files.
    Validate(ValidateArgs),
    /// Convert a template between the binary and text forms.
    Convert(ConvertArgs),
    /// Minutiae count statistics per template set, as CSV.
    Stats(StatsArgs),
    /// Every ordered genuine and imposter pair, as CSV.
    Pairs(PairsArgs),
    /// Score a pair list with one or two template sets.
    Eval(EvalArgs),
    /// ROC, GAR table and count files from score CSVs.
    Report(ReportArgs),
    /// Marking assignments per subject and day, as CSV.
    Schedule(ScheduleArgs),
    /// Run the marking service.
    Serve(ServeArgs),
    /// Write the archive of final templates of a database.
    Export(ExportArgs),
}

/// Database selection shared by several subcommands.
#[derive(Args, Debug, Clone)]
struct DbArgs {
    /// One of the known FVC database ids, e.g. FVC2002_DB1A.
    #[arg(long)]
    db: Option<String>,
    /// Database manifest (JSON).
    #[arg(long, conflicts_with = "db")]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Also require nonzero minutia quality and a known finger position.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    db: DbArgs,
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Form {
    Text,
    Binary,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    input: PathBuf,
    /// Output file, `-` for standard output.
    output: PathBuf,
    /// Output form; by default the opposite of the input's.
    #[arg(long, value_enum)]
    to: Option<Form>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    db: DbArgs,
    /// `LABEL=DIR` of `<finger>_<impression>.iso-fmr` files; repeatable.
    #[arg(long = "templates", required = true)]
    templates: Vec<String>,
}

#[derive(Args, Debug)]
struct PairsArgs {
    #[command(flatten)]
    db: DbArgs,
    #[arg(long, requires = "impressions", conflicts_with_all = ["db", "manifest"])]
    fingers: Option<u16>,
    #[arg(long, requires = "fingers")]
    impressions: Option<u16>,
    /// Database id written into the pairs when only counts are given.
    #[arg(long, default_value = "DB")]
    db_id: String,
    /// Output file; standard output by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MatcherArgs {
    #[arg(long, default_value_t = MatcherParams::default().distance_tolerance)]
    distance_tolerance: f64,
    #[arg(long, default_value_t = MatcherParams::default().angle_tolerance)]
    angle_tolerance: f64,
    #[arg(long, default_value_t = MatcherParams::default().min_overlap)]
    min_overlap: usize,
    /// External matcher command; it is run as `<command> <probe> <gallery>`
    /// and must print one score in [0, 1].
    #[arg(long)]
    matcher_cmd: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    templates_a: PathBuf,
    #[arg(long)]
    templates_b: Option<PathBuf>,
    #[arg(long, default_value = "a")]
    label_a: String,
    #[arg(long, default_value = "b")]
    label_b: String,
    #[command(flatten)]
    matcher: MatcherArgs,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory for `scores_<label>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a report bundle here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// `LABEL=FILE` score CSV; repeatable.
    #[arg(long = "scores", required = true)]
    scores: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Manifest with perceived quality labels; adds a poor-quality-rejected
    /// scenario per score set.
    #[arg(long)]
    quality: Option<PathBuf>,
    /// `LABEL=DIR` templates for the count statistics; repeatable.
    #[arg(long = "templates")]
    templates: Vec<String>,
    /// Target FARs as fractions.
    #[arg(long, value_delimiter = ',', default_values_t = eval::DEFAULT_FAR_TARGETS.to_vec())]
    far: Vec<f64>,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    #[command(flatten)]
    db: DbArgs,
    #[arg(long, requires = "impressions", conflicts_with_all = ["db", "manifest"])]
    fingers: Option<u16>,
    #[arg(long, requires = "fingers")]
    impressions: Option<u16>,
    #[arg(long, default_value_t = 4)]
    subjects: u16,
    #[arg(long, default_value_t = 14)]
    capacity: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServiceArgs {
    /// TOML configuration; `RIDGEMARK_*` environment variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_root: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[command(flatten)]
    service: ServiceArgs,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    bind: Option<String>,
    /// `DB=DIR`: scan an image directory of a known database into the data root.
    #[arg(long = "import")]
    import: Vec<String>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    service: ServiceArgs,
    #[arg(long)]
    db: String,
    #[arg(long)]
    out: PathBuf,
}

type Outcome = Result<(), String>;

/// Run with `argv` (program name first) and return the exit status.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let result = match cli.command {
        Command::Validate(a) => validate(a, stdout, stderr),
        Command::Convert(a) => convert(a, stdout),
        Command::Stats(a) => stats(a, stdout),
        Command::Pairs(a) => pairs(a, stdout),
        Command::Eval(a) => evaluate(a, stdout),
        Command::Report(a) => report(a, stdout),
        Command::Schedule(a) => schedule(a, stdout),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn file_err(path: &Path) -> impl Fn(std::io::Error) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

fn split_label(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((l, p)) if !l.is_empty() && !p.is_empty() => Ok((l.to_string(), PathBuf::from(p))),
        _ => Err(format!("`{s}` is not LABEL=PATH")),
    }
}

fn resolve_manifest(db: &DbArgs) -> Result<Option<DatabaseManifest>, String> {
    if let Some(path) = &db.manifest {
        return DatabaseManifest::load_json(path).map(Some).map_err(err);
    }
    if let Some(id) = &db.db {
        let spec = DbSpec::known(id).ok_or_else(|| format!("unknown database `{id}`; pass --manifest instead"))?;
        return Ok(Some(DatabaseManifest::synthetic(spec)));
    }
    Ok(None)
}

fn counts_spec(db_id: &str, fingers: u16, impressions: u16) -> DbSpec {
    DbSpec {
        db_id: db_id.into(),
        sensor_kind: SensorKind::Optical,
        image_width: 0,
        image_height: 0,
        dpi: 0,
        fingers,
        impressions_per_finger: impressions,
    }
}

fn write_output(out: Option<&Path>, stdout: &mut dyn Write, bytes: &[u8]) -> Outcome {
    match out {
        Some(p) if p != Path::new("-") => fs::write(p, bytes).map_err(file_err(p)),
        _ => stdout.write_all(bytes).map_err(err),
    }
}

fn validate(a: ValidateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let dims = resolve_manifest(&a.db)?.map(|m| (m.spec.image_width, m.spec.image_height));
    let (mut valid, mut invalid) = (0usize, 0usize);
    for path in &a.files {
        let problems: Vec<String> = match fs::read(path) {
            Err(e) => vec![e.to_string()],
            Ok(bytes) => match codec::decode_record(&bytes) {
                Err(e) => vec![e.to_string()],
                Ok(r) => {
                    let v = match dims {
                        Some((w, h)) => codec::validate_for_image(&r, w, h, a.strict),
                        None => codec::validate_record(&r, a.strict),
                    };
                    v.iter().map(|v| v.to_string()).collect()
                }
            },
        };
        if problems.is_empty() {
            valid += 1;
        } else {
            invalid += 1;
            for p in problems {
                let _ = writeln!(stderr, "{}: {p}", path.display());
            }
        }
    }
    if invalid == 0 {
        writeln!(stdout, "{valid} valid").map_err(err)
    } else {
        let _ = writeln!(stdout, "{valid} valid, {invalid} invalid");
        Err(format!("{invalid} of {} file(s) failed validation", a.files.len()))
    }
}

fn convert(a: ConvertArgs, stdout: &mut dyn Write) -> Outcome {
    let bytes = fs::read(&a.input).map_err(file_err(&a.input))?;
    let is_binary = bytes.starts_with(&codec::MAGIC);
    let record = if is_binary {
        codec::decode_record(&bytes)
    } else {
        let text =
            String::from_utf8(bytes).map_err(|_| format!("{}: neither a binary record nor text", a.input.display()))?;
        codec::parse_text(&text)
    }
    .map_err(|e| format!("{}: {e}", a.input.display()))?;
    let to = a.to.unwrap_or(if is_binary { Form::Text } else { Form::Binary });
    let out = match to {
        Form::Text => codec::to_text(&record).into_bytes(),
        Form::Binary => codec::encode_record(&record).map_err(err)?,
    };
    write_output(Some(&a.output), stdout, &out)
}

fn stats(a: StatsArgs, stdout: &mut dyn Write) -> Outcome {
    let manifest = resolve_manifest(&a.db)?.ok_or("stats needs --db or --manifest")?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["database", "extractor", "mean", "std", "min", "max", "templates", "missing"]).map_err(err)?;
    for spec in &a.templates {
        let (label, dir) = split_label(spec)?;
        let set = dataset::load_template_set(&manifest, &dir);
        if let Some((image, d)) = set.diagnostics.first() {
            return Err(format!("{image}: {d}"));
        }
        let s = dataset::minutiae_count_stats(set.records.values()).map_err(|e| format!("{label}: {e}"))?;
        w.write_record([
            manifest.spec.db_id.clone(),
            label,
            format!("{:.1}", s.mean),
            format!("{:.1}", s.std),
            s.min.to_string(),
            s.max.to_string(),
            set.records.len().to_string(),
            set.missing.len().to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(err)?;
    stdout.write_all(&bytes).map_err(err)
}

fn pairs(a: PairsArgs, stdout: &mut dyn Write) -> Outcome {
    let list = match (a.fingers, a.impressions) {
        (Some(f), Some(k)) => eval::generate_pairs_for(&a.db_id, f, k),
        _ => {
            let manifest = resolve_manifest(&a.db)?.ok_or("pairs needs --db, --manifest or --fingers/--impressions")?;
            eval::generate_match_pairs(&manifest).map_err(err)?
        }
    };
    let mut buf = Vec::new();
    eval::write_pairs_csv(&mut buf, &list).map_err(err)?;
    write_output(a.out.as_deref(), stdout, &buf)?;
    if a.out.is_some() {
        let (g, i) = eval::count_kinds(&list);
        writeln!(stdout, "{g} genuine, {i} imposter").map_err(err)?;
    }
    Ok(())
}

fn load_templates(dir: &Path, images: &BTreeSet<&ImageRef>) -> Result<BTreeMap<ImageRef, MinutiaeRecord>, String> {
    images
        .iter()
        .map(|image| {
            let path = dir.join(image.template_file_name());
            let bytes = fs::read(&path).map_err(file_err(&path))?;
            let r = codec::decode_record(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
            Ok(((*image).clone(), r))
        })
        .collect()
}

fn evaluate(a: EvalArgs, stdout: &mut dyn Write) -> Outcome {
    let file = fs::File::open(&a.pairs).map_err(file_err(&a.pairs))?;
    let list: Vec<MatchPair> = eval::read_pairs_csv(file).map_err(|e| format!("{}: {e}", a.pairs.display()))?;
    let images: BTreeSet<&ImageRef> = list.iter().flat_map(|p| [&p.probe, &p.gallery]).collect();
    let params = MatcherParams {
        distance_tolerance: a.matcher.distance_tolerance,
        angle_tolerance: a.matcher.angle_tolerance,
        min_overlap: a.matcher.min_overlap,
    };
    params.validate().map_err(err)?;
    let db_id = list.first().map(|p| p.probe.db_id.clone()).unwrap_or_default();

    let mut sets = vec![(a.label_a.clone(), a.templates_a.clone())];
    if let Some(b) = &a.templates_b {
        if a.label_b == a.label_a {
            return Err("--label-a and --label-b must differ".into());
        }
        sets.push((a.label_b.clone(), b.clone()));
    }
    let mut scenarios = Vec::new();
    for (label, dir) in sets {
        let templates = load_templates(&dir, &images)?;
        let reference = ReferenceMatcher { params };
        let external;
        let matcher: &dyn PairMatcher = match &a.matcher.matcher_cmd {
            Some(cmd) => {
                external = ExternalMatcher::from_command_line(cmd, dir.clone()).map_err(err)?;
                &external
            }
            None => &reference,
        };
        let provenance = Provenance { db_id: db_id.clone(), extractor: label.clone(), matcher: matcher.label() };
        let scores = eval::execute_protocol(&list, &templates, matcher, a.workers, provenance).map_err(err)?;
        scenarios.push(ReportScenario::new(label, scores));
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(file_err(out))?;
        for s in &scenarios {
            let path = out.join(format!("scores_{}.csv", s.name));
            let f = fs::File::create(&path).map_err(file_err(&path))?;
            eval::write_scores_csv(f, &s.scores).map_err(err)?;
        }
    }
    if let Some(dir) = &a.report {
        eval::emit_report(dir, &scenarios, &eval::DEFAULT_FAR_TARGETS).map_err(err)?;
    }
    if a.out.is_none() && a.report.is_none() {
        let mut buf = Vec::new();
        eval::write_scores_csv(&mut buf, &scenarios[0].scores).map_err(err)?;
        stdout.write_all(&buf).map_err(err)?;
    } else {
        for s in &scenarios {
            let (g, i) = (s.scores.genuine_scores().len(), s.scores.imposter_scores().len());
            writeln!(stdout, "{}: {g} genuine, {i} imposter scores", s.name).map_err(err)?;
        }
    }
    Ok(())
}

fn report(a: ReportArgs, stdout: &mut dyn Write) -> Outcome {
    let labels = match &a.quality {
        Some(p) => Some(DatabaseManifest::load_json(p).map_err(err)?.quality_labels()),
        None => None,
    };
    let mut counts = BTreeMap::new();
    for spec in &a.templates {
        let (label, dir) = split_label(spec)?;
        counts.insert(label, dir);
    }
    let mut scenarios = Vec::new();
    for spec in &a.scores {
        let (label, path) = split_label(spec)?;
        let f = fs::File::open(&path).map_err(file_err(&path))?;
        let scores: ScoreSet = eval::read_scores_csv(
            f,
            Provenance { db_id: String::new(), extractor: label.clone(), matcher: String::new() },
        )
        .map_err(|e| format!("{}: {e}", path.display()))?;
        let stats = match counts.get(&label) {
            Some(dir) => {
                let pairs = scores.pairs();
                let images: BTreeSet<&ImageRef> = pairs.iter().flat_map(|p| [&p.probe, &p.gallery]).collect();
                let t = load_templates(dir, &images)?;
                Some(dataset::minutiae_count_stats(t.values()).map_err(err)?)
            }
            None => None,
        };
        let mut all = ReportScenario::new(label.clone(), scores.clone());
        all.counts = stats;
        if let Some(labels) = &labels {
            let (kept, fraction) = eval::filter_by_quality(&scores.pairs(), labels).map_err(err)?;
            all.rejection_fraction = Some(0.0);
            let mut filtered = ReportScenario::new(format!("{label}_fair_good"), scores.restricted_to(&kept));
            filtered.rejection_fraction = Some(fraction);
            filtered.counts = stats;
            scenarios.push(all);
            scenarios.push(filtered);
        } else {
            scenarios.push(all);
        }
    }
    let files = eval::emit_report(&a.out, &scenarios, &a.far).map_err(err)?;
    for f in files {
        writeln!(stdout, "{}", f.display()).map_err(err)?;
    }
    Ok(())
}

fn schedule(a: ScheduleArgs, stdout: &mut dyn Write) -> Outcome {
    let spec = match (a.fingers, a.impressions) {
        (Some(f), Some(k)) => counts_spec("DB", f, k),
        _ => resolve_manifest(&a.db)?.ok_or("schedule needs --db, --manifest or --fingers/--impressions")?.spec,
    };
    let s = marking::generate_marking_schedule(&spec, a.subjects, a.capacity).map_err(err)?;
    marking::validate_schedule(&s, &spec, a.subjects, a.capacity).map_err(|e| e.join("; "))?;
    let mut buf = Vec::new();
    marking::write_schedule_csv(&s, &mut buf).map_err(err)?;
    write_output(a.out.as_deref(), stdout, &buf)?;
    if a.out.is_some() {
        writeln!(stdout, "{} subjects, {} days", a.subjects, marking::schedule_days(&s)).map_err(err)?;
    }
    Ok(())
}

fn service_config(a: &ServiceArgs) -> Result<ServiceConfig, String> {
    let mut cfg = ServiceConfig::load(a.config.as_deref()).map_err(err)?;
    if let Some(root) = &a.data_root {
        cfg.data_root = root.clone();
    }
    Ok(cfg)
}

fn serve(a: ServeArgs) -> Outcome {
    let mut cfg = service_config(&a.service)?;
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(b) = &a.bind {
        cfg.bind = b.clone();
    }
    for spec in &a.import {
        let (db, dir) = split_label(spec)?;
        let db_spec = DbSpec::known(&db).ok_or_else(|| format!("unknown database `{db}`"))?;
        let scan = dataset::scan_database(&dir, &db_spec).map_err(err)?;
        for w in &scan.warnings {
            log::warn!("{db}: {w}");
        }
        MarkingService::add_database(&cfg.data_root, &scan.manifest).map_err(err)?;
    }
    let svc = MarkingService::open(cfg, Arc::new(SystemClock)).map_err(err)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(err)?;
    rt.block_on(marking::serve(Arc::new(svc))).map_err(err)
}

fn export(a: ExportArgs, stdout: &mut dyn Write) -> Outcome {
    let cfg = service_config(&a.service)?;
    let svc = MarkingService::open(cfg, Arc::new(SystemClock)).map_err(err)?;
    let archive = svc.export_database(&a.db).map_err(err)?;
    fs::write(&a.out, &archive.zip).map_err(file_err(&a.out))?;
    let s = &archive.summary;
    writeln!(stdout, "{}: {}/{} final, completeness {}", s.db_id, s.final_count, s.total, s.completeness).map_err(err)
}
