//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The real-data check reads `$RIDGEMARK_MANUAL_TEMPLATES/<DB_ID>/<f>_<i>.iso-fmr`
//! and is skipped when the variable is unset or no database is present.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ridgemark::codec::{decode_record, encode_record, encoded_len, FingerView, Minutia, MinutiaKind, MinutiaeRecord};
use ridgemark::dataset::{
    load_template_set, minutiae_count_stats, DatabaseManifest, DbSpec, ImageRef, PerceivedQuality,
};
use ridgemark::eval::{
    binomial_ci, compute_roc, count_kinds, execute_protocol, filter_by_quality, gar_at_far, generate_match_pairs,
    generate_pairs_for, MatchPair, PairKind, Provenance, ReferenceMatcher, ScoreSet,
};
use ridgemark::marking::{generate_marking_schedule, schedule_days, validate_schedule};
use ridgemark::matcher::{match_templates, MatcherParams};
use ridgemark::synth::{
    apply_motion, degrade, random_record, random_template, RigidMotion, SyntheticConfig, SyntheticDatabase,
};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

macro_rules! require {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Outcome::Fail(format!($($fmt)+));
        }
    };
}

fn main() {
    let checks: &[(&str, Duration, Check)] = &[
        ("pair-count-exactness", Duration::from_secs(1), pair_counts),
        ("ci-agreement", Duration::from_secs(1), ci_agreement),
        ("codec-soundness", Duration::from_secs(5), codec_soundness),
        ("matcher-properties", Duration::from_secs(120), matcher_properties),
        ("headline-ordering", Duration::from_secs(300), headline_ordering),
        ("quality-rejection", Duration::from_secs(300), quality_rejection),
        ("schedule-validity", Duration::from_secs(1), schedule_validity),
        ("real-data-count-statistics", Duration::from_secs(300), real_data_fixture),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Outcome::Fail(format!("panicked: {}", panic_message(&e))));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Outcome::Pass(d) if elapsed > *budget => {
                Outcome::Fail(format!("{d}; took {:.2} s, budget {:.0} s", elapsed.as_secs_f64(), budget.as_secs_f64()))
            }
            o => o,
        };
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Skip(d) => ("SKIP", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {name:<28} {:>8.3} s  {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criterion(s) failed");
        std::process::exit(1);
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}

/// Every ordered pair of distinct images of an F×K grid, classified by
/// whether the two images share a finger.
fn brute_force_pairs(f: u16, k: u16) -> BTreeSet<(ImageRef, ImageRef, PairKind)> {
    let images: Vec<ImageRef> = (1..=f).flat_map(|a| (1..=k).map(move |b| ImageRef::new("D", a, b))).collect();
    let mut out = BTreeSet::new();
    for a in &images {
        for b in &images {
            if a != b {
                let kind = if a.finger == b.finger { PairKind::Genuine } else { PairKind::Imposter };
                out.insert((a.clone(), b.clone(), kind));
            }
        }
    }
    out
}

fn pair_counts() -> Outcome {
    let pairs = generate_match_pairs(&DatabaseManifest::synthetic(DbSpec::fvc2002_db1a())).unwrap();
    let (g, i) = count_kinds(&pairs);
    require!((g, i) == (5_600, 633_600), "FVC shape gave {g} genuine, {i} imposter");
    for f in 1..=5 {
        for k in 1..=5 {
            let generated = generate_pairs_for("D", f, k);
            let set: BTreeSet<_> = generated.iter().map(|p| (p.probe.clone(), p.gallery.clone(), p.kind)).collect();
            require!(set.len() == generated.len(), "F={f} K={k}: duplicate pairs");
            require!(set == brute_force_pairs(f, k), "F={f} K={k}: differs from brute force");
        }
    }
    Outcome::Pass(format!("{g} genuine, {i} imposter; F,K <= 5 equal brute force"))
}

fn ci_agreement() -> Outcome {
    let n = 5600;
    let (lo, hi) = binomial_ci(0.900, n).unwrap();
    let oracle = 1.96 * (0.9f64 * 0.1 / n as f64).sqrt();
    require!(((hi - lo) / 2.0 - oracle).abs() < 1e-12, "half-width {} != {oracle}", (hi - lo) / 2.0);
    let shown = (format!("{:.1}", lo * 100.0), format!("{:.1}", hi * 100.0));
    require!(shown == ("89.2".into(), "90.8".into()), "p=0.900 gives [{}, {}]", shown.0, shown.1);

    let (lo, hi) = binomial_ci(0.991, n).unwrap();
    // reference interval [98.8, 99.4] around 99.1
    let (table_lo, table_hi) = (0.991 - 0.988, 0.994 - 0.991);
    let (dl, dh) = ((0.991 - lo) * 100.0, (hi - 0.991) * 100.0);
    let worst = (dl - table_lo * 100.0).abs().max((dh - table_hi * 100.0).abs());
    ensure(
        worst <= 0.1,
        format!("p=0.900 -> [{}%, {}%]; p=0.991 half-width {dl:.3} pp vs 0.3 pp (diff {worst:.3})", shown.0, shown.1),
    )
}

fn codec_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);
    for i in 0..1000 {
        let r = random_record(&mut rng);
        let bytes = match encode_record(&r) {
            Ok(b) => b,
            Err(e) => return Outcome::Fail(format!("record {i}: {e}")),
        };
        let length_field = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
        require!(length_field == bytes.len(), "record {i}: length field {length_field} != {}", bytes.len());
        require!(decode_record(&bytes).as_ref() == Ok(&r), "record {i}: round trip differs");
    }

    let golden = common::golden_bytes();
    if let Err(e) = common::check_against_table(&golden) {
        return Outcome::Fail(format!("golden fixture: {e}"));
    }
    require!(decode_record(&golden).as_ref() == Ok(&common::golden_record()), "golden fixture decodes differently");

    let m = |i: u16| Minutia { kind: MinutiaKind::Ending, x: 5 * i, y: 4 * i, angle_units: i as u8, quality: 50 };
    let rec = MinutiaeRecord::new(388, 374, 500).with_view(FingerView::new(1, (0..39).map(m).collect()));
    let len = encode_record(&rec).unwrap().len();
    require!(len == 264 && encoded_len(&rec) == len, "M=39 encodes to {len} bytes");
    Outcome::Pass(format!(
        "1000 round trips; golden fixture ({} bytes) matches table; M=39 -> {len} bytes",
        golden.len()
    ))
}

fn record(minutiae: Vec<Minutia>, width: u16, height: u16) -> MinutiaeRecord {
    MinutiaeRecord::new(width, height, 500).with_view(FingerView::new(1, minutiae))
}

fn score(a: &MinutiaeRecord, b: &MinutiaeRecord) -> f64 {
    match_templates(a, b, &MatcherParams::default()).unwrap().score
}

fn matcher_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3A7C4);
    let (w, h) = (388, 374);

    for t in 0..100 {
        let n = rng.gen_range(4..=60);
        let r = record(random_template(&mut rng, n, w, h), w, h);
        let s = score(&r, &r);
        require!(s == 1.0, "self-match {t} ({n} minutiae) scored {s}");
    }

    // Templates are moved into a large canvas so no minutia leaves it.
    const CANVAS: u16 = 2000;
    const OFFSET: u16 = 800;
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let n = rng.gen_range(20..=50);
        let base: Vec<Minutia> = random_template(&mut rng, n, w, h)
            .into_iter()
            .map(|m| Minutia { x: m.x + OFFSET, y: m.y + OFFSET, ..m })
            .collect();
        let motion = RigidMotion {
            rotation: rng.gen_range(-180.0..180.0),
            translation: (rng.gen_range(-400.0..=400.0), rng.gen_range(-400.0..=400.0)),
            center: (rng.gen_range(0.0..f64::from(CANVAS)), rng.gen_range(0.0..f64::from(CANVAS))),
        };
        let moved = apply_motion(&base, &motion, CANVAS, CANVAS);
        if moved.len() != base.len() {
            continue;
        }
        let reference = record(base, CANVAS, CANVAS);
        let d = (score(&reference, &reference) - score(&reference, &record(moved, CANVAS, CANVAS))).abs();
        require!(d <= 0.02, "rigid motion {t} ({motion:?}) changed the score by {d}");
        worst = worst.max(d);
    }

    let levels = [0.0, 0.1, 0.25, 0.5];
    let mut means = Vec::new();
    for &f in &levels {
        let mut rng = ChaCha8Rng::seed_from_u64(0xDE6);
        let mut total = 0.0;
        for _ in 0..100 {
            let n = rng.gen_range(28..=44);
            let t = random_template(&mut rng, n, w, h);
            let noisy = degrade(&mut rng, &t, f, w, h);
            total += score(&record(t, w, h), &record(noisy, w, h));
        }
        means.push(total / 100.0);
    }
    let monotone = means.windows(2).all(|p| p[0] >= p[1]);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    ensure(
        monotone,
        format!(
            "self-match 1.0 x100; max rigid-motion deviation {worst:.4}; mean score at 0/10/25/50% noise: {}",
            shown.join(", ")
        ),
    )
}

fn scores_for(templates: &BTreeMap<ImageRef, MinutiaeRecord>, pairs: &[MatchPair]) -> ScoreSet {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    execute_protocol(pairs, templates, &ReferenceMatcher::default(), workers, Provenance::default()).unwrap()
}

fn gars(scores: &ScoreSet, fars: &[f64]) -> Vec<f64> {
    let roc = compute_roc(scores).unwrap();
    fars.iter().map(|&far| gar_at_far(&roc, scores, far).unwrap().gar).collect()
}

/// Impressions with partial overlap and visible jitter, so that neither
/// scenario saturates at the FAR targets.
fn hard_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        fingers: 10,
        impressions: 8,
        max_rotation: 25.0,
        max_translation: 70.0,
        jitter_px: 5,
        jitter_units: 5,
        seed,
        ..Default::default()
    }
}

fn headline_ordering() -> Outcome {
    let db = SyntheticDatabase::generate(hard_config(0xF18));
    let pairs = generate_match_pairs(&db.manifest).unwrap();
    let degraded = db.degraded(0xBAD, |_| 0.5);
    let fars = [1e-3, 1e-2, 1e-1];
    let clean = gars(&scores_for(&db.templates, &pairs), &fars);
    let noisy = gars(&scores_for(&degraded, &pairs), &fars);
    let ok = clean.iter().zip(&noisy).all(|(c, n)| c >= n);
    let cells: Vec<String> =
        fars.iter().zip(clean.iter().zip(&noisy)).map(|(f, (c, n))| format!("FAR {f:e}: {c:.4} vs {n:.4}")).collect();
    ensure(ok, format!("clean vs degraded GAR: {}", cells.join("; ")))
}

fn quality_rejection() -> Outcome {
    // Exact fraction on the full-size protocol: 192 of 800 images are poor.
    let mut manifest = DatabaseManifest::synthetic(DbSpec::fvc2002_db1a());
    let mut rng = ChaCha8Rng::seed_from_u64(0x24);
    let mut order: Vec<usize> = (0..manifest.entries.len()).collect();
    order.shuffle(&mut rng);
    let poor: BTreeSet<usize> = order[..192].iter().copied().collect();
    for (i, e) in manifest.entries.iter_mut().enumerate() {
        e.perceived_quality = Some(if poor.contains(&i) { PerceivedQuality::Poor } else { PerceivedQuality::Good });
    }
    let pairs = generate_match_pairs(&manifest).unwrap();
    let (kept, fraction) = filter_by_quality(&pairs, &manifest.quality_labels()).unwrap();
    require!(fraction == 0.24, "rejection fraction {fraction}");
    let mut good_per_finger = BTreeMap::<u16, usize>::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        if !poor.contains(&i) {
            *good_per_finger.entry(e.image.finger).or_default() += 1;
        }
    }
    let genuine: usize = good_per_finger.values().map(|k| k * (k - 1)).sum();
    require!(count_kinds(&kept) == (genuine, 608 * 607 - genuine), "kept pairs {:?}", count_kinds(&kept));

    // Direction of effect: poor labels on the noisiest images.
    let db = SyntheticDatabase::generate(hard_config(0x9A1));
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E5);
    let noise: BTreeMap<ImageRef, f64> = db.templates.keys().map(|k| (k.clone(), rng.gen_range(0.0..0.6))).collect();
    let templates = db.degraded(0x5EE, |img| noise[img]);
    let mut by_noise: Vec<(&ImageRef, f64)> = noise.iter().map(|(k, &v)| (k, v)).collect();
    by_noise.sort_by(|a, b| b.1.total_cmp(&a.1));
    let n_poor = (0.24 * by_noise.len() as f64).round() as usize;
    let labels: BTreeMap<ImageRef, PerceivedQuality> = by_noise
        .iter()
        .enumerate()
        .map(|(i, (k, _))| ((*k).clone(), if i < n_poor { PerceivedQuality::Poor } else { PerceivedQuality::Fair }))
        .collect();
    let pairs = generate_match_pairs(&db.manifest).unwrap();
    let all = scores_for(&templates, &pairs);
    let (kept, fraction) = filter_by_quality(&pairs, &labels).unwrap();
    let filtered = all.restricted_to(&kept);
    let (u, f) = (gars(&all, &[1e-3])[0], gars(&filtered, &[1e-3])[0]);
    ensure(
        f >= u,
        format!("800 images, 192 poor -> 0.24 exactly; synthetic ({n_poor} poor, {fraction:.4}): GAR@1e-3 filtered {f:.4} vs unfiltered {u:.4}"),
    )
}

fn schedule_validity() -> Outcome {
    let spec = DbSpec::fvc2002_db1a();
    let schedule = generate_marking_schedule(&spec, 4, 14).unwrap();
    if let Err(v) = validate_schedule(&schedule, &spec, 4, 14) {
        return Outcome::Fail(format!("F=100 K=8 S=4: {}", v.join("; ")));
    }
    let days = schedule_days(&schedule);
    require!(days == 15, "F=100 K=8 S=4 spans {days} days");

    let mut rng = ChaCha8Rng::seed_from_u64(0x5C4E);
    let mut instances = 0;
    for f in 1..=8u16 {
        for s in 1..=8u16 {
            for k in (s..=8).step_by(usize::from(s)) {
                let capacity = rng.gen_range(1..=20);
                let spec = DbSpec { fingers: f, impressions_per_finger: k, ..DbSpec::fvc2002_db1a() };
                let schedule = generate_marking_schedule(&spec, s, capacity).unwrap();
                if let Err(v) = validate_schedule(&schedule, &spec, s, capacity) {
                    return Outcome::Fail(format!("F={f} K={k} S={s} cap={capacity}: {}", v.join("; ")));
                }
                instances += 1;
            }
        }
    }
    Outcome::Pass(format!("100/8/4/14 valid over {days} days; {instances} instances with F,K,S <= 8 valid"))
}

/// Reference count statistics of manually marked templates: mean, std, min, max.
const MANUAL_ROWS: [(&str, f64, f64, usize, usize); 4] = [
    ("FVC2002_DB1A", 39.1, 11.4, 9, 92),
    ("FVC2002_DB3A", 23.8, 7.6, 6, 49),
    ("FVC2004_DB1A", 41.0, 12.6, 11, 80),
    ("FVC2004_DB3A", 40.8, 11.9, 11, 76),
];

fn real_data_fixture() -> Outcome {
    let Some(root) = std::env::var_os("RIDGEMARK_MANUAL_TEMPLATES").map(PathBuf::from) else {
        return Outcome::Skip("RIDGEMARK_MANUAL_TEMPLATES is not set".into());
    };
    let mut checked = Vec::new();
    for (db, mean, std, min, max) in MANUAL_ROWS {
        let dir = root.join(db);
        if !dir.is_dir() {
            continue;
        }
        let manifest = DatabaseManifest::synthetic(DbSpec::known(db).unwrap());
        let set = load_template_set(&manifest, &dir);
        require!(
            set.missing.is_empty() && set.diagnostics.is_empty(),
            "{db}: {} missing, {} unreadable",
            set.missing.len(),
            set.diagnostics.len()
        );
        let s = minutiae_count_stats(set.records.values()).unwrap();
        let ok = (s.mean - mean).abs() <= 0.1
            && (s.std - std).abs() <= 0.1
            && s.min.abs_diff(min) == 0
            && s.max.abs_diff(max) == 0;
        let line = format!("{db} {:.2}/{:.2}/{}/{}", s.mean, s.std, s.min, s.max);
        require!(ok, "{line} vs {mean}/{std}/{min}/{max}");
        checked.push(line);
    }
    if checked.is_empty() {
        return Outcome::Skip(format!("no database directories under {}", root.display()));
    }
    Outcome::Pass(checked.join("; "))
}
