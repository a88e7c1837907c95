use std::io::{Read, Write};

use super::{EvalError, MatchPair, PairKind, Provenance, ScoreSet, ScoredPair};
use crate::dataset::ImageRef;

fn csv_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Other(format!("csv: {e}"))
}

/// `probe,gallery,kind` with images written as `db/finger_impression`.
pub fn write_pairs_csv<W: Write>(out: W, pairs: &[MatchPair]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["probe", "gallery", "kind"]).map_err(csv_err)?;
    for p in pairs {
        w.write_record([p.probe.to_string(), p.gallery.to_string(), p.kind.as_str().to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// `probe,gallery,kind,score`; scores use the shortest exact decimal form.
pub fn write_scores_csv<W: Write>(out: W, scores: &ScoreSet) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["probe", "gallery", "kind", "score"]).map_err(csv_err)?;
    for e in &scores.entries {
        w.write_record([
            e.pair.probe.to_string(),
            e.pair.gallery.to_string(),
            e.pair.kind.as_str().to_string(),
            e.score.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn parse_pair(row: &csv::StringRecord, line: usize) -> Result<MatchPair, EvalError> {
    let bad = |reason: String| EvalError::Other(format!("line {line}: {reason}"));
    let probe: ImageRef = row.get(0).unwrap_or_default().parse().map_err(bad)?;
    let gallery: ImageRef = row.get(1).unwrap_or_default().parse().map_err(bad)?;
    let pair = MatchPair::new(probe, gallery);
    let kind = match row.get(2) {
        Some("genuine") => PairKind::Genuine,
        Some("imposter") => PairKind::Imposter,
        other => return Err(bad(format!("bad kind {other:?}"))),
    };
    if kind != pair.kind {
        return Err(bad(format!("kind `{}` contradicts the image ids", kind.as_str())));
    }
    if pair.probe == pair.gallery {
        return Err(bad("probe and gallery are the same image".into()));
    }
    Ok(pair)
}

pub fn read_pairs_csv<R: Read>(input: R) -> Result<Vec<MatchPair>, EvalError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    r.records().enumerate().map(|(i, row)| parse_pair(&row.map_err(csv_err)?, i + 2)).collect()
}

pub fn read_scores_csv<R: Read>(input: R, provenance: Provenance) -> Result<ScoreSet, EvalError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut entries = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let pair = parse_pair(&row, i + 2)?;
        let score: f64 = row
            .get(3)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| EvalError::Other(format!("line {}: bad score", i + 2)))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(EvalError::ScoreRange { probe: pair.probe, gallery: pair.gallery, score });
        }
        entries.push(ScoredPair { pair, score });
    }
    Ok(ScoreSet { provenance, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::generate_pairs_for;

    #[test]
    fn pairs_round_trip() {
        let pairs = generate_pairs_for("FVC2002_DB1A", 2, 3);
        let mut buf = Vec::new();
        write_pairs_csv(&mut buf, &pairs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("probe,gallery,kind\nFVC2002_DB1A/1_1,FVC2002_DB1A/1_2,genuine\n"));
        assert_eq!(read_pairs_csv(buf.as_slice()).unwrap(), pairs);
    }

    #[test]
    fn scores_round_trip_exactly() {
        let pairs = generate_pairs_for("D", 2, 2);
        let entries = pairs
            .into_iter()
            .enumerate()
            .map(|(i, pair)| ScoredPair { pair, score: (i as f64 + 0.1) / 13.0 })
            .collect();
        let s = ScoreSet { provenance: Provenance::default(), entries };
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &s).unwrap();
        assert_eq!(read_scores_csv(buf.as_slice(), Provenance::default()).unwrap(), s);
    }

    #[test]
    fn rejects_inconsistent_kind() {
        let text = "probe,gallery,kind\nD/1_1,D/2_1,genuine\n";
        assert!(read_pairs_csv(text.as_bytes()).is_err());
        let text = "probe,gallery,kind,score\nD/1_1,D/2_1,imposter,1.5\n";
        assert!(read_scores_csv(text.as_bytes(), Provenance::default()).is_err());
    }
}
