//! Assignment of a database's images to human subjects, day by day.
//!
//! Subject `s` (1-based) receives impressions `s, s + S, s + 2S, ...` of
//! every finger. Its images are ordered by impression round and then by
//! finger, and packed into days of at most `min(capacity, F)` images. Two
//! images of one finger are `F` positions apart in that order, so they can
//! never land on the same day.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{DbSpec, ImageRef};

/// Images one subject works on during one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkingAssignment {
    pub subject_id: u16,
    /// 1-based.
    pub day_index: u32,
    pub images: Vec<ImageRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("{impressions} impressions per finger cannot be split evenly among {subjects} subjects")]
    Indivisible { impressions: u16, subjects: u16 },
    #[error("at least one subject is required")]
    NoSubjects,
    #[error("daily capacity must be at least 1")]
    ZeroCapacity,
    #[error("database has no images")]
    EmptyDatabase,
}

/// Build the schedule for every subject, ordered by subject then day.
pub fn generate_marking_schedule(
    spec: &DbSpec,
    subjects: u16,
    capacity: usize,
) -> Result<Vec<MarkingAssignment>, ScheduleError> {
    if subjects == 0 {
        return Err(ScheduleError::NoSubjects);
    }
    if capacity == 0 {
        return Err(ScheduleError::ZeroCapacity);
    }
    if spec.fingers == 0 || spec.impressions_per_finger == 0 {
        return Err(ScheduleError::EmptyDatabase);
    }
    if !spec.impressions_per_finger.is_multiple_of(subjects) {
        return Err(ScheduleError::Indivisible { impressions: spec.impressions_per_finger, subjects });
    }
    let per_day = capacity.min(usize::from(spec.fingers));
    let rounds = spec.impressions_per_finger / subjects;
    let mut out = Vec::new();
    for s in 1..=subjects {
        let images: Vec<ImageRef> = (0..rounds)
            .flat_map(|r| (1..=spec.fingers).map(move |f| (f, s + r * subjects)))
            .map(|(f, i)| ImageRef::new(spec.db_id.clone(), f, i))
            .collect();
        for (d, chunk) in images.chunks(per_day).enumerate() {
            out.push(MarkingAssignment { subject_id: s, day_index: d as u32 + 1, images: chunk.to_vec() });
        }
    }
    Ok(out)
}

/// Number of working days the schedule spans.
pub fn schedule_days(schedule: &[MarkingAssignment]) -> u32 {
    schedule.iter().map(|a| a.day_index).max().unwrap_or(0)
}

/// Check a schedule against every assignment rule without reference to how
/// it was built. Returns one message per broken rule instance.
pub fn validate_schedule(
    schedule: &[MarkingAssignment],
    spec: &DbSpec,
    subjects: u16,
    capacity: usize,
) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    let total = usize::from(spec.fingers) * usize::from(spec.impressions_per_finger);
    if subjects == 0
        || !total.is_multiple_of(usize::from(subjects))
        || !spec.impressions_per_finger.is_multiple_of(subjects.max(1))
    {
        return Err(vec![format!("{total} images cannot be shared evenly by {subjects} subject(s)")]);
    }
    let per_subject = total / usize::from(subjects);
    let per_finger = spec.impressions_per_finger / subjects;

    let mut owner: BTreeMap<&ImageRef, u16> = BTreeMap::new();
    let mut slots: BTreeSet<(u16, u32)> = BTreeSet::new();
    let mut count: BTreeMap<u16, usize> = BTreeMap::new();
    let mut finger_count: BTreeMap<(u16, u16), u16> = BTreeMap::new();
    let mut finger_day: BTreeMap<(u16, u16, u32), &ImageRef> = BTreeMap::new();

    for a in schedule {
        if a.subject_id == 0 || a.subject_id > subjects {
            errors.push(format!("subject {} is not in 1..={subjects}", a.subject_id));
        }
        if a.day_index == 0 {
            errors.push(format!("subject {} has a day index of 0", a.subject_id));
        }
        if !slots.insert((a.subject_id, a.day_index)) {
            errors.push(format!("subject {} has two assignments for day {}", a.subject_id, a.day_index));
        }
        if a.images.len() > capacity {
            errors.push(format!(
                "subject {} day {} holds {} images, capacity is {capacity}",
                a.subject_id,
                a.day_index,
                a.images.len()
            ));
        }
        for img in &a.images {
            if img.db_id != spec.db_id
                || img.finger == 0
                || img.finger > spec.fingers
                || img.impression == 0
                || img.impression > spec.impressions_per_finger
            {
                errors.push(format!("{img} is not an image of {}", spec.db_id));
                continue;
            }
            if let Some(prev) = owner.insert(img, a.subject_id) {
                errors.push(format!("{img} is assigned to subjects {prev} and {}", a.subject_id));
            }
            *count.entry(a.subject_id).or_default() += 1;
            *finger_count.entry((a.subject_id, img.finger)).or_default() += 1;
            if let Some(other) = finger_day.insert((a.subject_id, img.finger, a.day_index), img) {
                errors.push(format!(
                    "subject {} sees {other} and {img} of the same finger on day {}",
                    a.subject_id, a.day_index
                ));
            }
        }
    }
    if owner.len() != total {
        errors.push(format!("{} of {total} images are assigned", owner.len()));
    }
    for s in 1..=subjects {
        let n = count.get(&s).copied().unwrap_or(0);
        if n != per_subject {
            errors.push(format!("subject {s} has {n} images, expected {per_subject}"));
        }
        for f in 1..=spec.fingers {
            let n = finger_count.get(&(s, f)).copied().unwrap_or(0);
            if n != per_finger {
                errors.push(format!("subject {s} has {n} impressions of finger {f}, expected {per_finger}"));
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// `subject,day,db,finger,impression`, one row per image.
pub fn write_schedule_csv(schedule: &[MarkingAssignment], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject", "day", "db", "finger", "impression"])?;
    for a in schedule {
        for img in &a.images {
            w.write_record([
                a.subject_id.to_string(),
                a.day_index.to_string(),
                img.db_id.clone(),
                img.finger.to_string(),
                img.impression.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SensorKind;
    use proptest::prelude::*;

    fn spec(fingers: u16, impressions: u16) -> DbSpec {
        DbSpec {
            db_id: "T".into(),
            sensor_kind: SensorKind::Optical,
            image_width: 100,
            image_height: 100,
            dpi: 500,
            fingers,
            impressions_per_finger: impressions,
        }
    }

    #[test]
    fn four_subjects_fifteen_days() {
        let db = DbSpec::fvc2002_db1a();
        let s = generate_marking_schedule(&db, 4, 14).unwrap();
        assert_eq!(validate_schedule(&s, &db, 4, 14), Ok(()));
        assert_eq!(schedule_days(&s), 15);
        for subject in 1..=4 {
            let n: usize = s.iter().filter(|a| a.subject_id == subject).map(|a| a.images.len()).sum();
            assert_eq!(n, 200);
        }
        // subject 2 works on impressions 2 and 6
        let imps: BTreeSet<u16> =
            s.iter().filter(|a| a.subject_id == 2).flat_map(|a| a.images.iter().map(|i| i.impression)).collect();
        assert_eq!(imps, BTreeSet::from([2, 6]));
    }

    #[test]
    fn small_instance_by_hand() {
        let db = spec(2, 4);
        let s = generate_marking_schedule(&db, 2, 2).unwrap();
        let im = |f, i| ImageRef::new("T", f, i);
        assert_eq!(
            s,
            vec![
                MarkingAssignment { subject_id: 1, day_index: 1, images: vec![im(1, 1), im(2, 1)] },
                MarkingAssignment { subject_id: 1, day_index: 2, images: vec![im(1, 3), im(2, 3)] },
                MarkingAssignment { subject_id: 2, day_index: 1, images: vec![im(1, 2), im(2, 2)] },
                MarkingAssignment { subject_id: 2, day_index: 2, images: vec![im(1, 4), im(2, 4)] },
            ]
        );
        assert_eq!(validate_schedule(&s, &db, 2, 2), Ok(()));
    }

    #[test]
    fn capacity_above_finger_count_is_clamped() {
        let db = spec(3, 4);
        let s = generate_marking_schedule(&db, 2, 10).unwrap();
        assert!(s.iter().all(|a| a.images.len() <= 3));
        assert_eq!(validate_schedule(&s, &db, 2, 10), Ok(()));
    }

    #[test]
    fn errors() {
        assert_eq!(
            generate_marking_schedule(&spec(100, 8), 3, 14),
            Err(ScheduleError::Indivisible { impressions: 8, subjects: 3 })
        );
        assert_eq!(generate_marking_schedule(&spec(100, 8), 4, 0), Err(ScheduleError::ZeroCapacity));
        assert_eq!(generate_marking_schedule(&spec(100, 8), 0, 1), Err(ScheduleError::NoSubjects));
    }

    #[test]
    fn validator_rejects_same_finger_same_day() {
        let db = spec(2, 4);
        let mut s = generate_marking_schedule(&db, 2, 2).unwrap();
        // swap so that day 1 holds both impressions of finger 1
        let moved = s[1].images[0].clone();
        s[1].images[0] = s[0].images[1].clone();
        s[0].images[1] = moved;
        let e = validate_schedule(&s, &db, 2, 2).unwrap_err();
        assert!(e.iter().any(|m| m.contains("same finger")), "{e:?}");
    }

    #[test]
    fn validator_rejects_overlap_and_overload() {
        let db = spec(2, 4);
        let mut s = generate_marking_schedule(&db, 2, 2).unwrap();
        s[2].images[0] = s[0].images[0].clone();
        let e = validate_schedule(&s, &db, 2, 2).unwrap_err();
        assert!(e.iter().any(|m| m.contains("assigned to subjects")));
        let s = generate_marking_schedule(&db, 2, 2).unwrap();
        assert!(validate_schedule(&s, &db, 2, 1).is_err());
    }

    #[test]
    fn csv_rows() {
        let s = generate_marking_schedule(&spec(2, 4), 2, 2).unwrap();
        let mut out = Vec::new();
        write_schedule_csv(&s, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert_eq!(text.lines().nth(1).unwrap(), "1,1,T,1,1");
    }

    proptest! {
        #[test]
        fn generated_schedules_validate(f in 1u16..=8, s in 1u16..=8, mult in 1u16..=8, cap in 1usize..=20) {
            let k = s * mult;
            prop_assume!(k <= 8);
            let db = spec(f, k);
            let sched = generate_marking_schedule(&db, s, cap).unwrap();
            prop_assert_eq!(validate_schedule(&sched, &db, s, cap), Ok(()));
        }

        #[test]
        fn same_day_mutation_is_caught(f in 2u16..=8, cap in 2usize..=8, pick in 0usize..64) {
            let db = spec(f, 4);
            let mut sched = generate_marking_schedule(&db, 2, cap).unwrap();
            // put a second impression of some finger onto the day of the first
            let subject1: Vec<usize> = (0..sched.len()).filter(|&i| sched[i].subject_id == 1).collect();
            let first = subject1[pick % subject1.len()];
            let victim = sched[first].images[0].clone();
            let (day, pos) = subject1
                .iter()
                .flat_map(|&d| (0..sched[d].images.len()).map(move |p| (d, p)))
                .find(|&(d, p)| d != first && sched[d].images[p].finger == victim.finger)
                .unwrap();
            let other = sched[day].images[pos].clone();
            sched[first].images.push(other);
            sched[day].images.remove(pos);
            prop_assert!(validate_schedule(&sched, &db, 2, cap + 1).is_err());
        }
    }
}
