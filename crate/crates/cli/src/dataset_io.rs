//! On-disk dataset layout.
//!
//! ```text
//! <root>/subject_<k>/subject.json                  {"body_mass_kg": ...}
//! <root>/subject_<k>/session_<s>/signals.csv      t_sec + 16 channel columns
//! <root>/subject_<k>/session_<s>/metabolic.csv    t_sec, vo2_lpm, vco2_lpm
//! <root>/subject_<k>/session_<s>/segments.csv     activity, condition, start_sec, end_sec
//! ```
//!
//! All numeric fields are decimal text, UTF-8, comma-separated. Floats are
//! written with Rust's shortest round-trip formatting, so a write/read cycle
//! reproduces values bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use eebench_core::catalog::{self, Activity, ChannelId, Condition};
use eebench_core::dataset::{
    IngestOptions, MetabolicRecord, RawRecording, RawSegment, RawSession, SubjectRecording,
};

#[derive(Debug, Serialize, Deserialize)]
struct SubjectMeta {
    body_mass_kg: f64,
}

fn csv_split(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| anyhow!("{what}: cannot parse '{s}' as a number"))
}

/// Write raw recordings in the canonical layout.
pub fn write_dataset(root: &Path, recordings: &[RawRecording]) -> Result<()> {
    for raw in recordings {
        let subj_dir = root.join(format!("subject_{}", raw.subject_id));
        fs::create_dir_all(&subj_dir)
            .with_context(|| format!("creating {}", subj_dir.display()))?;
        let meta = SubjectMeta { body_mass_kg: raw.body_mass_kg };
        fs::write(subj_dir.join("subject.json"), serde_json::to_string_pretty(&meta)?)?;

        for sess in &raw.sessions {
            let dir = subj_dir.join(format!("session_{}", sess.session));
            fs::create_dir_all(&dir)?;

            let channels = catalog::input_channels();
            let mut signals = String::from("t_sec");
            for id in &channels {
                signals.push(',');
                signals.push_str(id.name());
            }
            signals.push('\n');
            for (i, t) in sess.signal_times.iter().enumerate() {
                signals.push_str(&format!("{t}"));
                for id in &channels {
                    let v = sess.signals[id][i];
                    signals.push_str(&format!(",{v}"));
                }
                signals.push('\n');
            }
            fs::write(dir.join("signals.csv"), signals)?;

            let mut metabolic = String::from("t_sec,vo2_lpm,vco2_lpm\n");
            for i in 0..sess.metabolic.timestamps.len() {
                metabolic.push_str(&format!(
                    "{},{},{}\n",
                    sess.metabolic.timestamps[i], sess.metabolic.vo2[i], sess.metabolic.vco2[i]
                ));
            }
            fs::write(dir.join("metabolic.csv"), metabolic)?;

            let mut segments = String::from("activity,condition,start_sec,end_sec\n");
            for seg in &sess.segments {
                segments.push_str(&format!(
                    "{},{},{},{}\n",
                    seg.activity.name(),
                    seg.condition.label(),
                    seg.start_sec,
                    seg.end_sec
                ));
            }
            fs::write(dir.join("segments.csv"), segments)?;
        }
    }
    Ok(())
}

fn read_signals_csv(path: &Path, subject: u32) -> Result<(Vec<f64>, BTreeMap<ChannelId, Vec<f64>>)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("subject {subject}: reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("subject {subject}: empty signals.csv"))?;
    let cols = csv_split(header);
    if cols.first() != Some(&"t_sec") {
        bail!("subject {subject}: signals.csv must start with a t_sec column");
    }
    // Every canonical channel must be present; the error names the first
    // missing one.
    let mut col_of: BTreeMap<ChannelId, usize> = BTreeMap::new();
    for id in catalog::input_channels() {
        let idx = cols
            .iter()
            .position(|c| *c == id.name())
            .ok_or_else(|| anyhow!("subject {subject}: missing channel '{}' in signals.csv", id.name()))?;
        col_of.insert(id, idx);
    }

    let mut times = Vec::new();
    let mut channels: BTreeMap<ChannelId, Vec<f64>> =
        col_of.keys().map(|&id| (id, Vec::new())).collect();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = csv_split(line);
        if fields.len() != cols.len() {
            bail!(
                "subject {subject}: signals.csv line {} has {} fields, expected {}",
                ln + 2,
                fields.len(),
                cols.len()
            );
        }
        times.push(parse_f64(fields[0], "t_sec")?);
        for (&id, &idx) in &col_of {
            channels.get_mut(&id).unwrap().push(parse_f64(fields[idx], id.name())?);
        }
    }
    Ok((times, channels))
}

fn read_metabolic_csv(path: &Path, subject: u32) -> Result<MetabolicRecord> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("subject {subject}: reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("subject {subject}: empty metabolic.csv"))?;
    if csv_split(header) != vec!["t_sec", "vo2_lpm", "vco2_lpm"] {
        bail!("subject {subject}: metabolic.csv header must be t_sec,vo2_lpm,vco2_lpm");
    }
    let mut rec = MetabolicRecord { timestamps: vec![], vo2: vec![], vco2: vec![] };
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = csv_split(line);
        if f.len() != 3 {
            bail!("subject {subject}: metabolic.csv line {} malformed", ln + 2);
        }
        rec.timestamps.push(parse_f64(f[0], "t_sec")?);
        rec.vo2.push(parse_f64(f[1], "vo2_lpm")?);
        rec.vco2.push(parse_f64(f[2], "vco2_lpm")?);
    }
    Ok(rec)
}

fn read_segments_csv(path: &Path, subject: u32) -> Result<Vec<RawSegment>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("subject {subject}: reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("subject {subject}: empty segments.csv"))?;
    if csv_split(header) != vec!["activity", "condition", "start_sec", "end_sec"] {
        bail!("subject {subject}: segments.csv header must be activity,condition,start_sec,end_sec");
    }
    let mut segments = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = csv_split(line);
        if f.len() != 4 {
            bail!("subject {subject}: segments.csv line {} malformed", ln + 2);
        }
        let activity = Activity::parse(f[0])
            .map_err(|e| anyhow!("subject {subject}: segments.csv line {}: {e}", ln + 2))?;
        let condition = Condition::parse(f[1])
            .map_err(|e| anyhow!("subject {subject}: segments.csv line {}: {e}", ln + 2))?;
        segments.push(RawSegment {
            activity,
            condition,
            start_sec: parse_f64(f[2], "start_sec")?,
            end_sec: parse_f64(f[3], "end_sec")?,
        });
    }
    Ok(segments)
}

fn numbered_dirs(root: &Path, prefix: &str) -> Result<Vec<(u32, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(num) = name.strip_prefix(prefix) {
            if let Ok(k) = num.parse::<u32>() {
                out.push((k, entry.path()));
            }
        }
    }
    out.sort_by_key(|(k, _)| *k);
    Ok(out)
}

/// Read a raw recording tree without ingesting.
pub fn read_raw_dataset(root: &Path) -> Result<Vec<RawRecording>> {
    let subjects = numbered_dirs(root, "subject_")?;
    if subjects.is_empty() {
        bail!("no subject_<k> directories under {}", root.display());
    }
    let mut out = Vec::new();
    for (subject_id, dir) in subjects {
        let meta_path = dir.join("subject.json");
        let meta: SubjectMeta = serde_json::from_str(
            &fs::read_to_string(&meta_path)
                .with_context(|| format!("subject {subject_id}: reading {}", meta_path.display()))?,
        )
        .with_context(|| format!("subject {subject_id}: parsing subject.json"))?;

        let sessions = numbered_dirs(&dir, "session_")?;
        if sessions.is_empty() {
            bail!("subject {subject_id}: no session_<s> directories");
        }
        let mut raw_sessions = Vec::new();
        for (session, sdir) in sessions {
            let (signal_times, signals) = read_signals_csv(&sdir.join("signals.csv"), subject_id)?;
            let metabolic = read_metabolic_csv(&sdir.join("metabolic.csv"), subject_id)?;
            let segments = read_segments_csv(&sdir.join("segments.csv"), subject_id)?;
            raw_sessions.push(RawSession {
                session: session as u8,
                signal_times,
                signals,
                metabolic,
                segments,
            });
        }
        out.push(RawRecording {
            subject_id,
            body_mass_kg: meta.body_mass_kg,
            sessions: raw_sessions,
        });
    }
    Ok(out)
}

/// Load and ingest a dataset tree into subject recordings.
pub fn load_dataset(root: &Path, opts: &IngestOptions) -> Result<Vec<SubjectRecording>> {
    read_raw_dataset(root)?
        .iter()
        .map(|raw| {
            SubjectRecording::from_raw(raw, opts)
                .map_err(|e| anyhow!("subject {}: {e}", raw.subject_id))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use eebench_core::synth::{generate_raw, Protocol, SubjectProfile};

    #[test]
    fn write_then_load_reproduces_channels_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let raws: Vec<RawRecording> = (1..=2)
            .map(|k| generate_raw(&SubjectProfile::seeded(k, 3), &Protocol::short()).unwrap())
            .collect();
        write_dataset(dir.path(), &raws).unwrap();

        let loaded = read_raw_dataset(dir.path()).unwrap();
        assert_eq!(raws, loaded, "raw round trip must be bit-exact");

        let direct: Vec<SubjectRecording> = raws
            .iter()
            .map(|r| SubjectRecording::from_raw(r, &IngestOptions::default()).unwrap())
            .collect();
        let from_disk = load_dataset(dir.path(), &IngestOptions::default()).unwrap();
        assert_eq!(direct, from_disk);
    }

    #[test]
    fn missing_channel_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let raw = generate_raw(&SubjectProfile::seeded(1, 3), &Protocol::short()).unwrap();
        write_dataset(dir.path(), &[raw]).unwrap();

        // Strip the heart_rate column from signals.csv.
        let path = dir.path().join("subject_1/session_1/signals.csv");
        let text = fs::read_to_string(&path).unwrap();
        let stripped: Vec<String> = text
            .lines()
            .map(|line| {
                let mut fields: Vec<&str> = line.split(',').collect();
                fields.remove(13); // t_sec + channels 0..12 precedes heart_rate
                fields.join(",")
            })
            .collect();
        fs::write(&path, stripped.join("\n")).unwrap();

        let err = load_dataset(dir.path(), &IngestOptions::default()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("heart_rate"), "{msg}");
        assert!(msg.contains("subject 1"), "{msg}");
    }

    #[test]
    fn empty_root_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path(), &IngestOptions::default()).is_err());
    }
}
