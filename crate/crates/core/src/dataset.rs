//! Dataset manifests, their split-hygiene checks and reverberant corpus synthesis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{convolve_rir, read_audio, resample, write_wav, AudioBuffer};
use crate::error::{Error, Result};
use crate::synth::{is_spec, parse_speech_spec, synth_speech, RirSpec};

pub const MANIFEST_HEADER: [&str; 5] = ["speech_path", "rir", "room", "condition", "split"];
pub const DATASET_HEADER: [&str; 6] = ["path", "room", "condition", "split", "speech_path", "rir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Near,
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Which recording conditions an experiment side draws from; `Mixed` takes both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldSelection {
    Near,
    Far,
    Mixed,
}

impl FieldSelection {
    pub fn admits(self, c: Condition) -> bool {
        matches!(
            (self, c),
            (Self::Mixed, _) | (Self::Near, Condition::Near) | (Self::Far, Condition::Far)
        )
    }
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok(Self::$variant),)+
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($ty), " {:?} (expected one of: ", $($text, " ",)+ ")"),
                        other
                    ))),
                }
            }
        }
    };
}

text_enum!(Condition { Near => "near", Far => "far" });
text_enum!(Split { Train => "train", Test => "test" });
text_enum!(FieldSelection { Near => "near", Far => "far", Mixed => "mixed" });

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub speech: String,
    /// Path to a WAV file, or a `synth:` impulse response spec.
    pub rir: String,
    pub room: String,
    pub condition: Condition,
    pub split: Split,
}

/// Dry speech paired with rooms; relative paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub sample_rate_hz: u32,
    pub base_dir: PathBuf,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(Error::ManifestInvalid(format!(
            "{}: header must be {}",
            path.display(),
            want.join(",")
        )));
    }
    Ok(())
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, sample_rate_hz: u32, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            entries,
            sample_rate_hz,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn read_csv(path: impl AsRef<Path>, sample_rate_hz: u32) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        check_header(path, r.headers()?, &MANIFEST_HEADER)?;
        let mut entries = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).unwrap_or("").trim().to_string();
            let row_err = |e: Error| Error::ManifestInvalid(format!("{} row {}: {e}", path.display(), i + 1));
            entries.push(ManifestEntry {
                speech: field(0),
                rir: field(1),
                room: field(2),
                condition: field(3).parse().map_err(row_err)?,
                split: field(4).parse().map_err(row_err)?,
            });
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(entries, sample_rate_hz, base)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(MANIFEST_HEADER)?;
        for e in &self.entries {
            w.write_record([&e.speech, &e.rir, &e.room, &e.condition.to_string(), &e.split.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Rejects empty manifests, speech shared across splits or rooms, and rooms with unequal
    /// counts within any (split, condition) group.
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::ManifestInvalid(msg));
        if self.entries.is_empty() {
            return invalid("manifest has no entries".into());
        }
        let mut first_seen: BTreeMap<&str, (usize, &ManifestEntry)> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.speech.is_empty() || e.rir.is_empty() || e.room.is_empty() {
                return invalid(format!("row {}: empty field", i + 1));
            }
            match first_seen.get(e.speech.as_str()) {
                Some(&(j, prev)) if prev.split != e.split => {
                    return invalid(format!(
                        "row {}: speech {:?} is in split {} but row {} puts it in {}",
                        i + 1,
                        e.speech,
                        e.split,
                        j + 1,
                        prev.split
                    ));
                }
                Some(&(j, prev)) if prev.room != e.room => {
                    return invalid(format!(
                        "row {}: speech {:?} is paired with room {:?} but row {} pairs it with {:?}",
                        i + 1,
                        e.speech,
                        e.room,
                        j + 1,
                        prev.room
                    ));
                }
                Some(_) => {}
                None => {
                    first_seen.insert(&e.speech, (i, e));
                }
            }
        }
        let rooms: BTreeSet<&str> = self.entries.iter().map(|e| e.room.as_str()).collect();
        let mut counts: BTreeMap<(Split, Condition), BTreeMap<&str, usize>> = BTreeMap::new();
        for e in &self.entries {
            *counts.entry((e.split, e.condition)).or_default().entry(&e.room).or_default() += 1;
        }
        for ((split, condition), per_room) in &counts {
            let expected = per_room.values().copied().max().unwrap_or(0);
            for room in &rooms {
                let got = per_room.get(room).copied().unwrap_or(0);
                if got != expected {
                    return invalid(format!(
                        "room {room:?} has {got} {split}/{condition} entries, other rooms have {expected}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Speech-level split assignment (each speech item appears once).
    pub fn speech_split(&self) -> BTreeMap<&str, Split> {
        self.entries.iter().map(|e| (e.speech.as_str(), e.split)).collect()
    }
}

/// Loads dry speech from a WAV path or `synth:` spec, at the target rate.
pub fn load_speech(base: &Path, speech: &str, sample_rate_hz: u32) -> Result<AudioBuffer> {
    if is_spec(speech) {
        let (seed, seconds) = parse_speech_spec(speech)?;
        synth_speech(seconds, sample_rate_hz, seed)
    } else {
        resample(&read_audio(resolve(base, speech))?, sample_rate_hz)
    }
}

/// Loads an impulse response from a WAV path or `synth:` spec, at the target rate.
pub fn load_rir(base: &Path, rir: &str, sample_rate_hz: u32) -> Result<AudioBuffer> {
    if is_spec(rir) {
        RirSpec::parse(rir)?.generate(sample_rate_hz)
    } else {
        resample(&read_audio(resolve(base, rir))?, sample_rate_hz)
    }
}

/// A reverberant recording ready for the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub room: String,
    pub condition: Condition,
    pub split: Split,
    pub speech: String,
    pub rir: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut r = csv::Reader::from_path(path)?;
        check_header(path, r.headers()?, &DATASET_HEADER)?;
        let mut entries = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).unwrap_or("").trim().to_string();
            let row_err = |e: Error| Error::ManifestInvalid(format!("{} row {}: {e}", path.display(), i + 1));
            entries.push(DatasetEntry {
                path: resolve(&base, &field(0)),
                room: field(1),
                condition: field(2).parse().map_err(row_err)?,
                split: field(3).parse().map_err(row_err)?,
                speech: field(4),
                rir: field(5),
            });
        }
        if entries.is_empty() {
            return Err(Error::ManifestInvalid(format!("{}: no entries", path.display())));
        }
        Ok(Self { entries })
    }

    /// Paths are written relative to the CSV's directory when they lie beneath it.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(DATASET_HEADER)?;
        for e in &self.entries {
            let p = e.path.strip_prefix(base).unwrap_or(&e.path);
            w.write_record([
                p.to_string_lossy().as_ref(),
                &e.room,
                &e.condition.to_string(),
                &e.split.to_string(),
                &e.speech,
                &e.rir,
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn select(&self, split: Split, field: FieldSelection) -> Vec<&DatasetEntry> {
        self.entries
            .iter()
            .filter(|e| e.split == split && field.admits(e.condition))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomCount {
    pub room: String,
    pub condition: Condition,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub n_files: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub sample_rate_hz: u32,
    pub rooms: Vec<RoomCount>,
}

impl SynthReport {
    fn of(ds: &Dataset, sample_rate_hz: u32) -> Self {
        let mut per: BTreeMap<(String, Condition), (usize, usize)> = BTreeMap::new();
        for e in &ds.entries {
            let c = per.entry((e.room.clone(), e.condition)).or_default();
            match e.split {
                Split::Train => c.0 += 1,
                Split::Test => c.1 += 1,
            }
        }
        let n_train = ds.entries.iter().filter(|e| e.split == Split::Train).count();
        Self {
            n_files: ds.entries.len(),
            n_train,
            n_test: ds.entries.len() - n_train,
            sample_rate_hz,
            rooms: per
                .into_iter()
                .map(|((room, condition), (train, test))| RoomCount {
                    room,
                    condition,
                    train,
                    test,
                })
                .collect(),
        }
    }
}

fn file_stem_part(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Convolves every manifest entry and writes `<split>/<room>_<condition>_<row>.wav`,
/// `dataset.csv` and `report.json` under `out_dir`.
pub fn synth_dataset(manifest: &DatasetManifest, out_dir: impl AsRef<Path>) -> Result<(Dataset, SynthReport)> {
    manifest.validate()?;
    let out_dir = out_dir.as_ref();
    let fs = manifest.sample_rate_hz;
    let base = &manifest.base_dir;

    let rir_keys: BTreeSet<&str> = manifest.entries.iter().map(|e| e.rir.as_str()).collect();
    let rirs: BTreeMap<&str, AudioBuffer> = rir_keys
        .into_par_iter()
        .map(|k| load_rir(base, k, fs).map(|a| (k, a)))
        .collect::<Result<_>>()?;

    for split in [Split::Train, Split::Test] {
        let dir = out_dir.join(split.to_string());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let entries: Vec<DatasetEntry> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let speech = load_speech(base, &e.speech, fs)?;
            let wet = convolve_rir(&speech, &rirs[e.rir.as_str()])?;
            let name = format!("{}_{}_{:05}.wav", file_stem_part(&e.room), e.condition, i + 1);
            let path = out_dir.join(e.split.to_string()).join(name);
            write_wav(&path, &wet)?;
            Ok(DatasetEntry {
                path,
                room: e.room.clone(),
                condition: e.condition,
                split: e.split,
                speech: e.speech.clone(),
                rir: e.rir.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let dataset = Dataset { entries };
    dataset.write_csv(out_dir.join("dataset.csv"))?;
    let report = SynthReport::of(&dataset, fs);
    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&report_path, e))?;
    info!("wrote {} recordings ({} train, {} test)", report.n_files, report.n_train, report.n_test);
    Ok((dataset, report))
}
