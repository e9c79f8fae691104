//! Append-only filesystem archive of evaluated candidates, plus the
//! demonstration store.
//!
//! Layout:
//!
//! ```text
//! <root>/index.jsonl
//! <root>/<iteration>/<candidate_id>/{source.harness, summary, trajectories/, traces/, requests.jsonl}
//! <root>/demos/<seed>/<n>/trajectory.jsonl
//! ```
//!
//! Candidate directories are written under `.staging/` and renamed into
//! place, after which their files are read-only and never rewritten.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use harnevo_core::digest::digest;
use harnevo_core::eval::{EvalSummary, SeedRole};
use harnevo_core::harness::{HarnessDescriptor, HarnessError};
use harnevo_core::trajectory::{Actor, Trajectory, TrajectoryError};
use harnevo_core::Variant;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, io_error, JsonlError};
use crate::runner::{self, EvalArtifacts, SUMMARY_FILE};
use crate::summary;

pub const INDEX_FILE: &str = "index.jsonl";
pub const SOURCE_FILE: &str = "source.harness";
pub const DEMO_DIR: &str = "demos";
const STAGING_DIR: &str = ".staging";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("candidate `{0}` is already archived")]
    DuplicateCandidate(String),
    #[error("candidate `{candidate}` names unknown parent `{parent}`")]
    UnknownParent { candidate: String, parent: String },
    #[error("no archived candidate `{0}`")]
    UnknownCandidate(String),
    #[error("summary for `{0}` covers held-out seeds; only development results may be archived")]
    HeldOutArtifact(String),
    #[error("candidate descriptor is invalid: {0}")]
    Descriptor(#[from] HarnessError),
    #[error("trajectory was produced by an agent, not a human")]
    NotADemonstration,
    #[error("demonstration has no terminal reward")]
    IncompleteDemo,
    #[error("no demonstration `{0}`")]
    UnknownDemo(String),
    #[error("no file `{0}` in the candidate directory")]
    MissingFile(String),
    #[error("path `{0}` escapes the candidate directory")]
    BadPath(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

/// One line of `index.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Position in append order, starting at 0.
    pub sequence: usize,
    pub candidate_id: String,
    pub iteration: u32,
    pub parent_id: Option<String>,
    pub variant: Variant,
    pub seed_set: String,
    pub role: SeedRole,
    pub n: usize,
    pub mean_dev_reward: f64,
    pub standard_error: f64,
    pub clean: bool,
    /// Directory relative to the archive root.
    pub path: String,
    pub created_at: u64,
}

/// Everything needed to archive one evaluated candidate.
#[derive(Debug, Clone)]
pub struct CandidateArtifacts {
    pub iteration: u32,
    pub descriptor: HarnessDescriptor,
    pub eval: EvalArtifacts,
}

/// Read-only view of a finalized evaluation directory.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDirectory {
    pub entry: IndexEntry,
    pub source: String,
    pub summary: EvalSummary,
    /// File paths relative to the candidate directory, sorted.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArchiveFilter {
    pub iteration: Option<u32>,
    pub min_reward: Option<f64>,
    /// Keep only this candidate and its ancestors.
    pub lineage_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoEntry {
    pub id: String,
    pub trajectory: Trajectory,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemonstrationSet {
    pub entries: Vec<DemoEntry>,
    pub notes: String,
}

#[derive(Debug)]
pub struct Archive {
    root: PathBuf,
    writer: Mutex<()>,
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T, ArchiveError> {
    r.map_err(|e| ArchiveError::Jsonl(io_error(path, e)))
}

fn list_files(base: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), ArchiveError> {
    let mut entries: Vec<_> = io(dir, fs::read_dir(dir))?.filter_map(Result::ok).collect();
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            list_files(base, &p, out)?;
        } else {
            let rel = p.strip_prefix(base).expect("under base");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

fn set_read_only(dir: &Path) -> Result<(), ArchiveError> {
    let mut files = Vec::new();
    list_files(dir, dir, &mut files)?;
    for f in files {
        let p = dir.join(f);
        let mut perm = io(&p, fs::metadata(&p))?.permissions();
        perm.set_readonly(true);
        io(&p, fs::set_permissions(&p, perm))?;
    }
    Ok(())
}

fn safe_relative(rel: &str) -> Result<PathBuf, ArchiveError> {
    let p = Path::new(rel);
    if rel.is_empty() || p.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ArchiveError::BadPath(rel.into()));
    }
    Ok(p.to_path_buf())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl Archive {
    /// Open (creating if needed) an archive rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Archive, ArchiveError> {
        let root = root.into();
        io(&root, fs::create_dir_all(&root))?;
        Ok(Archive { root, writer: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> Result<Vec<IndexEntry>, ArchiveError> {
        let p = self.root.join(INDEX_FILE);
        if !p.exists() {
            return Ok(Vec::new());
        }
        Ok(jsonl::read(&p)?)
    }

    pub fn len(&self) -> Result<usize, ArchiveError> {
        Ok(self.entries()?.len())
    }

    pub fn is_empty(&self) -> Result<bool, ArchiveError> {
        Ok(self.len()? == 0)
    }

    pub fn entry(&self, id: &str) -> Result<IndexEntry, ArchiveError> {
        self.entries()?
            .into_iter()
            .find(|e| e.candidate_id == id)
            .ok_or_else(|| ArchiveError::UnknownCandidate(id.into()))
    }

    pub fn append_eval_dir(&self, c: &CandidateArtifacts) -> Result<String, ArchiveError> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let id = c.descriptor.id.clone();
        c.descriptor.validate()?;
        if !valid_id(&id) {
            return Err(ArchiveError::BadPath(id));
        }
        if c.eval.summary.role == SeedRole::HeldOut {
            return Err(ArchiveError::HeldOutArtifact(id));
        }
        let entries = self.entries()?;
        if entries.iter().any(|e| e.candidate_id == id) {
            return Err(ArchiveError::DuplicateCandidate(id));
        }
        if let Some(parent) = &c.descriptor.parent_id {
            if !entries.iter().any(|e| &e.candidate_id == parent) {
                return Err(ArchiveError::UnknownParent { candidate: id, parent: parent.clone() });
            }
        }
        let rel = format!("{}/{}", c.iteration, id);
        let dest = self.root.join(&rel);
        if dest.exists() {
            return Err(ArchiveError::DuplicateCandidate(id));
        }
        let staging = self.root.join(STAGING_DIR).join(&id);
        if staging.exists() {
            io(&staging, fs::remove_dir_all(&staging))?;
        }
        io(&staging, fs::create_dir_all(&staging))?;
        let source = staging.join(SOURCE_FILE);
        io(&source, fs::write(&source, c.descriptor.serialize()))?;
        runner::write_artifacts(&staging, &c.eval)?;
        set_read_only(&staging)?;
        let parent_dir = dest.parent().expect("iteration dir");
        io(parent_dir, fs::create_dir_all(parent_dir))?;
        io(&dest, fs::rename(&staging, &dest))?;
        let s = &c.eval.summary;
        let entry = IndexEntry {
            sequence: entries.len(),
            candidate_id: id.clone(),
            iteration: c.iteration,
            parent_id: c.descriptor.parent_id.clone(),
            variant: s.variant,
            seed_set: s.seed_set.clone(),
            role: s.role,
            n: s.n,
            mean_dev_reward: s.mean_reward,
            standard_error: s.standard_error,
            clean: s.clean,
            path: rel,
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        jsonl::append(&self.root.join(INDEX_FILE), &entry)?;
        Ok(id)
    }

    pub fn candidate_dir(&self, id: &str) -> Result<PathBuf, ArchiveError> {
        Ok(self.root.join(self.entry(id)?.path))
    }

    pub fn get(&self, id: &str) -> Result<EvalDirectory, ArchiveError> {
        let entry = self.entry(id)?;
        let dir = self.root.join(&entry.path);
        let src = dir.join(SOURCE_FILE);
        let source = io(&src, fs::read_to_string(&src))?;
        let summary = summary::read(&dir.join(SUMMARY_FILE))?;
        let mut files = Vec::new();
        list_files(&dir, &dir, &mut files)?;
        Ok(EvalDirectory { entry, source, summary, files })
    }

    pub fn descriptor(&self, id: &str) -> Result<HarnessDescriptor, ArchiveError> {
        Ok(HarnessDescriptor::deserialize(&self.get(id)?.source)?)
    }

    /// Read one file of a candidate directory by relative path.
    pub fn read_file(&self, id: &str, rel: &str) -> Result<String, ArchiveError> {
        let p = self.candidate_dir(id)?.join(safe_relative(rel)?);
        if !p.is_file() {
            return Err(ArchiveError::MissingFile(rel.into()));
        }
        io(&p, fs::read_to_string(&p))
    }

    pub fn query(&self, filter: &ArchiveFilter) -> Result<Vec<IndexEntry>, ArchiveError> {
        let lineage: Option<Vec<String>> = match &filter.lineage_of {
            Some(id) => Some(self.lineage(id)?.into_iter().map(|e| e.candidate_id).collect()),
            None => None,
        };
        Ok(self
            .entries()?
            .into_iter()
            .filter(|e| filter.iteration.is_none_or(|i| e.iteration == i))
            .filter(|e| filter.min_reward.is_none_or(|m| e.mean_dev_reward >= m))
            .filter(|e| lineage.as_ref().is_none_or(|l| l.contains(&e.candidate_id)))
            .collect())
    }

    /// `id` followed by its ancestors, ending at a root candidate.
    pub fn lineage(&self, id: &str) -> Result<Vec<IndexEntry>, ArchiveError> {
        let entries = self.entries()?;
        let find = |id: &str| entries.iter().find(|e| e.candidate_id == id).cloned();
        let mut chain = vec![find(id).ok_or_else(|| ArchiveError::UnknownCandidate(id.into()))?];
        while let Some(parent) = chain.last().and_then(|e| e.parent_id.clone()) {
            match find(&parent) {
                Some(p) if !chain.iter().any(|c| c.candidate_id == p.candidate_id) => chain.push(p),
                _ => break,
            }
        }
        Ok(chain)
    }

    /// Digest of every finalized file, keyed by path relative to the root.
    pub fn checksums(&self) -> Result<BTreeMap<String, String>, ArchiveError> {
        let mut out = BTreeMap::new();
        for e in self.entries()? {
            let dir = self.root.join(&e.path);
            let mut files = Vec::new();
            list_files(&dir, &dir, &mut files)?;
            for f in files {
                let p = dir.join(&f);
                let bytes = io(&p, fs::read(&p))?;
                out.insert(format!("{}/{f}", e.path), digest(&String::from_utf8_lossy(&bytes)));
            }
        }
        Ok(out)
    }

    pub fn store_demonstration(&self, t: &Trajectory) -> Result<String, ArchiveError> {
        if t.actor != Actor::Human {
            return Err(ArchiveError::NotADemonstration);
        }
        if !t.is_complete() {
            return Err(ArchiveError::IncompleteDemo);
        }
        t.validate()?;
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let seed_dir = self.root.join(DEMO_DIR).join(t.logical_seed.to_string());
        io(&seed_dir, fs::create_dir_all(&seed_dir))?;
        let n = io(&seed_dir, fs::read_dir(&seed_dir))?
            .filter_map(Result::ok)
            .filter_map(|e| e.file_name().to_str()?.parse::<u64>().ok())
            .map(|n| n + 1)
            .max()
            .unwrap_or(0);
        let staging = self.root.join(STAGING_DIR).join(format!("demo-{}-{n}", t.logical_seed));
        io(&staging, fs::create_dir_all(&staging))?;
        let file = staging.join("trajectory.jsonl");
        io(&file, fs::write(&file, t.to_jsonl()))?;
        set_read_only(&staging)?;
        let dest = seed_dir.join(n.to_string());
        io(&dest, fs::rename(&staging, &dest))?;
        Ok(format!("{}-{n}", t.logical_seed))
    }

    pub fn demonstration(&self, id: &str) -> Result<Trajectory, ArchiveError> {
        let unknown = || ArchiveError::UnknownDemo(id.into());
        let (seed, n) = id.split_once('-').ok_or_else(unknown)?;
        if seed.parse::<u64>().is_err() || n.parse::<u64>().is_err() {
            return Err(unknown());
        }
        let p = self.root.join(DEMO_DIR).join(seed).join(n).join("trajectory.jsonl");
        let text = fs::read_to_string(&p).map_err(|_| unknown())?;
        Ok(Trajectory::from_jsonl(&text)?)
    }

    pub fn demo_ids(&self) -> Result<Vec<String>, ArchiveError> {
        let base = self.root.join(DEMO_DIR);
        if !base.exists() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<(u64, u64)> = Vec::new();
        for seed in io(&base, fs::read_dir(&base))?.filter_map(Result::ok) {
            let Some(s) = seed.file_name().to_str().and_then(|s| s.parse::<u64>().ok()) else {
                continue;
            };
            for n in io(&seed.path(), fs::read_dir(seed.path()))?.filter_map(Result::ok) {
                if let Some(n) = n.file_name().to_str().and_then(|s| s.parse::<u64>().ok()) {
                    ids.push((s, n));
                }
            }
        }
        ids.sort_unstable();
        Ok(ids.into_iter().map(|(s, n)| format!("{s}-{n}")).collect())
    }

    pub fn demonstrations(&self) -> Result<DemonstrationSet, ArchiveError> {
        let mut entries = Vec::new();
        for id in self.demo_ids()? {
            let trajectory = self.demonstration(&id)?;
            let reward = trajectory.terminal_reward.ok_or(ArchiveError::IncompleteDemo)?;
            entries.push(DemoEntry { id, trajectory, reward });
        }
        Ok(DemonstrationSet { entries, notes: "human play recorded through the session service".into() })
    }
}
