//! Crash-safe bookkeeping for project mutations.
//!
//! Every rename, creation or rewrite is appended to `.jstod-journal.json`
//! (written atomically) before it is performed. Restoring replays the
//! journal backwards; each step checks the filesystem first, so restoring
//! twice, or after a crash at any point, converges on the original tree.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{io_err, RewriteError};
use crate::testmodel::sha256_hex;

pub const JOURNAL_FILE: &str = ".jstod-journal.json";
pub const LOCK_FILE: &str = ".jstod.lock";
/// Suffix given to originals while a variant of them is active.
pub const MASK_SUFFIX: &str = ".jstod-masked";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum JournalEntry {
    Created { path: PathBuf },
    Renamed { from: PathBuf, to: PathBuf },
    Rewrote { path: PathBuf, original: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Journal {
    pub version: u32,
    pub entries: Vec<JournalEntry>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RewriteError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Journal {
    fn load(path: &Path) -> Result<Option<Journal>, RewriteError> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| RewriteError::Journal(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(path)(e)),
        }
    }

    fn save(&self, path: &Path) -> Result<(), RewriteError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| RewriteError::Journal(e.to_string()))?;
        write_atomic(path, text.as_bytes())
    }

    /// Undoes every entry, newest first.
    fn undo(&self) -> Result<(), RewriteError> {
        for entry in self.entries.iter().rev() {
            match entry {
                JournalEntry::Created { path } => match fs::remove_file(path) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                    Err(e) => return Err(io_err(path)(e)),
                },
                JournalEntry::Renamed { from, to } => {
                    if to.exists() && !from.exists() {
                        fs::rename(to, from).map_err(io_err(from))?;
                    }
                }
                JournalEntry::Rewrote { path, original } => {
                    let current = fs::read(path).ok();
                    if current.as_deref() != Some(original.as_bytes()) {
                        write_atomic(path, original.as_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Restores a project left behind by an interrupted run. Returns whether a
/// journal was found.
pub fn recover(root: &Path) -> Result<bool, RewriteError> {
    let path = root.join(JOURNAL_FILE);
    let Some(journal) = Journal::load(&path)? else {
        return Ok(false);
    };
    journal.undo()?;
    fs::remove_file(&path).map_err(io_err(&path))?;
    Ok(true)
}

fn lock_is_stale(lock: &Path) -> bool {
    let Ok(text) = fs::read_to_string(lock) else {
        return false;
    };
    match text.trim().parse::<u32>() {
        Ok(pid) if cfg!(target_os = "linux") => !Path::new(&format!("/proc/{pid}")).exists(),
        Ok(_) => false,
        Err(_) => true,
    }
}

/// Exclusive, journaled access to a project directory.
#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    journal_path: PathBuf,
    lock_path: PathBuf,
    journal: Journal,
    released: bool,
}

impl Workspace {
    /// Takes the project lock, then recovers any journal a crashed run left.
    pub fn open(root: &Path) -> Result<Self, RewriteError> {
        let lock_path = root.join(LOCK_FILE);
        let mut attempt = fs::OpenOptions::new().write(true).create_new(true).open(&lock_path);
        if matches!(&attempt, Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists) && lock_is_stale(&lock_path) {
            let _ = fs::remove_file(&lock_path);
            attempt = fs::OpenOptions::new().write(true).create_new(true).open(&lock_path);
        }
        let mut file = match attempt {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(RewriteError::Locked(root.to_path_buf()))
            }
            Err(e) => return Err(io_err(&lock_path)(e)),
        };
        file.write_all(std::process::id().to_string().as_bytes())
            .map_err(io_err(&lock_path))?;
        let ws = Workspace {
            root: root.to_path_buf(),
            journal_path: root.join(JOURNAL_FILE),
            lock_path,
            journal: Journal {
                version: 1,
                entries: Vec::new(),
            },
            released: false,
        };
        recover(root)?;
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    fn record(&mut self, entry: JournalEntry) -> Result<(), RewriteError> {
        self.journal.entries.push(entry);
        self.journal.save(&self.journal_path)
    }

    /// Creates a new file; existing files are never overwritten.
    pub fn create_file(&mut self, path: &Path, contents: &str) -> Result<(), RewriteError> {
        if path.exists() {
            return Err(RewriteError::Collision(path.to_path_buf()));
        }
        self.record(JournalEntry::Created {
            path: path.to_path_buf(),
        })?;
        let mut f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(io_err(path))?;
        f.write_all(contents.as_bytes()).map_err(io_err(path))
    }

    /// Deletes a file this workspace created. The journal entry stays, so
    /// a later restore is a no-op for it.
    pub fn remove_created(&mut self, path: &Path) -> Result<(), RewriteError> {
        let ours = self
            .journal
            .entries
            .iter()
            .any(|e| matches!(e, JournalEntry::Created { path: p } if p == path));
        if !ours {
            return Err(RewriteError::Journal(format!(
                "{} was not created by this run",
                path.display()
            )));
        }
        match fs::remove_file(path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io_err(path)(e)),
        }
    }

    /// Renames `original` out of the runner's view; returns the new path.
    pub fn mask(&mut self, original: &Path) -> Result<PathBuf, RewriteError> {
        let mut name = original.as_os_str().to_os_string();
        name.push(MASK_SUFFIX);
        let masked = PathBuf::from(name);
        if masked.exists() {
            return Err(RewriteError::Collision(masked));
        }
        self.record(JournalEntry::Renamed {
            from: original.to_path_buf(),
            to: masked.clone(),
        })?;
        fs::rename(original, &masked).map_err(io_err(original))?;
        Ok(masked)
    }

    pub fn unmask(&mut self, original: &Path) -> Result<(), RewriteError> {
        let mut name = original.as_os_str().to_os_string();
        name.push(MASK_SUFFIX);
        let masked = PathBuf::from(name);
        if masked.exists() && !original.exists() {
            fs::rename(&masked, original).map_err(io_err(original))?;
        }
        Ok(())
    }

    /// Replaces the contents of an existing file, remembering the first
    /// version seen.
    pub fn rewrite_file(&mut self, path: &Path, contents: &str) -> Result<(), RewriteError> {
        let already = self
            .journal
            .entries
            .iter()
            .any(|e| matches!(e, JournalEntry::Rewrote { path: p, .. } if p == path));
        if !already {
            let original = fs::read_to_string(path).map_err(io_err(path))?;
            self.record(JournalEntry::Rewrote {
                path: path.to_path_buf(),
                original,
            })?;
        }
        write_atomic(path, contents.as_bytes())
    }

    /// Undoes everything recorded so far and clears the journal.
    pub fn restore(&mut self) -> Result<(), RewriteError> {
        self.journal.undo()?;
        self.journal.entries.clear();
        match fs::remove_file(&self.journal_path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io_err(&self.journal_path)(e)),
        }
    }

    /// Restores and releases the lock.
    pub fn close(mut self) -> Result<(), RewriteError> {
        let result = self.restore();
        self.release();
        result
    }

    fn release(&mut self) {
        if !self.released {
            let _ = fs::remove_file(&self.lock_path);
            self.released = true;
        }
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        if !self.released {
            let _ = self.restore();
            self.release();
        }
    }
}

/// Digest of every file under `root` (paths and contents), skipping
/// dependency and VCS directories.
pub fn tree_hash(root: &Path) -> String {
    let mut lines = Vec::new();
    for entry in WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !matches!(e.file_name().to_str(), Some("node_modules" | ".git")))
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
    {
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let digest = fs::read(entry.path()).map(|b| sha256_hex(&b)).unwrap_or_default();
        lines.push(format!("{}\t{digest}", rel.display()));
    }
    sha256_hex(lines.join("\n").as_bytes())
}
