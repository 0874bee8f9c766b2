use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::{RunError, Stage};
use crate::gateway::{PriceSheet, UsageTotals};
use crate::seed;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    /// Community and dimension filters of the latest invocation.
    pub scope: Vec<String>,
    /// Relative path to SHA-256 of every file the stage wrote.
    pub artifacts: BTreeMap<String, String>,
    /// Digests of the upstream artifacts the stage read.
    pub inputs: BTreeMap<String, String>,
    pub usage: UsageTotals,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub version: String,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageRecord>,
    pub usage: UsageTotals,
    pub cost_usd: f64,
}

impl RunManifest {
    fn new(cfg: &RunConfig) -> Self {
        RunManifest {
            run_id: cfg.run_id(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: cfg.clone(),
            stages: BTreeMap::new(),
            usage: UsageTotals::default(),
            cost_usd: 0.0,
        }
    }

    /// Every registered artifact with its digest, across stages.
    pub fn artifacts(&self) -> BTreeMap<&str, &str> {
        self.stages
            .values()
            .flat_map(|r| r.artifacts.iter().map(|(p, d)| (p.as_str(), d.as_str())))
            .collect()
    }
}

/// Writes through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn rel_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), RunError> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if e.file_type()?.is_dir() {
            walk(root, &p, out)?;
        } else {
            out.push(rel_string(p.strip_prefix(root).expect("under root")));
        }
    }
    Ok(())
}

/// A run directory and its manifest.
pub struct RunDir {
    root: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    /// Opens or creates the run directory. An existing manifest must come from
    /// the same configuration.
    pub fn open(cfg: &RunConfig) -> Result<Self, RunError> {
        let root = cfg.run_dir();
        fs::create_dir_all(&root)?;
        let path = root.join(MANIFEST);
        let manifest = if path.exists() {
            let m: RunManifest = serde_json::from_slice(&fs::read(&path)?)
                .map_err(|e| RunError::Integrity(format!("unreadable manifest: {e}")))?;
            if m.run_id != cfg.run_id() {
                return Err(RunError::Config(format!(
                    "{} was produced by a different configuration (run {}); use a fresh run directory",
                    root.display(),
                    m.run_id
                )));
            }
            m
        } else {
            RunManifest::new(cfg)
        };
        Ok(RunDir { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn save(&mut self, price: &PriceSheet) -> Result<(), RunError> {
        let mut total = UsageTotals::default();
        for r in self.manifest.stages.values() {
            total.merge(&r.usage);
        }
        self.manifest.cost_usd = total.cost(price);
        self.manifest.usage = total;
        let bytes = serde_json::to_vec_pretty(&self.manifest)
            .map_err(|e| RunError::Other(e.to_string()))?;
        write_atomic(&self.root.join(MANIFEST), &bytes)
    }

    /// Drops a stage's artifacts under `prefixes` (or all of them) from disk and
    /// from the manifest, returning what is left of its record.
    pub fn clear(
        &mut self,
        stage: Stage,
        prefixes: Option<&[String]>,
    ) -> Result<StageRecord, RunError> {
        let mut record = self
            .manifest
            .stages
            .remove(stage.name())
            .unwrap_or_default();
        let hit = |p: &str| prefixes.is_none_or(|ps| ps.iter().any(|x| p.starts_with(x.as_str())));
        record.artifacts.retain(|p, _| !hit(p));
        match prefixes {
            None => {
                let dir = self.root.join(stage.name());
                if dir.exists() {
                    fs::remove_dir_all(dir)?;
                }
            }
            Some(ps) => {
                for p in ps {
                    let path = self.root.join(p.trim_end_matches('/'));
                    if path.is_dir() {
                        fs::remove_dir_all(path)?;
                    } else if path.is_file() {
                        fs::remove_file(path)?;
                    }
                }
            }
        }
        Ok(record)
    }

    pub fn register(&mut self, stage: Stage, record: StageRecord) {
        self.manifest.stages.insert(stage.name().to_owned(), record);
    }

    /// Registered artifacts that are missing or altered, stale stage inputs, and
    /// files no stage registered.
    pub fn problems(&self) -> Result<Vec<String>, RunError> {
        let mut problems = Vec::new();
        let registered = self.manifest.artifacts();
        for (path, digest) in &registered {
            match fs::read(self.root.join(path)) {
                Ok(bytes) if seed::digest_hex(&bytes) == *digest => {}
                Ok(_) => problems.push(format!(
                    "{path}: content does not match its manifest digest"
                )),
                Err(_) => problems.push(format!("{path}: registered but missing")),
            }
        }
        for (name, rec) in &self.manifest.stages {
            for (path, digest) in &rec.inputs {
                match registered.get(path.as_str()) {
                    Some(d) if d == digest => {}
                    Some(_) => {
                        problems.push(format!("{name}: input {path} changed after the stage ran"))
                    }
                    None => problems.push(format!("{name}: input {path} is no longer registered")),
                }
            }
        }
        let mut files = Vec::new();
        walk(&self.root, &self.root, &mut files)?;
        for f in files {
            if f != MANIFEST && !registered.contains_key(f.as_str()) {
                problems.push(format!("{f}: orphan artifact not named in the manifest"));
            }
        }
        Ok(problems)
    }
}

/// Reads and writes for one stage invocation, recording digests.
pub struct StageIo<'a> {
    dir: &'a RunDir,
    stage: Stage,
    pub written: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub notes: Vec<String>,
    pub usage: UsageTotals,
}

impl<'a> StageIo<'a> {
    pub fn new(dir: &'a RunDir, stage: Stage) -> Self {
        StageIo {
            dir,
            stage,
            written: BTreeMap::new(),
            inputs: BTreeMap::new(),
            notes: Vec::new(),
            usage: UsageTotals::default(),
        }
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn dir(&self) -> &RunDir {
        self.dir
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.dir.manifest.artifacts().contains_key(rel)
    }

    /// Registered artifacts under `prefix` ending in `suffix`, sorted.
    pub fn registered(&self, prefix: &str, suffix: &str) -> Vec<String> {
        self.dir
            .manifest
            .artifacts()
            .into_keys()
            .filter(|p| p.starts_with(prefix) && p.ends_with(suffix))
            .map(str::to_owned)
            .collect()
    }

    /// Reads a registered upstream artifact.
    pub fn read(&mut self, rel: &str) -> Result<Vec<u8>, RunError> {
        let upstream = rel.split('/').next().unwrap_or(rel).to_owned();
        let digest = self
            .dir
            .manifest
            .artifacts()
            .get(rel)
            .map(|d| d.to_string())
            .ok_or_else(|| RunError::MissingArtifact {
                stage: upstream.clone(),
                path: rel.to_owned(),
            })?;
        let bytes = fs::read(self.dir.root.join(rel)).map_err(|_| RunError::MissingArtifact {
            stage: upstream,
            path: rel.to_owned(),
        })?;
        if seed::digest_hex(&bytes) != digest {
            return Err(RunError::Integrity(format!(
                "{rel} does not match its manifest digest"
            )));
        }
        self.inputs.insert(rel.to_owned(), digest);
        Ok(bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, rel: &str) -> Result<T, RunError> {
        let bytes = self.read(rel)?;
        serde_json::from_slice(&bytes).map_err(|e| RunError::Integrity(format!("{rel}: {e}")))
    }

    pub fn read_jsonl<T: DeserializeOwned>(&mut self, rel: &str) -> Result<Vec<T>, RunError> {
        let bytes = self.read(rel)?;
        crate::corpus::read_jsonl(&bytes[..])
            .map_err(|e| RunError::Integrity(format!("{rel}: {e}")))
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), RunError> {
        debug_assert!(
            rel.starts_with(self.stage.name()),
            "{rel} outside stage {}",
            self.stage.name()
        );
        write_atomic(&self.dir.root.join(rel), bytes)?;
        self.written.insert(rel.to_owned(), seed::digest_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(
        &mut self,
        rel: &str,
        value: &T,
    ) -> Result<(), RunError> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| RunError::Other(e.to_string()))?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, rel: &str, items: &[T]) -> Result<(), RunError> {
        let mut bytes = Vec::new();
        crate::corpus::write_jsonl(&mut bytes, items)
            .map_err(|e| RunError::Other(e.to_string()))?;
        self.write(rel, &bytes)
    }

    /// Buffers whatever `f` writes and stores it at `rel`.
    pub fn write_with<E: std::fmt::Display>(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> Result<(), RunError> {
        let mut bytes = Vec::new();
        f(&mut bytes).map_err(|e| RunError::Other(format!("{rel}: {e}")))?;
        self.write(rel, &bytes)
    }
}
