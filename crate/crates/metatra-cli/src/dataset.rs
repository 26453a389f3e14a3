//! Canonical dataset directories: one subdirectory per domain holding scene
//! text files, plus a manifest with checksums.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use metatra_core::data::{
    load_trajectory_file, window_scene, ColumnOrder, Scene, TrajectoryWindow,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneEntry {
    pub file: String,
    pub n_tracks: usize,
    pub frame_min: u64,
    pub frame_max: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainEntry {
    pub domain_id: String,
    pub scenes: Vec<SceneEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub frame_dt: f64,
    pub domains: Vec<DomainEntry>,
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Combined checksum over all scene checksums, for run manifests.
    pub fn dataset_digest(&self) -> String {
        let mut hasher = Sha256::new();
        for d in &self.domains {
            hasher.update(d.domain_id.as_bytes());
            for s in &d.scenes {
                hasher.update(s.sha256.as_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Write scenes grouped by domain into `dir` and produce the manifest.
pub fn write_dataset(dir: &Path, scenes_by_domain: &[(String, Vec<Scene>)], frame_dt: f64) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let mut domains = Vec::new();
    for (domain_id, scenes) in scenes_by_domain {
        let domain_dir = dir.join(domain_id);
        std::fs::create_dir_all(&domain_dir)?;
        let mut entries = Vec::new();
        for (i, scene) in scenes.iter().enumerate() {
            let name = format!("scene_{i:04}.txt");
            let path = domain_dir.join(&name);
            scene.save_text(&path)?;
            let axis = scene.frame_axis();
            entries.push(SceneEntry {
                file: format!("{domain_id}/{name}"),
                n_tracks: scene.tracks.len(),
                frame_min: axis.first().copied().unwrap_or(0),
                frame_max: axis.last().copied().unwrap_or(0),
                sha256: file_sha256(&path)?,
            });
        }
        domains.push(DomainEntry { domain_id: domain_id.clone(), scenes: entries });
    }
    let manifest = DatasetManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        frame_dt,
        domains,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

/// Load all scenes of a canonical dataset directory, sorted for determinism.
pub fn load_scenes(dir: &Path, frame_dt: f64, order: ColumnOrder) -> Result<Vec<(String, Vec<Scene>)>> {
    if !dir.is_dir() {
        bail!("dataset directory {} does not exist", dir.display());
    }
    let mut domain_dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    domain_dirs.sort();
    if domain_dirs.is_empty() {
        bail!("dataset directory {} holds no domain subdirectories", dir.display());
    }
    let mut out = Vec::new();
    for d in domain_dirs {
        let domain_id = d
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&d)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "txt").unwrap_or(false))
            .collect();
        files.sort();
        if files.is_empty() {
            bail!("domain directory {} holds no scene files", d.display());
        }
        let mut scenes = Vec::new();
        for f in files {
            let mut scene = load_trajectory_file(&f, frame_dt, order)?;
            scene.domain_id = domain_id.clone();
            scenes.push(scene);
        }
        out.push((domain_id, scenes));
    }
    Ok(out)
}

/// Window every domain's scenes into prediction instances.
pub fn window_domains(
    scenes_by_domain: &[(String, Vec<Scene>)],
    t_obs: usize,
    t_pre: usize,
    stride: usize,
) -> Result<Vec<(String, Vec<TrajectoryWindow>)>> {
    let mut out = Vec::new();
    for (domain_id, scenes) in scenes_by_domain {
        let mut windows = Vec::new();
        for scene in scenes {
            windows.extend(window_scene(scene, t_obs, t_pre, stride)?);
        }
        out.push((domain_id.clone(), windows));
    }
    Ok(out)
}
