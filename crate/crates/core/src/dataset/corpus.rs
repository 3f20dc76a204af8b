use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, ImageU8};

/// One captured image of a patient together with its real (specular) mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusImage {
    pub image_id: String,
    pub patient_id: String,
    pub image: ImageU8,
    pub real_mask: BinaryMask,
}

impl CorpusImage {
    pub fn new(
        image_id: impl Into<String>,
        patient_id: impl Into<String>,
        image: ImageU8,
        real_mask: BinaryMask,
    ) -> Result<Self> {
        if image.dims() != real_mask.dims() {
            return Err(Error::DimensionMismatch {
                expected: image.dims(),
                got: real_mask.dims(),
            });
        }
        Ok(Self {
            image_id: image_id.into(),
            patient_id: patient_id.into(),
            image,
            real_mask,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    /// Resizes the image bilinearly and the mask by nearest neighbour.
    pub fn resized(&self, height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            image_id: self.image_id.clone(),
            patient_id: self.patient_id.clone(),
            image: self.image.resize(height, width)?,
            real_mask: self.real_mask.resize(height, width)?,
        })
    }
}

/// Anything that belongs to a patient; used by the patient-disjoint splitter.
pub trait PatientScoped {
    fn patient_id(&self) -> &str;
}

impl PatientScoped for CorpusImage {
    fn patient_id(&self) -> &str {
        &self.patient_id
    }
}

/// One line of the corpus manifest. Paths are relative to the manifest's
/// directory unless absolute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: String,
    pub patient_id: String,
    pub image_path: String,
    pub real_mask_path: String,
    #[serde(default)]
    pub hidden_mask_paths: Vec<String>,
    /// Bumped on every committed annotation.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub mask_version: u64,
    /// Split assigned by `build-dataset`; absent in raw corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<super::SplitRole>,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl PatientScoped for ManifestRecord {
    fn patient_id(&self) -> &str {
        &self.patient_id
    }
}

/// JSON-lines corpus manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(path: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Self {
        Self {
            path: path.into(),
            records,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path)?;
        let mut records = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(Self {
            path: path.to_path_buf(),
            records,
        })
    }

    /// Writes the manifest to a sibling temporary file and renames it into
    /// place, so readers never observe a partially written manifest.
    pub fn save(&self) -> Result<()> {
        let dir = self.base_dir();
        fs::create_dir_all(&dir)?;
        let file_name = self
            .path
            .file_name()
            .ok_or_else(|| Error::invalid(format!("manifest path {} has no file name", self.path.display())))?;
        let tmp = dir.join(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            for r in &self.records {
                serde_json::to_writer(&mut f, r)?;
                f.write_all(b"\n")?;
            }
            f.sync_all()?;
        }
        fs::rename(&tmp, &self.path)?;
        Ok(())
    }

    pub fn base_dir(&self) -> PathBuf {
        match self.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir().join(p)
        }
    }

    pub fn find(&self, image_id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    pub fn load_image(&self, record: &ManifestRecord) -> Result<CorpusImage> {
        let image = ImageU8::load(self.resolve(&record.image_path))?;
        let real_mask = BinaryMask::load(self.resolve(&record.real_mask_path))?;
        CorpusImage::new(&record.image_id, &record.patient_id, image, real_mask)
    }

    /// Loads the first hidden mask of a record, if any.
    pub fn load_hidden(&self, record: &ManifestRecord) -> Result<Option<BinaryMask>> {
        record
            .hidden_mask_paths
            .first()
            .map(|p| BinaryMask::load(self.resolve(p)))
            .transpose()
    }
}

/// Writes images and real masks under `dir` and returns the manifest
/// (already saved as `dir/corpus.jsonl`).
pub fn write_corpus(images: &[CorpusImage], dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut records = Vec::with_capacity(images.len());
    for img in images {
        let image_path = format!("images/{}.png", img.image_id);
        let real_mask_path = format!("masks/{}_sr.png", img.image_id);
        img.image.save_png(dir.join(&image_path))?;
        img.real_mask.save_png(dir.join(&real_mask_path))?;
        records.push(ManifestRecord {
            image_id: img.image_id.clone(),
            patient_id: img.patient_id.clone(),
            image_path,
            real_mask_path,
            hidden_mask_paths: Vec::new(),
            mask_version: 0,
            split: None,
        });
    }
    let manifest = Manifest::new(dir.join("corpus.jsonl"), records);
    manifest.save()?;
    Ok(manifest)
}
