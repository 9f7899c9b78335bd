use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{BitemporalSample, Sample};
use crate::error::{Result, StarError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "star-tiles/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    SingleTemporal,
    Bitemporal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default)]
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub kind: DatasetKind,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(kind: DatasetKind, ids: impl IntoIterator<Item = String>, split: Split) -> Self {
        Self {
            format: MANIFEST_FORMAT.to_string(),
            kind,
            samples: ids.into_iter().map(|id| ManifestEntry { id, split }).collect(),
        }
    }

    pub fn read(root: &Path) -> Result<Option<Self>> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| StarError::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(StarError::Ingestion {
                id: MANIFEST_FILE.to_string(),
                reason: format!("unsupported manifest format `{}`", manifest.format),
            });
        }
        Ok(Some(manifest))
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| StarError::io(&path, e))
    }
}

/// Reads an 8-bit image as `3 x H x W` floats in `[0, 1]`.
pub fn read_rgb(path: &Path) -> Result<Array3<f32>> {
    let img = image::open(path)
        .map_err(|source| StarError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
        f32::from(img.get_pixel(x as u32, y as u32)[c]) / 255.0
    }))
}

/// Reads a single-channel mask holding only `{0, 255}` or only `{0, 1}`.
pub fn read_mask(path: &Path, id: &str) -> Result<Array2<u8>> {
    let dynimg = image::open(path).map_err(|source| StarError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let img = match dynimg {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(StarError::Ingestion {
                id: id.to_string(),
                reason: format!("mask must be 8-bit single-channel, got {:?}", other.color()),
            })
        }
    };
    let (w, h) = img.dimensions();
    let raw = img.into_raw();
    let high = if raw.iter().any(|&v| v > 1) { 255 } else { 1 };
    if let Some(&value) = raw.iter().find(|&&v| v != 0 && v != high) {
        return Err(StarError::NonBinaryMask {
            id: id.to_string(),
            value,
        });
    }
    let bits = raw.into_iter().map(|v| u8::from(v != 0)).collect();
    Ok(Array2::from_shape_vec((h as usize, w as usize), bits).expect("buffer matches dimensions"))
}

pub fn write_rgb(path: &Path, image: &Array3<f32>) -> Result<()> {
    let (c, h, w) = image.dim();
    if c != 3 {
        return Err(StarError::contract(format!("expected 3 channels, got {c}")));
    }
    let img: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| (image[[ch, y as usize, x as usize]].clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([px(0), px(1), px(2)])
    });
    img.save(path).map_err(|source| StarError::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_mask(path: &Path, mask: &Array2<u8>) -> Result<()> {
    let (h, w) = mask.dim();
    let img: GrayImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask[[y as usize, x as usize]] != 0 { 255 } else { 0 }])
    });
    img.save(path).map_err(|source| StarError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn list_ids(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| StarError::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| StarError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "png") {
            if let Some(stem) = path.file_stem() {
                ids.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn ids_for(root: &Path, primary: &str) -> Result<Vec<String>> {
    match Manifest::read(root)? {
        Some(m) => Ok(m.samples.into_iter().map(|e| e.id).collect()),
        None => list_ids(&root.join(primary)),
    }
}

fn tile(root: &Path, sub: &str, id: &str) -> PathBuf {
    root.join(sub).join(format!("{id}.png"))
}

fn require(root: &Path, sub: &str, id: &str, what: &str) -> Result<()> {
    if tile(root, sub, id).is_file() {
        Ok(())
    } else {
        Err(StarError::Ingestion {
            id: id.to_string(),
            reason: format!("missing {what} `{}`", tile(root, sub, id).display()),
        })
    }
}

/// A validated single-temporal directory whose samples load lazily.
#[derive(Clone, Debug)]
pub struct SingleTemporalDir {
    root: PathBuf,
    ids: Vec<String>,
}

impl SingleTemporalDir {
    /// Checks that every image has its mask before anything is decoded.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let ids = ids_for(&root, "images")?;
        for id in &ids {
            require(&root, "images", id, "image")?;
            require(&root, "masks", id, "mask")?;
        }
        Ok(Self { root, ids })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn load(&self, id: &str) -> Result<Sample> {
        let image = read_rgb(&tile(&self.root, "images", id))?;
        let mask = read_mask(&tile(&self.root, "masks", id), id)?;
        Sample::new(id, image, Some(mask))
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Sample>> + '_ {
        self.ids.iter().map(move |id| self.load(id))
    }
}

#[derive(Clone, Debug)]
pub struct BitemporalDir {
    root: PathBuf,
    ids: Vec<String>,
    semantic: bool,
}

impl BitemporalDir {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let ids = ids_for(&root, "t1")?;
        let semantic = root.join("sem_t1").is_dir() && root.join("sem_t2").is_dir();
        for id in &ids {
            require(&root, "t1", id, "t1 image")?;
            require(&root, "t2", id, "t2 image")?;
            require(&root, "change", id, "change mask")?;
            if semantic {
                require(&root, "sem_t1", id, "t1 semantic mask")?;
                require(&root, "sem_t2", id, "t2 semantic mask")?;
            }
        }
        Ok(Self { root, ids, semantic })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn has_semantic(&self) -> bool {
        self.semantic
    }

    pub fn load(&self, id: &str) -> Result<BitemporalSample> {
        let semantic = |sub: &str| -> Result<Option<Array2<u8>>> {
            if self.semantic {
                read_mask(&tile(&self.root, sub, id), id).map(Some)
            } else {
                Ok(None)
            }
        };
        let sample = BitemporalSample {
            id: id.to_string(),
            image_t1: read_rgb(&tile(&self.root, "t1", id))?,
            image_t2: read_rgb(&tile(&self.root, "t2", id))?,
            change: read_mask(&tile(&self.root, "change", id), id)?,
            semantic_t1: semantic("sem_t1")?,
            semantic_t2: semantic("sem_t2")?,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<BitemporalSample>> + '_ {
        self.ids.iter().map(move |id| self.load(id))
    }
}

pub fn load_single_temporal(root: impl AsRef<Path>) -> Result<Vec<Sample>> {
    SingleTemporalDir::open(root)?.iter().collect()
}

pub fn load_bitemporal(root: impl AsRef<Path>) -> Result<Vec<BitemporalSample>> {
    BitemporalDir::open(root)?.iter().collect()
}

fn mkdirs(root: &Path, subs: &[&str]) -> Result<()> {
    for sub in subs {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| StarError::io(&dir, e))?;
    }
    Ok(())
}

pub fn write_single_temporal(root: impl AsRef<Path>, samples: &[Sample], split: Split) -> Result<()> {
    let root = root.as_ref();
    mkdirs(root, &["images", "masks"])?;
    for s in samples {
        let mask = s.mask.as_ref().ok_or_else(|| StarError::Ingestion {
            id: s.id.clone(),
            reason: "sample has no mask to write".into(),
        })?;
        write_rgb(&tile(root, "images", &s.id), &s.image)?;
        write_mask(&tile(root, "masks", &s.id), mask)?;
    }
    Manifest::new(DatasetKind::SingleTemporal, samples.iter().map(|s| s.id.clone()), split).write(root)
}

pub fn write_bitemporal(root: impl AsRef<Path>, pairs: &[BitemporalSample], split: Split) -> Result<()> {
    let root = root.as_ref();
    mkdirs(root, &["t1", "t2", "change"])?;
    let semantic = !pairs.is_empty() && pairs.iter().all(|p| p.semantic_t1.is_some() && p.semantic_t2.is_some());
    if semantic {
        mkdirs(root, &["sem_t1", "sem_t2"])?;
    }
    for p in pairs {
        write_rgb(&tile(root, "t1", &p.id), &p.image_t1)?;
        write_rgb(&tile(root, "t2", &p.id), &p.image_t2)?;
        write_mask(&tile(root, "change", &p.id), &p.change)?;
        if let (true, Some(a), Some(b)) = (semantic, &p.semantic_t1, &p.semantic_t2) {
            write_mask(&tile(root, "sem_t1", &p.id), a)?;
            write_mask(&tile(root, "sem_t2", &p.id), b)?;
        }
    }
    Manifest::new(DatasetKind::Bitemporal, pairs.iter().map(|p| p.id.clone()), split).write(root)
}
