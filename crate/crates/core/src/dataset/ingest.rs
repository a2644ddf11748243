use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{path_to_slash, ClassLabel, DatasetManifest, SampleRecord, SourceDataset};
use crate::{Error, Result};

/// Lower-case file extensions accepted as images.
pub const ACCEPTED_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

#[derive(Clone, Debug)]
pub struct IngestOptions {
    /// Decode each image header. When false, files only need to be readable,
    /// which allows count checks against placeholder trees.
    pub verify_images: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            verify_images: true,
        }
    }
}

pub fn ingest_dataset(root: &Path, kind: SourceDataset) -> Result<DatasetManifest> {
    ingest_dataset_with(root, kind, &IngestOptions::default())
}

pub fn ingest_dataset_with(
    root: &Path,
    kind: SourceDataset,
    options: &IngestOptions,
) -> Result<DatasetManifest> {
    let mut warnings = Vec::new();
    let mut class_dirs: Vec<(ClassLabel, PathBuf)> = Vec::new();

    let mut entries = read_dir_sorted(root)?;
    entries.retain(|p| !is_hidden(p));
    for entry in entries {
        let name = entry
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !entry.is_dir() {
            warnings.push(format!("ignored non-directory entry at dataset root: {name}"));
            continue;
        }
        let class = name
            .parse::<ClassLabel>()
            .ok()
            .filter(|c| kind.classes().contains(c))
            .ok_or_else(|| Error::UnknownClassDirectory {
                name: name.clone(),
                root: root.to_path_buf(),
            })?;
        class_dirs.push((class, entry));
    }

    for class in kind.classes() {
        if !class_dirs.iter().any(|(c, _)| c == class) {
            warnings.push(format!("missing class directory: {class}"));
        }
    }

    let mut candidates: Vec<(ClassLabel, PathBuf)> = Vec::new();
    for (class, dir) in &class_dirs {
        let mut files = Vec::new();
        collect_files(dir, &mut files)?;
        if files.is_empty() {
            warnings.push(format!("empty class directory: {class}"));
        }
        candidates.extend(files.into_iter().map(|f| (*class, f)));
    }

    let mut bad: Vec<PathBuf> = candidates
        .par_iter()
        .filter(|(_, path)| !is_usable_image(path, options.verify_images))
        .map(|(_, path)| path.clone())
        .collect();
    if !bad.is_empty() {
        bad.sort();
        return Err(Error::UnreadableImages(bad));
    }

    let mut records: Vec<SampleRecord> = candidates
        .into_iter()
        .map(|(class, path)| {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            SampleRecord {
                sample_id: format!("{}/{}", kind.prefix(), path_to_slash(rel)),
                path,
                source_dataset: kind,
                original_class: class,
                mapped_class: None,
                split: None,
            }
        })
        .collect();
    records.sort_by(|a, b| a.path.cmp(&b.path));
    for w in &warnings {
        log::warn!("{}: {w}", root.display());
    }
    DatasetManifest::from_records(records, kind.classes(), warnings)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn is_hidden(path: &Path) -> bool {
    path.file_name()
        .map(|n| n.to_string_lossy().starts_with('.'))
        .unwrap_or(false)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for path in read_dir_sorted(dir)? {
        if is_hidden(&path) {
            continue;
        }
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn has_accepted_extension(path: &Path) -> bool {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .is_some_and(|e| ACCEPTED_EXTENSIONS.contains(&e.as_str()))
}

fn is_usable_image(path: &Path, verify: bool) -> bool {
    if !has_accepted_extension(path) {
        return false;
    }
    if !verify {
        return fs::File::open(path).is_ok();
    }
    image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| e.to_string())
        .and_then(|r| r.into_dimensions().map_err(|e| e.to_string()))
        .is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, b"").unwrap();
    }

    fn write_png(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        image::RgbImage::from_pixel(2, 2, image::Rgb([10, 20, 30]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn empty_class_dirs_give_warnings() {
        let dir = tempfile::tempdir().unwrap();
        for c in ["Benign", "Early", "Pre", "Pro"] {
            fs::create_dir_all(dir.path().join(c)).unwrap();
        }
        let m = ingest_dataset(dir.path(), SourceDataset::AllImage).unwrap();
        assert_eq!(m.total(), 0);
        assert_eq!(m.class_counts().len(), 4);
        assert!(m.class_counts().values().all(|&c| c == 0));
        assert_eq!(m.warnings().len(), 4);
    }

    #[test]
    fn unknown_class_directory_is_named() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("Normal")).unwrap();
        fs::create_dir_all(dir.path().join("Monocyte")).unwrap();
        let err = ingest_dataset(dir.path(), SourceDataset::AllIdb1).unwrap_err();
        assert!(err.to_string().contains("Monocyte"), "{err}");

        // ALL_IMAGE labels are not valid in an ALL-IDB1 tree
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("Benign")).unwrap();
        assert!(ingest_dataset(dir.path(), SourceDataset::AllIdb1).is_err());
    }

    #[test]
    fn undecodable_images_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("Normal/good.png"));
        touch(&dir.path().join("Cancer/broken.png"));
        touch(&dir.path().join("Cancer/notes.txt"));
        let err = ingest_dataset(dir.path(), SourceDataset::AllIdb1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("broken.png") && msg.contains("notes.txt"), "{msg}");
        assert!(!msg.contains("good.png"));

        // placeholder files pass when decoding is skipped, unsupported extensions do not
        let opts = IngestOptions { verify_images: false };
        assert!(ingest_dataset_with(dir.path(), SourceDataset::AllIdb1, &opts).is_err());
        fs::remove_file(dir.path().join("Cancer/notes.txt")).unwrap();
        let m = ingest_dataset_with(dir.path(), SourceDataset::AllIdb1, &opts).unwrap();
        assert_eq!(m.total(), 2);
    }

    #[test]
    fn records_are_sorted_with_stable_ids() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "a.PNG", "c.jpeg"] {
            touch(&dir.path().join("Cancer").join(name));
        }
        let opts = IngestOptions { verify_images: false };
        let m = ingest_dataset_with(dir.path(), SourceDataset::AllIdb1, &opts).unwrap();
        let ids: Vec<_> = m.records().iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, ["ALL_IDB1/Cancer/a.PNG", "ALL_IDB1/Cancer/b.png", "ALL_IDB1/Cancer/c.jpeg"]);
        assert_eq!(m.count(ClassLabel::Cancer), 3);
        assert_eq!(m.count(ClassLabel::Normal), 0);
        assert!(m.warnings().iter().any(|w| w.contains("Normal")));
    }
}
