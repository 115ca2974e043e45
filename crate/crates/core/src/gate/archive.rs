//! Validation and extraction of submitted zip and tar.gz archives.

use std::io::{Cursor, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::finding::normalize_path;

/// Extracted content may be at most this many times the archive cap.
const EXPANSION_LIMIT: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchiveFormat {
    #[serde(rename = "zip")]
    Zip,
    #[serde(rename = "tar.gz")]
    TarGz,
}

impl ArchiveFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ArchiveFormat::Zip => "zip",
            ArchiveFormat::TarGz => "tar.gz",
        }
    }
}

pub fn detect_format(bytes: &[u8]) -> Option<ArchiveFormat> {
    if bytes.starts_with(b"PK\x03\x04") || bytes.starts_with(b"PK\x05\x06") {
        Some(ArchiveFormat::Zip)
    } else if bytes.starts_with(&[0x1f, 0x8b]) {
        Some(ArchiveFormat::TarGz)
    } else {
        None
    }
}

fn rejected(msg: impl Into<String>) -> Error {
    Error::RejectedInput(msg.into())
}

/// Relative, non-escaping entry path, or an error.
fn safe_path(raw: &str) -> Result<String> {
    let absolute = raw.starts_with(['/', '\\']) || raw.split(['/', '\\']).next().is_some_and(|s| s.contains(':'));
    if absolute || raw.contains('\0') || raw.split(['/', '\\']).any(|s| s == "..") {
        return Err(rejected(format!("unsafe entry path {raw:?}")));
    }
    normalize_path(raw).ok_or_else(|| rejected(format!("empty entry path {raw:?}")))
}

struct Entry {
    path: String,
    data: Vec<u8>,
}

/// Walks every entry, checking paths and sizes; file contents are handed to
/// `sink` when it is given.
fn walk(bytes: &[u8], format: ArchiveFormat, cap: u64, mut sink: Option<&mut dyn FnMut(Entry) -> Result<()>>) -> Result<usize> {
    let budget = cap.saturating_mul(EXPANSION_LIMIT);
    let mut total = 0u64;
    let mut files = 0usize;
    let mut account = |size: u64| -> Result<()> {
        total = total.saturating_add(size);
        if total > budget {
            return Err(rejected(format!("archive expands beyond {budget} bytes")));
        }
        Ok(())
    };

    match format {
        ArchiveFormat::Zip => {
            let mut zip = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| rejected(format!("bad zip: {e}")))?;
            for i in 0..zip.len() {
                let mut file = zip.by_index(i).map_err(|e| rejected(format!("bad zip entry: {e}")))?;
                let path = safe_path(file.name())?;
                if file.is_dir() {
                    continue;
                }
                if file.is_symlink() {
                    return Err(rejected(format!("symlink entry {path:?}")));
                }
                account(file.size())?;
                let mut data = Vec::new();
                // reading verifies the CRC
                file.read_to_end(&mut data).map_err(|e| rejected(format!("bad zip entry {path:?}: {e}")))?;
                files += 1;
                if let Some(sink) = sink.as_mut() {
                    sink(Entry { path, data })?;
                }
            }
        }
        ArchiveFormat::TarGz => {
            let mut decoder = GzDecoder::new(bytes);
            {
                let mut tar = tar::Archive::new(&mut decoder);
                let entries = tar.entries().map_err(|e| rejected(format!("bad tar.gz: {e}")))?;
                for entry in entries {
                    let mut entry = entry.map_err(|e| rejected(format!("bad tar.gz entry: {e}")))?;
                    let raw = entry.path().map_err(|e| rejected(format!("bad tar path: {e}")))?;
                    let path = safe_path(&raw.to_string_lossy())?;
                    let kind = entry.header().entry_type();
                    if kind.is_dir() || kind.is_pax_global_extensions() || kind.is_pax_local_extensions() {
                        continue;
                    }
                    if !kind.is_file() {
                        return Err(rejected(format!("unsupported entry type for {path:?}")));
                    }
                    account(entry.size())?;
                    let mut data = Vec::new();
                    entry
                        .read_to_end(&mut data)
                        .map_err(|e| rejected(format!("bad tar.gz entry {path:?}: {e}")))?;
                    files += 1;
                    if let Some(sink) = sink.as_mut() {
                        sink(Entry { path, data })?;
                    }
                }
            }
            // drain to the gzip trailer so a truncated stream is caught
            std::io::copy(&mut decoder, &mut std::io::sink()).map_err(|e| rejected(format!("bad tar.gz: {e}")))?;
        }
    }
    Ok(files)
}

/// Checks that `bytes` is a non-empty, well-formed archive within `cap`.
/// Returns the format and the number of regular files.
pub fn inspect_archive(bytes: &[u8], cap: u64) -> Result<(ArchiveFormat, usize)> {
    if bytes.is_empty() {
        return Err(rejected("empty archive"));
    }
    if bytes.len() as u64 > cap {
        return Err(Error::TooLarge {
            size: bytes.len() as u64,
            cap,
        });
    }
    let format = detect_format(bytes).ok_or_else(|| rejected("not a zip or tar.gz archive"))?;
    let files = walk(bytes, format, cap, None)?;
    if files == 0 {
        return Err(rejected("archive contains no files"));
    }
    Ok((format, files))
}

/// Extracts into `dest`, which must not exist yet. Goes through a sibling
/// temporary directory so `dest` only ever appears complete.
pub fn extract_archive(bytes: &[u8], format: ArchiveFormat, cap: u64, dest: &Path) -> Result<()> {
    let parent = dest.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).io_context(|| format!("creating {}", parent.display()))?;
    let tmp = parent.join(format!(
        ".{}.{}",
        dest.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        uuid::Uuid::new_v4().simple()
    ));
    let result = (|| {
        let mut sink = |entry: Entry| -> Result<()> {
            let path = tmp.join(&entry.path);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).io_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(&path, &entry.data).io_context(|| format!("writing {}", path.display()))
        };
        std::fs::create_dir_all(&tmp).io_context(|| format!("creating {}", tmp.display()))?;
        walk(bytes, format, cap, Some(&mut sink))?;
        match std::fs::rename(&tmp, dest) {
            Ok(()) => Ok(()),
            // another worker finished the same content first
            Err(_) if dest.is_dir() => Ok(()),
            Err(e) => Err(Error::io(format!("moving extraction to {}", dest.display()), e)),
        }
    })();
    let _ = std::fs::remove_dir_all(&tmp);
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    pub(crate) fn zip_of(files: &[(&str, &str)]) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = zip::ZipWriter::new(&mut buf);
            for (name, body) in files {
                w.start_file(*name, zip::write::SimpleFileOptions::default()).unwrap();
                w.write_all(body.as_bytes()).unwrap();
            }
            w.finish().unwrap();
        }
        buf.into_inner()
    }

    fn tgz_of(files: &[(&str, &str)]) -> Vec<u8> {
        let enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        let mut b = tar::Builder::new(enc);
        for (name, body) in files {
            let mut h = tar::Header::new_gnu();
            h.set_size(body.len() as u64);
            h.set_mode(0o644);
            h.set_cksum();
            b.append_data(&mut h, name, body.as_bytes()).unwrap();
        }
        b.into_inner().unwrap().finish().unwrap()
    }

    #[test]
    fn accepts_zip_and_tgz() {
        let files = [("a/A.java", "class A {}"), ("a/B.java", "class B {}"), ("README", "x")];
        assert_eq!(inspect_archive(&zip_of(&files), 1 << 20).unwrap(), (ArchiveFormat::Zip, 3));
        assert_eq!(inspect_archive(&tgz_of(&files), 1 << 20).unwrap(), (ArchiveFormat::TarGz, 3));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(inspect_archive(b"", 10), Err(Error::RejectedInput(_))));
        assert!(matches!(inspect_archive(b"hello", 10), Err(Error::RejectedInput(_))));
        assert!(matches!(inspect_archive(&zip_of(&[]), 1 << 20), Err(Error::RejectedInput(_))));
        let z = zip_of(&[("a", "b")]);
        assert!(matches!(inspect_archive(&z, 4), Err(Error::TooLarge { .. })));
        let mut truncated = tgz_of(&[("a", "body")]);
        truncated.truncate(truncated.len() - 6);
        assert!(matches!(inspect_archive(&truncated, 1 << 20), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn rejects_escaping_paths() {
        for bad in ["../evil", "/etc/passwd", "a/../../b", "C:/x"] {
            assert!(safe_path(bad).is_err(), "{bad}");
        }
        assert_eq!(safe_path("./a//b").unwrap(), "a/b");
        let z = zip_of(&[("../evil.txt", "x")]);
        assert!(matches!(inspect_archive(&z, 1 << 20), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn extracts_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("out");
        extract_archive(&tgz_of(&[("src/a.c", "int x;")]), ArchiveFormat::TarGz, 1 << 20, &dest).unwrap();
        assert_eq!(std::fs::read_to_string(dest.join("src/a.c")).unwrap(), "int x;");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
