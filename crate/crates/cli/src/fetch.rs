//! Dataset download with pinned checksums.

use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

/// SHA-256 of the uncompressed MNIST IDX files.
pub const MNIST_SHA256: &[(&str, &str)] = &[
    (
        "train-images-idx3-ubyte",
        "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    ),
    (
        "train-labels-idx1-ubyte",
        "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    ),
    (
        "t10k-images-idx3-ubyte",
        "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    ),
    (
        "t10k-labels-idx1-ubyte",
        "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    ),
];

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("{url}: {msg}")]
    Download { url: String, msg: String },
    #[error("{name}: no pinned checksum for this file name")]
    Unpinned { name: String },
    #[error("{name}: sha256 {actual} does not match pinned {expected}")]
    Checksum {
        name: String,
        expected: String,
        actual: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn pinned(name: &str) -> Option<&'static str> {
    MNIST_SHA256
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, h)| *h)
}

/// File name a URL is stored under: its last segment without `.gz`.
pub fn target_name(url: &str) -> String {
    let last = url.rsplit('/').next().unwrap_or(url);
    last.strip_suffix(".gz").unwrap_or(last).to_string()
}

/// The four standard file URLs below `base`, gzip-compressed.
pub fn standard_urls(base: &str) -> Vec<String> {
    let base = base.trim_end_matches('/');
    MNIST_SHA256
        .iter()
        .map(|(n, _)| format!("{base}/{n}.gz"))
        .collect()
}

fn download(url: &str) -> Result<Vec<u8>, FetchError> {
    let err = |msg: String| FetchError::Download {
        url: url.to_string(),
        msg,
    };
    if let Some(path) = url.strip_prefix("file://") {
        return std::fs::read(path).map_err(|e| err(e.to_string()));
    }
    let resp = ureq::get(url).call().map_err(|e| err(e.to_string()))?;
    let mut buf = Vec::new();
    resp.into_reader()
        .read_to_end(&mut buf)
        .map_err(|e| err(e.to_string()))?;
    Ok(buf)
}

fn gunzip_if_needed(url: &str, bytes: Vec<u8>) -> Result<Vec<u8>, FetchError> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| FetchError::Download {
                url: url.to_string(),
                msg: format!("gzip: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// What happened to one file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Fetched {
    Downloaded(PathBuf),
    AlreadyPresent(PathBuf),
}

/// Downloads each URL into `dest`, decompressing gzip and verifying the
/// pinned checksum before the file is written. Files already present with
/// the right checksum are left alone.
pub fn fetch(urls: &[String], dest: &Path) -> Result<Vec<Fetched>, FetchError> {
    std::fs::create_dir_all(dest).map_err(|source| FetchError::Io {
        path: dest.to_path_buf(),
        source,
    })?;
    let mut done = Vec::new();
    for url in urls {
        let name = target_name(url);
        let expected = pinned(&name).ok_or_else(|| FetchError::Unpinned { name: name.clone() })?;
        let path = dest.join(&name);
        if let Ok(existing) = std::fs::read(&path) {
            if sha256_hex(&existing) == expected {
                done.push(Fetched::AlreadyPresent(path));
                continue;
            }
        }
        let bytes = gunzip_if_needed(url, download(url)?)?;
        let actual = sha256_hex(&bytes);
        if actual != expected {
            return Err(FetchError::Checksum {
                name,
                expected: expected.to_string(),
                actual,
            });
        }
        prunenet::sparse::write_atomic(&path, &bytes).map_err(|e| FetchError::Io {
            path: path.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
        done.push(Fetched::Downloaded(path));
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_urls() {
        assert_eq!(
            target_name("https://x/y/t10k-labels-idx1-ubyte.gz"),
            "t10k-labels-idx1-ubyte"
        );
        let urls = standard_urls("file:///m/");
        assert_eq!(urls[0], "file:///m/train-images-idx3-ubyte.gz");
        assert_eq!(urls.len(), 4);
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn rejects_unpinned_and_bad_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("t10k-labels-idx1-ubyte");
        std::fs::write(&src, b"not mnist").unwrap();
        let out = dir.path().join("out");
        let url = format!("file://{}", src.display());
        assert!(matches!(
            fetch(&[url], &out),
            Err(FetchError::Checksum { .. })
        ));
        assert!(!out.join("t10k-labels-idx1-ubyte").exists());
        let other = dir.path().join("other.bin");
        std::fs::write(&other, b"x").unwrap();
        let url = format!("file://{}", other.display());
        assert!(matches!(
            fetch(&[url], &out),
            Err(FetchError::Unpinned { .. })
        ));
    }
}
