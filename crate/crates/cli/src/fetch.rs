//! Checksum-verified MNIST download from the `mnist-data` npm package, which
//! ships the four uncompressed IDX files.

use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use flate2::read::GzDecoder;
use log::info;
use sha2::{Digest, Sha256};

pub const DEFAULT_URL: &str = "https://registry.npmjs.org/mnist-data/-/mnist-data-1.2.6.tgz";

const TARBALL_SHA256: &str = "8f87f2d0d9133e6c9f7012d6d26bb05409e7e870a1de21d1a600b8d400cc07ed";

const FILES: [(&str, &str); 4] = [
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

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn verify(name: &str, bytes: &[u8], want: &str) -> Result<()> {
    let got = sha256_hex(bytes);
    if got != want {
        bail!("checksum mismatch for {name}: expected {want}, got {got}");
    }
    Ok(())
}

/// Files already present with the right checksum are kept.
fn all_present(dir: &Path) -> bool {
    FILES
        .iter()
        .all(|(name, sum)| fs::read(dir.join(name)).is_ok_and(|b| sha256_hex(&b) == *sum))
}

/// Extracts and verifies the IDX files from a package tarball.
pub fn install_from_tarball(tarball: &[u8], dir: &Path) -> Result<()> {
    verify("tarball", tarball, TARBALL_SHA256)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut archive = tar::Archive::new(GzDecoder::new(tarball));
    let mut found = 0;
    for entry in archive.entries()? {
        let mut entry = entry?;
        let path = entry.path()?.into_owned();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some((_, sum)) = FILES.iter().find(|(f, _)| *f == name) else {
            continue;
        };
        let mut bytes = Vec::new();
        entry.read_to_end(&mut bytes)?;
        verify(name, &bytes, sum)?;
        fs::write(dir.join(name), &bytes)
            .with_context(|| format!("writing {}", dir.join(name).display()))?;
        found += 1;
    }
    if found != FILES.len() {
        bail!("tarball held {found} of the {} MNIST files", FILES.len());
    }
    Ok(())
}

pub fn fetch(dir: &Path, url: &str, tarball: Option<&Path>) -> Result<()> {
    if all_present(dir) {
        info!("MNIST already present in {}", dir.display());
        return Ok(());
    }
    let bytes = match tarball {
        Some(path) => fs::read(path).with_context(|| format!("reading {}", path.display()))?,
        None => {
            info!("downloading {url}");
            let mut bytes = Vec::new();
            ureq::get(url)
                .call()
                .with_context(|| format!("downloading {url}"))?
                .body_mut()
                .as_reader()
                .read_to_end(&mut bytes)?;
            bytes
        }
    };
    install_from_tarball(&bytes, dir)?;
    info!("MNIST installed in {}", dir.display());
    Ok(())
}
