use crate::error::{read, CliError, CliResult};
use kdvision::index::Archive;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Writes `bytes` next to `path` and renames over it, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io = |source| CliError::File { path: path.to_path_buf(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// Exclusive right to rewrite an archive, released on drop.
#[derive(Debug)]
pub struct ArchiveLock {
    path: PathBuf,
}

impl ArchiveLock {
    pub fn lock_path(archive: &Path) -> PathBuf {
        let mut p = archive.as_os_str().to_owned();
        p.push(".lock");
        PathBuf::from(p)
    }

    pub fn acquire(archive: &Path) -> CliResult<Self> {
        let path = Self::lock_path(archive);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(ArchiveLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(archive.to_path_buf())),
            Err(source) => Err(CliError::File { path, source }),
        }
    }
}

impl Drop for ArchiveLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn load_archive(path: &Path) -> CliResult<Archive> {
    Ok(Archive::decode(&read(path)?)?)
}

pub fn save_archive(path: &Path, arc: &Archive) -> CliResult<()> {
    write_atomic(path, &arc.encode())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let arc = dir.path().join("a.kdv");
        let held = ArchiveLock::acquire(&arc).unwrap();
        assert!(matches!(ArchiveLock::acquire(&arc), Err(CliError::Locked(_))));
        drop(held);
        ArchiveLock::acquire(&arc).unwrap();
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
