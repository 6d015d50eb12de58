//! Staged output files: nothing lands on disk until every output of a run
//! has been produced, and a failed commit removes what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use nubblematch_core::Error;

#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

fn staging_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

impl Outputs {
    pub fn add(&mut self, path: &Path, bytes: impl Into<Vec<u8>>) {
        self.files.push((path.to_path_buf(), bytes.into()));
    }

    pub fn paths(&self) -> Vec<String> {
        self.files
            .iter()
            .map(|(p, _)| p.display().to_string())
            .collect()
    }

    pub fn commit(self) -> Result<(), Error> {
        let mut staged = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            let tmp = staging_path(path);
            if let Err(e) = fs::write(&tmp, bytes) {
                let _ = fs::remove_file(&tmp);
                cleanup(&staged);
                return Err(Error::io(path, e));
            }
            staged.push((tmp, path.clone()));
        }
        let mut done: Vec<PathBuf> = Vec::new();
        for (tmp, path) in &staged {
            if let Err(e) = fs::rename(tmp, path) {
                for p in &done {
                    let _ = fs::remove_file(p);
                }
                cleanup(&staged);
                return Err(Error::io(path, e));
            }
            done.push(path.clone());
        }
        Ok(())
    }
}

fn cleanup(staged: &[(PathBuf, PathBuf)]) {
    for (tmp, _) in staged {
        let _ = fs::remove_file(tmp);
    }
}
