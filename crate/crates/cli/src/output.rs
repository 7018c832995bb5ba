//! Atomic file output with hash- and seed-stamped names.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

/// Writes through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// JSON with sorted keys and a trailing newline.
pub fn sorted_json<T: Serialize>(x: &T) -> String {
    let v: Value = serde_json::to_value(x).expect("serializable");
    let mut s = serde_json::to_string_pretty(&v).expect("serializable");
    s.push('\n');
    s
}

pub struct Bundle {
    pub dir: PathBuf,
    pub stem: String,
    pub written: Vec<PathBuf>,
}

impl Bundle {
    pub fn new(dir: &Path, command: &str, hash: &str, seed: u64) -> Self {
        Self {
            dir: dir.to_path_buf(),
            stem: format!("{command}_{hash}_s{seed}"),
            written: Vec::new(),
        }
    }

    /// `<stem><suffix>` inside the bundle directory.
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.stem))
    }

    pub fn write(&mut self, path: PathBuf, body: &str) -> std::io::Result<()> {
        write_atomic(&path, body.as_bytes())?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_suffix(&mut self, suffix: &str, body: &str) -> std::io::Result<()> {
        let p = self.path(suffix);
        self.write(p, body)
    }
}

/// `table.csv` becomes `table_<hash>_s<seed>.csv`.
pub fn stamped(path: &Path, hash: &str, seed: u64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{hash}_s{seed}.{ext}"),
        None => format!("{stem}_{hash}_s{seed}"),
    };
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_come_out_sorted() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        let s = sorted_json(&S { zeta: 1, alpha: 2 });
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.ends_with('\n') && !s.contains('\r'));
    }

    #[test]
    fn stamping_keeps_extension() {
        assert_eq!(stamped(Path::new("a/table.csv"), "ab12", 7), PathBuf::from("a/table_ab12_s7.csv"));
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x/y.json");
        write_atomic(&p, b"{}\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "{}\n");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
