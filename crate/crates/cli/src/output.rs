//! Atomic file output. CSV files start with a `# config_hash: <hex>` line.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliResult;

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`, creating parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn csv_bytes<T: Serialize>(config_hash: &str, rows: &[T]) -> CliResult<Vec<u8>> {
    let mut out = format!("# config_hash: {config_hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, config_hash: &str, rows: &[T]) -> CliResult<()> {
    write_atomic(path, &csv_bytes(config_hash, rows)?)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `<root>/explore/<env>/<policy>/seed_<seed>`
pub fn run_dir(root: &Path, env: &str, policy: &str, seed: u64) -> PathBuf {
    root.join("explore").join(env).join(policy).join(format!("seed_{seed}"))
}

pub fn eval_dir(root: &Path, env: &str) -> PathBuf {
    root.join("evaluate").join(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn csv_has_hash_line_then_header() {
        let bytes = csv_bytes("abc", &[Row { a: 1, b: 0.5 }, Row { a: 2, b: f64::INFINITY }]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# config_hash: abc");
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1,0.5");
        assert_eq!(lines[3], "2,inf");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x/y.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
