use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

/// Where artifacts go: files in `--out`, or standard output.
pub struct Sink {
    dir: Option<PathBuf>,
    wrote_any: bool,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Result<Sink> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Sink {
            dir,
            wrote_any: false,
        })
    }

    /// Writes `name` into the output directory, or prints it. On standard
    /// output every artifact after the first gets a `# name` header line.
    pub fn artifact(&mut self, name: &str, body: &str) -> Result<()> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            }
            None => {
                let mut out = std::io::stdout().lock();
                if self.wrote_any {
                    writeln!(out, "# {name}")?;
                }
                out.write_all(body.as_bytes())?;
                if !body.ends_with('\n') {
                    writeln!(out)?;
                }
            }
        }
        self.wrote_any = true;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.artifact(name, &s)
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.artifact(name, &String::from_utf8(bytes)?)
    }
}
