//! Minimal CSV output: one `# config:` comment line, one header row, then data rows.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Float cell in shortest round-trip exponent form.
pub struct Sci(pub f64);

impl Display for Sci {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:e}", self.0)
    }
}

pub struct CsvTable {
    header: Vec<&'static str>,
    body: String,
}

impl CsvTable {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), body: String::new() }
    }

    pub fn row(&mut self, cells: &[&dyn Display]) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        let line: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
        self.body.push_str(&line.join(","));
        self.body.push('\n');
    }

    pub fn len(&self) -> usize {
        self.body.lines().count()
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }

    pub fn render(&self, config_line: &str) -> String {
        format!("# config: {config_line}\n{}\n{}", self.header.join(","), self.body)
    }

    pub fn write(&self, dir: &Path, name: &str, config_line: &str) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        fs::write(&path, self.render(config_line))?;
        Ok(path)
    }
}
