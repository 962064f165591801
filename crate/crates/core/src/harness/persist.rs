use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Format;
use super::report::RunReport;
use crate::error::Result;
use crate::forward::FieldPath;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub files: Vec<ManifestEntry>,
    /// Files whose content varies between identical runs (timings).
    pub volatile: Vec<String>,
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,x,value` rows for every time and node of `path`.
pub fn path_csv(path: &FieldPath) -> String {
    let mut out = String::from("t,x,value\n");
    for (t, x, v) in path.rows() {
        let _ = writeln!(out, "{},{},{}", format_float(t), format_float(x), format_float(v));
    }
    out
}

/// Writes `report.json`, one CSV per named path, `timings.json` and
/// `manifest.json` into `dir`; returns the manifest path.
pub fn persist(report: &RunReport, paths: &[(String, FieldPath)], dir: &Path, formats: &[Format]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut write = |name: &str, bytes: &[u8]| -> Result<()> {
        std::fs::write(dir.join(name), bytes)?;
        files.push(ManifestEntry { file: name.into(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() });
        Ok(())
    };
    write("report.json", &to_json(report))?;
    if formats.contains(&Format::Csv) {
        for (name, path) in paths {
            write(&format!("{name}.csv"), path_csv(path).as_bytes())?;
        }
    }
    std::fs::write(dir.join("timings.json"), to_json(&report.phases))?;
    let manifest = Manifest { version: report.version.clone(), config_hash: report.config_hash.clone(), files, volatile: vec!["timings.json".into()] };
    let target = dir.join("manifest.json");
    std::fs::write(&target, to_json(&manifest))?;
    Ok(target)
}

fn to_json(v: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("serializable");
    bytes.push(b'\n');
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;
    use crate::spatial::{build_grid, Field};

    fn sample_path() -> FieldPath {
        let g = build_grid(0.0, 1.0, 3).unwrap();
        FieldPath::new(vec![0.0, 0.5], vec![Field::constant(g, 0.1), Field::constant(g, 1.0 / 3.0)])
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout() {
        let csv = path_csv(&sample_path());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,value");
        assert_eq!(lines.len(), 1 + 2 * 5);
        let last: Vec<f64> = lines[10].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(last, vec![0.5, 1.0, 1.0 / 3.0]);
    }

    #[test]
    fn empty_path_set_lists_only_the_report() {
        let dir = tempfile::tempdir().unwrap();
        let r = RunReport::new("verify", &RunConfig::default());
        let m = persist(&r, &[], dir.path(), &[Format::Json, Format::Csv]).unwrap();
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(m).unwrap()).unwrap();
        assert_eq!(manifest.files.len(), 1);
        assert_eq!(manifest.files[0].file, "report.json");
    }

    #[test]
    fn identical_runs_have_identical_digests() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut r = RunReport::new("simulate", &RunConfig::default());
        let paths = vec![("mean".to_string(), sample_path())];
        persist(&r, &paths, a.path(), &[Format::Json, Format::Csv]).unwrap();
        r.phases.push(crate::harness::report::Phase { name: "run".into(), seconds: 1.0 });
        persist(&r, &paths, b.path(), &[Format::Json, Format::Csv]).unwrap();
        let read = |d: &Path| std::fs::read(d.join("manifest.json")).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
        assert!(a.path().join("mean.csv").exists());
    }
}
