pub mod gen;
pub mod inspect;
pub mod scaling;
pub mod train;

use std::path::{Path, PathBuf};

use dial_core::data::{read_jsonl, truth_from_triples};
use dial_core::{DialError, PreferenceTriple, TruthRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::resolve_out;
use crate::error::{CliError, CliResult};

/// Resolves `dir` and makes it an empty directory. An existing non-empty
/// directory is only cleared under `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> CliResult<PathBuf> {
    let out = resolve_out(dir);
    if out.exists() {
        let occupied = std::fs::read_dir(&out)
            .map_err(|e| CliError::io(&out, e))?
            .next()
            .is_some();
        if occupied {
            if !force {
                return Err(CliError::Usage(format!(
                    "{} already exists; pass --force to overwrite",
                    out.display()
                )));
            }
            std::fs::remove_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        }
    }
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    Ok(out)
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    read_jsonl(path).map_err(|e| match e {
        DialError::Io(source) => CliError::io(path, source),
        e => e.into(),
    })
}

/// Truth records, or preference triples expanded to `f = 1 / 0` records.
pub fn load_labeled(path: &Path) -> CliResult<Vec<TruthRecord>> {
    match read_records::<TruthRecord>(path) {
        Ok(r) => Ok(r),
        Err(CliError::Core(truth_err)) => match read_records::<PreferenceTriple>(path) {
            Ok(t) => Ok(truth_from_triples(&t)),
            Err(_) => Err(CliError::Core(truth_err)),
        },
        Err(e) => Err(e),
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(DialError::from)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
