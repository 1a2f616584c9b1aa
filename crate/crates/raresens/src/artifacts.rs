//! Run artifacts on disk.
//!
//! | file | content |
//! |------|---------|
//! | `xi_samples.csv` | every outer sample, header `xi_1..xi_M` |
//! | `p_hats.csv` | `sample,p_hat` for the samples used in the fit |
//! | `diagnostics.csv` | `sample,status,levels,n_evals,p_hat` for every sample |
//! | `surrogate.json` | the fitted expansion |
//! | `sobol.json` | its Sobol' indices |
//! | `manifest.json` | configuration, seed, version and totals |
//!
//! Floats are written in shortest round-trip form, so reading back gives
//! bit-identical values.

use std::fs;
use std::path::Path;

use raresens_core::pce::PCESurrogate;
use raresens_core::sobol::SobolReport;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::driver::{RunArtifacts, SampleRecord, SampleStatus};
use crate::error::{AppError, AppResult};

pub const XI_SAMPLES: &str = "xi_samples.csv";
pub const P_HATS: &str = "p_hats.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const SURROGATE: &str = "surrogate.json";
pub const SOBOL: &str = "sobol.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub n_samp: usize,
    pub n_used: usize,
    pub n_excluded: usize,
    pub total_evals: u64,
    pub radius: f64,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

fn write_text(path: &Path, text: &str) -> AppResult<()> {
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn read_text(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

fn csv_text(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> AppResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| AppError::format("<csv>", e);
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::format("<csv>", e.error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_rows(path: &Path, expected_header: &[&str]) -> AppResult<Vec<csv::StringRecord>> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| AppError::format(path, e))?.clone();
    if !expected_header.is_empty() && header.iter().collect::<Vec<_>>() != expected_header {
        return Err(AppError::format(path, format!("unexpected header {header:?}")));
    }
    r.records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AppError::format(path, e))
}

fn parse<T: std::str::FromStr>(path: &Path, field: &str) -> AppResult<T>
where
    T::Err: std::fmt::Display,
{
    field
        .parse::<T>()
        .map_err(|e| AppError::format(path, format!("bad field {field:?}: {e}")))
}

pub fn write_artifacts(a: &RunArtifacts, dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let m = a.surrogate.dim();

    let header: Vec<String> = (1..=m).map(|i| format!("xi_{i}")).collect();
    let text = csv_text(
        &header,
        a.xi_samples.iter().map(|x| x.iter().map(f64::to_string).collect()),
    )?;
    write_text(&dir.join(XI_SAMPLES), &text)?;

    let text = csv_text(
        &["sample".into(), "p_hat".into()],
        a.p_hats.iter().map(|(i, p)| vec![i.to_string(), p.to_string()]),
    )?;
    write_text(&dir.join(P_HATS), &text)?;

    let header: Vec<String> = ["sample", "status", "levels", "n_evals", "p_hat"]
        .map(String::from)
        .to_vec();
    let text = csv_text(
        &header,
        a.diagnostics.iter().map(|d| {
            vec![
                d.index.to_string(),
                d.status.as_str().to_string(),
                d.levels.to_string(),
                d.n_evals.to_string(),
                d.p_hat.map(|p| p.to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    write_text(&dir.join(DIAGNOSTICS), &text)?;

    write_text(&dir.join(SURROGATE), &to_json(&a.surrogate))?;
    write_text(&dir.join(SOBOL), &to_json(&a.sobol))?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: a.config.seed,
        n_samp: a.xi_samples.len(),
        n_used: a.p_hats.len(),
        n_excluded: a.excluded(),
        total_evals: a.total_evals,
        radius: a.radius,
        files: [XI_SAMPLES, P_HATS, DIAGNOSTICS, SURROGATE, SOBOL]
            .map(String::from)
            .to_vec(),
        config: a.config.clone(),
    };
    write_text(&dir.join(MANIFEST), &to_json(&manifest))
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> AppResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| AppError::format(path, e))
}

pub fn read_manifest(dir: &Path) -> AppResult<Manifest> {
    read_json(&dir.join(MANIFEST))
}

/// Loads a saved surrogate, checking that its basis matches its order.
pub fn read_surrogate(path: &Path) -> AppResult<PCESurrogate> {
    let s: PCESurrogate = read_json(path)?;
    let rebuilt = PCESurrogate::new(s.bounds.clone(), s.families.clone(), s.order, s.coeffs.clone())
        .map_err(|e| AppError::format(path, e))?;
    if rebuilt.basis != s.basis {
        return Err(AppError::format(path, "basis does not match the total-order basis"));
    }
    Ok(s)
}

pub fn read_artifacts(dir: &Path) -> AppResult<RunArtifacts> {
    let manifest = read_manifest(dir)?;
    let surrogate = read_surrogate(&dir.join(SURROGATE))?;
    let sobol: SobolReport = read_json(&dir.join(SOBOL))?;
    let m = surrogate.dim();

    let path = dir.join(XI_SAMPLES);
    let header: Vec<String> = (1..=m).map(|i| format!("xi_{i}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let xi_samples = csv_rows(&path, &header)?
        .iter()
        .map(|r| r.iter().map(|f| parse::<f64>(&path, f)).collect())
        .collect::<AppResult<Vec<Vec<f64>>>>()?;

    let path = dir.join(P_HATS);
    let p_hats = csv_rows(&path, &["sample", "p_hat"])?
        .iter()
        .map(|r| Ok((parse::<usize>(&path, &r[0])?, parse::<f64>(&path, &r[1])?)))
        .collect::<AppResult<Vec<_>>>()?;

    let path = dir.join(DIAGNOSTICS);
    let diagnostics = csv_rows(&path, &["sample", "status", "levels", "n_evals", "p_hat"])?
        .iter()
        .map(|r| {
            let status = SampleStatus::parse(&r[1])
                .ok_or_else(|| AppError::format(&path, format!("unknown status {:?}", &r[1])))?;
            Ok(SampleRecord {
                index: parse(&path, &r[0])?,
                status,
                levels: parse(&path, &r[2])?,
                n_evals: parse(&path, &r[3])?,
                p_hat: if r[4].is_empty() {
                    None
                } else {
                    Some(parse(&path, &r[4])?)
                },
            })
        })
        .collect::<AppResult<Vec<_>>>()?;

    if xi_samples.len() != manifest.n_samp || p_hats.len() != manifest.n_used || diagnostics.len() != manifest.n_samp {
        return Err(AppError::format(
            dir.join(MANIFEST),
            "row counts disagree with the manifest",
        ));
    }
    Ok(RunArtifacts {
        config: manifest.config,
        xi_samples,
        p_hats,
        diagnostics,
        surrogate,
        radius: manifest.radius,
        sobol,
        total_evals: manifest.total_evals,
    })
}
