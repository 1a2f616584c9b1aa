use std::fs;
use std::path::Path;

use proptest::prelude::*;
use raresens::artifacts::{read_artifacts, read_manifest, write_artifacts};
use raresens::config::{DarcySection, PceSection, SsSection};
use raresens::driver::{run_double_loop, SampleStatus};
use raresens::grid_io::{parse_mean_field, read_mean_field, write_mean_field};
use raresens::model::ModelSetup;
use raresens::{ExperimentConfig, ModelKind};

fn small(seed: u64, threads: usize) -> ExperimentConfig {
    ExperimentConfig {
        n_samp: 80,
        tau: Some(2.0),
        seed,
        threads,
        ss: SsSection {
            n_per_level: 200,
            ..Default::default()
        },
        pce: PceSection {
            order: 2,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn artifacts_round_trip_bit_exact() {
    let a = run_double_loop(&small(11, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&a, dir.path()).unwrap();
    let b = read_artifacts(dir.path()).unwrap();
    assert_eq!(a, b);
    for (x, y) in a.surrogate.coeffs.iter().zip(&b.surrogate.coeffs) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn manifest_records_seed_and_counts() {
    let a = run_double_loop(&small(23, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&a, dir.path()).unwrap();
    let m = read_manifest(dir.path()).unwrap();
    assert_eq!(m.seed, 23);
    assert_eq!(m.config.seed, 23);
    assert_eq!(m.n_samp, 80);
    assert_eq!(m.n_used, 80 - m.n_excluded);
    assert_eq!(a.p_hats.len(), 80 - a.excluded());
    let used = a.diagnostics.iter().filter(|d| d.status == SampleStatus::Used).count();
    assert_eq!(used, a.p_hats.len());
}

#[test]
fn fixed_seed_gives_identical_files() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    write_artifacts(&run_double_loop(&small(7, 1)).unwrap(), d1.path()).unwrap();
    write_artifacts(&run_double_loop(&small(7, 1)).unwrap(), d2.path()).unwrap();
    assert_eq!(read_dir_bytes(d1.path()), read_dir_bytes(d2.path()));

    let d3 = tempfile::tempdir().unwrap();
    write_artifacts(&run_double_loop(&small(8, 1)).unwrap(), d3.path()).unwrap();
    assert_ne!(read_dir_bytes(d1.path()), read_dir_bytes(d3.path()));
}

#[test]
fn thread_count_does_not_change_results() {
    let serial = run_double_loop(&small(3, 1)).unwrap();
    let parallel = run_double_loop(&small(3, 4)).unwrap();
    assert_eq!(serial.xi_samples, parallel.xi_samples);
    assert_eq!(serial.p_hats, parallel.p_hats);
    assert_eq!(serial.diagnostics, parallel.diagnostics);
    assert_eq!(serial.surrogate, parallel.surrogate);
    assert_eq!(serial.sobol, parallel.sobol);
}

#[test]
fn darcy_double_loop_runs_on_a_coarse_grid() {
    let cfg = ExperimentConfig {
        model: ModelKind::Darcy,
        n_samp: 12,
        tau: Some(1.5),
        ss: SsSection {
            n_per_level: 50,
            ..Default::default()
        },
        pce: PceSection {
            order: 1,
            lambda: Some(1.0),
            ..Default::default()
        },
        darcy: DarcySection {
            grid: 8,
            t_cap: 20.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let a = run_double_loop(&cfg).unwrap();
    assert_eq!(a.surrogate.dim(), 3);
    assert!(a.p_hats.iter().all(|(_, p)| *p > 0.0 && *p <= 1.0));
}

#[test]
fn mean_field_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mean.txt");
    let n = 8;
    write_mean_field(&path, n, &vec![0.5; n * n]).unwrap();
    let mut cfg = ExperimentConfig {
        model: ModelKind::Darcy,
        darcy: DarcySection {
            grid: n,
            mean_field: Some(path.clone()),
            ..Default::default()
        },
        ..Default::default()
    };
    let setup = ModelSetup::from_config(&cfg).unwrap();
    let ctx = setup.darcy.as_ref().unwrap().context(&cfg.nominal()).unwrap();
    let q = ctx.qoi(&vec![0.0; ctx.dim()]).unwrap();
    // a constant log-mean of 0.5 speeds the flow by e^0.5
    assert!((q - (-0.5f64).exp()).abs() < 1e-3, "{q}");

    cfg.darcy.grid = 10;
    assert!(ModelSetup::from_config(&cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mean_field_text_round_trips(n in 1usize..12, seed: u64) {
        let mut s = raresens_core::RandomStream::new(seed, 0);
        let values: Vec<f64> = (0..n * n).map(|_| s.standard_normal() * 1e3).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        write_mean_field(&path, n, &values).unwrap();
        let (m, back) = read_mean_field(&path).unwrap();
        prop_assert_eq!(m, n);
        prop_assert_eq!(back, values);
    }

    #[test]
    fn short_mean_field_is_rejected(n in 2usize..12) {
        let text = format!("{n}\n{}", vec!["1.0"; n * n - 1].join(" "));
        prop_assert!(parse_mean_field(&text).is_err());
    }
}
