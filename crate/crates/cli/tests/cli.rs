use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use alrom_cli::{csv_out, matrix_file};

const SMALL: &str = "lattice.n_sites = 40\nlattice.half_length = 10\nlattice.t_final = 0.5\nsnapshots.stride = 2\nsweep.modes = 4, 6:5\n";

fn alrom(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_alrom"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let p = dir.join("run.txt");
        fs::write(&p, text).unwrap();
        cmd.arg("--config").arg(p);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn one_step_with_unit_stride_gives_two_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = alrom(dir.path(), Some("lattice.t_final = 0.01\nsnapshots.stride = 1\n"), &["fom"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["p", "q", "m"] {
        let m = matrix_file::read(&dir.path().join(format!("out/fom/snapshots_{f}.alrm"))).unwrap();
        assert_eq!(m.shape(), (200, 2));
    }
    let inv = csv_out::read(&dir.path().join("out/fom/invariants.csv")).unwrap();
    assert_eq!(inv.rows.len(), 2);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&alrom(dir.path(), Some("lattice.bogus = 1\n"), &["fom"])), 2);
    assert_eq!(code(&alrom(dir.path(), Some("lattice.t_final = 0\n"), &["fom"])), 2);
    assert_eq!(code(&alrom(dir.path(), Some("snapshots.stride = 0\n"), &["fom"])), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_alrom")).args(["fom", "--preset", "nope"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&alrom(dir.path(), Some(&format!("{SMALL}sweep.modes =\n")), &["pipeline"])), 2);
    assert_eq!(code(&alrom(dir.path(), Some(SMALL), &["pipeline", "--modes", ""])), 2);
}

#[test]
fn nonconvergence_exits_3_and_names_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = alrom(dir.path(), Some("lattice.t_final = 0.05\nsolver.max_iters = 1\n"), &["fom"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 1"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn corrupted_snapshots_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&alrom(dir.path(), Some(SMALL), &["fom"])), 0);
    let f = dir.path().join("out/fom/snapshots_q.alrm");
    let bytes = fs::read(&f).unwrap();
    fs::write(&f, &bytes[..bytes.len() - 3]).unwrap();
    assert_eq!(code(&alrom(dir.path(), None, &["reduce", "--modes", "4"])), 4);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&f, bad).unwrap();
    assert_eq!(code(&alrom(dir.path(), None, &["reduce", "--modes", "4"])), 4);
}

#[test]
fn stages_chain_through_the_saved_config() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&alrom(dir.path(), Some(SMALL), &["fom"])), 0);
    for stage in ["reduce", "rom", "compare"] {
        let o = alrom(dir.path(), None, &[stage, "--modes", "4,6:5"]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let t = csv_out::read(&dir.path().join("out/compare/table.csv")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(&t.rows[1][..3], ["6", "5", "pod_deim"]);
}

#[test]
fn tolerance_driven_reduce_records_one_model() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&alrom(dir.path(), Some(SMALL), &["fom"])), 0);
    let o = alrom(dir.path(), None, &["reduce"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = csv_out::read(&dir.path().join("out/reduce/models.csv")).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("tolerance ranks"));
}

#[test]
fn full_rank_model_round_trips_the_fom() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "lattice.n_sites = 16\nlattice.half_length = 4\nlattice.t_final = 0.2\nsnapshots.stride = 1\n";
    let o = alrom(dir.path(), Some(cfg), &["pipeline", "--modes", "16"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("out/compare/table.csv");
    let t = csv_out::read(&path).unwrap();
    let err = t.reals("rel_error[-]", &path).unwrap()[0];
    assert!(err < 1e-10, "{err}");
}

#[test]
fn mismatched_grids_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&alrom(dir.path(), Some(SMALL), &["pipeline", "--modes", "4"])), 0);
    let longer = SMALL.replace("t_final = 0.5", "t_final = 0.6");
    assert_eq!(code(&alrom(dir.path(), Some(&longer), &["rom", "--modes", "4"])), 0);
    assert_eq!(code(&alrom(dir.path(), Some(SMALL), &["compare", "--modes", "4"])), 4);
}

#[test]
fn reduce_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&alrom(dir.path(), Some(SMALL), &["fom"])), 0);
    let model = dir.path().join("out/models/r6_d5");
    assert_eq!(code(&alrom(dir.path(), None, &["reduce", "--modes", "6:5"])), 0);
    let first: Vec<_> = ["kron_p.alrm", "kron_q.alrm", "v_p.alrm", "model.cfg"].iter().map(|f| fs::read(model.join(f)).unwrap()).collect();
    let spectrum = fs::read(dir.path().join("out/reduce/spectrum.csv")).unwrap();
    assert_eq!(code(&alrom(dir.path(), None, &["reduce", "--modes", "6:5"])), 0);
    let second: Vec<_> = ["kron_p.alrm", "kron_q.alrm", "v_p.alrm", "model.cfg"].iter().map(|f| fs::read(model.join(f)).unwrap()).collect();
    assert_eq!(first, second);
    assert_eq!(spectrum, fs::read(dir.path().join("out/reduce/spectrum.csv")).unwrap());
}
