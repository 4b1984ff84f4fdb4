//! A [`ReducedModel`] on disk: one `ALRM` file per operator plus a
//! `model.cfg` manifest of scalars and shapes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use alrom::rom::DeimTerms;
use alrom::ReducedModel;
use nalgebra::DMatrix;

use crate::csv_out::real;
use crate::error::{CliError, CliResult};
use crate::matrix_file;

pub const MANIFEST: &str = "model.cfg";

pub fn write_manifest(path: &Path, entries: &BTreeMap<String, String>) -> CliResult<()> {
    let mut text = String::new();
    for (k, v) in entries {
        let _ = writeln!(text, "{k} = {v}");
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_manifest(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::corrupt(path, format!("line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn manifest_real(m: &BTreeMap<String, String>, key: &str, path: &Path) -> CliResult<f64> {
    m.get(key)
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| CliError::corrupt(path, format!("manifest lacks a numeric '{key}'")))
}

fn manifest_count(m: &BTreeMap<String, String>, key: &str, path: &Path) -> CliResult<usize> {
    m.get(key)
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| CliError::corrupt(path, format!("manifest lacks an integer '{key}'")))
}

/// Writes the operators and a manifest; `extras` are appended to the
/// manifest verbatim.
pub fn save_model(dir: &Path, model: &ReducedModel, extras: &BTreeMap<String, String>) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let put = |name: &str, m: &DMatrix<f64>| matrix_file::write(&dir.join(format!("{name}.alrm")), m);
    put("v_p", &model.v_p)?;
    put("v_q", &model.v_q)?;
    put("grad_p", &model.grad_p)?;
    put("grad_q", &model.grad_q)?;
    put("momentum_cross", &model.momentum_cross)?;
    let mut manifest = extras.clone();
    manifest.insert("n_sites".into(), model.n_sites().to_string());
    manifest.insert("p_modes".into(), model.p_modes().to_string());
    manifest.insert("q_modes".into(), model.q_modes().to_string());
    manifest.insert("gamma".into(), real(model.gamma));
    manifest.insert("mesh".into(), real(model.mesh));
    manifest.insert("mu".into(), real(model.mu));
    match &model.deim {
        Some(d) => {
            let pts = DMatrix::from_iterator(d.points.len(), 1, d.points.iter().map(|&i| i as f64));
            put("deim_points", &pts)?;
            put("sampled_rows_p", &d.sampled_rows_p)?;
            put("sampled_rows_q", &d.sampled_rows_q)?;
            put("kron_p", &d.kron_p)?;
            put("kron_q", &d.kron_q)?;
            manifest.insert("deim_points".into(), d.points.len().to_string());
        }
        None => {
            manifest.insert("deim_points".into(), "0".into());
        }
    }
    write_manifest(&dir.join(MANIFEST), &manifest)
}

pub fn load_model(dir: &Path) -> CliResult<ReducedModel> {
    let mpath = dir.join(MANIFEST);
    let manifest = read_manifest(&mpath)?;
    let get = |name: &str| matrix_file::read(&dir.join(format!("{name}.alrm")));
    let n = manifest_count(&manifest, "n_sites", &mpath)?;
    let rp = manifest_count(&manifest, "p_modes", &mpath)?;
    let rq = manifest_count(&manifest, "q_modes", &mpath)?;
    let nd = manifest_count(&manifest, "deim_points", &mpath)?;
    let v_p = get("v_p")?;
    let v_q = get("v_q")?;
    if v_p.shape() != (n, rp) || v_q.shape() != (n, rq) {
        return Err(CliError::corrupt(dir, "basis shapes disagree with the manifest"));
    }
    let deim = if nd == 0 {
        None
    } else {
        let raw = get("deim_points")?;
        if raw.shape() != (nd, 1) {
            return Err(CliError::corrupt(dir, "deim_points shape disagrees with the manifest"));
        }
        let mut points = Vec::with_capacity(nd);
        for &v in raw.iter() {
            if v < 0.0 || v.fract() != 0.0 || v >= n as f64 {
                return Err(CliError::corrupt(dir, format!("invalid DEIM point {v}")));
            }
            points.push(v as usize);
        }
        Some(DeimTerms {
            points,
            sampled_rows_p: get("sampled_rows_p")?,
            sampled_rows_q: get("sampled_rows_q")?,
            kron_p: get("kron_p")?,
            kron_q: get("kron_q")?,
        })
    };
    let model = ReducedModel {
        v_p,
        v_q,
        grad_p: get("grad_p")?,
        grad_q: get("grad_q")?,
        momentum_cross: get("momentum_cross")?,
        deim,
        gamma: manifest_real(&manifest, "gamma", &mpath)?,
        mesh: manifest_real(&manifest, "mesh", &mpath)?,
        mu: manifest_real(&manifest, "mu", &mpath)?,
    };
    model.validate().map_err(|e| CliError::corrupt(dir, e.to_string()))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alrom::reduction::{deim_operator, qdeim_points};
    use alrom::LatticeConfig;

    fn model(with_deim: bool) -> ReducedModel {
        let n = 12;
        let cfg = LatticeConfig::new(n, 3.0, 1.0, 0.01, 0.01, 1.0).unwrap();
        let basis = |shift: f64, r: usize| DMatrix::from_fn(n, r, |i, j| ((i as f64 + shift) * (j + 1) as f64).sin()).qr().q();
        let phi = basis(0.7, 3);
        let op = deim_operator(&phi, &qdeim_points(&phi).unwrap()).unwrap();
        ReducedModel::assemble(&cfg, basis(0.1, 4), basis(0.3, 4), with_deim.then_some(&op), 5).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for deim in [true, false] {
            let m = model(deim);
            let sub = dir.path().join(format!("m{deim}"));
            let mut extras = BTreeMap::new();
            extras.insert("label".into(), "test".into());
            save_model(&sub, &m, &extras).unwrap();
            assert_eq!(load_model(&sub).unwrap(), m);
            assert_eq!(read_manifest(&sub.join(MANIFEST)).unwrap()["label"], "test");
        }
    }

    #[test]
    fn corruption_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let m = model(true);
        save_model(dir.path(), &m, &BTreeMap::new()).unwrap();
        let kron = dir.path().join("kron_p.alrm");
        let bytes = fs::read(&kron).unwrap();
        fs::write(&kron, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_model(dir.path()), Err(CliError::Corrupt { .. })));
        fs::write(&kron, crate::matrix_file::encode(&DMatrix::zeros(2, 2))).unwrap();
        assert!(matches!(load_model(dir.path()), Err(CliError::Corrupt { .. })));
        fs::remove_file(&kron).unwrap();
        assert!(matches!(load_model(dir.path()), Err(CliError::Io { .. })));
    }
}
