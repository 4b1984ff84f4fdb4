//! Run configuration: flat `key = value` text with optional `[section]`
//! headers that prefix the keys below them.
//!
//! ```text
//! experiment = damped_soliton
//! [lattice]
//! n_sites = 512
//! t_final = 60   # comments run to the end of the line
//! ```
//!
//! Every key has a default (see [`KEYS`]); a preset replaces some of them
//! and a config file overrides both. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use alrom::integrators::{SolverOptions, SolverStrategy};
use alrom::metrics::RateConstants;
use alrom::rom::Variant;
use alrom::LatticeConfig;

use crate::error::{CliError, CliResult};

/// `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("experiment", "conservative_soliton", "conservative_soliton | damped_soliton | custom"),
    ("lattice.n_sites", "200", "number of lattice sites N"),
    ("lattice.half_length", "50", "domain is [-L, L), mesh h = 2L/N"),
    ("lattice.gamma", "1", "nonlinearity strength"),
    ("lattice.mu", "0", "linear damping rate"),
    ("lattice.dt", "0.01", "time step"),
    ("lattice.t_final", "50", "final time (integer multiple of dt)"),
    ("initial.profile", "", "custom experiments only: conservative_soliton | damped_soliton"),
    ("initial.eta", "0.05", "soliton amplitude parameter (conservative profile)"),
    ("initial.xi", "0.5", "soliton carrier wavenumber (conservative profile)"),
    ("initial.phase", "20", "soliton shift (damped profile)"),
    ("snapshots.stride", "5", "store a snapshot every this many steps"),
    ("pod.kappa_state", "1e-4", "energy tolerance for the p and q bases"),
    ("pod.kappa_nonlin", "1e-6", "energy tolerance for the nonlinearity basis"),
    ("pod.modes", "", "fixed N_r; empty selects by kappa_state"),
    ("pod.deim_modes", "", "fixed N_d; empty selects by kappa_nonlin"),
    ("rom.variant", "pod_deim", "pod | pod_deim"),
    ("rom.assembly_block", "64", "sites per block in the offline Kronecker assembly"),
    ("sweep.modes", "20,30,40,50", "pipeline mode counts, entries N or N_r:N_d"),
    ("solver.abs_tol", "1e-12", "Newton / fixed-point tolerance (max norm)"),
    ("solver.max_iters", "50", "iteration budget per step"),
    ("solver.strategy", "newton", "newton | fixed_point"),
    ("metrics.rates", "derived", "balance rate constants: derived (2, 2) | literal (1, -2)"),
    ("output.dir", "out", "artifact directory"),
    ("output.spacetime_every", "10", "snapshot subsampling of the space-time modulus grid"),
    ("seed", "0", "reserved; every stage is deterministic"),
];

pub const PRESETS: &[&str] = &["conservative", "damped", "damped_stride20"];

fn preset_overrides(name: &str) -> CliResult<&'static [(&'static str, &'static str)]> {
    const DAMPED: &[(&str, &str)] = &[
        ("experiment", "damped_soliton"),
        ("lattice.n_sites", "512"),
        ("lattice.half_length", "64"),
        ("lattice.mu", "0.01"),
        ("lattice.t_final", "60"),
        ("pod.kappa_state", "1e-5"),
        ("pod.kappa_nonlin", "1e-7"),
        ("sweep.modes", "20,30,40,50,60"),
    ];
    const DAMPED_STRIDE20: &[(&str, &str)] = &[
        ("experiment", "damped_soliton"),
        ("lattice.n_sites", "512"),
        ("lattice.half_length", "64"),
        ("lattice.mu", "0.01"),
        ("lattice.t_final", "60"),
        ("pod.kappa_state", "1e-5"),
        ("pod.kappa_nonlin", "1e-7"),
        ("sweep.modes", "20,30,40,50,60"),
        ("snapshots.stride", "20"),
    ];
    match name {
        "conservative" => Ok(&[]),
        "damped" => Ok(DAMPED),
        "damped_stride20" => Ok(DAMPED_STRIDE20),
        other => Err(CliError::Config(format!("unknown preset '{other}' (known: {})", PRESETS.join(", ")))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialProfile {
    Conservative { eta: f64, xi: f64 },
    Damped { phase: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ConservativeSoliton,
    DampedSoliton,
    Custom,
}

/// One reduced model of a sweep: `N_r` POD modes per component and `N_d`
/// DEIM points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ModeSpec {
    pub n_r: usize,
    pub n_d: usize,
}

impl ModeSpec {
    pub fn label(&self) -> String {
        format!("r{}_d{}", self.n_r, self.n_d)
    }
}

/// Parses `20,30,40:49`; a bare count uses it for both `N_r` and `N_d`.
pub fn parse_modes(text: &str) -> CliResult<Vec<ModeSpec>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parse = |s: &str| -> CliResult<usize> {
            match s.trim().parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(CliError::Config(format!("bad mode count '{s}'"))),
            }
        };
        let spec = match item.split_once(':') {
            Some((r, d)) => ModeSpec { n_r: parse(r)?, n_d: parse(d)? },
            None => {
                let n = parse(item)?;
                ModeSpec { n_r: n, n_d: n }
            }
        };
        out.push(spec);
    }
    if out.is_empty() {
        return Err(CliError::Config("empty mode list".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PodSettings {
    pub kappa_state: f64,
    pub kappa_nonlin: f64,
    pub modes: Option<usize>,
    pub deim_modes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub lattice: LatticeConfig,
    pub initial: InitialProfile,
    pub snapshot_stride: usize,
    pub pod: PodSettings,
    pub variant: Variant,
    pub assembly_block: usize,
    pub sweep: Vec<ModeSpec>,
    pub solver: SolverOptions<f64>,
    pub rates: RateConstants<f64>,
    pub literal_rates: bool,
    pub output_dir: PathBuf,
    pub spacetime_every: usize,
    pub seed: u64,
    /// Effective `key -> value` table the config was built from.
    pub entries: BTreeMap<String, String>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Overlays `text` on `table`, returning an error naming the line at fault.
pub fn overlay(table: &mut BTreeMap<String, String>, text: &str) -> CliResult<()> {
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let at = lineno + 1;
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::Config(format!("line {at}: unterminated section header")))?
                .trim();
            section = if name.is_empty() { String::new() } else { format!("{name}.") };
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {at}: expected key = value")))?;
        let key = format!("{section}{}", key.trim());
        if !table.contains_key(&key) {
            return Err(CliError::Config(format!("line {at}: unknown key '{key}'")));
        }
        table.insert(key, value.trim().to_string());
    }
    Ok(())
}

pub fn default_table() -> BTreeMap<String, String> {
    KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect()
}

/// Builds the effective configuration: defaults, then the preset, then the
/// config text.
pub fn load(preset: Option<&str>, text: Option<&str>) -> CliResult<RunConfig> {
    let mut table = default_table();
    if let Some(name) = preset {
        for (k, v) in preset_overrides(name)? {
            table.insert(k.to_string(), v.to_string());
        }
    }
    if let Some(text) = text {
        overlay(&mut table, text)?;
    }
    from_table(table)
}

fn get<'a>(t: &'a BTreeMap<String, String>, key: &str) -> &'a str {
    t.get(key).map(String::as_str).unwrap_or("")
}

fn real(t: &BTreeMap<String, String>, key: &str) -> CliResult<f64> {
    let v = get(t, key);
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(CliError::Config(format!("{key}: expected a finite number, got '{v}'"))),
    }
}

fn count(t: &BTreeMap<String, String>, key: &str) -> CliResult<usize> {
    let v = get(t, key);
    v.parse::<usize>().map_err(|_| CliError::Config(format!("{key}: expected a nonnegative integer, got '{v}'")))
}

fn optional_count(t: &BTreeMap<String, String>, key: &str) -> CliResult<Option<usize>> {
    if get(t, key).is_empty() {
        return Ok(None);
    }
    match count(t, key)? {
        0 => Err(CliError::Config(format!("{key}: must be positive"))),
        n => Ok(Some(n)),
    }
}

fn profile(name: &str, t: &BTreeMap<String, String>) -> CliResult<InitialProfile> {
    match name {
        "conservative_soliton" => Ok(InitialProfile::Conservative { eta: real(t, "initial.eta")?, xi: real(t, "initial.xi")? }),
        "damped_soliton" => Ok(InitialProfile::Damped { phase: real(t, "initial.phase")? }),
        other => Err(CliError::Config(format!("unknown initial profile '{other}'"))),
    }
}

pub fn from_table(t: BTreeMap<String, String>) -> CliResult<RunConfig> {
    let experiment = match get(&t, "experiment") {
        "conservative_soliton" => Experiment::ConservativeSoliton,
        "damped_soliton" => Experiment::DampedSoliton,
        "custom" => Experiment::Custom,
        other => return Err(CliError::Config(format!("unknown experiment '{other}'"))),
    };
    let initial = match experiment {
        Experiment::ConservativeSoliton => profile("conservative_soliton", &t)?,
        Experiment::DampedSoliton => profile("damped_soliton", &t)?,
        Experiment::Custom => {
            let name = get(&t, "initial.profile");
            if name.is_empty() {
                return Err(CliError::Config("custom experiments need initial.profile".into()));
            }
            profile(name, &t)?
        }
    };
    let lattice = LatticeConfig::new(
        count(&t, "lattice.n_sites")?,
        real(&t, "lattice.half_length")?,
        real(&t, "lattice.gamma")?,
        real(&t, "lattice.mu")?,
        real(&t, "lattice.dt")?,
        real(&t, "lattice.t_final")?,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    lattice.steps().map_err(|e| CliError::Config(e.to_string()))?;
    if let InitialProfile::Conservative { eta, .. } = initial {
        if lattice.mu != 0.0 {
            return Err(CliError::Config("the conservative soliton profile requires lattice.mu = 0".into()));
        }
        if eta <= 0.0 {
            return Err(CliError::Config("initial.eta must be positive".into()));
        }
    }
    let snapshot_stride = count(&t, "snapshots.stride")?;
    if snapshot_stride == 0 {
        return Err(CliError::Config("snapshots.stride must be at least 1".into()));
    }
    let pod = PodSettings {
        kappa_state: real(&t, "pod.kappa_state")?,
        kappa_nonlin: real(&t, "pod.kappa_nonlin")?,
        modes: optional_count(&t, "pod.modes")?,
        deim_modes: optional_count(&t, "pod.deim_modes")?,
    };
    for (key, k) in [("pod.kappa_state", pod.kappa_state), ("pod.kappa_nonlin", pod.kappa_nonlin)] {
        if !(k > 0.0 && k < 1.0) {
            return Err(CliError::Config(format!("{key} must lie in (0, 1)")));
        }
    }
    let variant = match get(&t, "rom.variant") {
        "pod" => Variant::Pod,
        "pod_deim" => Variant::PodDeim,
        other => return Err(CliError::Config(format!("unknown rom.variant '{other}'"))),
    };
    let assembly_block = count(&t, "rom.assembly_block")?;
    if assembly_block == 0 {
        return Err(CliError::Config("rom.assembly_block must be positive".into()));
    }
    let sweep = parse_modes(get(&t, "sweep.modes"))?;
    let strategy = match get(&t, "solver.strategy") {
        "newton" => SolverStrategy::Newton,
        "fixed_point" => SolverStrategy::FixedPoint,
        other => return Err(CliError::Config(format!("unknown solver.strategy '{other}'"))),
    };
    let solver = SolverOptions { abs_tol: real(&t, "solver.abs_tol")?, max_iters: count(&t, "solver.max_iters")?, strategy };
    solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let (rates, literal_rates) = match get(&t, "metrics.rates") {
        "derived" => (RateConstants::derived(), false),
        "literal" => (RateConstants::literal(), true),
        other => return Err(CliError::Config(format!("unknown metrics.rates '{other}'"))),
    };
    let output_dir = PathBuf::from(get(&t, "output.dir"));
    if output_dir.as_os_str().is_empty() {
        return Err(CliError::Config("output.dir must not be empty".into()));
    }
    let spacetime_every = count(&t, "output.spacetime_every")?;
    if spacetime_every == 0 {
        return Err(CliError::Config("output.spacetime_every must be at least 1".into()));
    }
    let seed = get(&t, "seed").parse::<u64>().map_err(|_| CliError::Config("seed: expected an integer".into()))?;
    Ok(RunConfig {
        experiment,
        lattice,
        initial,
        snapshot_stride,
        pod,
        variant,
        assembly_block,
        sweep,
        solver,
        rates,
        literal_rates,
        output_dir,
        spacetime_every,
        seed,
        entries: t,
    })
}

impl RunConfig {
    /// Canonical text form; loading it reproduces this configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.entries {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn steps(&self) -> usize {
        self.lattice.steps().expect("validated at load time")
    }

    pub fn is_damped(&self) -> bool {
        self.lattice.mu > 0.0
    }

    pub fn with_entry(&self, key: &str, value: &str) -> CliResult<RunConfig> {
        let mut t = self.entries.clone();
        if !t.contains_key(key) {
            return Err(CliError::Config(format!("unknown key '{key}'")));
        }
        t.insert(key.to_string(), value.to_string());
        from_table(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_conservative_experiment() {
        let c = load(None, None).unwrap();
        assert_eq!(c.experiment, Experiment::ConservativeSoliton);
        assert_eq!(c.lattice.n_sites, 200);
        assert!((c.lattice.mesh - 0.5).abs() < 1e-15);
        assert_eq!(c.steps(), 5000);
        assert_eq!(c.initial, InitialProfile::Conservative { eta: 0.05, xi: 0.5 });
        assert_eq!(c.sweep.len(), 4);
        assert_eq!(c, load(Some("conservative"), None).unwrap());
    }

    #[test]
    fn damped_presets() {
        let c = load(Some("damped"), None).unwrap();
        assert_eq!(c.lattice.n_sites, 512);
        assert!((c.lattice.mesh - 0.25).abs() < 1e-15);
        assert_eq!(c.steps(), 6000);
        assert_eq!(c.snapshot_stride, 5);
        assert_eq!(c.sweep.len(), 5);
        assert!(c.is_damped());
        assert_eq!(load(Some("damped_stride20"), None).unwrap().snapshot_stride, 20);
        assert!(load(Some("nope"), None).is_err());
    }

    #[test]
    fn sections_comments_and_overrides() {
        let text = "# header\nseed = 3\n[lattice]\nt_final = 1 # short\n\n[pod]\nmodes = 7\n[]\nrom.variant = pod\n";
        let c = load(Some("conservative"), Some(text)).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.steps(), 100);
        assert_eq!(c.pod.modes, Some(7));
        assert_eq!(c.variant, Variant::Pod);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "lattice.bogus = 1",
            "[lattice]\nmu = -1",
            "novalue",
            "[lattice\nmu = 0",
            "lattice.dt = abc",
            "snapshots.stride = 0",
            "sweep.modes = ",
            "sweep.modes = 20,x",
            "lattice.mu = 0.01",
            "experiment = custom",
            "solver.strategy = magic",
            "pod.kappa_state = 1",
            "lattice.t_final = 0.015",
        ] {
            assert!(matches!(load(None, Some(text)), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn custom_experiment_takes_the_profile_key() {
        let text = "experiment = custom\ninitial.profile = damped_soliton\nlattice.mu = 0.02\n";
        let c = load(None, Some(text)).unwrap();
        assert_eq!(c.initial, InitialProfile::Damped { phase: 20.0 });
    }

    #[test]
    fn mode_lists() {
        assert_eq!(
            parse_modes("20, 40:49").unwrap(),
            vec![ModeSpec { n_r: 20, n_d: 20 }, ModeSpec { n_r: 40, n_d: 49 }]
        );
        assert!(parse_modes("").is_err());
        assert!(parse_modes("0").is_err());
        assert_eq!(ModeSpec { n_r: 40, n_d: 49 }.label(), "r40_d49");
    }

    #[test]
    fn canonical_text_round_trips() {
        let c = load(Some("damped"), Some("pod.modes = 12")).unwrap();
        let again = load(None, Some(&c.to_text())).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn every_key_has_a_description() {
        assert!(KEYS.iter().all(|(_, _, d)| !d.is_empty()));
    }
}
