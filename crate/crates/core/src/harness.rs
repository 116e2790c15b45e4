//! Seeded parameter sweeps with CSV output.
//!
//! Config files are flat `key = value` text; list-valued keys take
//! comma-separated values. Command-line overrides win over file values and
//! the source of every field is kept in [`SweepConfig::provenance`].
//!
//! Each grid cell gets its own seed, derived from the base seed and the cell's
//! coordinates, so a cell's row does not depend on grid order or worker count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::concentration::{
    estimate_rap, estimate_rip, estimate_rop, isotropy_check, Averaged, EstimateReport, Orthogonality, RapMode,
    RopOptions,
};
use crate::entropy::{
    angle_preservation_bound, gamma2_bound, sample_complexity, BoundQuery, ComplexityVariant,
};
use crate::error::{Error, Result};
use crate::operator::{DictionaryKind, Ensemble, LiftedPoint, SamplingMode};
use crate::rng::{derive_seed, trial_rng};
use crate::signal::{DictionarySide, ModelSpec, SparsityFlavor};
use crate::solver::{recover_planted, SolveOptions};

/// Relative lifted error counted as a successful recovery.
pub const RECOVERY_SUCCESS_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Rip,
    Rap,
    Rop,
    Isotropy,
    Recover,
    Bounds,
}

impl ExperimentKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "rip" => Self::Rip,
            "rap" => Self::Rap,
            "rop" => Self::Rop,
            "isotropy" => Self::Isotropy,
            "recover" => Self::Recover,
            "bounds" => Self::Bounds,
            _ => return None,
        })
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// Where a config value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Flag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub phi_kind: DictionaryKind,
    pub psi_kind: DictionaryKind,
    pub omega_mode: SamplingMode,
    pub flavor: SparsityFlavor,
    pub m: Vec<usize>,
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    /// `None` entries mean no flatness constraint.
    pub mu1: Vec<Option<f64>>,
    pub mu2: Vec<Option<f64>>,
    pub delta: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    pub orthogonality: Orthogonality,
    /// Absolute constant for the bound calculators.
    pub c: f64,
    /// ROP with independent dictionary copies for the partner.
    pub decoupled: bool,
    /// Recovery projects iterates onto the flatness cone.
    pub enforce_flatness: bool,
    /// Write per-cell wall time into the CSV (breaks byte-identical reruns).
    pub record_timing: bool,
    pub provenance: BTreeMap<String, Source>,
}

/// Documented defaults. `n`, `m` and `kind` have none.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("phi_kind", "gaussian"),
    ("psi_kind", "gaussian"),
    ("omega_mode", "without_replacement"),
    ("flavor", "exact"),
    ("s1", "2"),
    ("s2", "2"),
    ("mu1", "none"),
    ("mu2", "none"),
    ("delta", "0.5"),
    ("trials", "100"),
    ("seed", "0"),
    ("out", "sweep.csv"),
    ("workers", "0"),
    ("orthogonality", "both"),
    ("c", "1"),
    ("decoupled", "false"),
    ("enforce_flatness", "false"),
    ("record_timing", "false"),
];

const REQUIRED: &[&str] = &["kind", "n", "m"];

fn known_key(key: &str) -> bool {
    REQUIRED.contains(&key) || DEFAULTS.iter().any(|(k, _)| *k == key)
}

fn cfg_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(&format!("line {}", lineno + 1), "expected `key = value`"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn scalar<T: std::str::FromStr>(field: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| cfg_err(field, format!("cannot parse `{v}`")))
}

fn list<T: std::str::FromStr>(field: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = v.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(cfg_err(field, format!("malformed list `{v}`")));
    }
    items.into_iter().map(|s| scalar(field, s)).collect()
}

fn opt_list(field: &str, v: &str) -> Result<Vec<Option<f64>>> {
    let items: Vec<&str> = v.split(',').map(str::trim).collect();
    items
        .into_iter()
        .map(|s| match s {
            "none" => Ok(None),
            "" => Err(cfg_err(field, format!("malformed list `{v}`"))),
            _ => scalar(field, s).map(Some),
        })
        .collect()
}

fn dictionary_kind(field: &str, v: &str) -> Result<DictionaryKind> {
    match v {
        "gaussian" => Ok(DictionaryKind::Gaussian),
        "identity" => Ok(DictionaryKind::Identity),
        _ => Err(cfg_err(field, format!("expected gaussian|identity, got `{v}`"))),
    }
}

fn boolean(field: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(cfg_err(field, format!("expected a boolean, got `{v}`"))),
    }
}

/// Build a config from an optional file and flag overrides (flags win).
pub fn parse_config(path: Option<&Path>, flags: &[(String, String)]) -> Result<SweepConfig> {
    let mut values: BTreeMap<String, (String, Source)> = DEFAULTS
        .iter()
        .map(|(k, v)| (k.to_string(), (v.to_string(), Source::Default)))
        .collect();
    if let Some(p) = path {
        let text = fs::read_to_string(p)?;
        for (k, v) in parse_kv(&text)? {
            if !known_key(&k) {
                return Err(cfg_err(&k, "unknown key"));
            }
            values.insert(k, (v, Source::File));
        }
    }
    for (k, v) in flags {
        if !known_key(k) {
            return Err(cfg_err(k, "unknown key"));
        }
        values.insert(k.clone(), (v.clone(), Source::Flag));
    }
    for key in REQUIRED {
        if !values.contains_key(*key) {
            return Err(cfg_err(key, "required"));
        }
    }
    let get = |k: &str| values[k].0.as_str();
    let kind = ExperimentKind::parse(get("kind"))
        .ok_or_else(|| cfg_err("kind", format!("unknown experiment `{}`", get("kind"))))?;
    let omega_mode = match get("omega_mode") {
        "iid_uniform" => SamplingMode::IidUniform,
        "without_replacement" => SamplingMode::WithoutReplacement,
        other => return Err(cfg_err("omega_mode", format!("unknown mode `{other}`"))),
    };
    let flavor = match get("flavor") {
        "exact" => SparsityFlavor::Exact,
        "approximate" => SparsityFlavor::Approximate,
        other => return Err(cfg_err("flavor", format!("unknown flavor `{other}`"))),
    };
    let orthogonality = match get("orthogonality") {
        "both" => Orthogonality::Both,
        "either" => Orthogonality::Either,
        other => return Err(cfg_err("orthogonality", format!("unknown mode `{other}`"))),
    };
    let cfg = SweepConfig {
        kind,
        n: scalar("n", get("n"))?,
        phi_kind: dictionary_kind("phi_kind", get("phi_kind"))?,
        psi_kind: dictionary_kind("psi_kind", get("psi_kind"))?,
        omega_mode,
        flavor,
        m: list("m", get("m"))?,
        s1: list("s1", get("s1"))?,
        s2: list("s2", get("s2"))?,
        mu1: opt_list("mu1", get("mu1"))?,
        mu2: opt_list("mu2", get("mu2"))?,
        delta: list("delta", get("delta"))?,
        trials: scalar("trials", get("trials"))?,
        seed: scalar("seed", get("seed"))?,
        out: PathBuf::from(get("out")),
        workers: scalar("workers", get("workers"))?,
        orthogonality,
        c: scalar("c", get("c"))?,
        decoupled: boolean("decoupled", get("decoupled"))?,
        enforce_flatness: boolean("enforce_flatness", get("enforce_flatness"))?,
        record_timing: boolean("record_timing", get("record_timing"))?,
        provenance: values.iter().map(|(k, (_, s))| (k.clone(), *s)).collect(),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(cfg_err("n", "must be positive"));
        }
        if self.trials == 0 {
            return Err(cfg_err("trials", "must be at least 1"));
        }
        if self.m.iter().any(|&m| m == 0 || m > self.n) {
            return Err(cfg_err("m", format!("every entry must lie in [1, {}]", self.n)));
        }
        for (name, grid) in [("s1", &self.s1), ("s2", &self.s2)] {
            if grid.iter().any(|&s| s == 0 || s > self.n) {
                return Err(cfg_err(name, format!("every entry must lie in [1, {}]", self.n)));
            }
        }
        for (name, grid) in [("mu1", &self.mu1), ("mu2", &self.mu2)] {
            if grid.iter().flatten().any(|&mu| !(1.0..=self.n as f64).contains(&mu)) {
                return Err(cfg_err(name, format!("every entry must lie in [1, {}]", self.n)));
            }
        }
        if self.delta.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return Err(cfg_err("delta", "every entry must lie in (0, 1)"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(cfg_err("c", "must be a finite positive real"));
        }
        let grids = [
            ("m", self.m.len()),
            ("s1", self.s1.len()),
            ("s2", self.s2.len()),
            ("mu1", self.mu1.len()),
            ("mu2", self.mu2.len()),
            ("delta", self.delta.len()),
        ];
        if let Some((name, _)) = grids.iter().find(|(_, len)| *len == 0) {
            return Err(cfg_err(name, "grid is empty"));
        }
        Ok(())
    }

    /// Fields set by flags that overrode a file value.
    pub fn overridden(&self, file_keys: &[String]) -> Vec<String> {
        file_keys
            .iter()
            .filter(|k| self.provenance.get(*k) == Some(&Source::Flag))
            .cloned()
            .collect()
    }
}

/// One grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub m: usize,
    pub s1: usize,
    pub s2: usize,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub delta: f64,
}

impl Cell {
    fn seed(&self, base: u64, kind: ExperimentKind) -> u64 {
        let bits = |x: Option<f64>| x.map_or(u64::MAX, f64::to_bits);
        derive_seed(
            base,
            &[
                kind.tag(),
                self.m as u64,
                self.s1 as u64,
                self.s2 as u64,
                bits(self.mu1),
                bits(self.mu2),
                self.delta.to_bits(),
            ],
        )
    }
}

/// Cells in grid order: `m` outermost, then `s1`, `s2`, `mu1`, `mu2`, `delta`.
pub fn cells(cfg: &SweepConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &m in &cfg.m {
        for &s1 in &cfg.s1 {
            for &s2 in &cfg.s2 {
                for &mu1 in &cfg.mu1 {
                    for &mu2 in &cfg.mu2 {
                        for &delta in &cfg.delta {
                            out.push(Cell {
                                m,
                                s1,
                                s2,
                                mu1,
                                mu2,
                                delta,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn header(kind: ExperimentKind) -> Vec<&'static str> {
    let mut h = vec!["kind", "n", "m", "s1", "s2", "mu1", "mu2"];
    h.extend(match kind {
        ExperimentKind::Rip | ExperimentKind::Rap | ExperimentKind::Rop => {
            vec!["trials", "delta_hat", "q50", "q90", "q99", "seed", "wall_time"]
        }
        ExperimentKind::Isotropy => vec!["draws", "relative_error", "mirrored_relative_error", "seed", "wall_time"],
        ExperimentKind::Recover => vec![
            "trials",
            "success_rate",
            "median_rel_error",
            "mean_iterations",
            "seed",
            "wall_time",
        ],
        ExperimentKind::Bounds => vec![
            "delta",
            "c",
            "sample_complexity_left_flat",
            "sample_complexity_right_flat",
            "sample_complexity_both_flat",
            "feasible_both_flat",
            "gamma2",
            "angle_preservation",
        ],
    });
    h.push("status");
    h.push("reason");
    h
}

struct CellOutcome {
    fields: Vec<String>,
    wall_time: f64,
}

fn specs(cfg: &SweepConfig, cell: &Cell) -> (ModelSpec, ModelSpec) {
    let make = |s: usize, mu: Option<f64>, side: DictionarySide| ModelSpec {
        n: cfg.n,
        s,
        mu,
        flavor: cfg.flavor,
        side,
    };
    (
        make(cell.s1, cell.mu1, DictionarySide::Left),
        make(cell.s2, cell.mu2, DictionarySide::Right),
    )
}

fn report_fields(rep: &EstimateReport, with_timing: bool) -> Vec<String> {
    let row = rep.row(with_timing);
    vec![
        row.trials.to_string(),
        row.delta_hat.to_string(),
        row.q50.to_string(),
        row.q90.to_string(),
        row.q99.to_string(),
        row.seed.to_string(),
        fmt_opt(row.wall_time),
    ]
}

fn run_cell(cfg: &SweepConfig, cell: &Cell) -> Result<CellOutcome> {
    let start = Instant::now();
    let seed = cell.seed(cfg.seed, cfg.kind);
    let timing = |t: f64| if cfg.record_timing { t.to_string() } else { String::new() };
    let fields = match cfg.kind {
        ExperimentKind::Rip | ExperimentKind::Rap | ExperimentKind::Rop => {
            let ens = Ensemble::generate(cfg.n, cell.m, cfg.omega_mode, cfg.phi_kind, cfg.psi_kind, derive_seed(seed, &[1]))?;
            let (su, sv) = specs(cfg, cell);
            let est_seed = derive_seed(seed, &[2]);
            let rep = match cfg.kind {
                ExperimentKind::Rip => estimate_rip(&ens, &su, &sv, cfg.trials, est_seed)?,
                ExperimentKind::Rap => estimate_rap(&ens, &su, &sv, cfg.trials, RapMode::General, est_seed)?,
                _ => {
                    let opts = RopOptions {
                        decoupled: cfg.decoupled,
                        ..RopOptions::new(cfg.orthogonality)
                    };
                    estimate_rop(&ens, &su, &sv, cfg.trials, opts, est_seed)?
                }
            };
            report_fields(&rep, cfg.record_timing)
        }
        ExperimentKind::Isotropy => {
            let (su, sv) = specs(cfg, cell);
            let mut rng = trial_rng(seed, 0);
            let x = LiftedPoint::new(
                crate::signal::sample_model(&ModelSpec { mu: None, ..su }, &mut rng)?,
                crate::signal::sample_model(&ModelSpec { mu: None, ..sv }, &mut rng)?,
            );
            let left = isotropy_check(cfg.n, cell.m, cfg.psi_kind, Averaged::Left, &x, cfg.trials, derive_seed(seed, &[1]))?;
            let right = isotropy_check(cfg.n, cell.m, cfg.phi_kind, Averaged::Right, &x, cfg.trials, derive_seed(seed, &[2]))?;
            vec![
                cfg.trials.to_string(),
                left.relative_error.to_string(),
                right.relative_error.to_string(),
                seed.to_string(),
                timing(start.elapsed().as_secs_f64()),
            ]
        }
        ExperimentKind::Recover => {
            let (su, sv) = specs(cfg, cell);
            let mut opts = SolveOptions::new(cell.s1, cell.s2);
            opts.mu1 = cell.mu1;
            opts.mu2 = cell.mu2;
            opts.enforce_flatness = cfg.enforce_flatness;
            let results = (0..cfg.trials as u64)
                .map(|t| {
                    let trial_seed = derive_seed(seed, &[t]);
                    let ens = Ensemble::generate(cfg.n, cell.m, cfg.omega_mode, cfg.phi_kind, cfg.psi_kind, trial_seed)?;
                    let mut rng = trial_rng(trial_seed, 7);
                    let truth = LiftedPoint::new(ens.sample_coefficients(&su, &mut rng)?, ens.sample_coefficients(&sv, &mut rng)?);
                    let o = SolveOptions { seed: trial_seed, ..opts };
                    recover_planted(&ens, &truth, &o)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut errs: Vec<f64> = results.iter().map(|r| r.relative_error.unwrap_or(f64::INFINITY)).collect();
            let success = errs.iter().filter(|&&e| e <= RECOVERY_SUCCESS_TOL).count() as f64 / errs.len() as f64;
            errs.sort_by(f64::total_cmp);
            let median = crate::concentration::quantile_sorted(&errs, 0.5);
            let iters = results.iter().map(|r| r.iterations).sum::<usize>() as f64 / results.len() as f64;
            vec![
                cfg.trials.to_string(),
                success.to_string(),
                median.to_string(),
                iters.to_string(),
                seed.to_string(),
                timing(start.elapsed().as_secs_f64()),
            ]
        }
        ExperimentKind::Bounds => {
            let q = BoundQuery {
                n: cfg.n as u64,
                m: cell.m as u64,
                s: cell.s1 as u64,
                s1: cell.s1 as u64,
                s2: cell.s2 as u64,
                mu: cell.mu1.unwrap_or(1.0),
                mu1: cell.mu1.unwrap_or(1.0),
                mu2: cell.mu2.unwrap_or(1.0),
                delta: cell.delta,
                c: cfg.c,
                ..BoundQuery::default()
            };
            let sc = |w| sample_complexity(&q, w);
            let both_flat = sc(ComplexityVariant::BothFlat)?;
            vec![
                cell.delta.to_string(),
                cfg.c.to_string(),
                sc(ComplexityVariant::LeftFlat)?.m.to_string(),
                sc(ComplexityVariant::RightFlat)?.m.to_string(),
                both_flat.m.to_string(),
                both_flat.feasible.to_string(),
                (cfg.c * gamma2_bound(q.s1, q.s2, q.mu, q.m, q.n)).to_string(),
                angle_preservation_bound(cell.delta)?.to_string(),
            ]
        }
    };
    Ok(CellOutcome {
        fields,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub skipped: usize,
    pub csv: PathBuf,
    /// `None` when the CSV went to stdout.
    pub metadata: Option<PathBuf>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a SweepConfig,
    cells: Vec<CellMeta>,
}

#[derive(Serialize)]
struct CellMeta {
    cell: Cell,
    seed: u64,
    wall_time: f64,
    reason: Option<String>,
}

/// Sidecar path next to the CSV.
pub fn metadata_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Run every cell and write the CSV plus the metadata sidecar (`out = -`
/// writes the CSV to stdout and skips the sidecar). Cells whose
/// model set cannot be sampled are kept as flagged rows with a reason.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepSummary> {
    cfg.validate()?;
    let grid = cells(cfg);
    let work = || -> Vec<Result<CellOutcome>> {
        use rayon::prelude::*;
        grid.par_iter().map(|c| run_cell(cfg, c)).collect()
    };
    let outcomes = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?
            .install(work)
    } else {
        work()
    };

    let mut writer = csv::Writer::from_writer(Vec::new());
    let head = header(cfg.kind);
    writer.write_record(&head)?;
    let mut skipped = 0;
    let mut meta = Vec::with_capacity(grid.len());
    let kind_name = match (cfg.kind, cfg.orthogonality) {
        (ExperimentKind::Rop, Orthogonality::Both) => "rop_both".to_string(),
        (ExperimentKind::Rop, Orthogonality::Either) => "rop_either".to_string(),
        _ => serde_json::to_value(cfg.kind)?.as_str().unwrap_or_default().to_string(),
    };
    for (cell, outcome) in grid.iter().zip(outcomes) {
        let mut record = vec![
            kind_name.clone(),
            cfg.n.to_string(),
            cell.m.to_string(),
            cell.s1.to_string(),
            cell.s2.to_string(),
            fmt_opt(cell.mu1),
            fmt_opt(cell.mu2),
        ];
        let seed = cell.seed(cfg.seed, cfg.kind);
        match outcome {
            Ok(o) => {
                record.extend(o.fields);
                record.push("ok".into());
                record.push(String::new());
                meta.push(CellMeta {
                    cell: *cell,
                    seed,
                    wall_time: o.wall_time,
                    reason: None,
                });
            }
            Err(e) if e.is_numeric() => {
                skipped += 1;
                let reason = e.to_string();
                record.resize(head.len() - 2, String::new());
                // Keep what is needed to replay the cell.
                for (col, value) in head.iter().zip(record.iter_mut()) {
                    match *col {
                        "seed" => *value = seed.to_string(),
                        "trials" | "draws" => *value = cfg.trials.to_string(),
                        _ => {}
                    }
                }
                record.push("infeasible".into());
                record.push(reason.clone());
                meta.push(CellMeta {
                    cell: *cell,
                    seed,
                    wall_time: 0.0,
                    reason: Some(reason),
                });
            }
            Err(e) => return Err(e),
        }
        writer.write_record(&record)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    if cfg.out == Path::new("-") {
        std::io::Write::write_all(&mut std::io::stdout().lock(), &bytes)?;
        return Ok(SweepSummary {
            rows: grid.len(),
            skipped,
            csv: cfg.out.clone(),
            metadata: None,
        });
    }
    fs::write(&cfg.out, bytes)?;

    let metadata = metadata_path(&cfg.out);
    let record = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        cells: meta,
    };
    fs::write(&metadata, serde_json::to_string_pretty(&record)?)?;
    Ok(SweepSummary {
        rows: grid.len(),
        skipped,
        csv: cfg.out.clone(),
        metadata: Some(metadata),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn minimal_flags_are_enough() {
        let cfg = parse_config(None, &flags(&[("kind", "rip"), ("n", "16"), ("m", "8")])).unwrap();
        assert_eq!(cfg.m, vec![8]);
        assert_eq!(cfg.s1, vec![2]);
        assert_eq!(cfg.mu1, vec![None]);
        assert_eq!(cfg.provenance["n"], Source::Flag);
        assert_eq!(cfg.provenance["trials"], Source::Default);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.cfg");
        fs::write(&path, "# grid\nkind = rap\nn = 32\nm = 8, 16\ntrials = 5\n").unwrap();
        let cfg = parse_config(Some(&path), &flags(&[("trials", "7")])).unwrap();
        assert_eq!(cfg.trials, 7);
        assert_eq!(cfg.m, vec![8, 16]);
        assert_eq!(cfg.provenance["trials"], Source::Flag);
        assert_eq!(cfg.provenance["m"], Source::File);
        assert_eq!(cfg.overridden(&["trials".into(), "m".into()]), vec!["trials".to_string()]);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = parse_config(None, &flags(&[("kind", "rip"), ("n", "16"), ("m", "8,,16")]));
        assert!(matches!(bad, Err(Error::Config { ref field, .. }) if field == "m"));
        let unknown = parse_config(None, &flags(&[("kind", "rip"), ("n", "16"), ("m", "8"), ("colour", "red")]));
        assert!(matches!(unknown, Err(Error::Config { ref field, .. }) if field == "colour"));
        let missing = parse_config(None, &flags(&[("kind", "rip"), ("n", "16")]));
        assert!(matches!(missing, Err(Error::Config { ref field, .. }) if field == "m"));
        let big = parse_config(None, &flags(&[("kind", "rip"), ("n", "16"), ("m", "32")]));
        assert!(matches!(big, Err(Error::Config { ref field, .. }) if field == "m"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        fs::write(&path, "kind = rip\nn = 16\nm = 8\nbogus = 1\n").unwrap();
        assert!(matches!(parse_config(Some(&path), &[]), Err(Error::Config { ref field, .. }) if field == "bogus"));
    }

    #[test]
    fn cell_seeds_ignore_grid_order() {
        let a = parse_config(None, &flags(&[("kind", "rip"), ("n", "16"), ("m", "4, 8")])).unwrap();
        let b = parse_config(None, &flags(&[("kind", "rip"), ("n", "16"), ("m", "8, 4")])).unwrap();
        let sa: Vec<u64> = cells(&a).iter().map(|c| c.seed(0, a.kind)).collect();
        let sb: Vec<u64> = cells(&b).iter().map(|c| c.seed(0, b.kind)).collect();
        assert_eq!(sa[0], sb[1]);
        assert_eq!(sa[1], sb[0]);
    }

    #[test]
    fn one_cell_sweep_has_one_row_and_matches_estimator() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("one.csv");
        let mut cfg = parse_config(None, &flags(&[("kind", "rip"), ("n", "16"), ("m", "8"), ("trials", "20")])).unwrap();
        cfg.out = out.clone();
        let summary = run_sweep(&cfg).unwrap();
        assert_eq!(summary.rows, 1);
        let mut reader = csv::Reader::from_path(&out).unwrap();
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 1);
        let cell = cells(&cfg)[0];
        let seed = cell.seed(cfg.seed, cfg.kind);
        let ens = Ensemble::generate(16, 8, cfg.omega_mode, cfg.phi_kind, cfg.psi_kind, derive_seed(seed, &[1])).unwrap();
        let (su, sv) = specs(&cfg, &cell);
        let rep = estimate_rip(&ens, &su, &sv, 20, derive_seed(seed, &[2])).unwrap();
        let headers = reader.headers().unwrap().clone();
        let col = headers.iter().position(|h| h == "delta_hat").unwrap();
        assert_eq!(rows[0][col].parse::<f64>().unwrap(), rep.delta_hat);
        assert!(summary.metadata.unwrap().exists());
    }

    #[test]
    fn infeasible_cells_are_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = parse_config(
            None,
            &flags(&[("kind", "rip"), ("n", "16"), ("m", "8"), ("trials", "3"), ("s1", "16"), ("mu1", "1, none")]),
        )
        .unwrap();
        cfg.out = dir.path().join("flag.csv");
        let summary = run_sweep(&cfg).unwrap();
        let text = fs::read_to_string(&cfg.out).unwrap();
        assert_eq!(summary.rows, 2);
        assert!(summary.skipped <= 1);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn sweeps_are_byte_identical_across_worker_counts() {
        let dir = tempfile::tempdir().unwrap();
        let base = flags(&[("kind", "rap"), ("n", "32"), ("m", "8, 16"), ("s1", "2, 3"), ("trials", "30"), ("seed", "5")]);
        let mut files = Vec::new();
        for workers in ["1", "3"] {
            let mut f = base.clone();
            f.push(("workers".into(), workers.into()));
            let mut cfg = parse_config(None, &f).unwrap();
            cfg.out = dir.path().join(format!("w{workers}.csv"));
            run_sweep(&cfg).unwrap();
            files.push(fs::read(&cfg.out).unwrap());
        }
        assert_eq!(files[0], files[1]);
    }

    #[test]
    fn bounds_sweep_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = parse_config(None, &flags(&[("kind", "bounds"), ("n", "128"), ("m", "64"), ("delta", "0.25, 0.5")])).unwrap();
        cfg.out = dir.path().join("b.csv");
        run_sweep(&cfg).unwrap();
        let text = fs::read_to_string(&cfg.out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("sample_complexity_both_flat"));
    }
}
