//! Subcommand pipelines. Each command writes its files into the output
//! directory and finishes with `manifest.json`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use mws_core::effpot::{kernel_diagonal, vnn_eval, ChannelBases, EffectiveKernel};
use mws_core::eigenbasis::EigenBasis;
use mws_core::model::{BasisBackend, ConfigDocument, DenominatorMode, SystemSpec};
use mws_core::oracle::{
    compare_roots, coupled_matrix_diagonalization, polynomial_roots_oracle,
    refined_grid_eigen_oracle, subset_distance, subset_distances, OracleReport, MAX_ORACLE_POLES,
};
use mws_core::reconstruct::{
    assemble_wavefunction, cell_axis, default_coefficients, realisation_components, WaveField,
};
use mws_core::spectra::{
    count_solutions, group_realisations, solve_spectrum_with, RealisationCount,
    RealisationEnsemble, SpectrumResult,
};
use mws_core::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, to_json, Csv, OutputDir};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Options shared by every subcommand; `None` keeps the config's value.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mode: Option<DenominatorMode>,
    pub backend: Option<BasisBackend>,
    pub samples: Option<usize>,
    pub realisation: Option<usize>,
    pub allow_evanescent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModesRecord {
    pub denominator: DenominatorMode,
    pub basis: BasisBackend,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_sha256: String,
    /// Relative to the output directory; `manifest.json` itself excluded.
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
    pub version: String,
    pub modes: ModesRecord,
    pub jobs: usize,
}

pub struct LoadedConfig {
    pub document: ConfigDocument,
    pub spec: SystemSpec,
    pub sha256: String,
}

pub fn load_config_text(text: &str, opts: &RunOptions) -> CliResult<LoadedConfig> {
    let mut document = ConfigDocument::from_json(text)?;
    if let Some(mode) = opts.mode {
        document.modes.denominator = mode;
    }
    if let Some(backend) = opts.backend {
        document.modes.basis = backend;
    }
    let spec = SystemSpec::from_document(&document)?;
    Ok(LoadedConfig {
        document,
        spec,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

pub fn load_config(path: &Path, opts: &RunOptions) -> CliResult<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    load_config_text(&text, opts)
}

/// Runs `f` on a dedicated pool of `jobs` threads, or the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn finish(
    out: &mut OutputDir,
    subcommand: &str,
    config: &LoadedConfig,
    started: Instant,
) -> CliResult<RunManifest> {
    let manifest = RunManifest {
        subcommand: subcommand.into(),
        config_sha256: config.sha256.clone(),
        outputs: out.written().to_vec(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        version: VERSION.into(),
        modes: ModesRecord {
            denominator: config.spec.denominator_mode,
            basis: config.spec.basis_backend,
        },
        jobs: rayon::current_num_threads(),
    };
    out.write("manifest.json", &to_json(&manifest))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// basis
// ---------------------------------------------------------------------------

fn basis_csv(basis: &EigenBasis) -> Vec<u8> {
    let psi_cols: Vec<String> = (0..basis.grid.points).map(|i| format!("psi_{i}")).collect();
    let mut header = vec!["n", "eigenvalue"];
    header.extend(psi_cols.iter().map(String::as_str));
    let mut csv = Csv::new(&header);
    for (k, (e, psi)) in basis
        .eigenvalues
        .iter()
        .zip(&basis.eigenfunctions)
        .enumerate()
    {
        let mut row = vec![(k + 1).to_string(), fmt_f64(*e)];
        row.extend(psi.iter().map(|v| fmt_f64(*v)));
        csv.row(&row);
    }
    csv.into_bytes()
}

pub fn cmd_basis(config: &Path, out: &Path, opts: &RunOptions) -> CliResult<RunManifest> {
    let started = Instant::now();
    let cfg = load_config(config, opts)?;
    let bases = ChannelBases::solve(&cfg.spec)?;
    let mut dir = OutputDir::create(out)?;
    dir.write("basis.csv", &basis_csv(bases.base()))?;
    if cfg.spec.basis_backend == BasisBackend::SelfConsistentV1 {
        for h in &cfg.spec.harmonics {
            dir.write(
                &format!("basis_channel_{}.csv", h.index),
                &basis_csv(bases.channel(h.index)?),
            )?;
        }
    }
    finish(&mut dir, "basis", &cfg, started)
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CountsDocument<'a> {
    predicted: &'a mws_core::spectra::SolutionCounts,
    observed_total: usize,
    observed_per_state: &'a [usize],
    distinct_poles_per_state: &'a [usize],
    observed_extra: i64,
    degeneracy_deficit: usize,
    merged_entries: usize,
    dropped_entries: usize,
    mode: DenominatorMode,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct RealisationsDocument<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble: Option<&'a RealisationEnsemble>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Spectrum of a loaded config together with its bases and Auto grouping.
pub struct SpectrumRun {
    pub bases: ChannelBases,
    pub result: SpectrumResult,
    pub ensemble: Result<RealisationEnsemble, Error>,
}

pub fn run_spectrum(spec: &SystemSpec) -> CliResult<SpectrumRun> {
    let bases = ChannelBases::solve(spec)?;
    let result = solve_spectrum_with(spec, &bases)?;
    let ensemble = group_realisations(&result, RealisationCount::Auto);
    Ok(SpectrumRun {
        bases,
        result,
        ensemble,
    })
}

fn write_spectrum(dir: &mut OutputDir, prefix: &str, run: &SpectrumRun) -> CliResult<()> {
    let result = &run.result;
    let mut roots = Csv::new(&["n", "j", "root", "residual", "bracket_lo", "bracket_hi"]);
    let mut poles = Csv::new(&["n", "g_or_k", "n_prime", "pole", "weight"]);
    for st in &result.states {
        for (j, r) in st.roots.iter().enumerate() {
            roots.row(&[
                st.n.to_string(),
                (j + 1).to_string(),
                fmt_f64(r.energy),
                fmt_f64(r.residual),
                fmt_f64(r.bracket.lo),
                fmt_f64(r.bracket.hi),
            ]);
        }
        for e in &st.table.entries {
            for l in &e.labels {
                poles.row(&[
                    st.n.to_string(),
                    l.index.to_string(),
                    l.n_prime.to_string(),
                    fmt_f64(e.pole),
                    fmt_f64(l.weight),
                ]);
            }
        }
    }
    let c = &result.counts;
    let counts = CountsDocument {
        predicted: &c.predicted,
        observed_total: c.observed_total,
        observed_per_state: &c.observed_per_state,
        distinct_poles_per_state: &c.distinct_poles_per_state,
        observed_extra: c.observed_total as i64 - c.predicted.n_0 as i64,
        degeneracy_deficit: c.degeneracy_deficit,
        merged_entries: c.merged_entries,
        dropped_entries: c.dropped_entries,
        mode: result.mode,
        warnings: &result.warnings,
    };
    let realisations = match &run.ensemble {
        Ok(e) => RealisationsDocument {
            ensemble: Some(e),
            error: None,
        },
        Err(e) => RealisationsDocument {
            ensemble: None,
            error: Some(e.to_string()),
        },
    };
    dir.write(&format!("{prefix}roots.csv"), &roots.into_bytes())?;
    dir.write(&format!("{prefix}poles.csv"), &poles.into_bytes())?;
    dir.write_json(&format!("{prefix}counts.json"), &counts)?;
    dir.write_json(&format!("{prefix}realisations.json"), &realisations)?;
    Ok(())
}

pub fn cmd_spectrum(config: &Path, out: &Path, opts: &RunOptions) -> CliResult<RunManifest> {
    let started = Instant::now();
    let cfg = load_config(config, opts)?;
    let run = run_spectrum(&cfg.spec)?;
    let mut dir = OutputDir::create(out)?;
    write_spectrum(&mut dir, "", &run)?;
    finish(&mut dir, "spectrum", &cfg, started)
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

pub const DEFAULT_AXIS_SAMPLES: usize = 64;

pub fn reconstruct_field(spec: &SystemSpec, opts: &RunOptions) -> CliResult<WaveField> {
    let run = run_spectrum(spec)?;
    let ensemble = run.ensemble.map_err(CliError::Core)?;
    let index = opts.realisation.unwrap_or(1);
    let realisation = ensemble
        .realisations
        .iter()
        .find(|r| r.index == index)
        .ok_or_else(|| {
            CliError::Core(Error::RealisationCount {
                requested: index,
                reason: format!("ensemble has {} realisations", ensemble.n_r),
            })
        })?;
    let sets = realisation_components(spec, &run.bases, &run.result, realisation)?;
    let all = default_coefficients(run.bases.base(), spec.n_base, None)?;
    let coefficients: Vec<_> = sets.iter().map(|s| all[s.n - 1]).collect();
    let axis = cell_axis(spec, opts.samples.unwrap_or(DEFAULT_AXIS_SAMPLES).max(1));
    Ok(assemble_wavefunction(
        spec,
        run.bases.base(),
        &sets,
        &coefficients,
        &axis,
        opts.allow_evanescent,
    )?)
}

pub fn cmd_reconstruct(config: &Path, out: &Path, opts: &RunOptions) -> CliResult<RunManifest> {
    let started = Instant::now();
    let cfg = load_config(config, opts)?;
    let field = reconstruct_field(&cfg.spec, opts)?;
    let axis_name = match field.axis_kind {
        mws_core::reconstruct::AxisKind::Space => "r_p",
        mws_core::reconstruct::AxisKind::Time => "t",
    };
    let mut csv = Csv::new(&["x", axis_name, "re_psi", "im_psi", "rho"]);
    let mut heat = format!("# x {axis_name} rho\n");
    for (i, x) in field.x.iter().enumerate() {
        for (m, a) in field.axis.iter().enumerate() {
            let v = field.at(i, m);
            let rho = field.density_at(i, m);
            csv.row(&[
                fmt_f64(*x),
                fmt_f64(*a),
                fmt_f64(v.re),
                fmt_f64(v.im),
                fmt_f64(rho),
            ]);
            heat.push_str(&format!(
                "{} {} {}\n",
                fmt_f64(*x),
                fmt_f64(*a),
                fmt_f64(rho)
            ));
        }
        heat.push('\n');
    }
    let mut dir = OutputDir::create(out)?;
    dir.write("field.csv", &csv.into_bytes())?;
    dir.write("rho_heatmap.dat", heat.as_bytes())?;
    finish(&mut dir, "reconstruct", &cfg, started)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

/// Relative tolerance of the polynomial oracle comparison.
pub const POLYNOMIAL_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance of the kernel/table diagonal comparison.
pub const DIAGONAL_TOLERANCE: f64 = 1e-8;
/// Relative level change allowed between the grid and its 2x refinement.
pub const REFINED_GRID_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone, Serialize)]
pub struct VerifyDocument {
    pub reports: Vec<OracleReport>,
    pub notes: Vec<String>,
}

pub fn run_verify(spec: &SystemSpec) -> CliResult<VerifyDocument> {
    let run = run_spectrum(spec)?;
    let mut reports = Vec::new();
    let mut notes = Vec::new();

    // Polynomial oracle, per state.
    let mut solver = Vec::new();
    let mut oracle = Vec::new();
    for st in &run.result.states {
        if st.table.mode != DenominatorMode::Approximate {
            notes.push(format!(
                "state {}: polynomial oracle skipped in exact mode",
                st.n
            ));
            continue;
        }
        if st.table.len() > MAX_ORACLE_POLES {
            notes.push(format!(
                "state {}: {} poles exceed the polynomial oracle limit",
                st.n,
                st.table.len()
            ));
            continue;
        }
        solver.extend(st.energies());
        oracle.extend(polynomial_roots_oracle(&st.table, st.epsilon0)?);
    }
    reports.push(compare_roots(
        "polynomial_roots",
        &solver,
        &oracle,
        POLYNOMIAL_TOLERANCE,
    ));

    // Coupled-channel subset recovery.
    match coupled_matrix_diagonalization(spec, &run.bases) {
        Ok(coupled) => {
            let roots: Vec<f64> = run
                .result
                .states
                .iter()
                .flat_map(|s| s.energies())
                .collect();
            let n_0 = count_solutions(spec).n_0;
            let tolerance = coupling_scale(&run.result, &coupled.eigenvalues);
            let mut report = OracleReport::new(
                "coupled_channels",
                "distance of the N_0 nearest EP roots to coupled-channel eigenvalues",
                subset_distances(&roots, &coupled.eigenvalues, n_0),
                tolerance,
            );
            if report.discrepancies.is_empty() {
                report.pass = true;
            }
            reports.push(report);
        }
        Err(e) => notes.push(format!("coupled-channel oracle: {e}")),
    }

    // Refined grid.
    let coarse = refined_grid_eigen_oracle(spec, 1)?;
    let fine = refined_grid_eigen_oracle(spec, 2)?;
    reports.push(OracleReport::new(
        "refined_grid",
        "relative change of base levels under 2x grid refinement",
        coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .collect(),
        REFINED_GRID_TOLERANCE,
    ));

    // Kernel diagonal against the table, between consecutive roots.
    let mut diffs = Vec::new();
    for st in &run.result.states {
        let e = st.energies();
        for w in e.windows(2) {
            let eps = 0.5 * (w[0] + w[1]);
            let (Ok(a), Ok(b)) = (
                vnn_eval(&st.table, eps),
                kernel_diagonal(spec, &run.bases, eps, st.n),
            ) else {
                continue;
            };
            diffs.push((a - b.re).abs().max(b.im.abs()));
        }
    }
    reports.push(OracleReport::new(
        "kernel_diagonal",
        "|<psi_n|J(eps)|psi_n> - V_nn(eps)|",
        diffs,
        DIAGONAL_TOLERANCE,
    ));
    Ok(VerifyDocument { reports, notes })
}

/// Second-order shift scale `max_n W_n / δ`, with `δ` the smallest spacing
/// of the coupled-channel spectrum; EP roots of the normal set are expected
/// within this distance of the oracle eigenvalues.
fn coupling_scale(result: &SpectrumResult, eigenvalues: &[f64]) -> f64 {
    let w = result
        .states
        .iter()
        .map(|s| s.table.total_weight())
        .fold(0.0, f64::max);
    let gap = eigenvalues
        .windows(2)
        .map(|p| p[1] - p[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if gap.is_finite() {
        w / gap
    } else {
        w
    }
}

pub fn cmd_verify(config: &Path, out: &Path, opts: &RunOptions) -> CliResult<RunManifest> {
    let started = Instant::now();
    let cfg = load_config(config, opts)?;
    let doc = run_verify(&cfg.spec)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_json("verify.json", &doc)?;
    finish(&mut dir, "verify", &cfg, started)
}

// ---------------------------------------------------------------------------
// figure1
// ---------------------------------------------------------------------------

pub const DEFAULT_CURVE_SAMPLES: usize = 200;
/// Excluded neighbourhood of each pole, relative to the local gap.
const CURVE_EXCLUSION: f64 = 1e-4;

pub fn cmd_figure1(config: &Path, out: &Path, opts: &RunOptions) -> CliResult<RunManifest> {
    let started = Instant::now();
    let cfg = load_config(config, opts)?;
    if cfg.spec.n_base != 1 {
        log::warn!("figure1 is intended for N_s = 1 (got {})", cfg.spec.n_base);
    }
    let samples = opts.samples.unwrap_or(DEFAULT_CURVE_SAMPLES).max(2);
    let run = run_spectrum(&cfg.spec)?;
    let mut curve = Csv::new(&["n", "epsilon", "v_nn", "line"]);
    let mut asymptotes = Csv::new(&["n", "pole", "g_or_k", "n_prime"]);
    let mut intersections = Csv::new(&["n", "j", "root", "v_nn"]);
    for st in &run.result.states {
        let poles = st.table.poles();
        let roots = st.energies();
        let lo = poles
            .iter()
            .chain(&roots)
            .copied()
            .fold(f64::INFINITY, f64::min);
        let hi = poles
            .iter()
            .chain(&roots)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let pad = (0.1 * (hi - lo)).max(1.0);
        let mut edges = vec![lo - pad];
        edges.extend(&poles);
        edges.push(hi + pad);
        for (k, w) in edges.windows(2).enumerate() {
            let gap = w[1] - w[0];
            let delta = CURVE_EXCLUSION * gap;
            let a = if k == 0 { w[0] } else { w[0] + delta };
            let b = if k + 2 == edges.len() {
                w[1]
            } else {
                w[1] - delta
            };
            for m in 0..samples {
                let eps = a + (b - a) * m as f64 / (samples - 1) as f64;
                if let Ok(v) = vnn_eval(&st.table, eps) {
                    curve.row(&[
                        st.n.to_string(),
                        fmt_f64(eps),
                        fmt_f64(v),
                        fmt_f64(eps - st.epsilon0),
                    ]);
                }
            }
        }
        for e in &st.table.entries {
            for l in &e.labels {
                asymptotes.row(&[
                    st.n.to_string(),
                    fmt_f64(e.pole),
                    l.index.to_string(),
                    l.n_prime.to_string(),
                ]);
            }
        }
        for (j, r) in st.roots.iter().enumerate() {
            intersections.row(&[
                st.n.to_string(),
                (j + 1).to_string(),
                fmt_f64(r.energy),
                fmt_f64(r.energy - st.epsilon0),
            ]);
        }
    }
    let mut dir = OutputDir::create(out)?;
    dir.write("curve.csv", &curve.into_bytes())?;
    dir.write("asymptotes.csv", &asymptotes.into_bytes())?;
    dir.write("intersections.csv", &intersections.into_bytes())?;
    finish(&mut dir, "figure1", &cfg, started)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// Sets the number at JSON pointer `param` in the config text.
pub fn substitute(text: &str, param: &str, value: f64) -> CliResult<String> {
    let mut doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Core(Error::Config(e.to_string())))?;
    let slot = doc
        .pointer_mut(param)
        .ok_or_else(|| CliError::Usage(format!("parameter {param} not found in config")))?;
    if !slot.is_number() {
        return Err(CliError::Usage(format!("parameter {param} is not numeric")));
    }
    *slot = serde_json::Value::from(value);
    Ok(serde_json::to_string_pretty(&doc).expect("JSON value serializes"))
}

pub fn cmd_sweep(
    config: &Path,
    param: &str,
    values: &[f64],
    out: &Path,
    opts: &RunOptions,
) -> CliResult<RunManifest> {
    let started = Instant::now();
    if values.is_empty() {
        return Err(CliError::Core(Error::Invalid(
            "sweep value list is empty".into(),
        )));
    }
    let text = fs::read_to_string(config).map_err(|e| CliError::io(config, e))?;
    let cfg = load_config_text(&text, opts)?;
    let mut dir = OutputDir::create(out)?;
    let mut table = Csv::new(&[
        "index",
        "value",
        "total_roots",
        "n_max",
        "oracle_distance",
        "roots",
    ]);
    for (i, &value) in values.iter().enumerate() {
        let variant = load_config_text(&substitute(&text, param, value)?, opts)?;
        let run = run_spectrum(&variant.spec)?;
        write_spectrum(&mut dir, &format!("value_{i:03}/"), &run)?;
        let roots: Vec<f64> = run
            .result
            .states
            .iter()
            .flat_map(|s| s.energies())
            .collect();
        let distance = coupled_matrix_diagonalization(&variant.spec, &run.bases)
            .map(|c| subset_distance(&roots, &c.eigenvalues, count_solutions(&variant.spec).n_0))
            .unwrap_or(f64::NAN);
        table.row(&[
            i.to_string(),
            fmt_f64(value),
            run.result.total_roots().to_string(),
            run.result.counts.predicted.n_max.to_string(),
            fmt_f64(distance),
            roots
                .iter()
                .map(|r| fmt_f64(*r))
                .collect::<Vec<_>>()
                .join(";"),
        ]);
    }
    dir.write("sweep.csv", &table.into_bytes())?;
    finish(&mut dir, "sweep", &cfg, started)
}

// ---------------------------------------------------------------------------
// effpot kernel
// ---------------------------------------------------------------------------

pub fn cmd_effpot_kernel(
    config: &Path,
    energy: f64,
    out: &Path,
    opts: &RunOptions,
) -> CliResult<RunManifest> {
    let started = Instant::now();
    let cfg = load_config(config, opts)?;
    let bases = ChannelBases::solve(&cfg.spec)?;
    let kernel = EffectiveKernel::new(&cfg.spec, &bases, energy)?;
    let matrix = kernel.matrix();
    let x = cfg.spec.grid.coordinates();
    let header: Vec<String> = std::iter::once("x".to_string())
        .chain(x.iter().map(|v| fmt_f64(*v)))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut re = Csv::new(&header);
    let mut im = Csv::new(&header);
    let n = x.len();
    for (i, xi) in x.iter().enumerate() {
        let row = &matrix[i * n..(i + 1) * n];
        let mut r = vec![fmt_f64(*xi)];
        r.extend(row.iter().map(|v| fmt_f64(v.re)));
        re.row(&r);
        let mut m = vec![fmt_f64(*xi)];
        m.extend(row.iter().map(|v| fmt_f64(v.im)));
        im.row(&m);
    }
    let mut dir = OutputDir::create(out)?;
    dir.write("kernel_re.csv", &re.into_bytes())?;
    dir.write("kernel_im.csv", &im.into_bytes())?;
    finish(&mut dir, "effpot kernel", &cfg, started)
}
