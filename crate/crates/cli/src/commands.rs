use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hltomo::detection::{hl_distribution, joint_statistics, DetectorEfficiency, LoField};
use hltomo::fock::{fidelity, mean_photon_number, projected_state, raw_fidelity, StatePrep};
use hltomo::ingestion::{
    assign_phases, contiguous_steps, fit_phase_calibration, inject_phase_noise, load_trace,
    nominal_step_phases, randomize_phases, spread_phase, write_trace, PhaseCalibration, RawPulseRecord,
    DEFAULT_SPREAD_STEP,
};
use hltomo::sampling::{sample_counts, HlSample, RNG_ALGORITHM};
use hltomo::tomography::{
    estimate_moments, reconstruct, theory_moments, MomentEstimate, MomentOptions, ReconstructOptions,
    ReconstructionResult, DEFAULT_BLOCKS,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::info;

use crate::config::{config_hash, PhaseMode, RunConfig};
use crate::error::CliError;
use crate::output;

pub const DEFAULT_SAMPLES: usize = 300_000;
pub const DEFAULT_STEPS: usize = 60;
pub const DEFAULT_DIM: usize = 8;

/// Exact-model summary of the count-difference law at one LO phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HlSummary {
    pub phase: f64,
    pub mean: f64,
    pub variance: f64,
    pub min_delta: i64,
    pub max_delta: i64,
    pub tail_mass: f64,
}

/// Sidecar written next to every simulated trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMeta {
    pub config_hash: String,
    pub rng: String,
    pub seed: u64,
    pub prep: StatePrep,
    pub lo_magnitude: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub n_samples: usize,
    pub n_steps: usize,
    pub spread_step: f64,
    pub phi_per_step: Vec<f64>,
    pub p_hl: Vec<HlSummary>,
}

pub fn meta_path(trace: &Path) -> PathBuf {
    trace.with_extension("meta.json")
}

/// `<prefix><suffix>` without touching any extension already in the prefix.
fn sibling(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Creates the directory an output prefix lives in.
fn ensure_parent(prefix: &Path) -> Result<(), CliError> {
    match prefix.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

fn require<T: Clone>(v: &Option<T>, key: &str, command: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Config(format!("{command} requires --{}", key.replace('_', "-"))))
}

fn echo_config(prefix: &Path, command: &str, cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
    write_json(
        &sibling(prefix, ".config.json"),
        &json!({ "command": command, "config_hash": hash, "config": cfg }),
    )
}

fn efficiency(cfg: &RunConfig) -> Result<DetectorEfficiency, CliError> {
    Ok(DetectorEfficiency::new(cfg.eta_c.unwrap_or(1.0), cfg.eta_d.unwrap_or(1.0))?)
}

fn summarize(prep: &StatePrep, lo_magnitude: f64, eff: &DetectorEfficiency) -> Result<Vec<HlSummary>, CliError> {
    let phases: &[f64] = if prep.is_phase_sensitive() { &[0.0, PI / 2.0] } else { &[0.0] };
    phases
        .iter()
        .map(|&phase| {
            let q = joint_statistics(prep, &LoField::new(lo_magnitude, phase)?, eff, None)?;
            let p = hl_distribution(&q);
            Ok(HlSummary {
                phase,
                mean: p.mean(),
                variance: p.variance(),
                min_delta: p.min_delta,
                max_delta: p.max_delta(),
                tail_mass: p.tail_mass,
            })
        })
        .collect()
}

/// Pulses are split into `n_steps` contiguous runs; run `s` sits at LO phase
/// `s pi / n_steps`, spread pulse by pulse around it.
pub fn piezo_phases(n: usize, n_steps: usize, spread_step: f64) -> (Vec<u32>, Vec<f64>) {
    let steps = contiguous_steps(n, n_steps);
    let nominal = nominal_step_phases(n_steps);
    let mut per_step = vec![0usize; n_steps];
    for &s in &steps {
        per_step[s as usize] += 1;
    }
    let mut seen = vec![0usize; n_steps];
    let phases = steps
        .iter()
        .map(|&s| {
            let s = s as usize;
            let p = spread_phase(nominal[s], seen[s], per_step[s], spread_step);
            seen[s] += 1;
            p
        })
        .collect();
    (steps, phases)
}

pub fn simulate(mut cfg: RunConfig) -> Result<(), CliError> {
    let prep = require(&cfg.prep, "prep", "simulate")?;
    let lo_magnitude = require(&cfg.lo_magnitude, "lo_magnitude", "simulate")?;
    let seed = require(&cfg.seed, "seed", "simulate")?;
    let output = require(&cfg.output, "output", "simulate")?;
    ensure_parent(&output)?;
    let n = *cfg.n_samples.get_or_insert(DEFAULT_SAMPLES);
    let n_steps = *cfg.n_steps.get_or_insert(DEFAULT_STEPS);
    let spread = *cfg.spread_step.get_or_insert(DEFAULT_SPREAD_STEP);
    cfg.eta_c.get_or_insert(1.0);
    cfg.eta_d.get_or_insert(1.0);
    if n_steps == 0 {
        return Err(CliError::Config("n_steps must be positive".into()));
    }
    let eff = efficiency(&cfg)?;
    LoField::new(lo_magnitude, 0.0)?;
    let hash = config_hash("simulate", &cfg);

    let (steps, phases) = piezo_phases(n, n_steps, spread);
    let counts = sample_counts(&prep, lo_magnitude, &phases, &eff, seed)?;
    let records: Vec<RawPulseRecord> = counts
        .iter()
        .zip(&steps)
        .enumerate()
        .map(|(i, (c, &s))| RawPulseRecord {
            pulse: i as u64,
            piezo_step: s,
            n_c: c.n_c,
            n_d: c.n_d,
        })
        .collect();
    write_trace(&output, &records)?;
    info!(records = records.len(), path = %output.display(), "trace written");

    let meta = TraceMeta {
        config_hash: hash.clone(),
        rng: RNG_ALGORITHM.to_string(),
        seed,
        prep,
        lo_magnitude,
        eta_c: eff.eta_c,
        eta_d: eff.eta_d,
        n_samples: n,
        n_steps,
        spread_step: spread,
        phi_per_step: nominal_step_phases(n_steps),
        p_hl: summarize(&prep, lo_magnitude, &eff)?,
    };
    write_json(&meta_path(&output), &serde_json::to_value(&meta).expect("meta serializes"))?;
    echo_config(&output.with_extension(""), "simulate", &cfg, &hash)
}

fn read_meta(trace: &Path) -> Result<Option<TraceMeta>, CliError> {
    let path = meta_path(trace);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Samples ready for tomography plus what was learned on the way.
struct Prepared {
    samples: Vec<HlSample>,
    calibration: Option<PhaseCalibration>,
    n_malformed: usize,
    n_steps: usize,
}

/// Loads the trace, fills unset keys from the metadata sidecar and defaults,
/// and assigns phases.
fn prepare(cfg: &mut RunConfig, command: &str) -> Result<Prepared, CliError> {
    let input = require(&cfg.input, "input", command)?;
    let loaded = load_trace(&input, cfg.lenient.unwrap_or(false))?;
    let meta = read_meta(&input)?;
    if let Some(m) = &meta {
        cfg.lo_magnitude.get_or_insert(m.lo_magnitude);
        cfg.eta_c.get_or_insert(m.eta_c);
        cfg.eta_d.get_or_insert(m.eta_d);
        cfg.n_steps.get_or_insert(m.n_steps);
        cfg.spread_step.get_or_insert(m.spread_step);
    }
    let lo_magnitude = require(&cfg.lo_magnitude, "lo_magnitude", command)?;
    cfg.eta_c.get_or_insert(1.0);
    cfg.eta_d.get_or_insert(1.0);
    let eff = efficiency(cfg)?;
    let scale = eff.detected_lo_magnitude(lo_magnitude);
    let inferred_steps = loaded.records.iter().map(|r| r.piezo_step as usize + 1).max().unwrap_or(0);
    let n_steps = *cfg.n_steps.get_or_insert(inferred_steps);
    let spread = *cfg.spread_step.get_or_insert(DEFAULT_SPREAD_STEP);
    let mode = *cfg.phase_mode.get_or_insert(PhaseMode::Calibrated);
    let channel = *cfg.fringe_channel.get_or_insert_with(Default::default);
    let noise = *cfg.phase_noise.get_or_insert(0.0);

    let mut calibration = None;
    let samples = match mode {
        PhaseMode::Calibrated => {
            let cal = fit_phase_calibration(&loaded.records, n_steps, channel)?;
            let s = assign_phases(&loaded.records, &cal, spread, scale)?;
            calibration = Some(cal);
            s
        }
        PhaseMode::TrustFile => {
            let m = meta.as_ref().ok_or_else(|| {
                CliError::Config(format!("trust_file phases need {}", meta_path(&input).display()))
            })?;
            assign_phases(&loaded.records, &PhaseCalibration::from_phases(m.phi_per_step.clone()), spread, scale)?
        }
        PhaseMode::Random => {
            let seed = require(&cfg.seed, "seed", "random phase assignment")?;
            randomize_phases(&loaded.records, scale, seed)?
        }
    };
    let samples = if noise > 0.0 {
        let seed = require(&cfg.seed, "seed", "phase noise injection")?;
        inject_phase_noise(&samples, noise, seed.wrapping_add(1))?
    } else if noise < 0.0 {
        return Err(CliError::Config(format!("phase_noise {noise} is negative")));
    } else {
        samples
    };
    cfg.phase_sensitive.get_or_insert(match (mode, cfg.target) {
        (PhaseMode::Random, _) => false,
        (_, Some(t)) => t.is_phase_sensitive(),
        _ => true,
    });
    Ok(Prepared {
        samples,
        calibration,
        n_malformed: loaded.malformed_lines.len(),
        n_steps,
    })
}

fn moment_options(cfg: &mut RunConfig) -> MomentOptions {
    MomentOptions {
        theta: *cfg.theta.get_or_insert(0.0),
        eta: *cfg.kernel_eta.get_or_insert(1.0),
        n_blocks: *cfg.n_blocks.get_or_insert(DEFAULT_BLOCKS),
        phase_sensitive: cfg.phase_sensitive.unwrap_or(true),
    }
}

/// Theory moments of the target as seen through detectors of efficiency eta:
/// the signal and the LO both scale by `sqrt(eta)`. Unequal efficiencies have
/// no single attenuated state, so no theory is given.
fn theory_json(cfg: &RunConfig, theta: f64) -> Value {
    let (Some(t), Some(lo)) = (cfg.target, cfg.lo_magnitude) else {
        return Value::Null;
    };
    let (eta_c, eta_d) = (cfg.eta_c.unwrap_or(1.0), cfg.eta_d.unwrap_or(1.0));
    if eta_c != eta_d {
        return Value::Null;
    }
    let g = eta_c.sqrt();
    let detected = match t {
        StatePrep::Coherent(a) => StatePrep::Coherent(a * g),
        StatePrep::Phav(r) => StatePrep::Phav(r * g),
        _ => return Value::Null,
    };
    match theory_moments(&detected, lo * g, theta) {
        Ok((mean, var)) => json!({ "mean_x": mean, "var_x": var, "eta": eta_c }),
        Err(_) => Value::Null,
    }
}

pub fn reconstruct_cmd(mut cfg: RunConfig) -> Result<(), CliError> {
    let output = require(&cfg.output, "output", "reconstruct")?;
    ensure_parent(&output)?;
    let prepared = prepare(&mut cfg, "reconstruct")?;
    let dim = *cfg.dim.get_or_insert(DEFAULT_DIM);
    let mopts = moment_options(&mut cfg);
    let svg = *cfg.svg.get_or_insert(false);
    cfg.lenient.get_or_insert(false);
    let hash = config_hash("reconstruct", &cfg);

    let opts = ReconstructOptions {
        dim,
        n_blocks: mopts.n_blocks,
        phase_sensitive: mopts.phase_sensitive,
    };
    let mut result = reconstruct(&prepared.samples, &opts)?;
    let moments = estimate_moments(&prepared.samples, &mopts)?;
    let input = cfg.input.clone().expect("checked in prepare");
    result.metadata.insert("source".into(), json!(input.display().to_string()));
    result.metadata.insert("lo_magnitude".into(), json!(cfg.lo_magnitude));
    result.metadata.insert("phase_mode".into(), json!(cfg.phase_mode));
    result.metadata.insert("malformed_lines".into(), json!(prepared.n_malformed));

    let analysis = analysis(&cfg, &result, &moments)?;
    let mut doc = serde_json::to_value(result.to_document()).expect("document serializes");
    doc["config_hash"] = json!(hash);
    doc["analysis"] = analysis;
    doc["calibration"] = serde_json::to_value(&prepared.calibration).expect("calibration serializes");
    write_json(&sibling(&output, ".json"), &doc)?;

    let rho_path = sibling(&output, ".rho.csv");
    let mut w = BufWriter::new(File::create(&rho_path).map_err(io_err(&rho_path))?);
    writeln!(w, "# config_hash={hash}").map_err(io_err(&rho_path))?;
    result.write_abs_csv(&mut w).and_then(|_| w.flush()).map_err(io_err(&rho_path))?;

    let trace_path = sibling(&output, ".trace.csv");
    output::write_quadrature_trace(&trace_path, &prepared.samples, &hash).map_err(io_err(&trace_path))?;
    let bins = prepared.n_steps.clamp(12, 180);
    let envelope = output::envelope(&prepared.samples, bins);
    let env_path = sibling(&output, ".envelope.csv");
    output::write_envelope(&env_path, &envelope, &hash).map_err(io_err(&env_path))?;
    if svg {
        let svg_path = sibling(&output, ".svg");
        output::write_svg(&svg_path, &prepared.samples, &envelope).map_err(io_err(&svg_path))?;
    }
    echo_config(&output, "reconstruct", &cfg, &hash)
}

fn analysis(cfg: &RunConfig, result: &ReconstructionResult, moments: &MomentEstimate) -> Result<Value, CliError> {
    let (fid, raw, tail) = match cfg.target {
        Some(t) => {
            let (target, tail) = projected_state(&t, result.dim())?;
            (Some(fidelity(&result.rho, &target)?), Some(raw_fidelity(&result.rho, &target)?), Some(tail))
        }
        None => (None, None, None),
    };
    Ok(json!({
        "target": cfg.target,
        "target_truncation_tail": tail,
        "fidelity": fid,
        "raw_fidelity": raw,
        "mean_photon_number": mean_photon_number(&result.rho),
        "trace": result.rho.trace(),
        "photon_numbers": result.rho.photon_numbers().probs,
        "moments": moments,
        "theory": theory_json(cfg, moments.theta),
    }))
}

pub fn moments_cmd(mut cfg: RunConfig) -> Result<(), CliError> {
    let prepared = prepare(&mut cfg, "moments")?;
    let mopts = moment_options(&mut cfg);
    let hash = config_hash("moments", &cfg);
    let m = estimate_moments(&prepared.samples, &mopts)?;
    let doc = json!({
        "config_hash": hash,
        "moments": m,
        "theory": theory_json(&cfg, m.theta),
        "n_samples": prepared.samples.len(),
    });
    match &cfg.output {
        Some(out) => {
            ensure_parent(out)?;
            write_json(&sibling(out, ".json"), &doc)?;
            echo_config(out, "moments", &cfg, &hash)
        }
        None => emit(&format!("{}\n", serde_json::to_string_pretty(&doc).expect("json value serializes"))),
    }
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub mean: f64,
    pub mean_err: f64,
    pub mean_theory: Option<f64>,
    pub var: f64,
    pub var_err: f64,
    pub var_theory: Option<f64>,
    pub fidelity: Option<f64>,
    pub mean_n: f64,
}

fn report_row(path: &Path) -> Result<ReportRow, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |what: &str| CliError::Config(format!("{}: missing {what}", path.display()));
    let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let a = doc.get("analysis").ok_or_else(|| bad("analysis"))?;
    let num = |v: &Value, key: &str| v.get(key).and_then(Value::as_f64);
    let m = a.get("moments").ok_or_else(|| bad("analysis.moments"))?;
    let theory = a.get("theory").unwrap_or(&Value::Null);
    let run = path
        .file_name()
        .map(|s| s.to_string_lossy().trim_end_matches(".json").to_string())
        .unwrap_or_default();
    Ok(ReportRow {
        run,
        mean: num(m, "mean_x").ok_or_else(|| bad("mean_x"))?,
        mean_err: num(m, "mean_err").ok_or_else(|| bad("mean_err"))?,
        mean_theory: num(theory, "mean_x"),
        var: num(m, "var_x").ok_or_else(|| bad("var_x"))?,
        var_err: num(m, "var_err").ok_or_else(|| bad("var_err"))?,
        var_theory: num(theory, "var_x"),
        fidelity: num(a, "fidelity"),
        mean_n: num(a, "mean_photon_number").ok_or_else(|| bad("mean_photon_number"))?,
    })
}

pub fn report(results: &[PathBuf], output: Option<&Path>) -> Result<(), CliError> {
    if results.is_empty() {
        return Err(CliError::Config("report needs at least one result file".into()));
    }
    let rows = results.iter().map(|p| report_row(p)).collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = results.iter().map(|p| p.display().to_string()).collect();
    let hash = hex::encode(<sha2::Sha256 as sha2::Digest>::digest(names.join("\n").as_bytes()));
    let table = output::report_text(&rows);
    emit(&table)?;
    if let Some(out) = output {
        ensure_parent(out)?;
        let csv = sibling(out, ".csv");
        std::fs::write(&csv, output::report_csv(&rows, &hash)).map_err(io_err(&csv))?;
        let txt = sibling(out, ".txt");
        std::fs::write(&txt, table).map_err(io_err(&txt))?;
    }
    Ok(())
}
