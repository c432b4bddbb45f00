//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use gsr_core::measfile::MeasurementFile;
use gsr_core::metrics::format_db;
use gsr_core::solver::z_step;
use gsr_core::{
    add_noise, psnr, read_pgm, recover, write_pgm, Error, Image, MeasurementOp, NoiseModel,
    NoiseSpec, PenaltyKind, Result, SolverState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{parse_weighting, weighting_name, Config};

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Noise uses stream 1 of the seed; the operator draws from stream 0.
fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn numerical(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// Samples `image` with a seeded operator and adds seeded noise.
pub fn make_measurements(image: &Image, cfg: &Config, subrate: f64, noise: NoiseSpec) -> Result<MeasurementFile> {
    let seed = cfg.seed()?;
    let kind = cfg.operator_kind()?;
    let op = MeasurementOp::new(kind, image.width(), image.height(), subrate, seed)?;
    let clean = op.forward(image)?;
    let noisy = add_noise(&clean, &noise, &mut noise_rng(seed))?;
    Ok(MeasurementFile {
        kind,
        width: image.width(),
        height: image.height(),
        subrate,
        seed,
        noise,
        snr_db: noisy.snr_db,
        measurements: noisy.y,
    })
}

pub fn measure(cfg: &Config) -> Result<()> {
    let image = read_pgm(cfg.path("input")?)?;
    let file = make_measurements(&image, cfg, cfg.require("subrate")?, cfg.noise()?)?;
    file.write(cfg.path("output")?)?;
    println!("measurements={} snr_db={}", file.measurements.len(), format_db(file.snr_db));
    Ok(())
}

fn read_ground_truth(cfg: &Config, width: usize, height: usize) -> Result<Option<Image>> {
    let Some(path) = cfg.optional_path("ground_truth") else {
        return Ok(None);
    };
    let gt = read_pgm(&path)?;
    if gt.width() != width || gt.height() != height {
        return Err(Error::Config(format!(
            "ground truth {} is {}x{} but the measurements describe a {width}x{height} image",
            path.display(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(Some(gt))
}

fn run_solver(file: &MeasurementFile, cfg: &Config, gt: Option<&Image>) -> Result<SolverState> {
    let op = file.operator()?;
    let solver = cfg.solver()?;
    if let gsr_core::Init::Given(init) = &solver.init {
        if init.width() != file.width || init.height() != file.height {
            return Err(Error::Config(format!(
                "initializer is {}x{} but the measurements describe a {}x{} image",
                init.width(),
                init.height(),
                file.width,
                file.height
            )));
        }
    }
    let state = recover(&file.measurements, &op, &solver, gt)?;
    if state.x.data().iter().any(|v| !v.is_finite()) {
        return Err(numerical("reconstruction diverged to non-finite values"));
    }
    Ok(state)
}

pub fn write_trace(path: &Path, fidelity: &str, state: &SolverState) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    let with_psnr = state.trace.first().is_some_and(|t| t.psnr.is_some());
    let mut text = format!("# fidelity={fidelity}\niter,data_fidelity,reg_surrogate,x_minus_z_norm");
    if with_psnr {
        text.push_str(",psnr");
    }
    text.push('\n');
    for t in &state.trace {
        text.push_str(&format!(
            "{},{:e},{:e},{:e}",
            t.iter, t.data_fidelity, t.reg_surrogate, t.x_minus_z_norm
        ));
        if let Some(p) = t.psnr {
            text.push(',');
            text.push_str(&format_db(p));
        }
        text.push('\n');
    }
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| io_error(path, e))
}

pub fn recover_cmd(cfg: &Config) -> Result<()> {
    let file = MeasurementFile::read(cfg.path("measurements")?)?;
    let output = cfg.path("output")?;
    let gt = read_ground_truth(cfg, file.width, file.height)?;
    let state = run_solver(&file, cfg, gt.as_ref())?;
    write_pgm(&state.x, &output)?;
    if let Some(trace) = cfg.optional_path("trace") {
        write_trace(&trace, cfg.fidelity()?.name(), &state)?;
    }
    let mut summary = format!("iterations={} fidelity={}", state.iteration, cfg.fidelity()?.name());
    if let Some(p) = state.trace.last().and_then(|t| t.psnr) {
        summary.push_str(&format!(" psnr={}", format_db(p)));
    }
    println!("{summary}");
    Ok(())
}

pub fn denoise(cfg: &Config) -> Result<()> {
    let input = read_pgm(cfg.path("input")?)?;
    let output = cfg.path("output")?;
    let tau: f64 = cfg.require("tau")?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("tau must be finite and >= 0, got {tau}")));
    }
    let solver = cfg.solver()?;
    let out = z_step(&input, &solver, tau)?;
    if out.z.data().iter().any(|v| !v.is_finite()) {
        return Err(numerical("denoised image has non-finite values"));
    }
    write_pgm(&out.z, &output)?;
    let mut summary = format!("groups={}", out.groups);
    if let Some(gt) = read_ground_truth(cfg, input.width(), input.height())? {
        let before = psnr(&input, &gt)?.psnr_db;
        let after = psnr(&out.z.clamped(0.0, 255.0), &gt)?.psnr_db;
        summary.push_str(&format!(" input_psnr={} output_psnr={}", format_db(before), format_db(after)));
    }
    println!("{summary}");
    Ok(())
}

pub fn metrics(cfg: &Config) -> Result<()> {
    let x = read_pgm(cfg.path("input")?)?;
    let reference = read_pgm(cfg.path("ground_truth")?)?;
    let q = psnr(&x, &reference)?;
    println!("psnr_db,mse\n{},{}", format_db(q.psnr_db), q.mse);
    Ok(())
}

#[derive(Debug, Clone)]
struct Cell {
    subrate: f64,
    lambda: Option<f64>,
    snr_db: Option<f64>,
    penalty: String,
    weighting: String,
}

struct CellResult {
    psnr: Option<f64>,
    seconds: f64,
    error: Option<String>,
}

fn run_cell(image: &Image, base: &Config, cell: &Cell) -> CellResult {
    let start = Instant::now();
    let outcome = (|| -> Result<f64> {
        let mut cfg = base.clone();
        cfg.set("penalty", &cell.penalty)?;
        cfg.set("weighting", &cell.weighting)?;
        if let Some(l) = cell.lambda {
            cfg.set("lambda", &format!("{l:?}"))?;
        }
        let mut noise = cfg.noise()?;
        if cell.snr_db.is_some() {
            noise.target_snr_db = cell.snr_db;
        }
        let file = make_measurements(image, &cfg, cell.subrate, noise)?;
        let state = run_solver(&file, &cfg, Some(image))?;
        state
            .trace
            .last()
            .and_then(|t| t.psnr)
            .ok_or_else(|| numerical("empty trace"))
    })();
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(p) => CellResult {
            psnr: Some(p),
            seconds,
            error: None,
        },
        Err(e) => CellResult {
            psnr: None,
            seconds,
            error: Some(e.to_string()),
        },
    }
}

fn sweep_cells(cfg: &Config) -> Result<Vec<Cell>> {
    let subrates: Vec<f64> = match cfg.list("subrates") {
        Some(list) => list
            .iter()
            .map(|s| s.parse().map_err(|_| Error::Config(format!("bad subrate '{s}' in subrates"))))
            .collect::<Result<_>>()?,
        None => vec![cfg.require("subrate")?],
    };
    let snrs: Vec<Option<f64>> = match cfg.list("snrs") {
        Some(list) => {
            if matches!(cfg.noise()?.model, NoiseModel::None) {
                return Err(Error::Config("snrs needs a noise model (noise=gaussian or noise=mixture)".into()));
            }
            list.iter()
                .map(|s| s.parse().map(Some).map_err(|_| Error::Config(format!("bad SNR '{s}' in snrs"))))
                .collect::<Result<_>>()?
        }
        None => vec![cfg.parsed("snr_db")?],
    };
    let penalties = cfg
        .list("penalties")
        .unwrap_or_else(|| vec![cfg.get("penalty").unwrap_or("log").to_string()]);
    for p in &penalties {
        p.parse::<PenaltyKind>()?;
    }
    let weightings = cfg
        .list("weightings")
        .unwrap_or_else(|| vec![cfg.get("weighting").unwrap_or("combined").to_string()]);
    for w in &weightings {
        parse_weighting(w)?;
    }
    let lambdas: Vec<Option<f64>> = match cfg.list("lambdas") {
        Some(list) => list
            .iter()
            .map(|s| s.parse().map(Some).map_err(|_| Error::Config(format!("bad lambda '{s}' in lambdas"))))
            .collect::<Result<_>>()?,
        None => vec![None],
    };
    let mut cells = Vec::new();
    for &subrate in &subrates {
        for &snr_db in &snrs {
            for penalty in &penalties {
                for weighting in &weightings {
                    for &lambda in &lambdas {
                        cells.push(Cell {
                            subrate,
                            lambda,
                            snr_db,
                            penalty: penalty.clone(),
                            weighting: weighting_name(parse_weighting(weighting)?).to_string(),
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

pub fn sweep(cfg: &Config) -> Result<()> {
    let image = read_pgm(cfg.path("input")?)?;
    let output = cfg.path("output")?;
    let cells = sweep_cells(cfg)?;
    let timing: bool = cfg.or("timing", true)?;
    let jobs: usize = cfg.or("jobs", 0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    let fidelity = cfg.fidelity()?.name();
    let base_lambda = cfg.solver()?.lambda;
    let results: Vec<CellResult> = pool.install(|| cells.par_iter().map(|c| run_cell(&image, cfg, c)).collect());

    let file = File::create(&output).map_err(|e| io_error(&output, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::Io {
        path: output.clone(),
        source: std::io::Error::other(e),
    };
    w.write_record(["subrate", "snr_db", "penalty", "weighting", "lambda", "fidelity", "psnr", "seconds", "status", "message"])
        .map_err(csv_err)?;
    let mut failed = 0;
    for (cell, r) in cells.iter().zip(&results) {
        let snr = cell.snr_db.map_or_else(|| "none".to_string(), |s| format!("{s}"));
        let psnr = r.psnr.map_or_else(String::new, format_db);
        let seconds = if timing { format!("{:.3}", r.seconds) } else { String::new() };
        let (status, message) = match &r.error {
            None => ("ok", ""),
            Some(m) => {
                failed += 1;
                ("error", m.as_str())
            }
        };
        w.write_record([
            format!("{}", cell.subrate).as_str(),
            &snr,
            &cell.penalty,
            &cell.weighting,
            &format!("{}", cell.lambda.unwrap_or(base_lambda)),
            fidelity,
            &psnr,
            &seconds,
            status,
            message,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_error(&output, e))?;
    println!("cells={} failed={failed}", cells.len());
    Ok(())
}

