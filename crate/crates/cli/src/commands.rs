//! The five subcommands. Each returns the process exit code on success;
//! errors bubble to `main`, which maps them onto the exit-code scheme
//! (1 = parse/usage, 2 = numerical failure, 3 = non-convergence).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use legendre_core::boltzmann::{fit_boltzmann, BoltzmannGraph};
use legendre_core::eval::{rmse, synthetic_tensor, EvalReport};
use legendre_core::poset::BasisSpec;
use legendre_core::{
    decompose, kl_divergence, Algorithm, Basis, DecompositionResult, Error, IndexVector,
    NormalizedTensor, RawTensor, Result, SampleSpace, Shape, SolverConfig, TensorFormat,
};

use crate::report::{BoltzmannJson, Manifest, ResultJson};
use crate::{BasisArgs, BenchArgs, BoltzmannArgs, DecomposeArgs, EvalArgs, SolverFlags};

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARSE: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

/// `20` means a 20x20x20 cube; `4x6x2` is taken literally.
fn parse_shape_spec(s: &str) -> Result<Shape> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::InvalidInput("empty shape specification".into()));
    }
    let dims: Result<Vec<usize>> = s
        .split(['x', 'X'])
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("bad extent '{tok}' in shape '{s}'")))
        })
        .collect();
    let mut dims = dims?;
    if dims.len() == 1 {
        dims = vec![dims[0]; 3];
    }
    Shape::new(dims)
}

/// Load a tensor from a path, or generate one from `synthetic:<shape>`.
fn load_input(input: &str, format: &str, seed: u64) -> Result<RawTensor> {
    if let Some(spec) = input.strip_prefix("synthetic:") {
        return Ok(synthetic_tensor(parse_shape_spec(spec)?, seed));
    }
    let format: TensorFormat = format.parse()?;
    let file = fs::File::open(input)?;
    RawTensor::load(file, format)
}

/// Build the sample space, optionally dropping zero entries. The least
/// element always stays: it carries the model's normalizer.
fn build_space(
    x: &RawTensor,
    exclude_zeros: bool,
) -> Result<std::sync::Arc<SampleSpace>> {
    if !exclude_zeros {
        return Ok(SampleSpace::full(x.shape().clone()));
    }
    let shape = x.shape().clone();
    let excluded: Vec<IndexVector> = (0..shape.cell_count())
        .filter(|&code| x.value_at_code(code) == 0.0 && code != 0)
        .map(|code| shape.index_from_code(code))
        .collect();
    if x.value_at_code(0) == 0.0 {
        log::warn!("entry (1,...,1) is zero but stays in the sample space: it carries the normalizer");
    }
    SampleSpace::excluding(shape, excluded.iter())
}

fn solver_config(algorithm: Algorithm, flags: &SolverFlags) -> SolverConfig {
    let mut cfg = SolverConfig::new(algorithm)
        .with_learning_rate(flags.lr)
        .with_tolerance(flags.tol)
        .with_damping(flags.damping);
    if let Some(n) = flags.max_iter {
        cfg = cfg.with_max_iterations(n);
    }
    cfg
}

/// Write to stdout, tolerating a closed pipe (e.g. `| head`).
fn print_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

fn write_json(path: &Path, json: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(json)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_trace(path: &Path, r: &DecompositionResult) -> Result<()> {
    let mut out = String::from("iteration,kl,max_residual,wall_time_ms\n");
    if let Some(trace) = &r.trace {
        for p in trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.iteration, p.kl, p.max_residual, p.wall_time_ms
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn cmd_decompose(args: &DecomposeArgs) -> Result<u8> {
    let seed = args.seed.unwrap_or(0);
    let x = load_input(&args.input, &args.format, seed)?;
    let space = build_space(&x, args.exclude_zeros)?;
    let p = NormalizedTensor::normalize(&x, space.clone())?;
    let specs = BasisSpec::parse_union(&args.basis)?;
    let basis = std::sync::Arc::new(BasisSpec::resolve(&specs, &space, Some(&p))?);
    let algorithm: Algorithm = args.algorithm.parse()?;
    let cfg = solver_config(algorithm, &args.solver).with_trace(args.trace);

    let manifest = Manifest {
        input: Some(args.input.clone()),
        format: Some(args.format.clone()),
        basis: Some(args.basis.clone()),
        algorithm: Some(args.algorithm.clone()),
        learning_rate: Some(cfg.learning_rate),
        tolerance: Some(cfg.tolerance),
        max_iterations: Some(cfg.max_iterations),
        damping: Some(cfg.damping),
        exclude_zeros: args.exclude_zeros,
        seed: args.seed,
        trace: args.trace,
        output_dir: Some(args.output_dir.clone()),
        ..Manifest::new("decompose")
    };

    let result = decompose(&p, &basis, &cfg)?;

    let dir = PathBuf::from(&args.output_dir);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("result.json"), &ResultJson::new(manifest, &result))?;
    let mut q_out = fs::File::create(dir.join("q.tensor"))?;
    result.q.denormalize().write_dense(&mut q_out)?;
    if args.trace {
        write_trace(&dir.join("trace.csv"), &result)?;
    }

    if result.converged {
        Ok(EXIT_OK)
    } else {
        log::error!(
            "stopped after {} iterations with residual {:.3e} > {:.3e}",
            result.iterations,
            result.residual,
            cfg.tolerance
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

struct BenchJob {
    shape: Shape,
    size_label: String,
    basis_spec: String,
    algorithm: String,
    rep: usize,
    seed: u64,
}

fn bench_row(job: &BenchJob, flags: &SolverFlags) -> String {
    let run = || -> Result<(usize, DecompositionResult)> {
        let x = synthetic_tensor(job.shape.clone(), job.seed);
        let space = SampleSpace::full(job.shape.clone());
        let p = NormalizedTensor::normalize(&x, space.clone())?;
        let specs = BasisSpec::parse_union(&job.basis_spec)?;
        let basis = std::sync::Arc::new(BasisSpec::resolve(&specs, &space, Some(&p))?);
        let algorithm: Algorithm = job.algorithm.parse()?;
        let cfg = solver_config(algorithm, flags);
        let result = decompose(&p, &basis, &cfg)?;
        Ok((basis.len(), result))
    };
    let prefix = format!(
        "{},{},{},",
        job.size_label,
        job.shape.cell_count(),
        job.basis_spec
    );
    match run() {
        Ok((params, r)) => {
            let time_ms = r.wall_time.as_secs_f64() * 1e3;
            let per_iter = if r.iterations > 0 {
                format!("{}", time_ms / r.iterations as f64)
            } else {
                String::new()
            };
            format!(
                "{prefix}{params},{},{},{},{},{},{},{per_iter},ok",
                job.algorithm, job.rep, r.iterations, r.converged, r.kl, time_ms
            )
        }
        Err(e) => {
            let msg = e.to_string().replace(',', ";").replace('\n', " ");
            format!("{prefix},{},{},,,,,,{msg}", job.algorithm, job.rep)
        }
    }
}

pub fn cmd_bench(args: &BenchArgs) -> Result<u8> {
    let split = |s: &str| -> Vec<String> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    };
    let sizes = split(&args.sizes);
    let bases = split(&args.bases);
    let algorithms = split(&args.algorithms);

    let manifest = Manifest {
        sizes: Some(sizes.clone()),
        bases: Some(bases.clone()),
        algorithms: Some(algorithms.clone()),
        learning_rate: Some(args.solver.lr),
        tolerance: Some(args.solver.tol),
        max_iterations: args.solver.max_iter,
        damping: Some(args.solver.damping),
        seed: Some(args.seed),
        repetitions: Some(args.reps),
        output_dir: Some(args.output_dir.clone()),
        ..Manifest::new("bench")
    };

    let mut jobs = Vec::new();
    for (size_idx, size) in sizes.iter().enumerate() {
        let shape = parse_shape_spec(size)?;
        for basis_spec in &bases {
            for algorithm in &algorithms {
                for rep in 0..args.reps.max(1) {
                    jobs.push(BenchJob {
                        shape: shape.clone(),
                        size_label: shape.to_string(),
                        basis_spec: basis_spec.clone(),
                        algorithm: algorithm.clone(),
                        rep,
                        seed: args.seed + 100 * size_idx as u64 + rep as u64,
                    });
                }
            }
        }
    }

    let threads = std::env::var("THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1);

    let rows: Vec<String> = if threads <= 1 || jobs.len() <= 1 {
        jobs.iter().map(|j| bench_row(j, &args.solver)).collect()
    } else {
        let slots: Vec<Mutex<Option<String>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..threads.min(jobs.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= jobs.len() {
                        break;
                    }
                    let row = bench_row(&jobs[i], &args.solver);
                    *slots[i].lock().unwrap() = Some(row);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().unwrap().expect("every job ran"))
            .collect()
    };

    let manifest_json = serde_json::to_string(&manifest)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    let mut out = String::new();
    out.push_str(&format!("# manifest: {manifest_json}\n"));
    out.push_str("size,cells,basis,params,algorithm,rep,iterations,converged,kl,time_ms,per_iter_ms,status\n");
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    let dir = PathBuf::from(&args.output_dir);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("bench.csv"), out)?;
    Ok(EXIT_OK)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<u8> {
    let started = Instant::now();
    let x = load_input(&args.input, &args.format, 0)?;
    let recon_format = args.recon_format.as_deref().unwrap_or(&args.format);
    let x_hat = load_input(&args.reconstruction, recon_format, 0)?;

    let rmse_value = rmse(&x, &x_hat)?;
    let p = NormalizedTensor::normalize(&x, SampleSpace::full(x.shape().clone()))?;
    let q = NormalizedTensor::normalize(&x_hat, SampleSpace::full(x_hat.shape().clone()))?;
    let kl = kl_divergence(&p, &q);

    let parameter_count = match &args.result {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("bad result file {path}: {e}")))?;
            value
                .get("basis_size")
                .and_then(|v| v.as_u64())
                .ok_or_else(|| {
                    Error::InvalidInput(format!("result file {path} has no basis_size field"))
                })? as usize
        }
        None => 0,
    };

    let report = EvalReport {
        rmse: rmse_value,
        kl,
        parameter_count,
        wall_time: started.elapsed(),
    };
    print_stdout(&format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()));

    if let Some(dir) = &args.output_dir {
        let manifest = Manifest {
            input: Some(args.input.clone()),
            format: Some(args.format.clone()),
            reconstruction: Some(args.reconstruction.clone()),
            output_dir: Some(dir.clone()),
            ..Manifest::new("eval")
        };
        let manifest_json = serde_json::to_string(&manifest)
            .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
        let dir = PathBuf::from(dir);
        fs::create_dir_all(&dir)?;
        fs::write(
            dir.join("eval.csv"),
            format!("# manifest: {manifest_json}\n{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()),
        )?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_basis(args: &BasisArgs) -> Result<u8> {
    let needs_tensor = BasisSpec::parse_union(&args.basis)?
        .iter()
        .any(|s| matches!(s, BasisSpec::B3(_)));

    let (space, p) = match &args.input {
        Some(input) => {
            let x = load_input(input, &args.format, 0)?;
            let space = build_space(&x, args.exclude_zeros)?;
            let p = NormalizedTensor::normalize(&x, space.clone())?;
            (space, Some(p))
        }
        None => {
            let spec = args.shape.as_ref().ok_or_else(|| {
                Error::InvalidInput("either --shape or --input is required".into())
            })?;
            (SampleSpace::full(parse_shape_spec(spec)?), None)
        }
    };
    if needs_tensor && p.is_none() {
        return Err(Error::InvalidInput(
            "b3 ranks entries by probability; provide --input".into(),
        ));
    }

    let specs = BasisSpec::parse_union(&args.basis)?;
    let basis: Basis = BasisSpec::resolve(&specs, &space, p.as_ref())?;
    let mut listing = String::new();
    for v in basis.iter() {
        let comps: Vec<String> = v.components().iter().map(|c| c.to_string()).collect();
        listing.push_str(&comps.join(" "));
        listing.push('\n');
    }
    print_stdout(&listing);
    Ok(EXIT_OK)
}

pub fn cmd_boltzmann(args: &BoltzmannArgs) -> Result<u8> {
    let graph = BoltzmannGraph::parse(fs::File::open(&args.graph)?)?;
    let x = load_input(&args.data, &args.format, 0)?;
    let space = SampleSpace::full(x.shape().clone());
    let p = NormalizedTensor::normalize(&x, space)?;
    let algorithm: Algorithm = args.algorithm.parse()?;
    let cfg = solver_config(algorithm, &args.solver);

    let manifest = Manifest {
        graph: Some(args.graph.clone()),
        input: Some(args.data.clone()),
        format: Some(args.format.clone()),
        algorithm: Some(args.algorithm.clone()),
        learning_rate: Some(cfg.learning_rate),
        tolerance: Some(cfg.tolerance),
        max_iterations: Some(cfg.max_iterations),
        damping: Some(cfg.damping),
        output_dir: args.output_dir.clone(),
        ..Manifest::new("boltzmann")
    };

    let fit = fit_boltzmann(&p, &graph, &cfg)?;
    let json = BoltzmannJson::new(manifest, &fit);
    let text = serde_json::to_string_pretty(&json)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    print_stdout(&format!("{text}\n"));
    if let Some(dir) = &args.output_dir {
        let dir = PathBuf::from(dir);
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("boltzmann.json"), &json)?;
    }

    if fit.result.converged {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_NOT_CONVERGED)
    }
}
