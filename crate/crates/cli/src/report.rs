//! Output schemas: the run manifest echoed into every artifact, plus the
//! JSON shapes for decomposition and Boltzmann results.

use serde::Serialize;

use legendre_core::boltzmann::BoltzmannFit;
use legendre_core::DecompositionResult;

/// Everything that determines a run, echoed verbatim into each output so
/// results are reproducible from the artifact alone.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    pub exclude_zeros: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub trace: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bases: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            input: None,
            format: None,
            reconstruction: None,
            graph: None,
            basis: None,
            algorithm: None,
            learning_rate: None,
            tolerance: None,
            max_iterations: None,
            damping: None,
            exclude_zeros: false,
            seed: None,
            trace: false,
            sizes: None,
            bases: None,
            algorithms: None,
            repetitions: None,
            output_dir: None,
        }
    }
}

/// `result.json`: the manifest plus the converged state. Wall time is the
/// only field allowed to differ between identical runs.
#[derive(Debug, Serialize)]
pub struct ResultJson {
    pub manifest: Manifest,
    pub shape: Vec<usize>,
    pub omega_size: usize,
    pub basis_size: usize,
    pub basis: Vec<Vec<usize>>,
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    pub psi: f64,
    pub kl: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

impl ResultJson {
    pub fn new(manifest: Manifest, r: &DecompositionResult) -> Self {
        let space = r.q.space();
        ResultJson {
            manifest,
            shape: space.shape().dims().to_vec(),
            omega_size: space.len(),
            basis_size: r.theta.basis().len(),
            basis: r
                .theta
                .basis()
                .iter()
                .map(|v| v.components().to_vec())
                .collect(),
            theta: r.theta.values().to_vec(),
            eta: r.eta.values().to_vec(),
            psi: r.psi,
            kl: r.kl,
            residual: r.residual,
            iterations: r.iterations,
            converged: r.converged,
            wall_time_ms: r.wall_time.as_secs_f64() * 1e3,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EdgeWeightJson {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

/// `boltzmann.json`: fitted biases and weights in the graph's own indexing.
#[derive(Debug, Serialize)]
pub struct BoltzmannJson {
    pub manifest: Manifest,
    pub biases: Vec<f64>,
    pub weights: Vec<EdgeWeightJson>,
    pub log_partition: f64,
    pub kl: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

impl BoltzmannJson {
    pub fn new(manifest: Manifest, fit: &BoltzmannFit) -> Self {
        BoltzmannJson {
            manifest,
            biases: fit.biases.clone(),
            weights: fit
                .weights
                .iter()
                .map(|w| EdgeWeightJson {
                    a: w.a,
                    b: w.b,
                    value: w.value,
                })
                .collect(),
            log_partition: fit.log_partition,
            kl: fit.result.kl,
            iterations: fit.result.iterations,
            converged: fit.result.converged,
            wall_time_ms: fit.result.wall_time.as_secs_f64() * 1e3,
        }
    }
}
