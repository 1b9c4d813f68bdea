//! Minimal end-to-end run on a seeded synthetic tensor.

use std::sync::Arc;

use legendre_core::eval::synthetic_tensor;
use legendre_core::{
    decompose, BasisSpec, NormalizedTensor, Result, SampleSpace, Shape, SolverConfig,
};

fn main() -> Result<()> {
    let x = synthetic_tensor(Shape::new(vec![10, 10, 10])?, 42);
    let space = SampleSpace::full(x.shape().clone());
    let p = NormalizedTensor::normalize(&x, space.clone())?;
    let specs = BasisSpec::parse_union("b1+b3:5")?;
    let basis = Arc::new(BasisSpec::resolve(&specs, &space, Some(&p))?);
    let result = decompose(&p, &basis, &SolverConfig::ng().with_tolerance(1e-6))?;
    println!(
        "|B| = {}, kl = {:.6}, iterations = {}, converged = {}",
        basis.len(),
        result.kl,
        result.iterations,
        result.converged
    );
    let _reconstruction = result.q.denormalize();
    Ok(())
}
