//! Random well-conditioned editing instances for the verification suites.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facts::KnowledgeSets;
use crate::kernel::svd;
use crate::matrix::Matrix;
use crate::rng::{gaussian_matrix, stream, unit_gaussian_vec, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub seed: u64,
    pub d_k: usize,
    pub d_m: usize,
    pub n_forget: usize,
    pub n_utility: usize,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub w: Matrix,
    pub sets: KnowledgeSets,
}

/// Draws `W = U diag(s) V^T` with singular values uniform in `[0.5, 1.5]`,
/// unit Gaussian forget and utility keys, and unit Gaussian neutral targets.
/// `M_f` and `M_0` are the layer's own outputs on those keys.
pub fn random_instance(spec: &InstanceSpec) -> Result<Instance> {
    let InstanceSpec {
        seed,
        d_k,
        d_m,
        n_forget,
        n_utility,
    } = *spec;
    if d_k == 0 || d_m == 0 || n_utility == 0 {
        return Err(Error::validation("instance dimensions and n_utility must be positive"));
    }
    let mut rng = stream(seed, Stream::Instance, 0);
    let g = gaussian_matrix(&mut rng, d_m, d_k);
    let dec = svd(&g)?;
    let spectrum: Vec<f64> = (0..dec.singular_values.len())
        .map(|_| rng.random_range(0.5..1.5))
        .collect();
    let s = Matrix::from_diagonal(&spectrum)?;
    let w = dec.u.matmul(&s).matmul(&dec.vt);

    let unit_cols = |rng: &mut rand_chacha::ChaCha8Rng, rows: usize, n: usize| -> Result<Matrix> {
        let cols: Vec<Vec<f64>> = (0..n).map(|_| unit_gaussian_vec(rng, rows)).collect();
        Matrix::from_columns(rows, &cols)
    };
    let k_f = unit_cols(&mut rng, d_k, n_forget)?;
    let k_0 = unit_cols(&mut rng, d_k, n_utility)?;
    let m_n = unit_cols(&mut rng, d_m, n_forget)?;
    let sets = KnowledgeSets::from_weight(&w, k_f, k_0, m_n)?;
    Ok(Instance { w, sets })
}
