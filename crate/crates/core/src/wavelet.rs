//! Learnable wavelet atoms and the projection into (and back out of) atom space.
//!
//! Atom `k` is `M_k[j, i] = exp(-a_kj t_i²) · cos(b_kj t_i + g_kj t_i²)` over the
//! normalised time grid. Internally the atoms are kept as `[K, L, d]`, i.e. already
//! transposed, since both projection and reconstruction multiply by `M_kᵀ`.

use rand::Rng;
use sonnet_numerics::rng::normal_tensor;
use sonnet_numerics::{Real, Tape, Tensor, Var};

use crate::error::{shape, Error, Result};

/// Normalised time steps `t_i = i / (L - 1)`; a single step maps to `{0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    t: Vec<f64>,
}

impl TimeGrid {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        let t = if len == 1 {
            vec![0.0]
        } else {
            (0..len).map(|i| i as f64 / (len - 1) as f64).collect()
        };
        Ok(Self { t })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.t
    }
}

/// Parameter triples `(w_α, w_β, w_γ)` of the K atoms, each `[K, d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletBank<T> {
    pub alpha: Tensor<T>,
    pub beta: Tensor<T>,
    pub gamma: Tensor<T>,
}

impl<T: Real> WaveletBank<T> {
    /// Standard-normal initialisation of all three parameter sets.
    pub fn init(k: usize, d: usize, rng: &mut impl Rng) -> Self {
        Self {
            alpha: normal_tensor(&[k, d], 1.0, rng),
            beta: normal_tensor(&[k, d], 1.0, rng),
            gamma: normal_tensor(&[k, d], 1.0, rng),
        }
    }

    pub fn atom_count(&self) -> usize {
        self.alpha.shape()[0]
    }

    /// Materialised atoms `M` as `[K, d, L]`.
    pub fn atoms(&self, len: usize) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = WaveletVars {
            alpha: tape.constant(self.alpha.clone()),
            beta: tape.constant(self.beta.clone()),
            gamma: tape.constant(self.gamma.clone()),
        };
        let m = make_atoms(&mut tape, &vars, &TimeGrid::new(len)?)?;
        Ok(tape.value(m).clone())
    }
}

/// Atom parameters bound to a tape.
#[derive(Copy, Clone, Debug)]
pub struct WaveletVars {
    pub alpha: Var,
    pub beta: Var,
    pub gamma: Var,
}

/// Transposed atoms `M_kᵀ` as `[K, L, d]`.
pub fn atoms_transposed<T: Real>(tape: &mut Tape<T>, w: &WaveletVars, grid: &TimeGrid) -> Result<Var> {
    let kd = tape.shape(w.alpha).to_vec();
    if kd.len() != 2 || tape.shape(w.beta) != kd.as_slice() || tape.shape(w.gamma) != kd.as_slice() {
        return Err(shape("make_atoms", "w_alpha, w_beta, w_gamma must share one [K, d] shape"));
    }
    for (v, name) in [(w.alpha, "w_alpha"), (w.beta, "w_beta"), (w.gamma, "w_gamma")] {
        if !tape.value(v).is_finite() {
            return Err(Error::NonFinite {
                layer: format!("wavelet {name}"),
            });
        }
    }
    let (k, d, l) = (kd[0], kd[1], grid.len());
    let t = tape.constant(Tensor::from_fn(&[l, 1], |ix| T::of_f64(grid.t[ix[0]])));
    let t2 = tape.constant(Tensor::from_fn(&[l, 1], |ix| T::of_f64(grid.t[ix[0]].powi(2))));

    let a = tape.reshape(w.alpha, &[k, 1, d])?;
    let b = tape.reshape(w.beta, &[k, 1, d])?;
    let g = tape.reshape(w.gamma, &[k, 1, d])?;

    let at2 = tape.mul(a, t2)?;
    let decay = tape.neg(at2);
    let envelope = tape.exp(decay);
    let bt = tape.mul(b, t)?;
    let gt2 = tape.mul(g, t2)?;
    let phase = tape.add(bt, gt2)?;
    let carrier = tape.cos(phase);
    Ok(tape.mul(envelope, carrier)?)
}

/// Atoms `M` as `[K, d, L]`.
pub fn make_atoms<T: Real>(tape: &mut Tape<T>, w: &WaveletVars, grid: &TimeGrid) -> Result<Var> {
    let mt = atoms_transposed(tape, w, grid)?;
    Ok(tape.permute(mt, &[0, 2, 1])?)
}

/// `P_k = E ⊙ M_kᵀ` for every atom: `[.., L, d]` → `[.., K, L, d]`.
pub fn project<T: Real>(tape: &mut Tape<T>, e: Var, atoms_t: Var) -> Result<Var> {
    let es = tape.shape(e).to_vec();
    let ms = tape.shape(atoms_t).to_vec();
    if es.len() < 2 || ms.len() != 3 || es[es.len() - 2..] != ms[1..] {
        return Err(shape("project", format!("embedding {es:?} vs atoms {ms:?}")));
    }
    let mut lifted = es[..es.len() - 2].to_vec();
    lifted.extend([1, ms[1], ms[2]]);
    let e = tape.reshape(e, &lifted)?;
    Ok(tape.mul(e, atoms_t)?)
}

/// `R = Σ_k O[k] ⊙ M_kᵀ`: `[.., K, L, d]` → `[.., L, d]`.
pub fn reconstruct<T: Real>(tape: &mut Tape<T>, o: Var, atoms_t: Var) -> Result<Var> {
    let os = tape.shape(o).to_vec();
    let ms = tape.shape(atoms_t).to_vec();
    if os.len() < 3 || os[os.len() - 3..] != ms[..] {
        return Err(shape("reconstruct", format!("state {os:?} vs atoms {ms:?}")));
    }
    let weighted = tape.mul(o, atoms_t)?;
    let axis = os.len() - 3;
    let summed = tape.sum_axis(weighted, axis)?;
    let mut out = os[..axis].to_vec();
    out.extend([ms[1], ms[2]]);
    Ok(tape.reshape(summed, &out)?)
}
