//! Master-equation right-hand side, fixed-step RK4 integration, and the
//! vectorized-Liouvillian / matrix-exponential oracle used to cross-check it.

use crate::linalg::{self, dagger, matmul, max_abs};
use crate::operators::{
    build_hamiltonian, lowering_operator, noise_operator, raising_operator, ChainSpec,
    NoisePlacement,
};
use crate::{Error, Result, C64};
use ndarray as nd;

const HERM_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-9;
const EIG_TOL: f64 = -1e-8;

/// Complex Hermitian unit-trace matrix: the simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dim: usize,
    pub entries: nd::Array2<C64>,
}

impl DensityMatrix {
    /// Wraps and validates: Hermitian to 1e-10, trace within 1e-9 of one,
    /// minimum eigenvalue >= -1e-8.
    pub fn new(entries: nd::Array2<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(entries);
        rho.check_invariants()?;
        Ok(rho)
    }

    /// Wraps without validation (integrator internals).
    pub fn new_unchecked(entries: nd::Array2<C64>) -> Self {
        let dim = entries.nrows();
        assert_eq!(dim, entries.ncols(), "density matrices are square");
        DensityMatrix { dim, entries }
    }

    /// Projector onto a single computational basis state.
    pub fn basis_projector(n_qubits: usize, index: usize) -> Result<Self> {
        let d = 1usize << n_qubits;
        if index >= d {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        let mut m = nd::Array2::<C64>::zeros((d, d));
        m[[index, index]] = C64::new(1.0, 0.0);
        Ok(DensityMatrix { dim: d, entries: m })
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.entries[[i, i]]).sum()
    }

    pub fn purity(&self) -> f64 {
        let sq = matmul(&self.entries, &self.entries);
        (0..self.dim).map(|i| sq[[i, i]].re).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let eig = linalg::hermitian_eigenvalues(&self.entries);
        eig.first().copied().unwrap_or(0.0)
    }

    pub fn herm_deviation(&self) -> f64 {
        max_abs(&(&self.entries - &dagger(&self.entries)))
    }

    pub fn check_invariants(&self) -> Result<()> {
        let herm = self.herm_deviation();
        if herm > HERM_TOL {
            return Err(Error::InvalidState(format!(
                "Hermiticity deviation {herm:.3e} exceeds {HERM_TOL:.0e}"
            )));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "trace {tr} deviates from 1 by more than {TRACE_TOL:.0e}"
            )));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < EIG_TOL {
            return Err(Error::InvalidState(format!(
                "minimum eigenvalue {min_eig:.3e} below {EIG_TOL:.0e}"
            )));
        }
        Ok(())
    }

    /// (rho + rho^dagger)/2.
    pub fn rehermitized(&self) -> Self {
        let h = (&self.entries + &dagger(&self.entries)).mapv(|z| z * 0.5);
        DensityMatrix { dim: self.dim, entries: h }
    }
}

/// Integration window for a single trajectory.
#[derive(Debug, Clone)]
pub struct EvolutionParams {
    pub spec: ChainSpec,
    pub noise: NoisePlacement,
    pub t_max: f64,
    pub dt: f64,
    pub store_stride: usize,
}

impl EvolutionParams {
    pub fn new(spec: ChainSpec, noise: NoisePlacement, t_max: f64, dt: f64) -> Result<Self> {
        let p = EvolutionParams { spec, noise, t_max, dt, store_stride: 1 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_stride(mut self, store_stride: usize) -> Result<Self> {
        self.store_stride = store_stride;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.noise.validate(self.spec.n_qubits)?;
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidArgument(format!("t_max must be > 0, got {}", self.t_max)));
        }
        if !(self.dt > 0.0) || self.dt > self.t_max {
            return Err(Error::InvalidArgument(format!(
                "dt must satisfy 0 < dt <= t_max, got dt={} t_max={}",
                self.dt, self.t_max
            )));
        }
        if self.store_stride == 0 {
            return Err(Error::InvalidArgument("store_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stored trajectory snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

/// Prebuilt operators for repeated right-hand-side evaluation.
///
/// The noise contribution -M[V,[V,rho]] uses that V is diagonal: entry (i,j)
/// is damped at rate M(v_i - v_j)^2, so the double commutator reduces to an
/// elementwise mask.
#[derive(Debug, Clone)]
pub struct MasterOp {
    dim: usize,
    h: nd::Array2<C64>,
    lowering: Vec<nd::Array2<C64>>,
    raising: Vec<nd::Array2<C64>>,
    sp_sm: Vec<nd::Array2<C64>>,
    sm_sp: Vec<nd::Array2<C64>>,
    v_diag: Vec<f64>,
    gamma_down: f64,
    gamma_up: f64,
    strength: f64,
}

impl MasterOp {
    pub fn new(spec: &ChainSpec, noise: &NoisePlacement) -> Result<Self> {
        spec.validate()?;
        noise.validate(spec.n_qubits)?;
        let n = spec.n_qubits;
        let h = build_hamiltonian(spec)?.entries;
        let mut lowering = Vec::with_capacity(n);
        let mut raising = Vec::with_capacity(n);
        let mut sp_sm = Vec::with_capacity(n);
        let mut sm_sp = Vec::with_capacity(n);
        for q in 1..=n {
            let sm = lowering_operator(q, n)?.entries;
            let sp = raising_operator(q, n)?.entries;
            sp_sm.push(matmul(&sp, &sm));
            sm_sp.push(matmul(&sm, &sp));
            lowering.push(sm);
            raising.push(sp);
        }
        let v = noise_operator(noise, n)?.entries;
        let v_diag: Vec<f64> = (0..v.nrows()).map(|i| v[[i, i]].re).collect();
        Ok(MasterOp {
            dim: 1 << n,
            h,
            lowering,
            raising,
            sp_sm,
            sm_sp,
            v_diag,
            gamma_down: spec.gamma * (spec.nbar + 1.0),
            gamma_up: spec.gamma * spec.nbar,
            strength: noise.strength,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// drho/dt for the full master equation.
    pub fn apply(&self, rho: &nd::Array2<C64>) -> nd::Array2<C64> {
        let mi = C64::new(0.0, -1.0);
        let mut out = (matmul(&self.h, rho) - matmul(rho, &self.h)).mapv(|z| z * mi);
        for q in 0..self.lowering.len() {
            if self.gamma_down > 0.0 {
                out += &dissipator(&self.lowering[q], &self.sp_sm[q], rho)
                    .mapv(|z| z * self.gamma_down);
            }
            if self.gamma_up > 0.0 {
                out +=
                    &dissipator(&self.raising[q], &self.sm_sp[q], rho).mapv(|z| z * self.gamma_up);
            }
        }
        if self.strength > 0.0 {
            let m = self.strength;
            for ((i, j), z) in out.indexed_iter_mut() {
                let dv = self.v_diag[i] - self.v_diag[j];
                *z -= m * dv * dv * rho[[i, j]];
            }
        }
        out
    }
}

/// D[A]rho = A rho A^dag - {A^dag A, rho}/2, with A^dag A prebuilt.
fn dissipator(a: &nd::Array2<C64>, ada: &nd::Array2<C64>, rho: &nd::Array2<C64>) -> nd::Array2<C64> {
    let sandwich = matmul(&matmul(a, rho), &dagger(a));
    let anti = (matmul(ada, rho) + matmul(rho, ada)).mapv(|z| z * 0.5);
    sandwich - anti
}

/// One-shot right-hand side evaluation (prebuilds operators; use `MasterOp`
/// directly when evaluating repeatedly).
pub fn master_rhs(
    rho: &DensityMatrix,
    spec: &ChainSpec,
    noise: &NoisePlacement,
) -> Result<nd::Array2<C64>> {
    if rho.dim != spec.dim() {
        return Err(Error::InvalidArgument(format!(
            "density matrix dim {} does not match spec dim {}",
            rho.dim,
            spec.dim()
        )));
    }
    let op = MasterOp::new(spec, noise)?;
    Ok(op.apply(&rho.entries))
}

/// Column-stacking vectorization: vec(X)[j*d + i] = X[i, j].
pub fn vec_density(m: &nd::Array2<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for j in 0..d {
        for i in 0..d {
            v.push(m[[i, j]]);
        }
    }
    v
}

/// Inverse of `vec_density`.
pub fn unvec_density(v: &[C64], dim: usize) -> nd::Array2<C64> {
    assert_eq!(v.len(), dim * dim);
    nd::Array2::from_shape_fn((dim, dim), |(i, j)| v[j * dim + i])
}

/// Superoperator K(a, b): vec(a X b) = K vec(X) = kron(b^T, a) vec(X).
fn sprepost(a: &nd::Array2<C64>, b: &nd::Array2<C64>) -> nd::Array2<C64> {
    crate::operators::kron(&b.t().to_owned(), a)
}

/// Dense 4^N x 4^N generator L with vec(master_rhs(rho)) = L vec(rho).
pub fn build_liouvillian(spec: &ChainSpec, noise: &NoisePlacement) -> Result<nd::Array2<C64>> {
    spec.validate()?;
    noise.validate(spec.n_qubits)?;
    let n = spec.n_qubits;
    let d = spec.dim();
    let id = nd::Array2::<C64>::eye(d);
    let h = build_hamiltonian(spec)?.entries;
    let mi = C64::new(0.0, -1.0);
    let mut l = (sprepost(&h, &id) - sprepost(&id, &h)).mapv(|z| z * mi);
    let gamma_down = spec.gamma * (spec.nbar + 1.0);
    let gamma_up = spec.gamma * spec.nbar;
    for q in 1..=n {
        let sm = lowering_operator(q, n)?.entries;
        let sp = raising_operator(q, n)?.entries;
        if gamma_down > 0.0 {
            l += &dissipator_super(&sm, &id).mapv(|z| z * gamma_down);
        }
        if gamma_up > 0.0 {
            l += &dissipator_super(&sp, &id).mapv(|z| z * gamma_up);
        }
    }
    if noise.strength > 0.0 && !noise.qubits.is_empty() {
        let v = noise_operator(noise, n)?.entries;
        let vv = matmul(&v, &v);
        let double = &(&sprepost(&vv, &id) + &sprepost(&id, &vv))
            - &sprepost(&v, &v).mapv(|z| z * 2.0);
        l -= &double.mapv(|z| z * noise.strength);
    }
    Ok(l)
}

fn dissipator_super(a: &nd::Array2<C64>, id: &nd::Array2<C64>) -> nd::Array2<C64> {
    let ad = dagger(a);
    let ada = matmul(&ad, a);
    &sprepost(a, &ad) - &(&sprepost(&ada, id) + &sprepost(id, &ada)).mapv(|z| z * 0.5)
}

/// Fixed-step classical RK4 integration of the master equation.
///
/// Every step is re-Hermitized as (rho + rho^dag)/2; stored snapshots are
/// checked against the DensityMatrix invariants and a violation aborts with
/// the offending time stamp.
pub fn evolve(rho0: &DensityMatrix, params: &EvolutionParams) -> Result<Trajectory> {
    params.validate()?;
    rho0.check_invariants()?;
    if rho0.dim != params.spec.dim() {
        return Err(Error::InvalidArgument(format!(
            "density matrix dim {} does not match spec dim {}",
            rho0.dim,
            params.spec.dim()
        )));
    }
    let op = MasterOp::new(&params.spec, &params.noise)?;
    let n_steps = (params.t_max / params.dt).round() as usize;
    let n_steps = n_steps.max(1);
    let mut rho = rho0.entries.clone();
    let mut times = Vec::with_capacity(n_steps / params.store_stride + 2);
    let mut states = Vec::with_capacity(n_steps / params.store_stride + 2);
    times.push(0.0);
    states.push(rho0.clone());
    for step in 1..=n_steps {
        rho = rk4_step(&op, &rho, params.dt);
        rho = (&rho + &dagger(&rho)).mapv(|z| z * 0.5);
        if step % params.store_stride == 0 || step == n_steps {
            let t = step as f64 * params.dt;
            let snapshot = DensityMatrix::new_unchecked(rho.clone());
            snapshot.check_invariants().map_err(|e| Error::IntegrationDiverged {
                t,
                what: e.to_string(),
            })?;
            times.push(t);
            states.push(snapshot);
        }
    }
    Ok(Trajectory { times, states })
}

pub(crate) fn rk4_step(op: &MasterOp, rho: &nd::Array2<C64>, dt: f64) -> nd::Array2<C64> {
    let k1 = op.apply(rho);
    let k2 = op.apply(&(rho + &k1.mapv(|z| z * (dt / 2.0))));
    let k3 = op.apply(&(rho + &k2.mapv(|z| z * (dt / 2.0))));
    let k4 = op.apply(&(rho + &k3.mapv(|z| z * dt)));
    let mut out = rho.clone();
    nd::Zip::from(&mut out).and(&k1).and(&k2).and(&k3).and(&k4).for_each(|o, &a, &b, &c, &d| {
        *o += (a + (b + c) * 2.0 + d) * (dt / 6.0);
    });
    out
}

/// Independent propagator: unvec(expm(L t) vec(rho0)).
pub fn evolve_oracle(
    rho0: &DensityMatrix,
    spec: &ChainSpec,
    noise: &NoisePlacement,
    t: f64,
) -> Result<DensityMatrix> {
    let l = build_liouvillian(spec, noise)?;
    let p = linalg::expm(&l.mapv(|z| z * t));
    let v0 = vec_density(&rho0.entries);
    let d = rho0.dim;
    let mut v1 = vec![C64::new(0.0, 0.0); d * d];
    for (i, out) in v1.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (k, x) in v0.iter().enumerate() {
            acc += p[[i, k]] * *x;
        }
        *out = acc;
    }
    let rho = unvec_density(&v1, d);
    let rho = (&rho + &dagger(&rho)).mapv(|z| z * 0.5);
    Ok(DensityMatrix::new_unchecked(rho))
}
