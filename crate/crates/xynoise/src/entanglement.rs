//! Concurrence of the reduced qubit pair, sudden-death detection and the
//! first-cycle entanglement area.

use ndarray as nd;

use crate::dynamics::{DensityMatrix, Trajectory};
use crate::states::partial_trace;
use crate::{linalg, C64, Error, Result};

/// Validation tolerance on inputs to the concurrence routines.
pub const STATE_TOL: f64 = 1e-8;
/// Off-pattern tolerance for the X-state fast path.
pub const X_PATTERN_TOL: f64 = 1e-10;
/// Default concurrence threshold treated as "zero" entanglement.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Concurrence samples along a trajectory.
#[derive(Debug, Clone)]
pub struct ConcurrenceTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ConcurrenceTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidArgument(
                "trace needs matching, nonempty times and values".into(),
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "trace times must be strictly increasing".into(),
            ));
        }
        if let Some(&v) = values
            .iter()
            .find(|v| !v.is_finite() || **v < -1e-9 || **v > 1.0 + 1e-9)
        {
            return Err(Error::InvalidArgument(format!(
                "concurrence value {v} outside [0,1]"
            )));
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Keep every `stride`-th sample (used by the thinning invariance test).
    pub fn thinned(&self, stride: usize) -> Self {
        let times = self.times.iter().copied().step_by(stride).collect();
        let values = self.values.iter().copied().step_by(stride).collect();
        Self { times, values }
    }
}

/// Sudden-death detection outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsdResult {
    /// First time the concurrence fell to or below the threshold.
    pub t_esd: Option<f64>,
    /// True when the trace stayed entangled through its end.
    pub terminal: bool,
}

/// First creation-decay cycle of an initially unentangled state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaResult {
    pub area: f64,
    /// (t_start, t_end) of the cycle, absent when nothing was produced.
    pub cycle: Option<(f64, f64)>,
}

fn check_pair_state(rho: &DensityMatrix) -> Result<()> {
    if rho.dim != 4 {
        return Err(Error::InvalidState(format!(
            "concurrence needs a 4x4 density matrix, got {}x{}",
            rho.dim, rho.dim
        )));
    }
    let herm = rho.herm_deviation();
    if herm > STATE_TOL {
        return Err(Error::InvalidState(format!(
            "not Hermitian: max deviation {herm:.3e}"
        )));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(Error::InvalidState(format!(
            "trace is {:.10}, expected 1",
            tr.re
        )));
    }
    Ok(())
}

/// sigma_y (x) sigma_y in the computational basis.
fn spin_flip_matrix() -> nd::Array2<C64> {
    let mut f = nd::Array2::<C64>::zeros((4, 4));
    f[[0, 3]] = C64::new(-1.0, 0.0);
    f[[1, 2]] = C64::new(1.0, 0.0);
    f[[2, 1]] = C64::new(1.0, 0.0);
    f[[3, 0]] = C64::new(-1.0, 0.0);
    f
}

/// Wootters concurrence of an arbitrary two-qubit state.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    check_pair_state(rho)?;
    let f = spin_flip_matrix();
    let conj = rho.entries.mapv(|z| z.conj());
    let tilde = linalg::matmul(&linalg::matmul(&f, &conj), &f);
    let r = linalg::matmul(&rho.entries, &tilde);
    let eigs = linalg::eigenvalues(&r)?;
    let mut lambdas: Vec<f64> = eigs.iter().map(|z| z.re.max(0.0).sqrt()).collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// Closed-form concurrence for X states (nonzero entries only on the
/// diagonal and anti-diagonal).
pub fn concurrence_x(rho: &DensityMatrix) -> Result<f64> {
    check_pair_state(rho)?;
    let m = &rho.entries;
    for i in 0..4 {
        for j in 0..4 {
            if i == j || i + j == 3 {
                continue;
            }
            let mag = m[[i, j]].norm();
            if mag > X_PATTERN_TOL {
                return Err(Error::NonXState { row: i + 1, col: j + 1, magnitude: mag });
            }
        }
    }
    let c1 = 2.0 * (m[[3, 0]].norm() - (m[[2, 2]].re.max(0.0) * m[[1, 1]].re.max(0.0)).sqrt());
    let c2 = 2.0 * (m[[2, 1]].norm() - (m[[3, 3]].re.max(0.0) * m[[0, 0]].re.max(0.0)).sqrt());
    Ok(c1.max(c2).max(0.0))
}

/// Concurrence of the (1,2) pair of a full-chain state; takes the X-state
/// fast path and falls back to the general form if the pattern is broken.
pub fn pair_concurrence(rho: &DensityMatrix) -> Result<f64> {
    let red = partial_trace(rho, &[1, 2])?;
    let red = red.rehermitized();
    match concurrence_x(&red) {
        Ok(c) => Ok(c),
        Err(Error::NonXState { .. }) => concurrence(&red),
        Err(e) => Err(e),
    }
}

/// Concurrence of the (1,2) pair along a stored trajectory.
pub fn concurrence_trace(traj: &Trajectory) -> Result<ConcurrenceTrace> {
    let mut values = Vec::with_capacity(traj.states.len());
    for state in &traj.states {
        values.push(pair_concurrence(state)?);
    }
    ConcurrenceTrace::new(traj.times.clone(), values)
}

/// First crossing of the trace from above `epsilon` to at or below it,
/// at sample resolution.
pub fn esd_time(trace: &ConcurrenceTrace, epsilon: f64) -> Result<EsdResult> {
    esd_scan(trace, epsilon).map(|scan| match scan {
        Crossing::At { right, .. } => EsdResult { t_esd: Some(right), terminal: false },
        Crossing::Never => EsdResult { t_esd: None, terminal: true },
    })
}

/// Like `esd_time`, refined by bisection inside the bracketing step down to
/// 1/16 of the step width. `eval` recomputes the concurrence at an arbitrary
/// time (typically by re-integration from the bracket's left state).
pub fn esd_time_refined(
    trace: &ConcurrenceTrace,
    epsilon: f64,
    mut eval: impl FnMut(f64) -> Result<f64>,
) -> Result<EsdResult> {
    match esd_scan(trace, epsilon)? {
        Crossing::Never => Ok(EsdResult { t_esd: None, terminal: true }),
        Crossing::At { left, right } => {
            let resolution = (right - left) / 16.0;
            let (mut lo, mut hi) = (left, right);
            while hi - lo > resolution {
                let mid = 0.5 * (lo + hi);
                if eval(mid)? > epsilon {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(EsdResult { t_esd: Some(hi), terminal: false })
        }
    }
}

enum Crossing {
    At { left: f64, right: f64 },
    Never,
}

fn esd_scan(trace: &ConcurrenceTrace, epsilon: f64) -> Result<Crossing> {
    if trace.is_empty() {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let v = &trace.values;
    // skip any unentangled prefix
    let start = match v.iter().position(|&c| c > epsilon) {
        Some(i) => i,
        None => return Err(Error::NeverEntangled),
    };
    for i in (start + 1)..v.len() {
        if v[i - 1] > epsilon && v[i] <= epsilon {
            return Ok(Crossing::At { left: trace.times[i - 1], right: trace.times[i] });
        }
    }
    Ok(Crossing::Never)
}

/// First creation-decay cycle: from the sample before the concurrence first
/// exceeds `epsilon` until it first returns to or below it; the area is the
/// trapezoidal integral over that window. An incomplete cycle (still above
/// threshold at the end of the trace) integrates to the trace end, which the
/// sweep layer reports as censored.
pub fn entanglement_area(trace: &ConcurrenceTrace, epsilon: f64) -> Result<AreaResult> {
    if trace.is_empty() {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let (t, v) = (&trace.times, &trace.values);
    let rise = match v.iter().position(|&c| c > epsilon) {
        Some(i) => i,
        None => return Ok(AreaResult { area: 0.0, cycle: None }),
    };
    let start = rise.saturating_sub(1);
    let mut end = t.len() - 1;
    for i in (rise + 1)..t.len() {
        if v[i] <= epsilon {
            end = i;
            break;
        }
    }
    let mut area = 0.0;
    for i in start..end {
        area += 0.5 * (v[i] + v[i + 1]) * (t[i + 1] - t[i]);
    }
    Ok(AreaResult { area, cycle: Some((t[start], t[end])) })
}

/// True when the trace is still above `epsilon` at its final sample, i.e.
/// the first cycle did not complete within the trace.
pub fn area_censored(trace: &ConcurrenceTrace, epsilon: f64) -> bool {
    match trace.values.iter().position(|&c| c > epsilon) {
        None => false,
        Some(rise) => !trace.values[rise + 1..].iter().any(|&c| c <= epsilon),
    }
}
