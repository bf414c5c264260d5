//! Dense complex linear-algebra kernels.
//!
//! Everything in this crate works on matrices of dimension at most 256
//! (the vectorized Liouvillian of a 4-qubit chain), so the kernels favor
//! simplicity and auditability over asymptotic tricks: plain triple-loop
//! multiplies, cyclic Jacobi for Hermitian eigenproblems, shifted Hessenberg
//! QR for general spectra, partial-pivot LU, and Pade-13 scaling-and-squaring
//! for the matrix exponential.

use ndarray as nd;
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot:.3e} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("eigenvalue iteration failed to converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// `a * b` for square complex matrices (ikj loop order, no allocation tricks).
pub fn matmul(a: &nd::Array2<C64>, b: &nd::Array2<C64>) -> nd::Array2<C64> {
    let (n, m) = a.dim();
    let (mb, p) = b.dim();
    assert_eq!(m, mb, "matmul: inner dimensions differ");
    let mut c = nd::Array2::<C64>::zeros((n, p));
    let (a, b) = (a.as_standard_layout(), b.as_standard_layout());
    let (asl, bsl) = (a.as_slice().unwrap(), b.as_slice().unwrap());
    let csl = c.as_slice_mut().unwrap();
    for i in 0..n {
        for k in 0..m {
            let aik = asl[i * m + k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            let brow = &bsl[k * p..(k + 1) * p];
            let crow = &mut csl[i * p..(i + 1) * p];
            for j in 0..p {
                crow[j] += aik * brow[j];
            }
        }
    }
    c
}

/// Conjugate transpose (always in standard layout).
pub fn dagger(a: &nd::Array2<C64>) -> nd::Array2<C64> {
    let (n, m) = a.dim();
    nd::Array2::from_shape_fn((m, n), |(i, j)| a[[j, i]].conj())
}

/// Maximum absolute column sum.
pub fn one_norm(a: &nd::Array2<C64>) -> f64 {
    let (n, m) = a.dim();
    (0..m)
        .map(|j| (0..n).map(|i| a[[i, j]].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry magnitude.
pub fn max_abs(a: &nd::Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves `a x = b` for matrix right-hand sides by LU with partial pivoting.
pub fn solve(a: &nd::Array2<C64>, b: &nd::Array2<C64>) -> Result<nd::Array2<C64>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(LinalgError::DimensionMismatch(n, a.ncols(), b.nrows(), b.ncols()));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let nrhs = b.ncols();
    for col in 0..n {
        let mut piv = col;
        let mut best = lu[[col, col]].norm();
        for r in col + 1..n {
            let v = lu[[r, col]].norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return Err(LinalgError::Singular { col, pivot: best });
        }
        if piv != col {
            for j in 0..n {
                lu.swap([col, j], [piv, j]);
            }
            for j in 0..nrhs {
                x.swap([col, j], [piv, j]);
            }
        }
        let d = lu[[col, col]];
        for r in col + 1..n {
            let f = lu[[r, col]] / d;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            lu[[r, col]] = f;
            for j in col + 1..n {
                let v = lu[[col, j]];
                lu[[r, j]] -= f * v;
            }
            for j in 0..nrhs {
                let v = x[[col, j]];
                x[[r, j]] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let d = lu[[col, col]];
        for j in 0..nrhs {
            x[[col, j]] /= d;
        }
        for r in 0..col {
            let f = lu[[r, col]];
            for j in 0..nrhs {
                let v = x[[col, j]];
                x[[r, j]] -= f * v;
            }
        }
    }
    Ok(x)
}

// Pade-13 coefficients (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by Pade-13 approximation with scaling and squaring.
pub fn expm(a: &nd::Array2<C64>) -> nd::Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm: square matrix required");
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scale = C64::new(1.0 / f64::powi(2.0, s as i32), 0.0);
    let a1 = a.mapv(|z| z * scale);
    let id = nd::Array2::<C64>::eye(n);
    let a2 = matmul(&a1, &a1);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a2, &a4);
    let b = &PADE13;
    let w1 = a6.mapv(|z| z * b[13]) + &a4.mapv(|z| z * b[11]) + &a2.mapv(|z| z * b[9]);
    let w2 = matmul(&a6, &w1)
        + &a6.mapv(|z| z * b[7])
        + &a4.mapv(|z| z * b[5])
        + &a2.mapv(|z| z * b[3])
        + &id.mapv(|z| z * b[1]);
    let u = matmul(&a1, &w2);
    let z1 = a6.mapv(|z| z * b[12]) + &a4.mapv(|z| z * b[10]) + &a2.mapv(|z| z * b[8]);
    let v = matmul(&a6, &z1)
        + &a6.mapv(|z| z * b[6])
        + &a4.mapv(|z| z * b[4])
        + &a2.mapv(|z| z * b[2])
        + &id.mapv(|z| z * b[0]);
    let num = &v + &u;
    let den = &v - &u;
    let mut r = solve(&den, &num).expect("Pade denominator is singular");
    for _ in 0..s {
        r = matmul(&r, &r);
    }
    r
}

/// Eigenvalues and eigenvectors of a Hermitian matrix via cyclic Jacobi.
///
/// Returns eigenvalues in ascending order with the matching eigenvector
/// columns; `a` is assumed Hermitian (only the structure, not symmetry, is
/// checked by debug assertion).
pub fn hermitian_eigen(a: &nd::Array2<C64>) -> (Vec<f64>, nd::Array2<C64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = nd::Array2::<C64>::eye(n);
    let fro: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let tol = 1e-15 * fro.max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += m[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                let r = apq.norm();
                if r <= tol / (n as f64) {
                    continue;
                }
                let phase = apq / r;
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                let tau = (app - aqq) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // column update: col_p <- c*col_p + s*conj(phase)*col_q,
                //                col_q <- -s*phase*col_p + c*col_q
                for k in 0..n {
                    let mp = m[[k, p]];
                    let mq = m[[k, q]];
                    m[[k, p]] = mp * c + mq * s * phase.conj();
                    m[[k, q]] = -mp * s * phase + mq * c;
                    let vp = v[[k, p]];
                    let vq = v[[k, q]];
                    v[[k, p]] = vp * c + vq * s * phase.conj();
                    v[[k, q]] = -vp * s * phase + vq * c;
                }
                for k in 0..n {
                    let mp = m[[p, k]];
                    let mq = m[[q, k]];
                    m[[p, k]] = mp * c + mq * s * phase;
                    m[[q, k]] = -mp * s * phase.conj() + mq * c;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let eig: Vec<f64> = (0..n).map(|i| m[[i, i]].re).collect();
    order.sort_by(|&i, &j| eig[i].partial_cmp(&eig[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig[i]).collect();
    let mut vecs = nd::Array2::<C64>::zeros((n, n));
    for (newc, &oldc) in order.iter().enumerate() {
        for r in 0..n {
            vecs[[r, newc]] = v[[r, oldc]];
        }
    }
    (vals, vecs)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &nd::Array2<C64>) -> Vec<f64> {
    hermitian_eigen(a).0
}

/// All eigenvalues of a general complex matrix.
///
/// Householder reduction to upper Hessenberg form followed by shifted QR with
/// deflation. Eigenvalues only; no ordering is guaranteed.
pub fn eigenvalues(a: &nd::Array2<C64>) -> Result<Vec<C64>, LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigenvalues: square matrix required");
    if n == 0 {
        return Ok(vec![]);
    }
    if n == 1 {
        return Ok(vec![a[[0, 0]]]);
    }
    let mut h = a.clone();
    hessenberg_in_place(&mut h);
    let scale = max_abs(&h).max(1e-300);
    let mut eigs = Vec::with_capacity(n);
    let mut hi = n; // active block is 0..hi
    let mut iters_since_deflation = 0usize;
    let max_total = 80 * n;
    let mut total = 0usize;
    while hi > 0 {
        if hi == 1 {
            eigs.push(h[[0, 0]]);
            hi = 0;
            continue;
        }
        // search for a negligible subdiagonal entry from the bottom
        let mut lo = 0;
        for k in (1..hi).rev() {
            let small = 1e-14 * (h[[k - 1, k - 1]].norm() + h[[k, k]].norm()).max(scale);
            if h[[k, k - 1]].norm() <= small {
                h[[k, k - 1]] = C64::new(0.0, 0.0);
                lo = k;
                break;
            }
        }
        if lo == hi - 1 {
            eigs.push(h[[hi - 1, hi - 1]]);
            hi -= 1;
            iters_since_deflation = 0;
            continue;
        }
        if hi - lo == 2 {
            // 2x2 block solves in closed form
            let (e1, e2) = eig2(h[[lo, lo]], h[[lo, lo + 1]], h[[lo + 1, lo]], h[[lo + 1, lo + 1]]);
            eigs.push(e1);
            eigs.push(e2);
            hi -= 2;
            iters_since_deflation = 0;
            continue;
        }
        total += 1;
        if total > max_total {
            return Err(LinalgError::NoConvergence(total));
        }
        iters_since_deflation += 1;
        // Wilkinson shift from the trailing 2x2 of the active block
        let m = hi - 1;
        let shift = if iters_since_deflation % 24 == 0 {
            // exceptional shift to break rare cycling
            C64::new(h[[m, m - 1]].norm() + h[[m - 1, m - 2]].norm(), 0.0)
        } else {
            let (e1, e2) = eig2(h[[m - 1, m - 1]], h[[m - 1, m]], h[[m, m - 1]], h[[m, m]]);
            if (e1 - h[[m, m]]).norm() <= (e2 - h[[m, m]]).norm() {
                e1
            } else {
                e2
            }
        };
        qr_step(&mut h, lo, hi, shift);
    }
    Ok(eigs)
}

fn eig2(a: C64, b: C64, c: C64, d: C64) -> (C64, C64) {
    let half = (a + d) * 0.5;
    let dd = (a - d) * 0.5;
    let s = (dd * dd + b * c).sqrt();
    (half + s, half - s)
}

fn hessenberg_in_place(h: &mut nd::Array2<C64>) {
    let n = h.nrows();
    for col in 0..n.saturating_sub(2) {
        // Householder vector for entries below the subdiagonal in this column
        let mut norm2 = 0.0f64;
        for r in col + 1..n {
            norm2 += h[[r, col]].norm_sqr();
        }
        let x0 = h[[col + 1, col]];
        let norm = norm2.sqrt();
        if norm <= 1e-300 || (norm2 - x0.norm_sqr()).sqrt() <= 1e-18 * norm {
            continue;
        }
        let alpha = if x0.norm() > 0.0 {
            -(x0 / x0.norm()) * norm
        } else {
            C64::new(-norm, 0.0)
        };
        let mut v: Vec<C64> = (col + 1..n).map(|r| h[[r, col]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 <= 1e-300 {
            continue;
        }
        // H = I - 2 v v^H / |v|^2, applied from left (rows col+1..n) and right
        for j in col..n {
            let mut dot = C64::new(0.0, 0.0);
            for (idx, r) in (col + 1..n).enumerate() {
                dot += v[idx].conj() * h[[r, j]];
            }
            let f = dot * (2.0 / vnorm2);
            for (idx, r) in (col + 1..n).enumerate() {
                h[[r, j]] -= f * v[idx];
            }
        }
        for i in 0..n {
            let mut dot = C64::new(0.0, 0.0);
            for (idx, c) in (col + 1..n).enumerate() {
                dot += h[[i, c]] * v[idx];
            }
            let f = dot * (2.0 / vnorm2);
            for (idx, c) in (col + 1..n).enumerate() {
                h[[i, c]] -= f * v[idx].conj();
            }
        }
        for r in col + 2..n {
            h[[r, col]] = C64::new(0.0, 0.0);
        }
        h[[col + 1, col]] = alpha;
    }
}

/// One explicit single-shift QR step on the active Hessenberg block `lo..hi`.
fn qr_step(h: &mut nd::Array2<C64>, lo: usize, hi: usize, shift: C64) {
    // Givens rotations chasing the subdiagonal of (H - shift I)
    let mut rot: Vec<(f64, C64)> = Vec::with_capacity(hi - lo - 1);
    for i in lo..hi {
        h[[i, i]] -= shift;
    }
    for i in lo..hi - 1 {
        let (c, s) = givens(h[[i, i]], h[[i + 1, i]]);
        rot.push((c, s));
        for j in i..hi {
            let a = h[[i, j]];
            let b = h[[i + 1, j]];
            h[[i, j]] = a * c + b * s.conj();
            h[[i + 1, j]] = -a * s + b * c;
        }
    }
    for (idx, &(c, s)) in rot.iter().enumerate() {
        let i = lo + idx;
        let top = if i + 2 < hi { i + 2 } else { hi };
        for r in lo..top {
            let a = h[[r, i]];
            let b = h[[r, i + 1]];
            h[[r, i]] = a * c + b * s;
            h[[r, i + 1]] = -a * s.conj() + b * c;
        }
    }
    for i in lo..hi {
        h[[i, i]] += shift;
    }
}

/// Rotation (c, s) with c real such that  -a*s + b*c = 0  and  c^2+|s|^2 = 1.
fn givens(a: C64, b: C64) -> (f64, C64) {
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    let an = a.norm();
    if an == 0.0 {
        return (0.0, b / bn);
    }
    let r = (an * an + bn * bn).sqrt();
    (an / r, b * a.conj() / (an * r))
}
