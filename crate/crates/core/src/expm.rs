//! Dense matrix exponential via scaling-and-squaring with a degree-13 Padé
//! approximant (Higham 2005, "The Scaling and Squaring Method for the Matrix
//! Exponential Revisited").
//!
//! [`expm`] is the raw kernel, usable on any square matrix (the Fréchet
//! derivative path exponentiates a 2S×2S block matrix that is not itself a
//! generator). [`matrix_exponential`] wraps it for CTMC generators and
//! returns a validated row-stochastic [`TransitionMatrix`].

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::norm_1;

/// Padé(13,13) numerator coefficients for the exponential function.
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

/// Largest 1-norm for which the unscaled Padé(13) approximant stays within
/// unit roundoff (Higham 2005, Table 2.3).
const THETA13: f64 = 5.371920351148152;

/// Compute e^A for a square real matrix.
///
/// The whole computation runs on thread-local row-major scratch buffers:
/// this function sits inside the O(S²) direction loop of the exact gradient,
/// where per-call allocation overhead would otherwise swamp the O(n³) work
/// for small matrices.
pub fn expm(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return Array2::zeros((0, 0));
    }
    if n == 1 {
        return Array2::from_elem((1, 1), a[[0, 0]].exp());
    }

    let norm = norm_1(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scale = 2f64.powi(-(squarings as i32));

    SCRATCH.with(|cell| {
        let mut ws = cell.borrow_mut();
        ws.ensure(n);
        match a.as_slice() {
            Some(input) => {
                for (dst, src) in ws.a.iter_mut().zip(input) {
                    *dst = src * scale;
                }
            }
            // non-contiguous views: logical row-major order either way
            None => {
                for (dst, src) in ws.a.iter_mut().zip(a.iter()) {
                    *dst = src * scale;
                }
            }
        }
        pade13(&mut ws, n);
        for _ in 0..squarings {
            let Scratch { r, t1, t2, .. } = &mut *ws;
            matmul(r, r, t1, n);
            std::mem::swap(r, t1);
            let _ = t2;
        }
        Array2::from_shape_vec((n, n), ws.r[..n * n].to_vec()).unwrap()
    })
}

/// Row-major n×n product c = a·b. Small sizes use a plain ikj loop over
/// contiguous rows (no packing overhead); larger ones defer to the tuned
/// kernel behind ndarray.
fn matmul(a: &[f64], b: &[f64], c: &mut [f64], n: usize) {
    if n >= 48 {
        use ndarray::ArrayView2;
        let av = ArrayView2::from_shape((n, n), &a[..n * n]).unwrap();
        let bv = ArrayView2::from_shape((n, n), &b[..n * n]).unwrap();
        let mut cm = ndarray::ArrayViewMut2::from_shape((n, n), &mut c[..n * n]).unwrap();
        ndarray::linalg::general_mat_mul(1.0, &av, &bv, 0.0, &mut cm);
        return;
    }
    c[..n * n].fill(0.0);
    for i in 0..n {
        let arow = &a[i * n..i * n + n];
        let crow = &mut c[i * n..i * n + n];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b[k * n..k * n + n];
            for j in 0..n {
                crow[j] += aik * brow[j];
            }
        }
    }
}

/// Reusable buffers for one expm evaluation.
struct Scratch {
    dim: usize,
    a: Vec<f64>,
    a2: Vec<f64>,
    a4: Vec<f64>,
    a6: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
    u: Vec<f64>,
    denom: Vec<f64>,
    r: Vec<f64>,
}

impl Scratch {
    fn empty() -> Self {
        Scratch {
            dim: 0,
            a: Vec::new(),
            a2: Vec::new(),
            a4: Vec::new(),
            a6: Vec::new(),
            t1: Vec::new(),
            t2: Vec::new(),
            u: Vec::new(),
            denom: Vec::new(),
            r: Vec::new(),
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.dim < n {
            let len = n * n;
            for buf in [
                &mut self.a,
                &mut self.a2,
                &mut self.a4,
                &mut self.a6,
                &mut self.t1,
                &mut self.t2,
                &mut self.u,
                &mut self.denom,
                &mut self.r,
            ] {
                buf.resize(len, 0.0);
            }
            self.dim = n;
        }
    }
}

thread_local! {
    static SCRATCH: std::cell::RefCell<Scratch> = std::cell::RefCell::new(Scratch::empty());
}

/// Padé(13,13) approximant of e^A for the pre-scaled matrix in `ws.a`;
/// the result lands in `ws.r`.
fn pade13(ws: &mut Scratch, n: usize) {
    let len = n * n;
    let Scratch {
        a,
        a2,
        a4,
        a6,
        t1,
        t2,
        u,
        denom,
        r,
        ..
    } = ws;
    matmul(a, a, a2, n);
    matmul(a2, a2, a4, n);
    matmul(a2, a4, a6, n);

    // U = A·[(b13·A6 + b11·A4 + b9·A2)·A6 + b7·A6 + b5·A4 + b3·A2 + b1·I]
    for k in 0..len {
        t1[k] = PADE13[13] * a6[k] + PADE13[11] * a4[k] + PADE13[9] * a2[k];
    }
    matmul(t1, a6, t2, n);
    for k in 0..len {
        t2[k] += PADE13[7] * a6[k] + PADE13[5] * a4[k] + PADE13[3] * a2[k];
    }
    for i in 0..n {
        t2[i * n + i] += PADE13[1];
    }
    matmul(a, t2, u, n);

    // V = (b12·A6 + b10·A4 + b8·A2)·A6 + b6·A6 + b4·A4 + b2·A2 + b0·I
    for k in 0..len {
        t1[k] = PADE13[12] * a6[k] + PADE13[10] * a4[k] + PADE13[8] * a2[k];
    }
    matmul(t1, a6, t2, n);
    for k in 0..len {
        t2[k] += PADE13[6] * a6[k] + PADE13[4] * a4[k] + PADE13[2] * a2[k];
    }
    for i in 0..n {
        t2[i * n + i] += PADE13[0];
    }

    // (V − U) X = (V + U)
    for k in 0..len {
        denom[k] = t2[k] - u[k];
        r[k] = t2[k] + u[k];
    }
    // The denominator of the Padé approximant to exp is nonsingular for
    // ||A|| ≤ θ13, so the solve cannot fail here.
    solve_in_place(denom, r, n).expect("Padé denominator is nonsingular after scaling");
}

/// Solve A X = B in place: partial-pivot LU on `a`, X overwrites `b`.
/// Both are n×n row-major slices.
fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    for col in 0..n {
        let mut max_val = 0.0;
        let mut max_row = col;
        for row in col..n {
            let v = a[row * n + col].abs();
            if v > max_val {
                max_val = v;
                max_row = row;
            }
        }
        if max_val < 1e-300 {
            return Err(Error::numerical("singular matrix in linear solve"));
        }
        if max_row != col {
            for j in 0..n {
                a.swap(col * n + j, max_row * n + j);
                b.swap(col * n + j, max_row * n + j);
            }
        }
        let pivot = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            let (upper, lower) = a.split_at_mut(row * n);
            let pivot_row = &upper[col * n..col * n + n];
            let target = &mut lower[..n];
            for j in (col + 1)..n {
                target[j] -= factor * pivot_row[j];
            }
            let (bu, bl) = b.split_at_mut(row * n);
            let b_pivot = &bu[col * n..col * n + n];
            let b_target = &mut bl[..n];
            for j in 0..n {
                b_target[j] -= factor * b_pivot[j];
            }
        }
    }
    for col in (0..n).rev() {
        let pivot = a[col * n + col];
        for j in 0..n {
            b[col * n + j] /= pivot;
        }
        for row in 0..col {
            let factor = a[row * n + col];
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = b.split_at_mut(col * n);
            let source = &lower[..n];
            let target = &mut upper[row * n..row * n + n];
            for j in 0..n {
                target[j] -= factor * source[j];
            }
        }
    }
    Ok(())
}

/// A finite-time transition probability matrix P(t) = e^{tM}.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    /// Row-stochastic probability matrix.
    pub p: Array2<f64>,
    /// The time horizon the matrix was computed for.
    pub t: f64,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }
}

/// Entries more negative than this are a numerical failure rather than
/// harmless Padé roundoff.
const CLAMP_TOL: f64 = 1e-12;
/// Pre-renormalization row sums must be this close to one.
const ROW_SUM_TOL: f64 = 1e-10;

/// Validate a generator: nonnegative off-diagonals, zero row sums.
pub fn validate_generator(m: &Array2<f64>) -> Result<()> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::input("generator must be square"));
    }
    for i in 0..n {
        let mut row_sum = 0.0;
        let mut row_max = 0.0f64;
        for j in 0..n {
            let v = m[[i, j]];
            if !v.is_finite() {
                return Err(Error::input(format!("non-finite generator entry at ({i},{j})")));
            }
            if i != j && v < 0.0 {
                return Err(Error::input(format!(
                    "negative off-diagonal rate {v} at ({i},{j})"
                )));
            }
            row_sum += v;
            row_max = row_max.max(v.abs());
        }
        if row_sum.abs() > 1e-9 * (1.0 + row_max) {
            return Err(Error::input(format!(
                "generator row {i} sums to {row_sum:.3e}, expected 0"
            )));
        }
    }
    Ok(())
}

/// Compute P(t) = e^{tM} for a generator M and horizon t ≥ 0.
///
/// Tiny negative entries (within −1e-12) produced by the Padé approximant
/// are clamped to zero and rows are renormalized; anything worse raises a
/// numerical error.
pub fn matrix_exponential(m: &Array2<f64>, t: f64) -> Result<TransitionMatrix> {
    validate_generator(m)?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::input(format!("time must be finite and nonnegative, got {t}")));
    }
    let n = m.nrows();
    if t == 0.0 {
        return Ok(TransitionMatrix {
            p: Array2::eye(n),
            t,
        });
    }
    let mut p = expm(&(m * t));
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            let v = p[[i, j]];
            if v < -CLAMP_TOL {
                return Err(Error::numerical(format!(
                    "transition probability {v:.3e} at ({i},{j}) below clamping tolerance"
                )));
            }
            if v < 0.0 {
                p[[i, j]] = 0.0;
            }
            row_sum += p[[i, j]];
        }
        if (row_sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::numerical(format!(
                "transition matrix row {i} sums to {row_sum:.12e}"
            )));
        }
        for j in 0..n {
            p[[i, j]] /= row_sum;
        }
    }
    Ok(TransitionMatrix { p, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_time_is_identity() {
        let m = array![[-3.0, 3.0], [0.5, -0.5]];
        let p = matrix_exponential(&m, 0.0).unwrap();
        assert_eq!(p.p, Array2::eye(2));
    }

    #[test]
    fn two_state_symmetric_matches_analytic_formula() {
        // P(t) = 0.5 + 0.5 e^{-2t} on the diagonal, 0.5 - 0.5 e^{-2t} off it.
        let m = array![[-1.0, 1.0], [1.0, -1.0]];
        let p = matrix_exponential(&m, 1.0).unwrap();
        let diag = 0.5 + 0.5 * (-2.0f64).exp();
        let off = 0.5 - 0.5 * (-2.0f64).exp();
        assert!((p.p[[0, 0]] - diag).abs() < 1e-7);
        assert!((p.p[[0, 1]] - off).abs() < 1e-7);
        assert!((p.p[[1, 0]] - off).abs() < 1e-7);
        assert!((p.p[[1, 1]] - diag).abs() < 1e-7);
        // spot value from the spec's analytic evaluation
        assert!((p.p[[0, 0]] - 0.5676676).abs() < 1e-7);
    }

    #[test]
    fn rows_are_stochastic() {
        let m = array![
            [-2.0, 1.5, 0.5],
            [0.3, -0.4, 0.1],
            [2.0, 2.0, -4.0]
        ];
        let p = matrix_exponential(&m, 0.7).unwrap();
        for i in 0..3 {
            let sum: f64 = p.p.row(i).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for j in 0..3 {
                assert!(p.p[[i, j]] >= 0.0 && p.p[[i, j]] <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = array![[-1.0, 1.0], [1.0, -1.0]];
        assert!(matrix_exponential(&m, -0.1).is_err());
        assert!(matrix_exponential(&m, f64::NAN).is_err());
        let bad = array![[-1.0, 0.5], [1.0, -1.0]];
        assert!(matrix_exponential(&bad, 1.0).is_err());
        let neg = array![[-1.0, -1.0], [1.0, -1.0]];
        assert!(matrix_exponential(&neg, 1.0).is_err());
    }

    #[test]
    fn large_norm_triggers_squaring_and_stays_accurate() {
        // Rate 50 two-state chain: analytic diagonal 0.5 + 0.5 e^{-100 t}.
        let m = array![[-50.0, 50.0], [50.0, -50.0]];
        let p = matrix_exponential(&m, 1.0).unwrap();
        assert!((p.p[[0, 0]] - 0.5).abs() < 1e-10);
        assert!((p.p[[0, 1]] - 0.5).abs() < 1e-10);
    }
}
