//! Matrix exponential by scaling and squaring with a degree-13 Pade approximant.

use ndarray::Array2;
use num_complex::Complex64;

use super::OperatorMatrix;
use crate::error::{Error, Result};

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

/// 1-norm bound below which the [13/13] approximant meets double precision.
const THETA13: f64 = 5.371920351148152;

/// `exp(m)` for a dense complex matrix.
pub fn matrix_exponential(m: &OperatorMatrix) -> Result<OperatorMatrix> {
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix_exponential input"));
    }
    let dim = m.dim();
    let norm = m.norm_one();
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = m.entries().mapv(|z| z * 2f64.powi(-squarings));

    let ident: Array2<Complex64> = Array2::eye(dim);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = &PADE13;

    let lin = |c6: f64, c4: f64, c2: f64| -> Array2<Complex64> {
        a6.mapv(|z| z * c6) + a4.mapv(|z| z * c4) + a2.mapv(|z| z * c2)
    };
    let u_inner = a6.dot(&lin(b[13], b[11], b[9])) + lin(b[7], b[5], b[3]) + ident.mapv(|z| z * b[1]);
    let u = a.dot(&u_inner);
    let v = a6.dot(&lin(b[12], b[10], b[8])) + lin(b[6], b[4], b[2]) + ident.mapv(|z| z * b[0]);

    let mut result = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    if result.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix_exponential result"));
    }
    OperatorMatrix::new(result)
}

/// Solves `lhs * x = rhs` by LU factorization with partial pivoting.
fn solve(lhs: &Array2<Complex64>, rhs: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let n = lhs.nrows();
    let mut a = lhs.clone();
    let mut x = rhs.clone();
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| a[[i, k]].norm().total_cmp(&a[[j, k]].norm()))
            .unwrap_or(k);
        if a[[pivot, k]].norm() == 0.0 {
            return Err(Error::PrecisionLoss("singular Pade denominator".into()));
        }
        if pivot != k {
            for col in 0..n {
                a.swap([k, col], [pivot, col]);
            }
            for col in 0..x.ncols() {
                x.swap([k, col], [pivot, col]);
            }
        }
        let inv = a[[k, k]].inv();
        for row in (k + 1)..n {
            let factor = a[[row, k]] * inv;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for col in k..n {
                let v = a[[k, col]];
                a[[row, col]] -= factor * v;
            }
            for col in 0..x.ncols() {
                let v = x[[k, col]];
                x[[row, col]] -= factor * v;
            }
        }
    }
    for k in (0..n).rev() {
        let inv = a[[k, k]].inv();
        for col in 0..x.ncols() {
            let mut acc = x[[k, col]];
            for j in (k + 1)..n {
                acc -= a[[k, j]] * x[[j, col]];
            }
            x[[k, col]] = acc * inv;
        }
    }
    Ok(x)
}
