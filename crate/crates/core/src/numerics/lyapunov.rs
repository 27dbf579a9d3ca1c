use nalgebra::linalg::Schur;

use super::linalg::{ensure_finite, ensure_square};
use super::Mat;
use crate::error::{dim_err, Error, Result};

/// Solves `FᵀX + XF + W = 0` for `X` (Bartels–Stewart).
///
/// `F` is reduced to real Schur form `F = U S Uᵀ`; the transformed equation
/// `SᵀY + YS = -UᵀWU` is solved block by block over the 1×1 and 2×2 diagonal
/// blocks of `S`, and `X = U Y Uᵀ`. A unique solution exists whenever no two
/// eigenvalues of `F` sum to zero, in particular for Hurwitz `F`.
pub fn solve_lyapunov(f: &Mat, w: &Mat) -> Result<Mat> {
    ensure_square(f, "solve_lyapunov F")?;
    ensure_finite(f, "solve_lyapunov F")?;
    ensure_finite(w, "solve_lyapunov W")?;
    let n = f.nrows();
    if w.shape() != (n, n) {
        return Err(dim_err("solve_lyapunov W", format!("{n}x{n}"), format!("{}x{}", w.nrows(), w.ncols())));
    }

    let (u, s) = Schur::try_new(f.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::NoConvergence("Schur decomposition"))?
        .unpack();
    let c = -(u.transpose() * w * &u);
    let blocks = diagonal_blocks(&s);

    let mut y = Mat::zeros(n, n);
    for &(i0, pi) in &blocks {
        for &(j0, pj) in &blocks {
            // rhs = C_ij - sum_{k<i} S_kiᵀ Y_kj - sum_{k<j} Y_ik S_kj
            let mut rhs = c.view((i0, j0), (pi, pj)).into_owned();
            if i0 > 0 {
                rhs -= s.view((0, i0), (i0, pi)).transpose() * y.view((0, j0), (i0, pj));
            }
            if j0 > 0 {
                rhs -= y.view((i0, 0), (pi, j0)) * s.view((0, j0), (j0, pj));
            }
            let sii = s.view((i0, i0), (pi, pi)).into_owned();
            let sjj = s.view((j0, j0), (pj, pj)).into_owned();
            let block = solve_small_sylvester(&sii, &sjj, &rhs)?;
            y.view_mut((i0, j0), (pi, pj)).copy_from(&block);
        }
    }

    let x = &u * y * u.transpose();
    let x = (&x + x.transpose()) * 0.5;
    ensure_finite(&x, "solve_lyapunov result")?;
    Ok(x)
}

/// Diagonal block layout (start, size) of a quasi-upper-triangular matrix.
fn diagonal_blocks(s: &Mat) -> Vec<(usize, usize)> {
    let n = s.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && s[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves `AᵀZ + ZB = R` for blocks of size at most 2 via the Kronecker form.
fn solve_small_sylvester(a: &Mat, b: &Mat, r: &Mat) -> Result<Mat> {
    let (p, q) = (a.nrows(), b.nrows());
    let dim = p * q;
    // column-major vec: vec(AᵀZ) = (I_q ⊗ Aᵀ) vec Z, vec(ZB) = (Bᵀ ⊗ I_p) vec Z
    let mut k = Mat::zeros(dim, dim);
    for col in 0..q {
        for i in 0..p {
            for j in 0..p {
                k[(col * p + i, col * p + j)] += a[(j, i)];
            }
        }
    }
    for i in 0..q {
        for j in 0..q {
            for d in 0..p {
                k[(i * p + d, j * p + d)] += b[(j, i)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(r.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Lyapunov operator (eigenvalues summing to zero)"))?;
    Ok(Mat::from_column_slice(p, q, sol.as_slice()))
}
