//! Small dense linear algebra: fixed-size kernels for the tracking
//! controller (4-state / 2-control) and a Cholesky solver for the ridge
//! normal equations. Dimensions here are tiny, so hand-rolled loops beat
//! pulling in a matrix library.

use crate::num::Real;

pub type Mat4<S> = [[S; 4]; 4];
pub type Mat4x2<S> = [[S; 2]; 4];
pub type Mat2x4<S> = [[S; 4]; 2];
pub type Mat2<S> = [[S; 2]; 2];
pub type Vec4<S> = [S; 4];
pub type Vec2<S> = [S; 2];

pub fn mat4_zero<S: Real>() -> Mat4<S> {
    [[S::zero(); 4]; 4]
}

pub fn mat4_identity<S: Real>() -> Mat4<S> {
    let mut m = mat4_zero();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = S::one();
    }
    m
}

pub fn mat4_mul<S: Real>(a: &Mat4<S>, b: &Mat4<S>) -> Mat4<S> {
    let mut out = mat4_zero();
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn mat4_add<S: Real>(a: &Mat4<S>, b: &Mat4<S>) -> Mat4<S> {
    let mut out = *a;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn mat4_sub<S: Real>(a: &Mat4<S>, b: &Mat4<S>) -> Mat4<S> {
    let mut out = *a;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] -= b[i][j];
        }
    }
    out
}

pub fn mat4_transpose<S: Real>(a: &Mat4<S>) -> Mat4<S> {
    let mut out = mat4_zero();
    for i in 0..4 {
        for j in 0..4 {
            out[j][i] = a[i][j];
        }
    }
    out
}

pub fn mat4_symmetrize<S: Real>(a: &Mat4<S>) -> Mat4<S> {
    let half = S::of(0.5);
    let mut out = mat4_zero();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (a[i][j] + a[j][i]) * half;
        }
    }
    out
}

pub fn mat4_vec<S: Real>(a: &Mat4<S>, v: &Vec4<S>) -> Vec4<S> {
    let mut out = [S::zero(); 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i] += a[i][j] * v[j];
        }
    }
    out
}

/// out = Aᵀ · B where A is 4x2: yields 2x4.
pub fn mat4x2_t_mul4<S: Real>(a: &Mat4x2<S>, b: &Mat4<S>) -> Mat2x4<S> {
    let mut out = [[S::zero(); 4]; 2];
    for i in 0..2 {
        for k in 0..4 {
            let aki = a[k][i];
            for j in 0..4 {
                out[i][j] += aki * b[k][j];
            }
        }
    }
    out
}

/// out = A(2x4) · B(4x2): yields 2x2.
pub fn mat2x4_mul4x2<S: Real>(a: &Mat2x4<S>, b: &Mat4x2<S>) -> Mat2<S> {
    let mut out = [[S::zero(); 2]; 2];
    for i in 0..2 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..2 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// out = A(2x4) · B(4x4): yields 2x4.
pub fn mat2x4_mul4<S: Real>(a: &Mat2x4<S>, b: &Mat4<S>) -> Mat2x4<S> {
    let mut out = [[S::zero(); 4]; 2];
    for i in 0..2 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// out = A(4x2) · B(2x4): yields 4x4.
pub fn mat4x2_mul2x4<S: Real>(a: &Mat4x2<S>, b: &Mat2x4<S>) -> Mat4<S> {
    let mut out = mat4_zero();
    for i in 0..4 {
        for k in 0..2 {
            let aik = a[i][k];
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn mat2_add<S: Real>(a: &Mat2<S>, b: &Mat2<S>) -> Mat2<S> {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

pub fn mat2_inverse<S: Real>(a: &Mat2<S>) -> Option<Mat2<S>> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !det.is_finite() || det.abs() < S::of(1e-300) {
        return None;
    }
    let inv = S::one() / det;
    Some([
        [a[1][1] * inv, -a[0][1] * inv],
        [-a[1][0] * inv, a[0][0] * inv],
    ])
}

pub fn mat2_mul2x4<S: Real>(a: &Mat2<S>, b: &Mat2x4<S>) -> Mat2x4<S> {
    let mut out = [[S::zero(); 4]; 2];
    for i in 0..2 {
        for k in 0..2 {
            let aik = a[i][k];
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn mat2x4_vec<S: Real>(a: &Mat2x4<S>, v: &Vec4<S>) -> Vec2<S> {
    let mut out = [S::zero(); 2];
    for i in 0..2 {
        for j in 0..4 {
            out[i] += a[i][j] * v[j];
        }
    }
    out
}

/// Minimum eigenvalue of a symmetric 4x4 matrix via cyclic Jacobi sweeps.
pub fn sym4_min_eigenvalue<S: Real>(m: &Mat4<S>) -> S {
    let mut a = *m;
    for _ in 0..30 {
        let mut off = S::zero();
        for i in 0..4 {
            for j in (i + 1)..4 {
                off += a[i][j] * a[i][j];
            }
        }
        if off < S::of(1e-30) {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if a[p][q].abs() < S::of(1e-300) {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (S::of(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut min = a[0][0];
    for i in 1..4 {
        min = min.min(a[i][i]);
    }
    min
}

/// Solve the symmetric positive-definite system `A x = b` in place via
/// Cholesky. Returns `None` when A is not (numerically) positive definite.
pub fn cholesky_solve<S: Real>(a: &[Vec<S>], b: &[S]) -> Option<Vec<S>> {
    let n = a.len();
    debug_assert!(a.iter().all(|row| row.len() == n) && b.len() == n);
    let mut l = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= S::zero() || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    // forward substitution L y = b
    let mut y = vec![S::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    // back substitution Lᵀ x = y
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mat4_mul_against_known_product() {
        let a: Mat4<f64> = [
            [1.0, 2.0, 0.0, 0.0],
            [0.0, 1.0, 3.0, 0.0],
            [0.0, 0.0, 1.0, 4.0],
            [5.0, 0.0, 0.0, 1.0],
        ];
        let i = mat4_identity();
        assert_eq!(mat4_mul(&a, &i), a);
        let at = mat4_transpose(&a);
        let prod = mat4_mul(&a, &at);
        // spot-check one entry: row0 . row0
        assert_eq!(prod[0][0], 5.0);
        assert_eq!(prod[0][1], 2.0);
    }

    #[test]
    fn mat2_inverse_roundtrip() {
        let m: Mat2<f64> = [[2.0, 1.0], [1.0, 3.0]];
        let inv = mat2_inverse(&m).unwrap();
        let id = [
            [
                m[0][0] * inv[0][0] + m[0][1] * inv[1][0],
                m[0][0] * inv[0][1] + m[0][1] * inv[1][1],
            ],
            [
                m[1][0] * inv[0][0] + m[1][1] * inv[1][0],
                m[1][0] * inv[0][1] + m[1][1] * inv[1][1],
            ],
        ];
        assert!((id[0][0] - 1.0).abs() < 1e-12);
        assert!(id[0][1].abs() < 1e-12);
        assert!(mat2_inverse(&[[1.0, 2.0], [2.0, 4.0]]).is_none());
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = Mᵀ M + I is SPD for any M
        let m = [
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| m[i][j] * x_true[j]).sum())
            .collect();
        let x = cholesky_solve(&m, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = [vec![1.0, 2.0], vec![2.0, 1.0]]; // eigenvalues 3, -1
        assert!(cholesky_solve(&m, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn jacobi_min_eigenvalue() {
        let d: Mat4<f64> = [
            [4.0, 0.0, 0.0, 0.0],
            [0.0, 0.25, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 2.0],
        ];
        assert!((sym4_min_eigenvalue(&d) - 0.25).abs() < 1e-9);
        // rotate the diagonal matrix by a known orthogonal transform
        let c = 0.6f64;
        let s = 0.8f64;
        let r: Mat4<f64> = [
            [c, -s, 0.0, 0.0],
            [s, c, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let m = mat4_mul(&r, &mat4_mul(&d, &mat4_transpose(&r)));
        assert!((sym4_min_eigenvalue(&m) - 0.25).abs() < 1e-9);
    }
}
