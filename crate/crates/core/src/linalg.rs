//! Fixed-size complex vectors and matrices used throughout the crate.

use crate::C64;

pub type C2 = [C64; 2];
pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Bilinear dot product (no conjugation).
pub fn dot(a: &C2, b: &C2) -> C64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn det2(m: &Mat2) -> C64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn mat2_identity() -> Mat2 {
    [[ONE, ZERO], [ZERO, ONE]]
}

pub fn transpose2(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// Solves `m x = rhs`; `None` when `|det m|` is below `min_det`.
pub fn solve2(m: &Mat2, rhs: &C2, min_det: f64) -> Option<C2> {
    let d = det2(m);
    if !(d.norm() >= min_det) {
        return None;
    }
    Some([
        (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / d,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / d,
    ])
}

pub fn mat4_identity() -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ONE;
    }
    m
}

/// Block `(row, col)` of a 4x4 matrix split into 2x2 blocks.
pub fn block(m: &Mat4, row: usize, col: usize) -> Mat2 {
    let (r, c) = (2 * row, 2 * col);
    [[m[r][c], m[r][c + 1]], [m[r + 1][c], m[r + 1][c + 1]]]
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det4(m: &Mat4) -> C64 {
    let mut a = *m;
    let mut det = ONE;
    for k in 0..4 {
        let piv = (k..4)
            .max_by(|&i, &j| a[i][k].norm().total_cmp(&a[j][k].norm()))
            .unwrap();
        if a[piv][k].norm() == 0.0 {
            return ZERO;
        }
        if piv != k {
            a.swap(piv, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..4 {
            let f = a[i][k] / a[k][k];
            for j in k..4 {
                let t = a[k][j];
                a[i][j] -= f * t;
            }
        }
    }
    det
}

pub fn max_abs(a: &C2) -> f64 {
    a[0].norm().max(a[1].norm())
}

pub fn sub2(a: &C2, b: &C2) -> C2 {
    [a[0] - b[0], a[1] - b[1]]
}
