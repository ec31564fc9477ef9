//! Matrix exponential by scaling and squaring with diagonal Pade
//! approximants of degree 3, 5, 7, 9 or 13, chosen from the 1-norm.

use nalgebra::DMatrix;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
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
        ],
        _ => unreachable!(),
    }
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).expect("Pade denominator is nonsingular for scaled arguments")
}

/// `exp(A)` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let id = DMatrix::<f64>::identity(n, n);
    if n == 0 {
        return id;
    }
    let nrm = norm1(a);
    let a2 = a * a;
    for &(m, theta) in &THETA {
        if nrm <= theta {
            let b = pade_coefficients(m);
            let mut u = &id * b[1];
            let mut v = &id * b[0];
            let mut pow = id.clone();
            for k in 1..=m / 2 {
                pow = &pow * &a2;
                u += &pow * b[2 * k + 1];
                v += &pow * b[2 * k];
            }
            let u = a * u;
            return solve(&u, &v);
        }
    }
    let s = if nrm > THETA_13 {
        (nrm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(s);
    let a1 = a * scale;
    let a2 = &a2 * (scale * scale);
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = pade_coefficients(13);
    let u_inner = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = &a1 * (&a6 * u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let v_inner = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let mut r = solve(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.5, 3.0]));
        let e = expm(&a);
        for (i, d) in [-1.0f64, 0.5, 3.0].iter().enumerate() {
            assert!((e[(i, i)] / d.exp() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn nilpotent() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
        let e = expm(&a);
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, 3.0, 0.0, 0.0, 1.0]);
        assert!((e - want).abs().max() < 1e-14);
    }

    #[test]
    fn rotation() {
        let t = 7.3;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a);
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-13);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-13);
    }

    #[test]
    fn agrees_with_nalgebra() {
        for scale in [1e-3, 0.1, 1.0, 10.0, 100.0] {
            let a = DMatrix::from_fn(4, 4, |i, j| scale * (((i * 7 + j * 3) % 5) as f64 - 2.0) / 3.0);
            let ours = expm(&a);
            let theirs = a.clone().exp();
            let rel = (&ours - &theirs).abs().max() / theirs.abs().max();
            assert!(rel < 1e-11, "scale {scale}: {rel}");
        }
    }
}
