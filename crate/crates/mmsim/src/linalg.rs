//! Dense linear solves used by the exact MDP machinery.
//!
//! State counts stay small (hundreds at most), so an LU solve with partial
//! pivoting is both simpler and more precise than iterative methods.

/// Solve `A x = b` in place via LU with partial pivoting. `a` is row-major n×n.
pub fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>, SolveError> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix shape mismatch");
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-14 {
            return Err(SolveError::Singular { column: col });
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in col + 1..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Max-norm residual `‖A x − b‖∞` for verifying a solve.
pub fn residual(a: &[f64], x: &[f64], b: &[f64]) -> f64 {
    let n = x.len();
    let mut worst = 0.0f64;
    for row in 0..n {
        let mut acc = 0.0;
        for k in 0..n {
            acc += a[row * n + k] * x[k];
        }
        worst = worst.max((acc - b[row]).abs());
    }
    worst
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("singular system at column {column}")]
    Singular { column: usize },
}

/// FNV-1a over a byte stream; stable across platforms, used for instance
/// and config fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fingerprint of a float slice via the bit patterns of its entries.
pub fn fingerprint_f64(values: &[f64]) -> u64 {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fnv1a(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn solve_matches_random_systems() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..12);
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut a = vec![0.0; n * n];
            for (i, v) in a.iter_mut().enumerate() {
                *v = rng.gen_range(-1.0..1.0);
                if i % (n + 1) == 0 {
                    *v += 3.0; // diagonally dominant, well conditioned
                }
            }
            let mut b = vec![0.0; n];
            for r in 0..n {
                for c in 0..n {
                    b[r] += a[r * n + c] * x_true[c];
                }
            }
            let x = solve(a.clone(), b.clone()).unwrap();
            assert!(residual(&a, &x, &b) < 1e-9);
            for (got, want) in x.iter().zip(&x_true) {
                assert!((got - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn singular_system_reports_column() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        let err = solve(a, vec![1.0, 2.0]).unwrap_err();
        match err {
            SolveError::Singular { column } => assert_eq!(column, 1),
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(fnv1a(b"mmsim"), fnv1a(b"mmsim"));
        assert_ne!(fnv1a(b"mmsim"), fnv1a(b"mmsin"));
        assert_eq!(fingerprint_f64(&[1.0, 2.0]), fingerprint_f64(&[1.0, 2.0]));
    }
}
