//! Exact rational feasibility oracle for bounded linear systems.
//!
//! A nonempty polytope `{Ax = b, l <= x <= u}` has a basic feasible
//! solution: some set of rank(A) independent columns is basic and every
//! other variable sits at one of its bounds. Enumerating all of them
//! decides feasibility exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub type Q = BigRational;

pub fn q(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

/// Row-reduces `[A | b]`. Returns the independent rows, or `None` if inconsistent.
fn reduce(a: &[Vec<Q>], b: &[Q]) -> Option<(Vec<Vec<Q>>, Vec<Q>)> {
    let mut rows: Vec<(Vec<Q>, Q)> = a.iter().cloned().zip(b.iter().cloned()).collect();
    let n = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..n {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r].0[col].is_zero()) else {
            continue;
        };
        rows.swap(rank, p);
        let piv = rows[rank].0[col].clone();
        for r in 0..rows.len() {
            if r == rank || rows[r].0[col].is_zero() {
                continue;
            }
            let f = &rows[r].0[col] / &piv;
            for c in 0..n {
                let d = &f * &rows[rank].0[c];
                rows[r].0[c] -= d;
            }
            let d = &f * &rows[rank].1;
            rows[r].1 -= d;
        }
        rank += 1;
    }
    if rows[rank..].iter().any(|(_, rhs)| !rhs.is_zero()) {
        return None;
    }
    rows.truncate(rank);
    Some(rows.into_iter().unzip())
}

/// Solves the square system `m·x = rhs`; `None` if singular.
fn solve(mut m: Vec<Vec<Q>>, mut rhs: Vec<Q>) -> Option<Vec<Q>> {
    let k = m.len();
    for col in 0..k {
        let p = (col..k).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, p);
        rhs.swap(col, p);
        let piv = m[col][col].clone();
        for r in 0..k {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = &m[r][col] / &piv;
            for c in 0..k {
                let d = &f * &m[col][c];
                m[r][c] -= d;
            }
            let d = &f * &rhs[col];
            rhs[r] -= d;
        }
    }
    Some((0..k).map(|i| &rhs[i] / &m[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Exact feasibility of `{Ax = b, lo <= x <= hi}` with finite bounds.
pub fn feasible(a: &[Vec<Q>], b: &[Q], lo: &[Q], hi: &[Q]) -> bool {
    let n = lo.len();
    if lo.iter().zip(hi).any(|(l, h)| l > h) {
        return false;
    }
    if a.is_empty() {
        return true;
    }
    let Some((a, b)) = reduce(a, b) else {
        return false;
    };
    let r = a.len();
    for basic in subsets(n, r) {
        let nonbasic: Vec<usize> = (0..n).filter(|j| !basic.contains(j)).collect();
        let m: Vec<Vec<Q>> = a.iter().map(|row| basic.iter().map(|&j| row[j].clone()).collect()).collect();
        // check nonsingularity once
        if solve(m.clone(), vec![Q::zero(); r]).is_none() {
            continue;
        }
        for mask in 0u32..(1 << nonbasic.len()) {
            let rhs: Vec<Q> = a
                .iter()
                .zip(&b)
                .map(|(row, bi)| {
                    let mut v = bi.clone();
                    for (k, &j) in nonbasic.iter().enumerate() {
                        let xj = if mask >> k & 1 == 1 { &hi[j] } else { &lo[j] };
                        v -= &row[j] * xj;
                    }
                    v
                })
                .collect();
            let xb = solve(m.clone(), rhs).expect("nonsingular");
            if basic.iter().zip(&xb).all(|(&j, v)| &lo[j] <= v && v <= &hi[j]) {
                return true;
            }
        }
    }
    false
}

pub fn to_f64(v: &Q) -> f64 {
    let sign = if v.is_negative() { -1.0 } else { 1.0 };
    let a = v.abs();
    let num: f64 = a.numer().to_string().parse().unwrap();
    let den: f64 = a.denom().to_string().parse().unwrap();
    sign * num / den
}
