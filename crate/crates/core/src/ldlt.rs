//! Dense symmetric indefinite factorization `P A Pᵀ = L D Lᵀ` with
//! Bunch–Kaufman partial pivoting (1×1 and 2×2 diagonal blocks).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const BK_ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + √17) / 8

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One { k: usize, d: f64 },
    Two { k: usize, a: f64, b: f64, c: f64 },
}

#[derive(Debug, Clone)]
pub struct Ldlt {
    n: usize,
    /// Row-major working storage; strictly lower part holds `L`.
    work: Vec<f64>,
    /// `perm[i]` is the original row placed at position `i`.
    perm: Vec<usize>,
    pivots: Vec<Pivot>,
}

impl Ldlt {
    pub fn factor(a: &DMatrix<f64>) -> Ldlt {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "square matrix required");
        let mut work = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                work[i * n + j] = a[(i, j)];
            }
        }
        Self::factor_row_major(n, work)
    }

    pub(crate) fn factor_row_major(n: usize, mut w: Vec<f64>) -> Ldlt {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();
        let at = |i: usize, j: usize| i * n + j;
        let mut k = 0;
        while k < n {
            let absakk = w[at(k, k)].abs();
            let (mut imax, mut colmax) = (k, 0.0);
            for i in k + 1..n {
                let v = w[at(i, k)].abs();
                if v > colmax {
                    colmax = v;
                    imax = i;
                }
            }
            if absakk.max(colmax) == 0.0 {
                pivots.push(Pivot::One { k, d: 0.0 });
                k += 1;
                continue;
            }
            let (kp, kstep) = if absakk >= BK_ALPHA * colmax {
                (k, 1)
            } else {
                let mut rowmax: f64 = 0.0;
                for j in k..n {
                    if j != imax {
                        rowmax = rowmax.max(w[at(imax, j)].abs());
                    }
                }
                if absakk * rowmax >= BK_ALPHA * colmax * colmax {
                    (k, 1)
                } else if w[at(imax, imax)].abs() >= BK_ALPHA * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };
            let kk = k + kstep - 1;
            if kp != kk {
                for j in 0..n {
                    w.swap(at(kk, j), at(kp, j));
                }
                for i in 0..n {
                    w.swap(at(i, kk), at(i, kp));
                }
                perm.swap(kk, kp);
            }
            if kstep == 1 {
                let d = w[at(k, k)];
                for i in k + 1..n {
                    let l = w[at(i, k)] / d;
                    if l != 0.0 {
                        for j in k + 1..=i {
                            let upd = l * w[at(j, k)];
                            w[at(i, j)] -= upd;
                        }
                    }
                }
                for i in k + 1..n {
                    w[at(i, k)] /= d;
                }
                for i in k + 1..n {
                    for j in i + 1..n {
                        w[at(i, j)] = w[at(j, i)];
                    }
                }
                pivots.push(Pivot::One { k, d });
            } else {
                let a = w[at(k, k)];
                let b = w[at(k + 1, k)];
                let c = w[at(k + 1, k + 1)];
                let det = a * c - b * b;
                // rows of [x y] D^{-1}
                let inv = |x: f64, y: f64| ((c * x - b * y) / det, (a * y - b * x) / det);
                let mut mult = Vec::with_capacity(n - k - 2);
                for i in k + 2..n {
                    mult.push(inv(w[at(i, k)], w[at(i, k + 1)]));
                }
                for (ii, i) in (k + 2..n).enumerate() {
                    let (li0, li1) = mult[ii];
                    for j in k + 2..=i {
                        let upd = li0 * w[at(j, k)] + li1 * w[at(j, k + 1)];
                        w[at(i, j)] -= upd;
                    }
                }
                for (ii, i) in (k + 2..n).enumerate() {
                    w[at(i, k)] = mult[ii].0;
                    w[at(i, k + 1)] = mult[ii].1;
                }
                for i in k + 2..n {
                    for j in i + 1..n {
                        w[at(i, j)] = w[at(j, i)];
                    }
                }
                pivots.push(Pivot::Two { k, a, b, c });
            }
            k += kstep;
        }
        Ldlt {
            n,
            work: w,
            perm,
            pivots,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `(negatives, zeros, positives)` of the factored matrix.
    pub fn inertia(&self) -> (usize, usize, usize) {
        let (mut neg, mut zero, mut pos) = (0, 0, 0);
        let mut tally = |v: f64| {
            if v < 0.0 {
                neg += 1
            } else if v > 0.0 {
                pos += 1
            } else {
                zero += 1
            }
        };
        for p in &self.pivots {
            match *p {
                Pivot::One { d, .. } => tally(d),
                Pivot::Two { a, b, c, .. } => {
                    let mean = 0.5 * (a + c);
                    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                    tally(mean - rad);
                    tally(mean + rad);
                }
            }
        }
        (neg, zero, pos)
    }

    /// Smallest pivot magnitude (eigenvalue magnitude for 2×2 blocks).
    pub fn min_pivot(&self) -> f64 {
        self.pivots
            .iter()
            .map(|p| match *p {
                Pivot::One { d, .. } => d.abs(),
                Pivot::Two { a, b, c, .. } => {
                    let mean = 0.5 * (a + c);
                    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                    (mean - rad).abs().min((mean + rad).abs())
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Overwrite `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let at = |i: usize, j: usize| i * n + j;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // L y = P b
        for p in &self.pivots {
            match *p {
                Pivot::One { k, .. } => {
                    let yk = y[k];
                    if yk != 0.0 {
                        for i in k + 1..n {
                            y[i] -= self.work[at(i, k)] * yk;
                        }
                    }
                }
                Pivot::Two { k, .. } => {
                    let (y0, y1) = (y[k], y[k + 1]);
                    for i in k + 2..n {
                        y[i] -= self.work[at(i, k)] * y0 + self.work[at(i, k + 1)] * y1;
                    }
                }
            }
        }
        for p in &self.pivots {
            match *p {
                Pivot::One { k, d } => {
                    if d == 0.0 {
                        return Err(Error::NumericalBreakdown(format!("zero pivot at row {k}")));
                    }
                    y[k] /= d;
                }
                Pivot::Two { k, a, b: off, c } => {
                    let det = a * c - off * off;
                    if det == 0.0 {
                        return Err(Error::NumericalBreakdown(format!(
                            "singular 2x2 pivot at row {k}"
                        )));
                    }
                    let (y0, y1) = (y[k], y[k + 1]);
                    y[k] = (c * y0 - off * y1) / det;
                    y[k + 1] = (a * y1 - off * y0) / det;
                }
            }
        }
        // Lᵀ x = y
        for p in self.pivots.iter().rev() {
            match *p {
                Pivot::One { k, .. } => {
                    let mut s = y[k];
                    for i in k + 1..n {
                        s -= self.work[at(i, k)] * y[i];
                    }
                    y[k] = s;
                }
                Pivot::Two { k, .. } => {
                    let (mut s0, mut s1) = (y[k], y[k + 1]);
                    for i in k + 2..n {
                        s0 -= self.work[at(i, k)] * y[i];
                        s1 -= self.work[at(i, k + 1)] * y[i];
                    }
                    y[k] = s0;
                    y[k + 1] = s1;
                }
            }
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = y[i];
        }
        Ok(())
    }
}
