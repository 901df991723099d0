//! Reference computations that share no code with the library under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Symmetric matrix with eigenvalues drawn uniformly from `[lo, hi]`, the
/// extremes pinned so that `m_f = lo` and `L_f = hi` exactly.
pub fn spd_with_spectrum<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = gaussian_matrix(rng, n, n).qr().q();
    let mut eig: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    eig[0] = lo;
    if n > 1 {
        eig[1] = hi;
    }
    &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose()
}

fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Moreau envelope of `g` at `v` by brute-force minimization over a 1-D grid
/// of half-width `radius` around `v`, followed by golden-section refinement.
pub fn grid_envelope_1d(g: impl Fn(f64) -> f64, v: f64, mu: f64, radius: f64) -> f64 {
    let phi = |x: f64| g(x) + (x - v) * (x - v) / (2.0 * mu);
    let n = 20_001;
    let h = 2.0 * radius / (n - 1) as f64;
    let (mut best_x, mut best) = (v, phi(v));
    for k in 0..n {
        let x = v - radius + k as f64 * h;
        let val = phi(x);
        if val < best {
            best = val;
            best_x = x;
        }
    }
    let (mut a, mut b) = (best_x - h, best_x + h);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if phi(c) < phi(d) {
            b = d;
        } else {
            a = c;
        }
    }
    phi(0.5 * (a + b)).min(best)
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut p = x.clone();
        let mut m = x.clone();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

/// Composite instance `½xᵀQx + qᵀx + w‖x‖₁` s.t. `Cx + b = 0`.
#[derive(Debug, Clone)]
pub struct QpL1 {
    pub q_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub weight: f64,
    pub c: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QpL1 {
    pub fn n(&self) -> usize {
        self.q_vec.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }
}

/// All sign patterns in `{−1, 0, +1}ⁿ`.
fn patterns(n: usize) -> impl Iterator<Item = Vec<i8>> {
    (0..3usize.pow(n as u32)).map(move |mut code| {
        (0..n)
            .map(|_| {
                let s = (code % 3) as i8 - 1;
                code /= 3;
                s
            })
            .collect()
    })
}

fn region_ok(v: f64, s: i8, t: f64) -> bool {
    let slack = 1e-10 * (1.0 + v.abs());
    match s {
        1 => v >= t - slack,
        -1 => v <= -t + slack,
        _ => v.abs() <= t + slack,
    }
}

/// Equilibrium `(x, λ)` of
/// `ẋ = (prox_{μg}(x − μ∇f) − x)/μ − Cᵀλ`, `λ̇ = k_p C ẋ + k_i (Cx + b)`,
/// found by solving the affine system on each soft-threshold region.
pub fn static_equilibrium(p: &QpL1, mu: f64) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (p.n(), p.m());
    let t = mu * p.weight;
    for pat in patterns(n) {
        let mut a = DMatrix::zeros(n + m, n + m);
        let mut r = DVector::zeros(n + m);
        for i in 0..n {
            if pat[i] == 0 {
                // prox = 0: −x − μ(Cᵀλ) = 0
                a[(i, i)] = -1.0;
                for j in 0..m {
                    a[(i, n + j)] = -mu * p.c[(j, i)];
                }
            } else {
                // Qx + Cᵀλ = −q − w·s
                for k in 0..n {
                    a[(i, k)] = p.q_mat[(i, k)];
                }
                for j in 0..m {
                    a[(i, n + j)] = p.c[(j, i)];
                }
                r[i] = -p.q_vec[i] - p.weight * f64::from(pat[i]);
            }
        }
        for j in 0..m {
            for k in 0..n {
                a[(n + j, k)] = p.c[(j, k)];
            }
            r[n + j] = -p.b[j];
        }
        let Some(sol) = a.lu().solve(&r) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let lambda = sol.rows(n, m).into_owned();
        let v = &x - (&p.q_mat * &x + &p.q_vec) * mu;
        if (0..n).all(|i| region_ok(v[i], pat[i], t)) {
            return Some((x, lambda));
        }
    }
    None
}

/// Equilibrium `(x, α)` of the unconstrained dynamic loop
/// `ẋ = −∇f − ∇M(x+μα)`, `α̇ = k₁∇f + k₂α + k₃∇M(x+μα)` for `g = w‖·‖₁`.
pub fn dynamic_unconstrained_equilibrium(
    p: &QpL1,
    mu: f64,
    k1: f64,
    k2: f64,
    k3: f64,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.n();
    let t = mu * p.weight;
    for pat in patterns(n) {
        // unknowns (x, α); rows 0..n: ∇f + ∇M = 0, rows n..2n: α̇ = 0
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        let mut r = DVector::zeros(2 * n);
        for i in 0..n {
            for k in 0..n {
                a[(i, k)] = p.q_mat[(i, k)];
                a[(n + i, k)] = k1 * p.q_mat[(i, k)];
            }
            r[i] = -p.q_vec[i];
            r[n + i] = -k1 * p.q_vec[i];
            a[(n + i, n + i)] += k2;
            if pat[i] == 0 {
                // ∇M_i = (x_i + μα_i)/μ
                a[(i, i)] += 1.0 / mu;
                a[(i, n + i)] += 1.0;
                a[(n + i, i)] += k3 / mu;
                a[(n + i, n + i)] += k3;
            } else {
                let gm = p.weight * f64::from(pat[i]);
                r[i] -= gm;
                r[n + i] -= k3 * gm;
            }
        }
        let Some(sol) = a.lu().solve(&r) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let alpha = sol.rows(n, n).into_owned();
        let v = &x + &alpha * mu;
        if (0..n).all(|i| region_ok(v[i], pat[i], t)) {
            return Some((x, alpha));
        }
    }
    None
}

/// Minimizer of `½xᵀQx + qᵀx + w‖x‖₁` s.t. `Cx + b = 0`: the KKT system on
/// each sign region, accepting the one whose multipliers certify
/// `|∇f + Cᵀλ|ᵢ ≤ w` on the zero set.
pub fn constrained_minimizer(p: &QpL1) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (p.n(), p.m());
    for pat in patterns(n) {
        let mut a = DMatrix::zeros(n + m, n + m);
        let mut r = DVector::zeros(n + m);
        for i in 0..n {
            if pat[i] == 0 {
                a[(i, i)] = 1.0;
            } else {
                for k in 0..n {
                    a[(i, k)] = p.q_mat[(i, k)];
                }
                for j in 0..m {
                    a[(i, n + j)] = p.c[(j, i)];
                }
                r[i] = -p.q_vec[i] - p.weight * f64::from(pat[i]);
            }
        }
        for j in 0..m {
            for k in 0..n {
                a[(n + j, k)] = p.c[(j, k)];
            }
            r[n + j] = -p.b[j];
        }
        let Some(sol) = a.lu().solve(&r) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let lambda = sol.rows(n, m).into_owned();
        let grad = &p.q_mat * &x + &p.q_vec + p.c.transpose() * &lambda;
        let tol = 1e-10;
        let ok = (0..n).all(|i| match pat[i] {
            0 => grad[i].abs() <= p.weight + tol,
            s => f64::from(s) * x[i] >= -tol,
        });
        if ok {
            return Some((x, lambda));
        }
    }
    None
}

/// Componentwise soft threshold.
pub fn soft(v: &DVector<f64>, t: f64) -> DVector<f64> {
    v.map(|x| shrink(x, t))
}

/// Theorem-1 certificate recomputed from the closed forms:
/// `(feasible, rate, kp, rho)`.
pub fn t1_reference(
    m_f: f64,
    l_f: f64,
    mu: f64,
    k_i: f64,
    eps: f64,
    a1: f64,
) -> (bool, f64, f64, f64) {
    let c = l_f + 1.0 / mu;
    let bound = 3.0 * m_f / (4.0 * c - 3.0 * m_f);
    let kp = eps * k_i / c;
    let rho = (1.0 - eps) * k_i;
    let r1 = 1.5 * m_f * (1.0 + eps) / (1.0 - eps) - 2.0 * eps * c / (1.0 - eps);
    let rate = if r1 < kp * a1 { r1 } else { kp * a1 };
    let ok = m_f > 0.0
        && l_f >= m_f
        && mu > 0.0
        && k_i > 0.0
        && a1 > 0.0
        && eps > 0.0
        && eps < bound
        && rate > 0.0;
    (ok, if ok { rate } else { 0.0 }, kp, rho)
}

/// Theorem-3 certificate from the closed forms: `(feasible, rate, k2crit)`.
pub fn t3_reference(k1: f64, k2: f64, k3: f64, mu: f64, m_f: f64, l_f: f64) -> (bool, f64, f64) {
    let crit = -k3 - (k1 * k1 * mu * l_f * l_f) / (2.0 * k3 * m_f);
    let rate = if m_f < -2.0 * (k2 - crit) {
        m_f
    } else {
        -2.0 * (k2 - crit)
    };
    let ok = k1 > 0.0 && k3 > 0.0 && mu > 0.0 && m_f > 0.0 && l_f >= m_f && k2 < crit;
    (ok, if ok { rate } else { 0.0 }, crit)
}

/// Theorem-4 certificate by an explicit scan over `ε_j = ε_max j/1001`:
/// `(feasible, rate)`.
#[allow(clippy::too_many_arguments)]
pub fn t4_reference(
    k1: f64,
    k2: f64,
    k3: f64,
    mu: f64,
    m_f: f64,
    l_f: f64,
    a1: f64,
    k_i: f64,
    k_p: f64,
) -> (bool, f64) {
    if !(k1 > 0.0
        && k3 > 0.0
        && mu > 0.0
        && m_f > 0.0
        && l_f >= m_f
        && k_i > 0.0
        && k_p > 0.0
        && a1 > 0.0)
    {
        return (false, 0.0);
    }
    if (k1 - k3).abs() > 1e-12 * k1.abs().max(k3.abs()).max(1.0) {
        return (false, 0.0);
    }
    let gamma = k1 / (mu * k_i);
    let crit = -k3 - (k1 * k1 * mu * l_f * l_f) / (2.0 * k3 * m_f);
    let cross = -2.0 * k1 * k1 / (gamma * k_p) - 2.0 * k_p * gamma;
    if !(k2 < crit && k2 < cross) {
        return (false, 0.0);
    }
    let s = (1.0 / mu + l_f) * (1.0 / mu + l_f);
    let eps_max = -k2 * s;
    let bound = 2.0 * m_f * k1 / mu + k1 * k1 / (mu * k2);
    let terms = [-2.0 * (k2 - crit), k_p * a1, -k2 / 2.0];
    let mut best = f64::NEG_INFINITY;
    for j in 1..=1000 {
        let eps = eps_max * j as f64 / 1001.0;
        let delta = eps - eps * eps / (k2 * s);
        if delta >= bound {
            continue;
        }
        let last = 2.0 * m_f + k1 / k2 - mu * delta / k1;
        let r = terms.iter().copied().fold(last, f64::min);
        best = best.max(r);
    }
    if best > 0.0 {
        (true, best)
    } else {
        (false, 0.0)
    }
}
