//! Chebyshev time propagation for `dx/dt = -A x`.
//!
//! `exp(-dt A) ~ sum_k c_k T_k(S)` with the scaled operator
//! `S = (beta I - A) / alpha`, where `[lambda_min, lambda_max]` bounds the
//! spectrum of `A`, `beta` is its midpoint and `alpha` its half width. Then
//! `exp(-dt lambda) = exp(-beta dt) exp(alpha dt z)` for `z = (beta - lambda) / alpha`,
//! and the generating function of the modified Bessel functions gives
//! `c_k = (2 - delta_k0) exp(-beta dt) I_k(alpha dt)`.
//!
//! The vectors `v_k = T_k(S) x` follow `v_{k+1} = 2 S v_k - v_{k-1}`. Each
//! application of `A` runs through the blocked executor, `p_max` steps per
//! batch, with the recurrence and the accumulation of `c_k v_k` done per row
//! inside the executor.

use std::time::Instant;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exec::{MpkConfig, MpkEngine, PowerVectors, PowerView, RowHook};
use crate::matrix::CrsMatrix;

/// Default coefficient cutoff.
pub const DEFAULT_TOL: f64 = 1e-4;

/// Largest number of series terms before giving up.
pub const MAX_TERMS: usize = 100_000;

/// `exp(-x) I_k(x)` for `k = 0..=n`, `x >= 0`, by downward recurrence
/// normalized with `exp(-x) (I_0 + 2 sum_k I_k) = 1`.
pub fn bessel_i_scaled(x: f64, n: usize) -> Vec<f64> {
    assert!(x >= 0.0 && x.is_finite(), "argument must be finite and non-negative");
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    // exp(-x) I_k(x) ~ exp(-k^2 / 2x) / sqrt(2 pi x), so past ~12 sqrt(x) the
    // tail is far below rounding
    let start = n + 30 + (12.0 * x.sqrt()) as usize;
    let mut vals = vec![0.0f64; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = vals[k + 1] + (2.0 * k as f64 / x) * vals[k];
        if vals[k - 1] > 1e250 {
            for v in &mut vals[k - 1..=start] {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = vals[0];
    for v in &vals[1..=start] {
        norm += 2.0 * v;
    }
    for k in 0..=n.min(start) {
        out[k] = vals[k] / norm;
    }
    out
}

/// Series coefficients of `exp(-dt A)` in Chebyshev polynomials of the scaled operator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChebCoeffs {
    /// `c_0 ..= c_M`.
    pub c: Vec<f64>,
    pub dt: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ChebCoeffs {
    /// Index of the last kept term.
    pub fn m(&self) -> usize {
        self.c.len() - 1
    }

    pub fn beta(&self) -> f64 {
        0.5 * (self.lambda_max + self.lambda_min)
    }

    pub fn alpha(&self) -> f64 {
        0.5 * (self.lambda_max - self.lambda_min)
    }

    /// The first `m + 1` terms.
    pub fn truncated(&self, m: usize) -> Self {
        Self { c: self.c[..=m.min(self.m())].to_vec(), ..self.clone() }
    }

    /// Series value at a scalar `lambda`, by the three-term recurrence.
    pub fn eval(&self, lambda: f64) -> f64 {
        let z = (self.beta() - lambda) / self.alpha();
        let (mut t0, mut t1) = (1.0, z);
        let mut sum = self.c[0];
        for (k, &c) in self.c.iter().enumerate().skip(1) {
            if k > 1 {
                let t2 = 2.0 * z * t1 - t0;
                t0 = t1;
                t1 = t2;
            }
            sum += c * t1;
        }
        sum
    }
}

/// Coefficients for one step of length `dt`, keeping terms up to the last
/// one with `|c_k| >= tol`.
pub fn cheb_coeffs_heat(dt: f64, bounds: (f64, f64), tol: f64) -> Result<ChebCoeffs> {
    let (lambda_min, lambda_max) = bounds;
    if !(lambda_max > lambda_min) || !lambda_min.is_finite() || !lambda_max.is_finite() {
        return invalid("need finite spectral bounds with lambda_max > lambda_min");
    }
    if !(dt > 0.0) || !dt.is_finite() || !(tol > 0.0) {
        return invalid("need dt > 0 and tol > 0");
    }
    let alpha = 0.5 * (lambda_max - lambda_min);
    let x = alpha * dt;
    let damp = (-lambda_min * dt).exp();
    let mut n = ((20.0 + 10.0 * x.sqrt()) as usize).min(MAX_TERMS + 1);
    loop {
        let b = bessel_i_scaled(x, n);
        let c: Vec<f64> = b.iter().enumerate().map(|(k, &v)| if k == 0 { damp * v } else { 2.0 * damp * v }).collect();
        let last = c.iter().rposition(|v| v.abs() >= tol).unwrap_or(0);
        if last < n {
            if last > MAX_TERMS {
                break;
            }
            return Ok(ChebCoeffs { c: c[..=last].to_vec(), dt, lambda_min, lambda_max });
        }
        if n > MAX_TERMS {
            break;
        }
        n = (2 * n).min(MAX_TERMS + 1);
    }
    Err(Error::SeriesCutoff { tol, cap: MAX_TERMS })
}

/// Gershgorin bounds on the real spectrum of `a`, widened to a non-empty interval.
pub fn gershgorin_bounds(a: &CrsMatrix) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in 0..a.n_rows() {
        let (cols, vals) = a.row(r);
        let mut diag = 0.0;
        let mut radius = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c as usize == r {
                diag += v;
            } else {
                radius += v.abs();
            }
        }
        lo = lo.min(diag - radius);
        hi = hi.max(diag + radius);
    }
    if !(hi > lo) {
        let w = lo.abs().max(1.0) * 1e-3;
        (lo - w, hi + w)
    } else {
        (lo, hi)
    }
}

#[derive(Clone, Copy)]
struct AccPtr(*mut f64);
// SAFETY: each accumulator row is updated only by the worker owning that row.
unsafe impl Send for AccPtr {}
unsafe impl Sync for AccPtr {}

/// Recurrence step `k0 + p` for the batch starting at `v_{k0}`.
struct RecurrenceHook<'a> {
    coeffs: &'a [f64],
    k0: usize,
    beta: f64,
    alpha: f64,
    /// `v_{k0 - 1}` when `k0 > 0`.
    prev: Option<&'a [f64]>,
    acc: AccPtr,
}

impl RowHook for RecurrenceHook<'_> {
    #[inline]
    fn value(&self, p: usize, row: usize, ax: f64, earlier: &PowerView<'_>) -> f64 {
        let k = self.k0 + p;
        let s = (self.beta * earlier.get(p - 1) - ax) / self.alpha;
        let v = if k == 1 {
            s
        } else {
            let older = if p >= 2 { earlier.get(p - 2) } else { self.prev.expect("previous vector")[row] };
            2.0 * s - older
        };
        // SAFETY: see AccPtr.
        unsafe { *self.acc.0.add(row) += self.coeffs[k] * v };
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepTiming {
    pub step: usize,
    pub seconds: f64,
    pub gflops: f64,
    /// 2-norm of the state after the step.
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct Propagation {
    pub x: Vec<f64>,
    pub steps: Vec<StepTiming>,
}

/// Chebyshev stepper with batches of `p_max` applications of `A`.
#[derive(Clone, Debug)]
pub struct ChebPropagator {
    coeffs: ChebCoeffs,
    batch: usize,
    main: MpkEngine,
    rest: Option<MpkEngine>,
}

impl ChebPropagator {
    /// `config.p_max` is the batch size.
    pub fn new(a: &CrsMatrix, coeffs: ChebCoeffs, config: MpkConfig) -> Result<Self> {
        if coeffs.c.is_empty() {
            return invalid("no coefficients");
        }
        let batch = config.p_max;
        let main = MpkEngine::new(a, config)?;
        let r = coeffs.m() % batch;
        let rest = if r > 0 { Some(main.with_power(r)?) } else { None };
        Ok(Self { coeffs, batch, main, rest })
    }

    pub fn coeffs(&self) -> &ChebCoeffs {
        &self.coeffs
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Flops of one step counting only the `M` matrix applications.
    pub fn flops_per_step(&self) -> f64 {
        2.0 * self.main.matrix().nnz() as f64 * self.coeffs.m() as f64
    }

    /// `x_{t + dt}` from `x_t`, both in original numbering.
    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let perm = self.main.permutation();
        if x.len() != perm.len() {
            return invalid("vector length does not match matrix");
        }
        Ok(perm.unapply(&self.step_permuted(&perm.apply(x))?))
    }

    fn step_permuted(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c = &self.coeffs.c;
        let m = self.coeffs.m();
        let mut acc: Vec<f64> = x.iter().map(|v| c[0] * v).collect();
        let mut cur = x.to_vec();
        let mut prev: Option<Vec<f64>> = None;
        let mut k = 0;
        while k < m {
            let q = self.batch.min(m - k);
            let engine = if q == self.batch { &self.main } else { self.rest.as_ref().expect("remainder plan") };
            let mut pv = PowerVectors::new(&cur, q);
            let hook = RecurrenceHook {
                coeffs: c,
                k0: k,
                beta: self.coeffs.beta(),
                alpha: self.coeffs.alpha(),
                prev: prev.as_deref(),
                acc: AccPtr(acc.as_mut_ptr()),
            };
            engine.run_with_hook(&mut pv, &hook)?;
            prev = Some(pv.power(q - 1).to_vec());
            cur = pv.power(q).to_vec();
            k += q;
        }
        Ok(acc)
    }

    /// `n_steps` steps from `x0` with per-step timing.
    pub fn propagate(&self, x0: &[f64], n_steps: usize) -> Result<Propagation> {
        if n_steps == 0 {
            return invalid("need at least one step");
        }
        let perm = self.main.permutation();
        if x0.len() != perm.len() {
            return invalid("vector length does not match matrix");
        }
        let mut x = perm.apply(x0);
        let mut steps = Vec::with_capacity(n_steps);
        for step in 0..n_steps {
            let t = Instant::now();
            x = self.step_permuted(&x)?;
            let seconds = t.elapsed().as_secs_f64();
            let gflops = self.flops_per_step() / seconds.max(1e-12) / 1e9;
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            steps.push(StepTiming { step, seconds, gflops, norm });
        }
        Ok(Propagation { x: perm.unapply(&x), steps })
    }
}

/// One step of `exp(-dt A)` applied to `x`.
pub fn cheb_step(a: &CrsMatrix, coeffs: &ChebCoeffs, x: &[f64], config: MpkConfig) -> Result<Vec<f64>> {
    ChebPropagator::new(a, coeffs.clone(), config)?.step(x)
}

/// `n_steps` steps of `exp(-dt A)` from `x0`.
pub fn propagate(
    a: &CrsMatrix,
    coeffs: &ChebCoeffs,
    x0: &[f64],
    n_steps: usize,
    config: MpkConfig,
) -> Result<Propagation> {
    ChebPropagator::new(a, coeffs.clone(), config)?.propagate(x0, n_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Variant;
    use crate::levels::GroupBudget;
    use crate::matrix::{gen_stencil_2d7pt, gen_stencil_3d};

    fn series_i(x: f64, k: usize) -> f64 {
        let mut term = (0.5 * x).powi(k as i32) / (1..=k).map(|i| i as f64).product::<f64>();
        let mut sum = 0.0;
        for m in 0..60 {
            sum += term;
            term *= 0.25 * x * x / ((m + 1) as f64 * (m + k + 1) as f64);
        }
        sum
    }

    #[test]
    fn bessel_matches_series() {
        for x in [0.01, 0.3, 1.0, 2.5, 7.0] {
            let b = bessel_i_scaled(x, 12);
            for k in 0..=12 {
                let want = (-x).exp() * series_i(x, k);
                assert!((b[k] - want).abs() <= 1e-14 + 1e-12 * want, "x {x} k {k}");
            }
        }
    }

    #[test]
    fn bessel_large_argument_normalized() {
        let x = 5000.0;
        let b = bessel_i_scaled(x, 6000);
        let s: f64 = b[0] + 2.0 * b[1..].iter().sum::<f64>();
        assert!((s - 1.0).abs() < 1e-12);
        // asymptotically exp(-x) I_0(x) ~ 1 / sqrt(2 pi x)
        assert!((b[0] * (2.0 * std::f64::consts::PI * x).sqrt() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn tiny_step_is_identity() {
        let c = cheb_coeffs_heat(1e-12, (0.0, 8.0), 1e-4).unwrap();
        assert_eq!(c.m(), 0);
        assert!((c.c[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn series_matches_scalar_exponential() {
        let c = cheb_coeffs_heat(0.1, (0.0, 8.0), 1e-14).unwrap();
        for i in 0..100 {
            let z = -1.0 + 2.0 * i as f64 / 99.0;
            let lambda = c.beta() - c.alpha() * z;
            assert!((c.eval(lambda) - (-0.1 * lambda).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn cutoff_definition() {
        for dt in [0.01, 0.1, 1.0, 10.0] {
            let c = cheb_coeffs_heat(dt, (0.0, 12.0), 1e-4).unwrap();
            let longer = cheb_coeffs_heat(dt, (0.0, 12.0), 1e-300).unwrap();
            let next = longer.c.get(c.m() + 1).copied().unwrap_or(0.0);
            assert!(next.abs() < 1e-4);
            assert!(c.m() == 0 || c.c[c.m()].abs() >= 1e-4);
            assert!(longer.c[c.m() + 1..].iter().all(|v| v.abs() < 1e-4));
        }
    }

    #[test]
    fn cutoff_cap_errors() {
        assert!(matches!(cheb_coeffs_heat(1e8, (0.0, 20.0), 1e-300), Err(Error::SeriesCutoff { .. })));
        assert!(cheb_coeffs_heat(0.0, (0.0, 1.0), 1e-4).is_err());
        assert!(cheb_coeffs_heat(0.1, (1.0, 1.0), 1e-4).is_err());
    }

    #[test]
    fn gershgorin_on_stencil() {
        let a = gen_stencil_3d(4, 2).unwrap();
        assert_eq!(gershgorin_bounds(&a), (0.0, 12.0));
        let z = CrsMatrix::from_triplets(3, &[]).unwrap();
        let (lo, hi) = gershgorin_bounds(&z);
        assert!(lo < 0.0 && hi > 0.0);
    }

    fn config(p: usize) -> MpkConfig {
        MpkConfig::new(Variant::LbLgP2p, p).with_budget(GroupBudget::MaxRows(12))
    }

    #[test]
    fn zero_matrix_gives_alternating_series() {
        let a = CrsMatrix::from_triplets(4, &[]).unwrap();
        let c = cheb_coeffs_heat(0.7, (-1.0, 1.0), 1e-10).unwrap();
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let got = cheb_step(&a, &c, &x, config(3)).unwrap();
        // S = 0 so T_k(S) = cos(k pi / 2)
        let f: f64 = c.c.iter().enumerate().map(|(k, ck)| ck * [1.0, 0.0, -1.0, 0.0][k % 4]).sum();
        for i in 0..4 {
            assert!((got[i] - f * x[i]).abs() < 1e-14);
        }
        assert!((f - 1.0).abs() < 1e-9, "exp(-dt * 0) = 1");
    }

    #[test]
    fn two_terms_are_exact() {
        let a = gen_stencil_2d7pt(5, 5).unwrap();
        let full = cheb_coeffs_heat(0.2, gershgorin_bounds(&a), 1e-8).unwrap();
        let c = full.truncated(1);
        let x: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut ax = vec![0.0; 25];
        a.spmv(&x, &mut ax);
        let got = cheb_step(&a, &c, &x, config(4)).unwrap();
        for i in 0..25 {
            let s = (c.beta() * x[i] - ax[i]) / c.alpha();
            // the executor sums rows in permuted column order
            assert!((got[i] - (c.c[0] * x[i] + c.c[1] * s)).abs() <= 1e-14);
        }
    }

    #[test]
    fn batch_sizes_agree() {
        let a = gen_stencil_2d7pt(8, 8).unwrap();
        let c = cheb_coeffs_heat(0.05, gershgorin_bounds(&a), 1e-10).unwrap();
        let x: Vec<f64> = (0..64).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let base = cheb_step(&a, &c, &x, config(1)).unwrap();
        let norm = base.iter().map(|v| v * v).sum::<f64>().sqrt();
        for p in [2, 3, 4, 8] {
            let y = cheb_step(&a, &c, &x, config(p).with_workers(2)).unwrap();
            let err = y.iter().zip(&base).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= 1e-13 * norm, "batch {p}");
        }
    }

    #[test]
    fn linearity() {
        let a = gen_stencil_2d7pt(6, 6).unwrap();
        let c = cheb_coeffs_heat(0.3, gershgorin_bounds(&a), 1e-8).unwrap();
        let p = ChebPropagator::new(&a, c, config(3)).unwrap();
        let x: Vec<f64> = (0..36).map(|i| (i as f64).cos()).collect();
        let y: Vec<f64> = (0..36).map(|i| (i as f64 * 0.5).sin()).collect();
        let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let (sx, sy, sc) = (p.step(&x).unwrap(), p.step(&y).unwrap(), p.step(&comb).unwrap());
        let norm = sc.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..36 {
            assert!((sc[i] - (2.0 * sx[i] - 0.5 * sy[i])).abs() <= 1e-12 * norm);
        }
    }

    #[test]
    fn propagate_checks_steps() {
        let a = gen_stencil_2d7pt(4, 4).unwrap();
        let c = cheb_coeffs_heat(0.1, gershgorin_bounds(&a), 1e-6).unwrap();
        let x = vec![1.0; 16];
        assert!(propagate(&a, &c, &x, 0, config(2)).is_err());
        let one = propagate(&a, &c, &x, 1, config(2)).unwrap();
        assert_eq!(one.x, cheb_step(&a, &c, &x, config(2)).unwrap());
        assert_eq!(one.steps.len(), 1);
        assert!(cheb_step(&a, &c, &[1.0; 3], config(2)).is_err());
    }
}
