//! Adaptive Dormand–Prince 5(4) integrator with dense output.

use crate::error::{invalid_input, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Integration stops once the max-norm of the state exceeds this value.
    pub cap: f64,
    /// Clamp every component at zero after each step.
    pub floor_zero: bool,
    /// Step sizes below `h_min * max(1, |t|)` count as underflow.
    pub h_min: f64,
    pub max_steps: usize,
    /// Land exactly on every output time (needed when the right side has
    /// kinks at those times, e.g. piecewise-linear coefficients).
    pub stop_at_outputs: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            cap: 1e6,
            floor_zero: false,
            h_min: 1e-14,
            max_steps: 5_000_000,
            stop_at_outputs: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Solution sampled at the requested output times. When the cap was crossed,
/// `diverged_at` holds the crossing time and `t`/`y` stop before it.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub stats: SolverStats,
    pub diverged_at: Option<f64>,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Dense-output polynomial of one accepted step.
struct Dense {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl Dense {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        for i in 0..out.len() {
            out[i] = self.r[0][i]
                + th * (self.r[1][i]
                    + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
    }
}

/// Large and still growing state.
fn escaping(y: &[f64], dy: &[f64], cap: f64) -> bool {
    y.iter()
        .zip(dy)
        .any(|(v, d)| v.abs() > 1e-3 * cap && v * d > 0.0)
}

fn max_abs(y: &[f64]) -> f64 {
    y.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Integrates `y' = f(t, y)` from `outputs[0]` to the last output time and
/// returns the state at every output time (`outputs` must be increasing).
pub fn solve<F>(mut f: F, y0: &[f64], outputs: &[f64], opts: &OdeOptions) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if outputs.len() < 2 || outputs.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid_input("output times must be strictly increasing (at least 2)");
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return invalid_input("initial state must be finite");
    }
    if !(opts.rtol > 0.0 && opts.atol >= 0.0) {
        return invalid_input("tolerances must be positive");
    }
    let n = y0.len();
    let t_end = outputs[outputs.len() - 1];
    let mut t = outputs[0];
    let mut y = y0.to_vec();
    let mut stats = SolverStats::default();
    let mut sol = OdeSolution {
        t: vec![t],
        y: vec![y.clone()],
        stats,
        diverged_at: None,
    };
    if max_abs(&y) > opts.cap {
        sol.diverged_at = Some(t);
        sol.t.clear();
        sol.y.clear();
        return Ok(sol);
    }
    let mut next_out = 1;

    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(t, &y, &mut k[0]);
    stats.evaluations += 1;

    let span = t_end - t;
    let mut h = initial_step(&mut f, t, &y, &k[0], span, opts, &mut stats);

    while next_out < outputs.len() {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::Numeric(format!("step budget exhausted at t = {t}")));
        }
        let target = if opts.stop_at_outputs { outputs[next_out] } else { t_end };
        let mut last = false;
        if t + h >= target - 1e-12 * target.abs().max(1.0) {
            h = target - t;
            last = true;
        }
        if h < opts.h_min * t.abs().max(1.0) {
            if escaping(&y, &k[0], opts.cap) {
                // finite-time blow-up: the singularity is closer than the minimal step
                sol.diverged_at = Some(t);
                break;
            }
            return Err(Error::StepUnderflow { t });
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k[0][i];
        }
        f(t + C2 * h, &ytmp, &mut k[1]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        f(t + C3 * h, &ytmp, &mut k[2]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        f(t + C4 * h, &ytmp, &mut k[3]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        f(t + C5 * h, &ytmp, &mut k[4]);
        for i in 0..n {
            ytmp[i] = y[i]
                + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
        }
        let t_new = if last { target } else { t + h };
        f(t_new, &ytmp, &mut k[5]);
        for i in 0..n {
            ynew[i] = y[i]
                + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        f(t_new, &ynew, &mut k[6]);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        let err = if n == 0 { 0.0 } else { (err / n as f64).sqrt() };
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            continue;
        }

        let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
        if err > 1.0 {
            stats.rejected += 1;
            h *= fac.min(1.0);
            continue;
        }
        stats.steps += 1;

        let dense = Dense {
            t0: t,
            h,
            r: [
                y.clone(),
                (0..n).map(|i| ynew[i] - y[i]).collect(),
                (0..n).map(|i| h * k[0][i] - (ynew[i] - y[i])).collect(),
                (0..n)
                    .map(|i| (ynew[i] - y[i]) - h * k[6][i] - (h * k[0][i] - (ynew[i] - y[i])))
                    .collect(),
                (0..n)
                    .map(|i| {
                        h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i]
                            + D6 * k[5][i]
                            + D7 * k[6][i])
                    })
                    .collect(),
            ],
        };

        if opts.floor_zero {
            for v in ynew.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }

        let crossed = max_abs(&ynew) > opts.cap || ynew.iter().any(|v| !v.is_finite());
        let t_stop = if crossed {
            locate_crossing(&dense, opts.cap, n)
        } else {
            t_new
        };

        let mut buf = vec![0.0; n];
        while next_out < outputs.len() && outputs[next_out] <= t_stop {
            let to = outputs[next_out];
            if to == t_new && !crossed {
                buf.copy_from_slice(&ynew);
            } else {
                dense.eval(to, &mut buf);
                if opts.floor_zero {
                    buf.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            sol.t.push(to);
            sol.y.push(buf.clone());
            next_out += 1;
        }
        if crossed {
            sol.diverged_at = Some(t_stop);
            break;
        }

        t = t_new;
        std::mem::swap(&mut y, &mut ynew);
        k.swap(0, 6);
        if opts.floor_zero && y.iter().zip(&ynew).any(|(a, b)| a != b) {
            // floor changed the state, so the FSAL derivative is stale
            f(t, &y, &mut k[0]);
            stats.evaluations += 1;
        }
        h *= if last { fac.max(1.0) } else { fac };
        if last && !opts.stop_at_outputs {
            break;
        }
        h = h.min(span);
    }
    stats.evaluations = stats.evaluations.max(1);
    sol.stats = stats;
    Ok(sol)
}

fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    opts: &OdeOptions,
    stats: &mut SolverStats,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len().max(1);
    let sc = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = (y.iter().enumerate().map(|(i, v)| (v / sc(i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v / sc(i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    f(t + h0, &y1, &mut f1);
    stats.evaluations += 1;
    let d2 = (f1
        .iter()
        .zip(f0)
        .enumerate()
        .map(|(i, (a, b))| ((a - b) / sc(i)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Bisects the dense output for the first time the max-norm reaches `cap`.
fn locate_crossing(dense: &Dense, cap: f64, n: usize) -> f64 {
    let mut buf = vec![0.0; n];
    let (mut lo, mut hi) = (dense.t0, dense.t0 + dense.h);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        dense.eval(mid, &mut buf);
        if max_abs(&buf) > cap || buf.iter().any(|v| !v.is_finite()) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::uniform_grid;

    #[test]
    fn exponential_decay() {
        let g = uniform_grid(0.0, 10.0, 0.5);
        let s = solve(|_, y, d| d[0] = -y[0], &[1.0], &g, &OdeOptions::default()).unwrap();
        for (t, y) in s.t.iter().zip(&s.y) {
            assert!((y[0] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let g = uniform_grid(0.0, 20.0, 0.01);
        let s = solve(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            &[1.0, 0.0],
            &g,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in s.t.iter().zip(&s.y) {
            assert!((y[0] - t.cos()).abs() < 1e-8);
            assert!((y[1] + t.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn growth_hits_cap() {
        let g = uniform_grid(0.0, 20.0, 0.1);
        let s = solve(|_, y, d| d[0] = y[0], &[1.0], &g, &OdeOptions::default()).unwrap();
        let td = s.diverged_at.unwrap();
        assert!((td - 1e6f64.ln()).abs() < 1e-6);
        assert!(*s.t.last().unwrap() <= td);
    }

    #[test]
    fn cubic_blow_up_is_divergence() {
        // z' = z^3, z0 = 1 blows up at t = 1/2
        let g = uniform_grid(0.0, 1.0, 0.01);
        let s = solve(|_, y, d| d[0] = y[0].powi(3), &[1.0], &g, &OdeOptions::default()).unwrap();
        assert!((s.diverged_at.unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn floor_keeps_nonnegative() {
        let g = uniform_grid(0.0, 5.0, 0.1);
        let opts = OdeOptions { floor_zero: true, ..Default::default() };
        let s = solve(|_, _, d| d[0] = -1.0, &[0.5], &g, &opts).unwrap();
        assert!(s.y.iter().all(|y| y[0] >= 0.0));
    }

    #[test]
    fn rejects_bad_output_grid() {
        assert!(solve(|_, _, _| {}, &[0.0], &[0.0, 0.0], &OdeOptions::default()).is_err());
    }
}
