//! Scalar sampled paths: interpolation and quadrature on a shared time grid.

use crate::error::{invalid_input, Result};

/// Checks that `grid` has at least `min_len` finite, strictly increasing samples.
pub fn validate_grid(grid: &[f64], min_len: usize) -> Result<()> {
    if grid.len() < min_len {
        return invalid_input(format!(
            "grid needs at least {min_len} samples, got {}",
            grid.len()
        ));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return invalid_input("grid contains non-finite samples");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid_input("grid must be strictly increasing");
    }
    Ok(())
}

/// Uniform grid `start, start + step, ...` up to and including `end` (within a
/// fraction of a step). The final sample is pinned to `end`.
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && end > start, "uniform_grid: bad arguments");
    let n = ((end - start) / step).round().max(1.0) as usize;
    let h = (end - start) / n as f64;
    (0..=n)
        .map(|i| if i == n { end } else { start + i as f64 * h })
        .collect()
}

/// Index `i` such that `grid[i] <= t <= grid[i + 1]`, clamped to valid cells.
pub fn locate(grid: &[f64], t: f64) -> usize {
    debug_assert!(grid.len() >= 2);
    match grid.binary_search_by(|g| g.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(grid.len() - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(grid.len() - 2),
    }
}

/// Piecewise-linear interpolation of `values` sampled on `grid`. Outside the
/// grid the end values are held.
pub fn interp(grid: &[f64], values: &[f64], t: f64) -> f64 {
    if grid.len() == 1 {
        return values[0];
    }
    if t <= grid[0] {
        return values[0];
    }
    let last = grid.len() - 1;
    if t >= grid[last] {
        return values[last];
    }
    let i = locate(grid, t);
    let w = (t - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + w * (values[i + 1] - values[i])
}

/// Trapezoid rule over the whole grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Running trapezoid integral, starting from zero at `grid[0]`.
pub fn cumulative_trapezoid(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..grid.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
        out.push(acc);
    }
    out
}

/// Indices of the four-point stencil used for cubic interpolation on cell `i`.
fn cubic_stencil(n: usize, i: usize) -> [usize; 4] {
    let start = i.saturating_sub(1).min(n - 4);
    [start, start + 1, start + 2, start + 3]
}

fn lagrange(grid: &[f64], values: &[f64], s: [usize; 4], t: f64) -> f64 {
    let mut acc = 0.0;
    for (a, &j) in s.iter().enumerate() {
        let mut w = 1.0;
        for (b, &k) in s.iter().enumerate() {
            if a != b {
                w *= (t - grid[k]) / (grid[j] - grid[k]);
            }
        }
        acc += w * values[j];
    }
    acc
}

/// Local cubic interpolation through the four nearest samples. Falls back to
/// linear interpolation on grids with fewer than four points.
pub fn cubic_interp(grid: &[f64], values: &[f64], t: f64) -> f64 {
    if grid.len() < 4 {
        return interp(grid, values, t);
    }
    let t = t.clamp(grid[0], grid[grid.len() - 1]);
    let i = locate(grid, t);
    lagrange(grid, values, cubic_stencil(grid.len(), i), t)
}

/// Running integral of the local cubic interpolant, fourth-order accurate on
/// smooth data. Reduces to the trapezoid rule below four samples.
pub fn cumulative_cubic(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n < 4 {
        return cumulative_trapezoid(grid, values);
    }
    // two-point Gauss is exact for the cubic on each cell
    let g = 0.5 / 3f64.sqrt();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..n - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let (mid, h) = (0.5 * (a + b), b - a);
        let s = cubic_stencil(n, i);
        acc += 0.5 * h * (lagrange(grid, values, s, mid - g * h) + lagrange(grid, values, s, mid + g * h));
        out.push(acc);
    }
    out
}

/// Resamples `values` (on `from`) onto `to` by linear interpolation.
/// Every target time must lie inside the source grid (up to `slack`).
pub fn resample(from: &[f64], values: &[f64], to: &[f64], slack: f64) -> Result<Vec<f64>> {
    let (lo, hi) = (from[0], from[from.len() - 1]);
    if to.iter().any(|&t| t < lo - slack || t > hi + slack) {
        return invalid_input(format!(
            "resampling target outside source coverage [{lo}, {hi}]"
        ));
    }
    Ok(to.iter().map(|&t| interp(from, values, t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulative_cubic_is_exact_on_cubics() {
        let g: Vec<f64> = [0.0, 0.1, 0.35, 0.5, 0.9, 1.0].to_vec();
        let v: Vec<f64> = g.iter().map(|t| t * t * t - 2.0 * t).collect();
        let c = cumulative_cubic(&g, &v);
        for (t, got) in g.iter().zip(&c) {
            assert!((got - (t.powi(4) / 4.0 - t * t)).abs() < 1e-14);
        }
        assert!((cubic_interp(&g, &v, 0.7) - (0.343 - 1.4)).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_is_exact_on_affine_paths() {
        let g = uniform_grid(0.0, 2.0, 0.1);
        let v: Vec<f64> = g.iter().map(|t| 3.0 * t - 1.0).collect();
        assert!((trapezoid(&g, &v) - 4.0).abs() < 1e-12);
        let c = cumulative_trapezoid(&g, &v);
        assert!((c[c.len() - 1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn interp_holds_end_values() {
        let g = [0.0, 1.0, 2.0];
        let v = [1.0, 3.0, 2.0];
        assert_eq!(interp(&g, &v, -1.0), 1.0);
        assert_eq!(interp(&g, &v, 5.0), 2.0);
        assert!((interp(&g, &v, 0.5) - 2.0).abs() < 1e-15);
        assert!((interp(&g, &v, 1.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[0.0, 1.0], 2).is_ok());
        assert!(validate_grid(&[0.0, 0.0], 2).is_err());
        assert!(validate_grid(&[0.0], 2).is_err());
        assert!(validate_grid(&[0.0, f64::NAN], 2).is_err());
    }

    #[test]
    fn uniform_grid_pins_end() {
        let g = uniform_grid(0.0, 1.0, 0.3);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(g.len(), 4);
    }
}
