//! Problem definitions: generic systems, the coupled oscillator benchmarks and
//! their named parameter presets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};
use crate::transform_chain::{Coefficient, Monomial, PolyBoundSpec};

/// One term `amplitude * sin(omega * t + phase)` of a matrix function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub amplitude: Vec<Vec<f64>>,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `B(t) = constant + t * linear + sum_j amplitude_j * sin(omega_j t + phase_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFunction {
    pub constant: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub harmonics: Vec<Harmonic>,
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

fn check_square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<()> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return invalid_config(format!("{what} must be {n}x{n}"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return invalid_config(format!("{what} has non-finite entries"));
    }
    Ok(())
}

impl MatrixFunction {
    pub fn constant(m: &DMatrix<f64>) -> Self {
        Self {
            constant: matrix_rows(m),
            linear: None,
            harmonics: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return invalid_config("matrix function has dimension 0");
        }
        check_square(&self.constant, n, "constant part")?;
        if let Some(l) = &self.linear {
            check_square(l, n, "linear part")?;
        }
        for h in &self.harmonics {
            check_square(&h.amplitude, n, "harmonic amplitude")?;
            if !h.omega.is_finite() || !h.phase.is_finite() {
                return invalid_config("harmonic frequency and phase must be finite");
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let mut b = rows_to_matrix(&self.constant);
        if let Some(l) = &self.linear {
            b += rows_to_matrix(l) * t;
        }
        for h in &self.harmonics {
            b += rows_to_matrix(&h.amplitude) * (h.omega * t + h.phase).sin();
        }
        b
    }

    /// Time average over all t of the bounded part (the constant matrix) when
    /// there is no linear drift.
    pub fn mean(&self) -> Option<DMatrix<f64>> {
        if self.linear.is_some() || self.harmonics.iter().any(|h| h.omega == 0.0) {
            return None;
        }
        Some(rows_to_matrix(&self.constant))
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// One sinusoidal forcing entry on a state component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingTerm {
    /// Zero-based state index.
    pub component: usize,
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// External forcing `F(t) = F0 * eta(t)` built from sinusoids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forcing {
    #[serde(default)]
    pub terms: Vec<ForcingTerm>,
}

impl Forcing {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn value(&self, t: f64, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for term in &self.terms {
            out[term.component] += term.amplitude * (term.frequency * t + term.phase).sin();
        }
        out
    }

    /// Amplitude `F0`: the 2-norm of the per-component sums of absolute
    /// amplitudes. This bounds `sup |F(t)|` and equals it when each component
    /// carries a single sinusoid and the phases can align.
    pub fn f0(&self, n: usize) -> f64 {
        let mut per = vec![0.0; n];
        for term in &self.terms {
            per[term.component] += term.amplitude.abs();
        }
        per.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Normalized profile `eta(t) = F(t) / F0` (zero when unforced).
    pub fn eta(&self, t: f64, n: usize) -> DVector<f64> {
        let f0 = self.f0(n);
        if f0 == 0.0 {
            DVector::zeros(n)
        } else {
            self.value(t, n) / f0
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oscillator {
    VanDerPol,
    Duffing,
}

/// Parameters of the coupled oscillator benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub omega1_sq: f64,
    pub omega2_sq: f64,
    pub kappa: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub omega11: f64,
    pub omega12: f64,
    pub omega21: f64,
    pub omega22: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub f1: f64,
    pub f2: f64,
    pub q1: f64,
    pub q2: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            alpha1: 0.4,
            alpha2: 0.2,
            omega1_sq: 1.0,
            omega2_sq: 4.0,
            kappa: 0.1,
            a11: 0.0,
            a12: 0.0,
            a21: 0.0,
            a22: 0.0,
            omega11: 20.0,
            omega12: 1.0,
            omega21: 10.0,
            omega22: 0.5,
            eps1: 0.5,
            eps2: 0.5,
            f1: 0.0,
            f2: 0.0,
            q1: 5.43,
            q2: 10.0,
        }
    }
}

impl BenchmarkParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha1, self.alpha2, self.omega1_sq, self.omega2_sq, self.kappa, self.a11,
            self.a12, self.a21, self.a22, self.omega11, self.omega12, self.omega21, self.omega22,
            self.eps1, self.eps2, self.f1, self.f2, self.q1, self.q2,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid_config("benchmark parameters must be finite");
        }
        if self.omega1_sq <= 0.0 || self.omega2_sq <= 0.0 {
            return invalid_config("squared stiffness frequencies must be positive");
        }
        if self.eps1 < 0.0 || self.eps2 < 0.0 {
            return invalid_config("cubic gains must be nonnegative");
        }
        if self.f1 < 0.0 || self.f2 < 0.0 {
            return invalid_config("forcing amplitudes must be nonnegative");
        }
        Ok(())
    }

    /// Constant part of the linear block.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let k = self.kappa;
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0,
                -(self.omega1_sq + k), -self.alpha1, k, 0.0,
                0.0, 0.0, 0.0, 1.0,
                k, 0.0, -(self.omega2_sq + k), -self.alpha2,
            ],
        )
    }

    fn linear_block(&self) -> MatrixFunction {
        let mut harmonics = Vec::new();
        // chi_11 = chi_22 enter at (2,1) and (4,3); chi_12 = chi_21 at (2,2) and (4,2)
        let mut push = |amp: f64, omega: f64, cells: [(usize, usize); 2]| {
            if amp != 0.0 {
                let mut m = vec![vec![0.0; 4]; 4];
                for (i, j) in cells {
                    m[i][j] = -amp;
                }
                harmonics.push(Harmonic {
                    amplitude: m,
                    omega,
                    phase: 0.0,
                });
            }
        };
        push(self.a11, self.omega11, [(1, 0), (3, 2)]);
        push(self.a12, self.omega12, [(1, 0), (3, 2)]);
        push(self.a21, self.omega21, [(1, 1), (3, 1)]);
        push(self.a22, self.omega22, [(1, 1), (3, 1)]);
        MatrixFunction {
            constant: matrix_rows(&self.a_matrix()),
            linear: None,
            harmonics,
        }
    }

    fn forcing(&self) -> Forcing {
        let mut terms = Vec::new();
        if self.f1 != 0.0 {
            terms.push(ForcingTerm { component: 1, amplitude: self.f1, frequency: self.q1, phase: 0.0 });
        }
        if self.f2 != 0.0 {
            terms.push(ForcingTerm { component: 3, amplitude: self.f2, frequency: self.q2, phase: 0.0 });
        }
        Forcing { terms }
    }
}

/// Full problem `x' = B(t)x + f(t, x) + F0 eta(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub b: MatrixFunction,
    #[serde(default)]
    pub nonlinearity: PolyBoundSpec,
    #[serde(default)]
    pub forcing: Forcing,
    #[serde(default)]
    pub t0: f64,
    /// Benchmark parameters this system was built from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<(Oscillator, BenchmarkParams)>,
}

impl SystemSpec {
    pub fn linear(b: MatrixFunction) -> Self {
        Self {
            b,
            nonlinearity: PolyBoundSpec::default(),
            forcing: Forcing::none(),
            t0: 0.0,
            benchmark: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.b.validate()?;
        let n = self.dim();
        if !self.t0.is_finite() {
            return invalid_config("t0 must be finite");
        }
        for term in &self.nonlinearity.terms {
            if term.component >= n || term.exponents.len() != n {
                return invalid_config("nonlinearity term does not match the system dimension");
            }
        }
        self.nonlinearity.validate()?;
        for term in &self.forcing.terms {
            if term.component >= n {
                return invalid_config("forcing component out of range");
            }
            if !(term.amplitude.is_finite() && term.frequency.is_finite() && term.phase.is_finite()) {
                return invalid_config("forcing terms must be finite");
            }
        }
        Ok(())
    }

    pub fn b_at(&self, t: f64) -> DMatrix<f64> {
        self.b.eval(t)
    }

    pub fn f0(&self) -> f64 {
        self.forcing.f0(self.dim())
    }

    pub fn eta(&self, t: f64) -> DVector<f64> {
        self.forcing.eta(t, self.dim())
    }

    /// Right-hand side of the full system.
    pub fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let n = self.dim();
        let b = self.b_at(t);
        for i in 0..n {
            dx[i] = (0..n).map(|j| b[(i, j)] * x[j]).sum();
        }
        self.nonlinearity.accumulate(t, x, dx);
        for term in &self.forcing.terms {
            dx[term.component] += term.amplitude * (term.frequency * t + term.phase).sin();
        }
    }

    /// Copy with the forcing removed.
    pub fn homogeneous(&self) -> Self {
        Self {
            forcing: Forcing::none(),
            ..self.clone()
        }
    }
}

/// Coupled Van der Pol-like oscillators with cubic velocity damping.
pub fn vanderpol_like(params: &BenchmarkParams) -> Result<SystemSpec> {
    benchmark(Oscillator::VanDerPol, params)
}

/// Coupled Duffing-like oscillators with cubic stiffness.
pub fn duffing_like(params: &BenchmarkParams) -> Result<SystemSpec> {
    benchmark(Oscillator::Duffing, params)
}

pub fn benchmark(kind: Oscillator, params: &BenchmarkParams) -> Result<SystemSpec> {
    params.validate()?;
    let (c1, c2) = match kind {
        Oscillator::VanDerPol => (1, 3),
        Oscillator::Duffing => (0, 2),
    };
    let cubic = |row: usize, on: usize, eps: f64| Monomial {
        component: row,
        coefficient: Coefficient::Constant(-eps),
        exponents: (0..4).map(|m| if m == on { 3 } else { 0 }).collect(),
    };
    let mut terms = Vec::new();
    if params.eps1 != 0.0 {
        terms.push(cubic(1, c1, params.eps1));
    }
    if params.eps2 != 0.0 {
        terms.push(cubic(3, c2, params.eps2));
    }
    Ok(SystemSpec {
        b: params.linear_block(),
        nonlinearity: monomial_bound(terms)?,
        forcing: params.forcing(),
        t0: 0.0,
        benchmark: Some((kind, *params)),
    })
}

/// Builds the bound specification for a sum of monomials, rejecting constant
/// terms (the field must vanish at the origin).
pub fn monomial_bound(terms: Vec<Monomial>) -> Result<PolyBoundSpec> {
    if terms.iter().any(|t| t.degree() == 0) {
        return invalid_input("degree-0 terms are not allowed: the field must vanish at x = 0");
    }
    Ok(PolyBoundSpec {
        terms,
        whole_space: true,
    })
}

/// What a named preset is meant to demonstrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetTask {
    Scan,
    Bound,
    StabilityRegion,
    TrappingRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub oscillator: Oscillator,
    pub params: BenchmarkParams,
    pub task: PresetTask,
    /// Window length used by the bound and region commands.
    pub delta: f64,
}

impl Preset {
    pub fn system(&self) -> Result<SystemSpec> {
        benchmark(self.oscillator, &self.params)
    }
}

/// Preset names in display order.
pub const PRESET_NAMES: [&str; 18] = [
    "fig1a", "fig1b", "fig1c", "fig1d", "fig1e", "fig1f", "fig3a", "fig3b", "fig3c", "fig3d",
    "fig3e", "fig3f", "fig4a", "fig4b", "fig4c", "fig4d", "fig4e", "fig4f",
];

/// Unit direction of the documented initial vectors for bound presets.
pub fn default_x0_direction() -> [f64; 4] {
    [0.5, 0.5, 0.5, 0.5]
}

pub fn preset(name: &str) -> Option<Preset> {
    use Oscillator::*;
    use PresetTask::*;
    let d = BenchmarkParams::default();
    let (oscillator, params, task, delta) = match name {
        "fig1a" => (VanDerPol, BenchmarkParams { a21: 0.5, a22: 0.5, omega21: 20.0, omega22: 0.1, ..d }, Scan, 14.0),
        "fig1b" => (VanDerPol, BenchmarkParams { a21: 0.5, a22: 0.5, omega21: 20.0, omega22: 1.0, ..d }, Scan, 6.0),
        "fig1c" => (VanDerPol, BenchmarkParams { a21: 0.5, a22: 0.5, omega21: 20.0, omega22: 10.0, ..d }, Scan, 6.0),
        "fig1d" => (VanDerPol, BenchmarkParams { a11: 0.5, a12: 0.5, omega11: 20.0, omega12: 0.1, ..d }, Scan, 6.0),
        "fig1e" => (VanDerPol, BenchmarkParams { a11: 0.5, a12: 0.5, omega11: 20.0, omega12: 1.0, ..d }, Scan, 6.0),
        "fig1f" => (
            VanDerPol,
            BenchmarkParams { a11: 0.5, a12: 0.5, a21: 0.5, a22: 0.5, omega11: 20.0, omega12: 1.0, omega21: 10.0, omega22: 1.0, ..d },
            Scan,
            4.0,
        ),
        "fig3a" => (VanDerPol, all_amp(d, 0.5), Bound, 4.0),
        "fig3b" => (VanDerPol, BenchmarkParams { a21: 0.1, a22: 0.1, ..d }, Bound, 3.0),
        "fig3c" => (VanDerPol, BenchmarkParams { a21: 0.1, a22: 0.1, f1: 0.025, ..d }, Bound, 3.0),
        "fig3d" => (VanDerPol, BenchmarkParams { a21: 0.1, a22: 0.1, f1: 0.05, ..d }, Bound, 3.0),
        "fig3e" => (VanDerPol, all_amp(d, 0.1), StabilityRegion, 3.0),
        "fig3f" => (VanDerPol, BenchmarkParams { f1: 0.025, ..all_amp(d, 0.1) }, TrappingRegion, 3.0),
        "fig4a" => (Duffing, all_amp(duffing_freqs(d), 0.5), Bound, 2.5),
        "fig4b" => (Duffing, BenchmarkParams { a21: 0.1, a22: 0.1, ..d }, Bound, 3.0),
        "fig4c" => (Duffing, all_amp(duffing_freqs(d), 0.1), StabilityRegion, 2.5),
        "fig4d" => (Duffing, BenchmarkParams { f1: 0.01, ..all_amp(duffing_freqs(d), 0.1) }, Bound, 2.5),
        "fig4e" => (Duffing, BenchmarkParams { f1: 0.025, ..all_amp(duffing_freqs(d), 0.1) }, Bound, 2.5),
        "fig4f" => (Duffing, BenchmarkParams { f1: 0.01, ..all_amp(duffing_freqs(d), 0.1) }, TrappingRegion, 2.5),
        _ => return None,
    };
    let name = PRESET_NAMES.iter().find(|n| **n == name)?;
    Some(Preset { name, oscillator, params, task, delta })
}

fn all_amp(p: BenchmarkParams, a: f64) -> BenchmarkParams {
    BenchmarkParams { a11: a, a12: a, a21: a, a22: a, ..p }
}

fn duffing_freqs(p: BenchmarkParams) -> BenchmarkParams {
    BenchmarkParams { omega11: 0.94, omega12: 2.12, omega21: 20.0, omega22: 0.3, ..p }
}
