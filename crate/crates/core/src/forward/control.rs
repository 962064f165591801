use crate::error::{Error, Result};

/// Nondecreasing cumulative control, stored as per-step increments.
///
/// `increments[k][j]` is `ξ(t_{k+1}, x) - ξ(t_k, x)` at interior node `j + 1`;
/// it acts at the end of step `k`, so `u(t_k)` is the pre-jump value.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularControl {
    increments: Vec<Vec<f64>>,
}

impl SingularControl {
    pub fn zero(n_steps: usize, n_cells: usize) -> Self {
        Self { increments: vec![vec![0.0; n_cells]; n_steps] }
    }

    pub fn from_increments(increments: Vec<Vec<f64>>) -> Result<Self> {
        check_rectangular(&increments)?;
        for (k, row) in increments.iter().enumerate() {
            if let Some(j) = row.iter().position(|d| !(*d >= 0.0) || !d.is_finite()) {
                return Err(Error::InvalidProblem(format!(
                    "control increment at step {k}, node {} is negative or not finite",
                    j + 1
                )));
            }
        }
        Ok(Self { increments })
    }

    /// Constant harvesting rate: every increment equals `rate * dt`.
    pub fn constant_rate(n_steps: usize, n_cells: usize, rate: f64, dt: f64) -> Result<Self> {
        Self::from_increments(vec![vec![rate * dt; n_cells]; n_steps])
    }

    /// Builds a control from cumulative values `xi[k][j]`, `k = 0..=n_steps`.
    pub fn from_cumulative(cumulative: &[Vec<f64>]) -> Result<Self> {
        if cumulative.first().map_or(true, |c| c.iter().any(|v| *v != 0.0)) {
            return Err(Error::InvalidProblem("cumulative control must start at zero".into()));
        }
        let inc = cumulative
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
            .collect();
        Self::from_increments(inc)
    }

    pub fn increments(&self) -> &[Vec<f64>] {
        &self.increments
    }

    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k]
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn n_cells(&self) -> usize {
        self.increments.first().map_or(0, |r| r.len())
    }

    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        let mut acc = vec![0.0; self.n_cells()];
        let mut out = vec![acc.clone()];
        for row in &self.increments {
            for (a, d) in acc.iter_mut().zip(row) {
                *a += d;
            }
            out.push(acc.clone());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.increments.iter().flatten().all(|d| *d == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_increments(self.map(|d| d * factor))
    }

    pub fn perturbed(&self, zeta: &Perturbation, eps: f64) -> Result<Self> {
        zeta.check_admissible(self)?;
        let inc = self
            .increments
            .iter()
            .zip(zeta.increments())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + eps * y).max(0.0)).collect())
            .collect();
        Self::from_increments(inc)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
        self.increments.iter().map(|r| r.iter().map(|d| f(*d)).collect()).collect()
    }
}

/// Finite-variation control direction `ζ(dt, x)`; increments may be negative
/// where the base control charges.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    increments: Vec<Vec<f64>>,
}

impl Perturbation {
    pub fn new(increments: Vec<Vec<f64>>) -> Result<Self> {
        check_rectangular(&increments)?;
        Ok(Self { increments })
    }

    pub fn zero(n_steps: usize, n_cells: usize) -> Self {
        Self { increments: vec![vec![0.0; n_cells]; n_steps] }
    }

    pub fn increments(&self) -> &[Vec<f64>] {
        &self.increments
    }

    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { increments: self.increments.iter().map(|r| r.iter().map(|d| d * factor).collect()).collect() }
    }

    /// `base + eps * self` stays nondecreasing for all small `eps > 0`:
    /// a negative increment is only allowed where the base increment is positive.
    pub fn check_admissible(&self, base: &SingularControl) -> Result<()> {
        if self.increments.len() != base.n_steps() || self.increments.first().map(|r| r.len()) != Some(base.n_cells()) {
            return Err(Error::ShapeMismatch("perturbation and control shapes differ".into()));
        }
        for (k, (z, x)) in self.increments.iter().zip(base.increments()).enumerate() {
            for (j, (dz, dx)) in z.iter().zip(x).enumerate() {
                if !dz.is_finite() || (*dz < 0.0 && *dx <= 0.0) {
                    return Err(Error::InadmissiblePerturbation { step: k, node: j + 1 });
                }
            }
        }
        Ok(())
    }
}

fn check_rectangular(rows: &[Vec<f64>]) -> Result<()> {
    let n = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch("control increments must be a non-empty rectangle".into()));
    }
    Ok(())
}
