use super::control::{Perturbation, SingularControl};
use super::noise::NoisePath;
use super::path::FieldPath;
use super::problem::ProblemSpec;
use super::simulate::{check_shapes, Stepper};
use crate::error::{Error, Result};

/// Pathwise derivative of the state in the control direction `zeta`.
///
/// Linearizes the forward scheme itself, so it is the exact derivative of
/// `eps -> u^{xi + eps zeta}` along the discrete path driven by `noise`;
/// the finite-difference error is then O(eps).
pub fn derivative_process(
    spec: &ProblemSpec,
    base: &SingularControl,
    zeta: &Perturbation,
    noise: &NoisePath,
) -> Result<FieldPath> {
    zeta.check_admissible(base)?;
    let stepper = Stepper::new(spec)?;
    check_shapes(spec, base, noise)?;
    let mut u = spec.initial_values();
    let mut z = vec![0.0; spec.grid.n_nodes()];
    let mut fields = Vec::with_capacity(spec.time.n_steps + 1);
    fields.push(spec.field(z.clone()));
    for k in 0..spec.time.n_steps {
        let db = noise.increments[k];
        z = stepper.step_tangent(&u, &z, db, base.step(k), zeta.step(k));
        u = stepper.step(&u, db, base.step(k));
        if z.iter().chain(&u).any(|v| !v.is_finite()) {
            return Err(Error::NanDetected { step: k + 1, seed: noise.seed });
        }
        fields.push(spec.field(z.clone()));
    }
    Ok(FieldPath::new(spec.time.times(), fields))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{simulate_path, GainMode, ModelParams, TimeGrid, TimeScheme};
    use crate::spatial::{build_grid, OperatorSpec};

    fn spec() -> ProblemSpec {
        let g = build_grid(0.0, 1.0, 12).unwrap();
        let mut s = ProblemSpec::harvesting(g, TimeGrid { horizon: 1.0, n_steps: 100 }, ModelParams { alpha: 0.5, beta: 0.2, lambda0: 1.0 }, 0.1);
        s.scheme = TimeScheme::Implicit;
        s
    }

    #[test]
    fn zero_direction_gives_zero() {
        let s = spec();
        let base = SingularControl::constant_rate(100, 12, 0.3, 0.01).unwrap();
        let z = derivative_process(&s, &base, &Perturbation::zero(100, 12), &NoisePath::generate(1, 100, 0.01)).unwrap();
        assert!(z.fields.iter().all(|f| f.values.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn constant_gain_integrates_directly() {
        let mut s = spec();
        s.model = ModelParams { alpha: 0.0, beta: 0.0, lambda0: 2.0 };
        s.op = OperatorSpec::constant(&s.grid, 0.0, 0.0, 0.1);
        s.gain_mode = GainMode::Constant;
        let base = SingularControl::zero(100, 12);
        let zeta = Perturbation::new((0..100).map(|k| vec![0.01 * (k % 3) as f64; 12]).collect()).unwrap();
        let z = derivative_process(&s, &base, &zeta, &NoisePath::generate(2, 100, 0.01)).unwrap();
        let mut cum = 0.0;
        for k in 0..100 {
            cum += zeta.step(k)[0];
            assert!((z.at(k + 1)[3] + 2.0 * cum).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_differences_converge_linearly() {
        let s = spec();
        let base = SingularControl::constant_rate(100, 12, 0.4, 0.01).unwrap();
        let zeta = Perturbation::new((0..100).map(|k| (0..12).map(|j| 0.01 * ((k + j) % 4) as f64).collect()).collect()).unwrap();
        let noise = NoisePath::generate(11, 100, 0.01);
        let z = derivative_process(&s, &base, &zeta, &noise).unwrap();
        let u0 = simulate_path(&s, &base, &noise).unwrap();
        let err = |eps: f64| {
            let ue = simulate_path(&s, &base.perturbed(&zeta, eps).unwrap(), &noise).unwrap();
            let mut worst: f64 = 0.0;
            for k in 0..=100 {
                for i in 0..14 {
                    worst = worst.max(((ue.at(k)[i] - u0.at(k)[i]) / eps - z.at(k)[i]).abs());
                }
            }
            worst
        };
        let (e1, e2) = (err(1e-2), err(1e-3));
        assert!(e1 > 0.0 && (e1 / e2 - 10.0).abs() < 1.0, "{e1} {e2}");
    }

    #[test]
    fn negative_direction_needs_charge() {
        let s = spec();
        let base = SingularControl::zero(100, 12);
        let mut inc = vec![vec![0.0; 12]; 100];
        inc[5][2] = -1.0;
        let err = derivative_process(&s, &base, &Perturbation::new(inc).unwrap(), &NoisePath::zero(100, 0.01)).unwrap_err();
        assert_eq!(err, Error::InadmissiblePerturbation { step: 5, node: 3 });
    }
}
