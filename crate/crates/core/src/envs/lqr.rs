use nalgebra::{DMatrix, DVector};

use super::{unknown_param, Environment};
use crate::error::{check_dim, Error, Result};
use crate::types::{EnvSpec, InitDistribution};

/// Discrete linear system `s' = A s + B a` with reward
/// `-(s'^T Q s' + a^T R a)`. Not in the registry; used to validate iLQG
/// against closed-form LQR.
#[derive(Debug, Clone)]
pub struct LinearQuadratic {
    spec: EnvSpec,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LinearQuadratic {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>, horizon: usize) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        check_dim("A columns", n, a.ncols())?;
        check_dim("B rows", n, b.nrows())?;
        check_dim("Q", n, q.nrows())?;
        check_dim("Q", n, q.ncols())?;
        check_dim("R", m, r.nrows())?;
        check_dim("R", m, r.ncols())?;
        if n == 0 || m == 0 {
            return Err(Error::invalid("empty linear system"));
        }
        Ok(Self {
            spec: EnvSpec {
                name: "lqr".into(),
                obs_dim: n,
                act_dim: m,
                horizon,
                action_low: vec![-1e6; m],
                action_high: vec![1e6; m],
                has_termination: false,
                init_distribution: InitDistribution::Uniform {
                    low: vec![-1.0; n],
                    high: vec![1.0; n],
                },
                gamma: 1.0,
            },
            a,
            b,
            q,
            r,
        })
    }

    /// The scalar system `s' = s + a`, reward `-(s'^2 + a^2)`.
    pub fn scalar(horizon: usize) -> Self {
        let one = DMatrix::from_element(1, 1, 1.0);
        Self::new(one.clone(), one.clone(), one.clone(), one, horizon).expect("valid scalar system")
    }
}

impl Environment for LinearQuadratic {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn spec_mut(&mut self) -> &mut EnvSpec {
        &mut self.spec
    }

    fn observe(&self, c: &[f64]) -> Vec<f64> {
        c.to_vec()
    }

    fn step_raw(&self, s: &[f64], a: &[f64], next: &mut [f64]) {
        let out = &self.a * DVector::from_column_slice(s) + &self.b * DVector::from_column_slice(a);
        next.copy_from_slice(out.as_slice());
    }

    fn reward_raw(&self, _s: &[f64], a: &[f64], n: &[f64]) -> f64 {
        let n = DVector::from_column_slice(n);
        let a = DVector::from_column_slice(a);
        -(n.dot(&(&self.q * &n)) + a.dot(&(&self.r * &a)))
    }

    fn reward_gradient_raw(&self, _s: &[f64], a: &[f64], n: &[f64], d_next: &mut [f64], d_a: &mut [f64]) {
        let qs = (&self.q + self.q.transpose()) * DVector::from_column_slice(n);
        let ra = (&self.r + self.r.transpose()) * DVector::from_column_slice(a);
        for (d, v) in d_next.iter_mut().zip(qs.iter()) {
            *d = -v;
        }
        for (d, v) in d_a.iter_mut().zip(ra.iter()) {
            *d = -v;
        }
    }

    fn set_param(&mut self, key: &str, _value: f64) -> Result<()> {
        Err(unknown_param("lqr", key, &[]))
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }
}
