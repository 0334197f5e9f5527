//! Two-level diabatic models: potential surfaces, coupling, and diagnostics.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter {name}: {value} ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("model \"{0}\" is not registered")]
    UnknownModel(String),
    #[error("missing parameter \"{0}\"")]
    MissingParameter(&'static str),
    #[error("unknown parameter \"{0}\"")]
    UnknownParameter(String),
    #[error("parameter \"{name}\" has wrong shape: expected {expected}")]
    BadShape {
        name: &'static str,
        expected: String,
    },
}

/// Diabatic surface label. The initial datum concentrates on `Zero`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Zero,
    One,
}

impl Surface {
    pub fn index(self) -> usize {
        match self {
            Surface::Zero => 0,
            Surface::One => 1,
        }
    }

    pub fn other(self) -> Surface {
        match self {
            Surface::Zero => Surface::One,
            Surface::One => Surface::Zero,
        }
    }

    /// Surface reached after `n` hops when starting on `Zero`.
    pub fn from_hop_count(n: usize) -> Surface {
        if n % 2 == 0 {
            Surface::Zero
        } else {
            Surface::One
        }
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// One diabatic potential energy surface with its derivatives.
///
/// The `_into` evaluators are the hot path of the trajectory integrator and
/// must not allocate for built-in models.
pub trait PotentialSurface: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    fn hessian_into(&self, x: &DVector<f64>, out: &mut DMatrix<f64>);

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        self.gradient_into(x, &mut out);
        out
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.len(), x.len());
        self.hessian_into(x, &mut out);
        out
    }
}

/// Harmonic surface of the spin-boson pair: 0.5 w^2 |x|^2 + sign * c.x.
struct SpinBosonSurface {
    omega: f64,
    c: DVector<f64>,
    sign: f64,
}

impl PotentialSurface for SpinBosonSurface {
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.omega * self.omega * x.norm_squared() + self.sign * self.c.dot(x)
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(x);
        *out *= self.omega * self.omega;
        out.axpy(self.sign, &self.c, 1.0);
    }

    fn hessian_into(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        debug_assert_eq!(x.len(), out.nrows());
        out.fill(0.0);
        out.fill_diagonal(self.omega * self.omega);
    }
}

type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync>;
type HessianFn = Arc<dyn Fn(&DVector<f64>, &mut DMatrix<f64>) + Send + Sync>;

/// User-defined surface from closures. Missing derivative evaluators fall
/// back to centered finite differences with step 1e-5 * max(1, |x|); the
/// analytic path should be preferred wherever the Jacobian ODEs matter.
pub struct ClosureSurface {
    value: ValueFn,
    gradient: Option<GradientFn>,
    hessian: Option<HessianFn>,
}

impl ClosureSurface {
    pub fn new(value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&DVector<f64>, &mut DMatrix<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    fn fd_step(x: &DVector<f64>) -> f64 {
        1e-5 * x.norm().max(1.0)
    }
}

impl PotentialSurface for ClosureSurface {
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        if let Some(g) = &self.gradient {
            g(x, out);
            return;
        }
        let h = Self::fd_step(x);
        let mut probe = x.clone();
        for k in 0..x.len() {
            probe[k] = x[k] + h;
            let plus = (self.value)(&probe);
            probe[k] = x[k] - h;
            let minus = (self.value)(&probe);
            probe[k] = x[k];
            out[k] = (plus - minus) / (2.0 * h);
        }
    }

    fn hessian_into(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        if let Some(hs) = &self.hessian {
            hs(x, out);
            return;
        }
        // centered differences of the gradient, then symmetrized
        let h = Self::fd_step(x);
        let d = x.len();
        let mut probe = x.clone();
        let mut gp = DVector::zeros(d);
        let mut gm = DVector::zeros(d);
        for k in 0..d {
            probe[k] = x[k] + h;
            self.gradient_into(&probe.clone(), &mut gp);
            probe[k] = x[k] - h;
            self.gradient_into(&probe.clone(), &mut gm);
            probe[k] = x[k];
            for j in 0..d {
                out[(k, j)] = (gp[j] - gm[j]) / (2.0 * h);
            }
        }
        let sym = (out.clone() + out.transpose()) * 0.5;
        out.copy_from(&sym);
    }
}

/// The two-level diabatic problem: surfaces V0, V1, constant coupling delta,
/// and the semiclassical parameter epsilon.
#[derive(Clone)]
pub struct DiabaticModel {
    dim: usize,
    epsilon: f64,
    delta: f64,
    surfaces: [Arc<dyn PotentialSurface>; 2],
}

impl fmt::Debug for DiabaticModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiabaticModel")
            .field("dim", &self.dim)
            .field("epsilon", &self.epsilon)
            .field("delta", &self.delta)
            .finish()
    }
}

impl DiabaticModel {
    /// Builds a model from two surfaces. `delta = 0` is accepted as the
    /// degenerate decoupled case (useful for oracle tests); negative `delta`
    /// and non-positive `epsilon` are rejected.
    pub fn new(
        dim: usize,
        epsilon: f64,
        delta: f64,
        v0: Arc<dyn PotentialSurface>,
        v1: Arc<dyn PotentialSurface>,
    ) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::InvalidParameter {
                name: "dimension",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(epsilon > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "epsilon",
                value: epsilon,
                reason: "must be positive",
            });
        }
        if !(delta >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "delta",
                value: delta,
                reason: "must be non-negative",
            });
        }
        Ok(Self {
            dim,
            epsilon,
            delta,
            surfaces: [v0, v1],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Markov jump rate delta / epsilon of the surface index process.
    pub fn hop_rate(&self) -> f64 {
        self.delta / self.epsilon
    }

    /// Same surfaces with a different coupling strength.
    pub fn with_delta(&self, delta: f64) -> Result<Self, ModelError> {
        Self::new(
            self.dim,
            self.epsilon,
            delta,
            self.surfaces[0].clone(),
            self.surfaces[1].clone(),
        )
    }

    /// Same surfaces with a different semiclassical parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, ModelError> {
        Self::new(
            self.dim,
            epsilon,
            self.delta,
            self.surfaces[0].clone(),
            self.surfaces[1].clone(),
        )
    }

    pub fn surface(&self, which: Surface) -> &dyn PotentialSurface {
        self.surfaces[which.index()].as_ref()
    }

    pub fn value(&self, which: Surface, x: &DVector<f64>) -> f64 {
        self.surface(which).value(x)
    }

    pub fn gradient_into(&self, which: Surface, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.surface(which).gradient_into(x, out);
    }

    pub fn hessian_into(&self, which: Surface, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        self.surface(which).hessian_into(x, out);
    }

    /// Gap of the adiabatic surfaces, sqrt((V0-V1)^2 + 4 delta^2) >= 2 delta.
    pub fn adiabatic_gap(&self, x: &DVector<f64>) -> f64 {
        let dv = self.value(Surface::Zero, x) - self.value(Surface::One, x);
        (dv * dv + 4.0 * self.delta * self.delta).sqrt()
    }

    /// The 2x2 diabatic potential matrix [[V0, delta], [delta, V1]].
    pub fn diabatic_matrix(&self, x: &DVector<f64>) -> Matrix2<f64> {
        Matrix2::new(
            self.value(Surface::Zero, x),
            self.delta,
            self.delta,
            self.value(Surface::One, x),
        )
    }
}

/// Parameters of the built-in spin-boson system.
#[derive(Debug, Clone)]
pub struct SpinBosonParams {
    pub omega: f64,
    pub c: DVector<f64>,
}

impl SpinBosonParams {
    pub fn new(omega: f64, c: DVector<f64>) -> Result<Self, ModelError> {
        if !(omega > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "omega",
                value: omega,
                reason: "must be positive",
            });
        }
        if c.is_empty() || c.norm() == 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "c",
                value: c.norm(),
                reason: "coupling vector must be non-zero",
            });
        }
        Ok(Self { omega, c })
    }
}

/// Spin-boson model: V0 = 0.5 w^2 |x|^2 + c.x, V1 = 0.5 w^2 |x|^2 - c.x,
/// with analytic gradients w^2 x +/- c and Hessians w^2 I.
pub fn make_spin_boson(
    params: &SpinBosonParams,
    delta: f64,
    epsilon: f64,
) -> Result<DiabaticModel, ModelError> {
    if !(delta > 0.0) {
        return Err(ModelError::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "must be positive",
        });
    }
    let dim = params.c.len();
    let v0 = Arc::new(SpinBosonSurface {
        omega: params.omega,
        c: params.c.clone(),
        sign: 1.0,
    });
    let v1 = Arc::new(SpinBosonSurface {
        omega: params.omega,
        c: params.c.clone(),
        sign: -1.0,
    });
    DiabaticModel::new(dim, epsilon, delta, v0, v1)
}

/// Parameter bag handed to registered model builders.
#[derive(Debug, Clone, Default)]
pub struct ModelParams {
    pub epsilon: f64,
    pub delta: f64,
    pub scalars: BTreeMap<String, f64>,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl ModelParams {
    pub fn take_scalar(&mut self, name: &'static str) -> Result<f64, ModelError> {
        self.scalars
            .remove(name)
            .ok_or(ModelError::MissingParameter(name))
    }

    pub fn take_vector(&mut self, name: &'static str) -> Result<Vec<f64>, ModelError> {
        self.vectors
            .remove(name)
            .ok_or(ModelError::MissingParameter(name))
    }

    fn reject_leftovers(&self) -> Result<(), ModelError> {
        if let Some(name) = self.scalars.keys().chain(self.vectors.keys()).next() {
            return Err(ModelError::UnknownParameter(name.clone()));
        }
        Ok(())
    }
}

type ModelBuilder = Arc<dyn Fn(ModelParams) -> Result<DiabaticModel, ModelError> + Send + Sync>;

/// Name-keyed registry of model builders; "spin_boson" is built in.
pub struct ModelRegistry {
    builders: BTreeMap<String, (String, ModelBuilder)>,
}

impl ModelRegistry {
    pub fn with_builtins() -> Self {
        let mut registry = Self {
            builders: BTreeMap::new(),
        };
        registry.register(
            "spin_boson",
            "harmonic diabatic pair V = 0.5 w^2 |x|^2 +/- c.x (params: omega, c)",
            |mut params: ModelParams| {
                let omega = params.take_scalar("omega")?;
                let c = params.take_vector("c")?;
                params.reject_leftovers()?;
                let sb = SpinBosonParams::new(omega, DVector::from_vec(c))?;
                make_spin_boson(&sb, params.delta, params.epsilon)
            },
        );
        registry
    }

    pub fn register(
        &mut self,
        name: &str,
        description: &str,
        builder: impl Fn(ModelParams) -> Result<DiabaticModel, ModelError> + Send + Sync + 'static,
    ) {
        self.builders
            .insert(name.to_string(), (description.to_string(), Arc::new(builder)));
    }

    pub fn build(&self, name: &str, params: ModelParams) -> Result<DiabaticModel, ModelError> {
        let (_, builder) = self
            .builders
            .get(name)
            .ok_or_else(|| ModelError::UnknownModel(name.to_string()))?;
        builder(params)
    }

    pub fn list(&self) -> Vec<(String, String)> {
        self.builders
            .iter()
            .map(|(name, (desc, _))| (name.clone(), desc.clone()))
            .collect()
    }
}
