//! Linear-like complementary filters for body-frame vector and gyro-bias
//! estimation.
//!
//! Each measured direction `b_i = Rᵀ r_i` is filtered by an order-`n`
//! compensator whose characteristic polynomial is given by a [`GainVector`].
//! Two variants are provided:
//!
//! * **direct**: the kinematic transport term uses the raw measurement,
//!   `b̂̇ = -S(ω_m - η̂) b + x`, where `x` is the first output of an `(n-1)`-order
//!   compensator driven by `b - b̂`;
//! * **passive**: the transport term uses the estimate,
//!   `b̂̇ = -S(ω_m - η̂) b̂ + B_pᵀ P_p X`, which keeps measurement noise out of
//!   the fast path.
//!
//! Both estimate a constant gyro bias `η` from at least two non-collinear
//! directions. Filters are exposed as continuous-time derivative evaluators
//! plus a fixed-step integrator.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::lyapunov::solve_lyapunov;
use crate::poly::{kron_with_identity, GainVector};
use crate::so3::{skew, Mat3, Vec3};
use crate::{Error, Result};

/// Smallest cross-product norm for a pair of directions to count as non-collinear.
pub const COLLINEAR_TOL: f64 = 1e-3;

/// Largest accepted integration step, seconds.
pub const MAX_STEP: f64 = 0.1;

/// Bias gain used in the bench experiments, `Γ = 0.003 I`.
pub const DEFAULT_BIAS_GAIN: f64 = 0.003;

/// Band outside which a passive estimate norm signals divergence.
pub const PASSIVE_NORM_BAND: (f64, f64) = (0.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterVariant {
    Direct,
    Passive,
}

impl FilterVariant {
    pub fn name(self) -> &'static str {
        match self {
            FilterVariant::Direct => "direct",
            FilterVariant::Passive => "passive",
        }
    }
}

impl fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(FilterVariant::Direct),
            "passive" => Ok(FilterVariant::Passive),
            other => Err(format!("unknown filter variant '{other}' (expected direct or passive)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

impl FromStr for Integrator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            other => Err(format!("unknown integrator '{other}' (expected euler or rk4)")),
        }
    }
}

/// One synchronized sample of the direction sensors and the rate gyro.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub t: f64,
    /// Unit body-frame directions, one per reference vector.
    pub vectors: Vec<Vec3>,
    /// Gyro output, rad/s.
    pub omega_m: Vec3,
}

/// Per-direction design data.
#[derive(Debug, Clone)]
pub struct VectorChannel {
    pub gains: GainVector,
    pub reference: Vec3,
    /// `A_{γ} ⊗ I₃` (direct) or `A_{π(γ)} ⊗ I₃` (passive, empty when `n = 1`).
    pub a: DMatrix<f64>,
    /// Lyapunov certificate for `a`.
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl VectorChannel {
    /// Last three rows of `p`, scaled by `γn`; this is `Bᵀ P` for both variants.
    fn output_rows(&self) -> DMatrix<f64> {
        let rows = self.p.nrows();
        self.p.rows(rows - 3, 3) * self.gains.last()
    }
}

/// Immutable filter design shared by every stream that uses it.
#[derive(Debug, Clone)]
pub struct FilterDesign {
    variant: FilterVariant,
    order: usize,
    channels: Vec<VectorChannel>,
    bias_gain: Vec3,
    output_rows: Vec<DMatrix<f64>>,
}

/// Filter state. The same layout is used for time derivatives.
///
/// `internal[i]` holds the compensator state of direction `i`:
/// for the direct filter the stacked derivatives `(x, ẋ, …, x^(n-2))`
/// (the top derivative `x^(n-1)` is algebraic in the measurement and is
/// rebuilt on demand, see [`FilterDesign::full_direct_state`]); for the
/// passive filter the state `X`. Both have `3(n-1)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub internal: Vec<DVector<f64>>,
    pub estimates: Vec<Vec3>,
    pub bias: Vec3,
}

impl FilterState {
    fn axpy(&self, h: f64, d: &FilterState) -> FilterState {
        FilterState {
            internal: self
                .internal
                .iter()
                .zip(&d.internal)
                .map(|(x, dx)| x + dx * h)
                .collect(),
            estimates: self
                .estimates
                .iter()
                .zip(&d.estimates)
                .map(|(x, dx)| x + dx * h)
                .collect(),
            bias: self.bias + d.bias * h,
        }
    }

    fn combine_rk4(&self, h: f64, k: [&FilterState; 4]) -> FilterState {
        let mut out = self.clone();
        let w = [h / 6.0, h / 3.0, h / 3.0, h / 6.0];
        for (ki, wi) in k.iter().zip(w) {
            out = out.axpy(wi, ki);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.internal.iter().all(|x| x.iter().all(|v| v.is_finite()))
            && self.estimates.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.bias.iter().all(|v| v.is_finite())
    }

    /// Unit-norm estimates for reporting and attitude determination.
    pub fn normalized_estimates(&self) -> Vec<Vec3> {
        self.estimates.iter().map(|b| b.normalize()).collect()
    }

    /// `b̂_1, …, b̂_m, η̂`, then internal states, flattened in that order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for b in &self.estimates {
            out.extend(b.iter());
        }
        out.extend(self.bias.iter());
        for x in &self.internal {
            out.extend(x.iter());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Error returned when an integration step produces an unusable state.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDivergence {
    /// Time at which the bad state would have been reached.
    pub t: f64,
    pub last_good: FilterState,
}

impl fmt::Display for FilterDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "filter diverged at t = {} s", self.t)
    }
}

impl std::error::Error for FilterDivergence {}

impl From<FilterDivergence> for Error {
    fn from(d: FilterDivergence) -> Self {
        Error::Divergence { t: d.t }
    }
}

/// Observation errors `b̃_i = b_i - b̂_i`, `η̃ = η - η̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationErrors {
    pub vectors: Vec<Vec3>,
    pub bias: Vec3,
}

impl EstimationErrors {
    pub fn max_vector_norm(&self) -> f64 {
        self.vectors.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub fn estimation_errors(state: &FilterState, vectors: &[Vec3], eta: &Vec3) -> EstimationErrors {
    EstimationErrors {
        vectors: vectors.iter().zip(&state.estimates).map(|(b, bh)| b - bh).collect(),
        bias: eta - state.bias,
    }
}

fn check_references(references: &[Vec3]) -> Result<()> {
    let mut max_cross: f64 = 0.0;
    for (i, a) in references.iter().enumerate() {
        for b in &references[i + 1..] {
            max_cross = max_cross.max(a.normalize().cross(&b.normalize()).norm());
        }
    }
    if references.len() < 2 || !(max_cross > COLLINEAR_TOL) {
        return Err(Error::CollinearReferences { max_cross });
    }
    Ok(())
}

fn check_bias_gain(gamma: &Mat3) -> Result<Vec3> {
    let diag = gamma.diagonal();
    let off = gamma - Mat3::from_diagonal(&diag);
    if off.iter().any(|v| *v != 0.0) || diag.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveBiasGain);
    }
    Ok(diag)
}

impl FilterDesign {
    /// Build a design with identity Lyapunov weights.
    pub fn new(
        variant: FilterVariant,
        gains: Vec<GainVector>,
        bias_gain: &Mat3,
        references: &[Vec3],
    ) -> Result<Self> {
        Self::with_weights(variant, gains, bias_gain, references, None)
    }

    /// Build a design; `weights[i]` is the positive-definite `Q` used to
    /// solve for the certificate of direction `i` (identity when `None`).
    pub fn with_weights(
        variant: FilterVariant,
        gains: Vec<GainVector>,
        bias_gain: &Mat3,
        references: &[Vec3],
        weights: Option<&[DMatrix<f64>]>,
    ) -> Result<Self> {
        if gains.len() != references.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} gain vectors for {} reference vectors",
                gains.len(),
                references.len()
            )));
        }
        if let Some(w) = weights {
            if w.len() != gains.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} weight matrices for {} reference vectors",
                    w.len(),
                    gains.len()
                )));
            }
        }
        let order = gains.first().map(GainVector::order).ok_or(Error::EmptyGains)?;
        if let Some(g) = gains.iter().find(|g| g.order() != order) {
            return Err(Error::DimensionMismatch(format!(
                "all gain vectors must have order {order}, found {}",
                g.order()
            )));
        }
        for (index, g) in gains.iter().enumerate() {
            let ok = match variant {
                FilterVariant::Direct => g.is_hurwitz(),
                FilterVariant::Passive => g.in_hbar(),
            };
            if !matches!(ok, Ok(true)) {
                return Err(Error::InadmissibleGains {
                    index,
                    variant: variant.name(),
                    gains: g.as_slice().to_vec(),
                });
            }
        }
        check_references(references)?;
        let bias_gain = check_bias_gain(bias_gain)?;

        let dim = match variant {
            FilterVariant::Direct => 3 * order,
            FilterVariant::Passive => 3 * (order - 1),
        };
        let mut channels = Vec::with_capacity(gains.len());
        for (i, (g, r)) in gains.into_iter().zip(references).enumerate() {
            let q = match weights {
                Some(w) => w[i].clone(),
                None => DMatrix::identity(dim, dim),
            };
            if q.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "weight {i} is {:?}, expected {dim}x{dim}",
                    q.shape()
                )));
            }
            let (a, p) = if dim == 0 {
                (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
            } else {
                let base = match variant {
                    FilterVariant::Direct => g.companion_matrix(),
                    FilterVariant::Passive => g.project()?.companion_matrix(),
                };
                let a = kron_with_identity(&base, 3);
                let p = solve_lyapunov(&a, &q)?.p;
                (a, p)
            };
            channels.push(VectorChannel {
                gains: g,
                reference: r.normalize(),
                a,
                p,
                q,
            });
        }
        let output_rows = channels
            .iter()
            .map(|c| {
                if c.p.nrows() == 0 {
                    DMatrix::zeros(3, 0)
                } else {
                    c.output_rows()
                }
            })
            .collect();
        Ok(Self {
            variant,
            order,
            channels,
            bias_gain,
            output_rows,
        })
    }

    pub fn variant(&self) -> FilterVariant {
        self.variant
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn channels(&self) -> &[VectorChannel] {
        &self.channels
    }

    pub fn references(&self) -> Vec<Vec3> {
        self.channels.iter().map(|c| c.reference).collect()
    }

    /// Diagonal of `Γ`.
    pub fn bias_gain(&self) -> Vec3 {
        self.bias_gain
    }

    /// `B_i` for direction `i`: `γn (e_n ⊗ I₃)` (direct) or `γn (e_(n-1) ⊗ I₃)` (passive).
    pub fn input_matrix(&self, i: usize) -> DMatrix<f64> {
        let c = &self.channels[i];
        let dim = c.a.nrows();
        let mut b = DMatrix::zeros(dim, 3);
        if dim >= 3 {
            b.view_mut((dim - 3, 0), (3, 3))
                .copy_from(&(DMatrix::identity(3, 3) * c.gains.last()));
        }
        b
    }

    /// Length of each `internal` entry.
    pub fn internal_dim(&self) -> usize {
        3 * (self.order - 1)
    }

    /// Initial state: estimates set to the first measurement, no bias, compensators at rest.
    pub fn initial_state(&self, first: &MeasurementFrame) -> Result<FilterState> {
        self.check_frame(first)?;
        Ok(FilterState {
            internal: vec![DVector::zeros(self.internal_dim()); self.channels.len()],
            estimates: first.vectors.clone(),
            bias: Vec3::zeros(),
        })
    }

    fn check_frame(&self, frame: &MeasurementFrame) -> Result<()> {
        if frame.vectors.len() != self.channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} vectors, design expects {}",
                frame.vectors.len(),
                self.channels.len()
            )));
        }
        Ok(())
    }

    fn check_state(&self, state: &FilterState) -> Result<()> {
        let m = self.channels.len();
        if state.estimates.len() != m
            || state.internal.len() != m
            || state.internal.iter().any(|x| x.len() != self.internal_dim())
        {
            return Err(Error::DimensionMismatch(format!(
                "state layout does not match a {}-vector order-{} design",
                m, self.order
            )));
        }
        Ok(())
    }

    /// Full direct-filter compensator state `z_i = (x, ẋ, …, x^(n-1))` ∈ ℝ³ⁿ, where
    /// `x^(n-1) = -Σ_{k<n} γ_k x^(n-1-k) + γ_n (b_i - b̂_i)`.
    pub fn full_direct_state(&self, state: &FilterState, i: usize, b: &Vec3) -> DVector<f64> {
        let n = self.order;
        let g = self.channels[i].gains.as_slice();
        let x = &state.internal[i];
        let mut top = (b - state.estimates[i]) * g[n - 1];
        for k in 1..n {
            top -= x.fixed_rows::<3>(3 * (n - 1 - k)) * g[k - 1];
        }
        let mut z = DVector::zeros(3 * n);
        z.rows_mut(0, 3 * (n - 1)).copy_from(x);
        z.fixed_rows_mut::<3>(3 * (n - 1)).copy_from(&top);
        z
    }

    /// `υ_i = B_iᵀ P_i z_i`, the injection driving the direct bias update.
    pub fn direct_injection(&self, z: &DVector<f64>, i: usize) -> Vec3 {
        let v = &self.output_rows[i] * z;
        Vec3::new(v[0], v[1], v[2])
    }

    /// Continuous-time state derivative for the configured variant.
    pub fn derivative(&self, state: &FilterState, frame: &MeasurementFrame) -> Result<FilterState> {
        self.check_frame(frame)?;
        self.check_state(state)?;
        Ok(match self.variant {
            FilterVariant::Direct => self.direct_rate(state, frame),
            FilterVariant::Passive => self.passive_rate(state, frame),
        })
    }

    fn direct_rate(&self, state: &FilterState, frame: &MeasurementFrame) -> FilterState {
        let n = self.order;
        let s = skew(&(frame.omega_m - state.bias));
        let mut internal = Vec::with_capacity(self.channels.len());
        let mut estimates = Vec::with_capacity(self.channels.len());
        let mut drive = Vec3::zeros();
        for (i, b) in frame.vectors.iter().enumerate() {
            let z = self.full_direct_state(state, i, b);
            internal.push(z.rows(3, 3 * (n - 1)).into_owned());
            let x = z.fixed_rows::<3>(0).into_owned();
            estimates.push(-s * b + x);
            drive += skew(b) * self.direct_injection(&z, i);
        }
        FilterState {
            internal,
            estimates,
            bias: self.bias_gain.component_mul(&drive),
        }
    }

    fn passive_rate(&self, state: &FilterState, frame: &MeasurementFrame) -> FilterState {
        let s = skew(&(frame.omega_m - state.bias));
        let mut internal = Vec::with_capacity(self.channels.len());
        let mut estimates = Vec::with_capacity(self.channels.len());
        let mut drive = Vec3::zeros();
        for (i, (b, c)) in frame.vectors.iter().zip(&self.channels).enumerate() {
            let bh = &state.estimates[i];
            let err = b - bh;
            let injection = if self.order == 1 {
                internal.push(DVector::zeros(0));
                err * c.gains.last()
            } else {
                let x = &state.internal[i];
                let mut dx = &c.a * x;
                let dim = dx.len();
                let mut tail = dx.fixed_rows_mut::<3>(dim - 3);
                tail += err * c.gains.last();
                internal.push(dx);
                let v = &self.output_rows[i] * x;
                Vec3::new(v[0], v[1], v[2])
            };
            estimates.push(-s * bh + injection);
            drive += skew(b) * bh;
        }
        FilterState {
            internal,
            estimates,
            bias: -self.bias_gain.component_mul(&drive),
        }
    }

    /// Advance with measurements held constant over the step.
    pub fn step(
        &self,
        state: &FilterState,
        frame: &MeasurementFrame,
        dt: f64,
        integrator: Integrator,
    ) -> std::result::Result<FilterState, StepError> {
        self.step_with_source(state, frame.t, dt, integrator, |_| frame.clone())
    }

    /// Advance from `t` to `t + dt`, sampling measurements from `source` at
    /// every integrator stage (so that a continuous truth signal can be
    /// integrated consistently with RK4).
    pub fn step_with_source<F>(
        &self,
        state: &FilterState,
        t: f64,
        dt: f64,
        integrator: Integrator,
        mut source: F,
    ) -> std::result::Result<FilterState, StepError>
    where
        F: FnMut(f64) -> MeasurementFrame,
    {
        if !(dt > 0.0 && dt <= MAX_STEP) {
            return Err(Error::InvalidTimeStep { dt, max: MAX_STEP }.into());
        }
        let next = match integrator {
            Integrator::Euler => {
                let k1 = self.derivative(state, &source(t))?;
                state.axpy(dt, &k1)
            }
            Integrator::Rk4 => {
                let mid = source(t + 0.5 * dt);
                let k1 = self.derivative(state, &source(t))?;
                let k2 = self.derivative(&state.axpy(0.5 * dt, &k1), &mid)?;
                let k3 = self.derivative(&state.axpy(0.5 * dt, &k2), &mid)?;
                let k4 = self.derivative(&state.axpy(dt, &k3), &source(t + dt))?;
                state.combine_rk4(dt, [&k1, &k2, &k3, &k4])
            }
        };
        if !next.is_finite() || !self.within_tripwire(&next) {
            return Err(StepError::Diverged(FilterDivergence {
                t: t + dt,
                last_good: state.clone(),
            }));
        }
        Ok(next)
    }

    fn within_tripwire(&self, state: &FilterState) -> bool {
        match self.variant {
            FilterVariant::Direct => true,
            FilterVariant::Passive => {
                let (lo, hi) = PASSIVE_NORM_BAND;
                state.estimates.iter().all(|b| (lo..=hi).contains(&b.norm()))
            }
        }
    }

    /// Lyapunov function of the configured variant, evaluated against truth.
    ///
    /// Direct: `Σ z_iᵀ P_i z_i + η̃ᵀ Γ⁻¹ η̃`.
    /// Passive: `Σ X_iᵀ P_i X_i + Σ |b̃_i|² + η̃ᵀ Γ⁻¹ η̃`.
    pub fn lyapunov_value(&self, state: &FilterState, truth_vectors: &[Vec3], eta: &Vec3) -> f64 {
        let eta_err = eta - state.bias;
        let mut v = eta_err.component_div(&self.bias_gain).dot(&eta_err);
        for (i, (c, b)) in self.channels.iter().zip(truth_vectors).enumerate() {
            match self.variant {
                FilterVariant::Direct => {
                    let z = self.full_direct_state(state, i, b);
                    v += z.dot(&(&c.p * &z));
                }
                FilterVariant::Passive => {
                    let x = &state.internal[i];
                    if !x.is_empty() {
                        v += x.dot(&(&c.p * x));
                    }
                    v += (b - state.estimates[i]).norm_squared();
                }
            }
        }
        v
    }

    /// Analytic time derivative of [`Self::lyapunov_value`] in the noise-free case:
    /// `-Σ zᵀ Q z` (direct) or `-Σ Xᵀ Q X` (passive, `-2γ Σ |b̃|²` when `n = 1`).
    pub fn lyapunov_rate(&self, state: &FilterState, truth_vectors: &[Vec3]) -> f64 {
        let mut v = 0.0;
        for (i, (c, b)) in self.channels.iter().zip(truth_vectors).enumerate() {
            match self.variant {
                FilterVariant::Direct => {
                    let z = self.full_direct_state(state, i, b);
                    v -= z.dot(&(&c.q * &z));
                }
                FilterVariant::Passive if self.order == 1 => {
                    v -= 2.0 * c.gains.last() * (b - state.estimates[i]).norm_squared();
                }
                FilterVariant::Passive => {
                    let x = &state.internal[i];
                    v -= x.dot(&(&c.q * x));
                }
            }
        }
        v
    }
}

/// Failure of an integration step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepError {
    Invalid(Error),
    Diverged(FilterDivergence),
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::Invalid(e) => e.fmt(f),
            StepError::Diverged(d) => d.fmt(f),
        }
    }
}

impl std::error::Error for StepError {}

impl From<Error> for StepError {
    fn from(e: Error) -> Self {
        StepError::Invalid(e)
    }
}

impl From<StepError> for Error {
    fn from(e: StepError) -> Self {
        match e {
            StepError::Invalid(e) => e,
            StepError::Diverged(d) => d.into(),
        }
    }
}

/// Diagonal bias gain `g I`.
pub fn isotropic_bias_gain(g: f64) -> Mat3 {
    Mat3::identity() * g
}
