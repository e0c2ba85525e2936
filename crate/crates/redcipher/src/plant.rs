//! Inverted double pendulum: nonlinear continuous-time model, fixed-step
//! integration between controller samples, and discrete-time
//! linearization about the upright equilibrium.
//!
//! The mechanism is M(θ)θ̈ + C(θ,θ̇)θ̇ + G(θ) = [T, 0]ᵀ with a first-order
//! motor lag T + τ_e·Ṫ = k_m·u driving joint 1. Angles are measured from
//! the upright position, so the origin with T = u = 0 is an exact (and
//! unstable) fixed point.

use std::fmt;

use nalgebra::DMatrix;

/// Physical constants of the two-link pendulum and its motor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantParams {
    /// Link masses (kg).
    pub m1: f64,
    pub m2: f64,
    /// Link lengths (m).
    pub l1: f64,
    pub l2: f64,
    /// Centers of mass (m, signed along the link).
    pub c1: f64,
    pub c2: f64,
    /// Mass moments of inertia (kg·m²).
    pub i1: f64,
    pub i2: f64,
    /// Viscous joint damping (kg/s).
    pub b1: f64,
    pub b2: f64,
    /// Motor gain (N·m) and electrical time constant (s).
    pub k_m: f64,
    pub tau_e: f64,
    /// Gravitational acceleration (m/s²).
    pub grav: f64,
}

impl PlantParams {
    /// The bench pendulum the demo controller is tuned for.
    pub fn demo() -> Self {
        Self {
            m1: 0.125,
            m2: 0.05,
            l1: 0.1,
            l2: 0.1,
            c1: -0.04,
            c2: 0.06,
            i1: 0.074,
            i2: 0.00012,
            b1: 4.8,
            b2: 0.0002,
            k_m: 50.0,
            tau_e: 0.03,
            grav: 9.81,
        }
    }

    /// Combined inertia seen by joint 1: m1·c1² + m2·l1² + I1.
    pub fn p1(&self) -> f64 {
        self.m1 * self.c1 * self.c1 + self.m2 * self.l1 * self.l1 + self.i1
    }

    /// Combined inertia of link 2: m2·c2² + I2.
    pub fn p2(&self) -> f64 {
        self.m2 * self.c2 * self.c2 + self.i2
    }

    /// Coupling inertia m2·l1·c2.
    pub fn p3(&self) -> f64 {
        self.m2 * self.l1 * self.c2
    }

    /// Gravity lever of joint 1: (m1·c1 + m2·l1)·g.
    pub fn g1(&self) -> f64 {
        (self.m1 * self.c1 + self.m2 * self.l1) * self.grav
    }

    /// Gravity lever of link 2: m2·c2·g.
    pub fn g2(&self) -> f64 {
        self.m2 * self.c2 * self.grav
    }
}

/// Plant state [θ1, θ̇1, θ2, θ̇2, T].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantState {
    pub theta1: f64,
    pub dtheta1: f64,
    pub theta2: f64,
    pub dtheta2: f64,
    pub torque: f64,
}

impl PlantState {
    pub fn from_array(x: [f64; 5]) -> Self {
        Self { theta1: x[0], dtheta1: x[1], theta2: x[2], dtheta2: x[3], torque: x[4] }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.theta1, self.dtheta1, self.theta2, self.dtheta2, self.torque]
    }

    /// Measured outputs [θ1, θ2].
    pub fn outputs(&self) -> [f64; 2] {
        [self.theta1, self.theta2]
    }
}

/// Mass matrix numerically singular (cannot happen for physical
/// parameter sets; guarded anyway).
#[derive(Clone, Debug, PartialEq)]
pub struct SingularMass {
    pub det: f64,
}

impl fmt::Display for SingularMass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mass matrix is singular (det = {})", self.det)
    }
}

impl std::error::Error for SingularMass {}

/// State derivative under input `u`, with an optional angular-
/// acceleration disturbance on the two joints.
pub fn dynamics(
    state: &PlantState,
    u: f64,
    params: &PlantParams,
    disturbance: Option<[f64; 2]>,
) -> Result<PlantState, SingularMass> {
    let (p1, p2, p3) = (params.p1(), params.p2(), params.p3());
    let (g1, g2) = (params.g1(), params.g2());
    let (s1, s12) = (state.theta1.sin(), (state.theta1 + state.theta2).sin());
    let (s2, c2) = (state.theta2.sin(), state.theta2.cos());

    let m11 = p1 + p2 + 2.0 * p3 * c2;
    let m12 = p2 + p3 * c2;
    let m22 = p2;
    let det = m11 * m22 - m12 * m12;
    if det.abs() < 1e-12 {
        return Err(SingularMass { det });
    }

    let (dt1, dt2) = (state.dtheta1, state.dtheta2);
    // C(θ,θ̇)·θ̇ with viscous damping on the diagonal.
    let cv1 = (params.b1 - p3 * dt2 * s2) * dt1 - p3 * (dt1 + dt2) * s2 * dt2;
    let cv2 = p3 * dt1 * s2 * dt1 + params.b2 * dt2;
    let grav1 = -g1 * s1 - g2 * s12;
    let grav2 = -g2 * s12;

    // θ̈ = M⁻¹([T, 0]ᵀ − C·θ̇ − G)
    let rhs1 = state.torque - cv1 - grav1;
    let rhs2 = -cv2 - grav2;
    let mut acc1 = (m22 * rhs1 - m12 * rhs2) / det;
    let mut acc2 = (-m12 * rhs1 + m11 * rhs2) / det;
    if let Some([xi1, xi2]) = disturbance {
        acc1 += xi1;
        acc2 += xi2;
    }

    Ok(PlantState {
        theta1: dt1,
        dtheta1: acc1,
        theta2: dt2,
        dtheta2: acc2,
        torque: (params.k_m * u - state.torque) / params.tau_e,
    })
}

/// Total mechanical energy ½θ̇ᵀM(θ)θ̇ + g1·cosθ1 + g2·cos(θ1+θ2).
/// Conserved by the undamped, unforced mechanism.
pub fn mechanical_energy(state: &PlantState, params: &PlantParams) -> f64 {
    let (p1, p2, p3) = (params.p1(), params.p2(), params.p3());
    let c2 = state.theta2.cos();
    let (dt1, dt2) = (state.dtheta1, state.dtheta2);
    let kinetic = 0.5
        * ((p1 + p2 + 2.0 * p3 * c2) * dt1 * dt1
            + 2.0 * (p2 + p3 * c2) * dt1 * dt2
            + p2 * dt2 * dt2);
    let potential =
        params.g1() * state.theta1.cos() + params.g2() * (state.theta1 + state.theta2).cos();
    kinetic + potential
}

/// One classical fourth-order Runge–Kutta step with `u` held constant.
pub fn rk4_step(
    state: &PlantState,
    u: f64,
    dt: f64,
    params: &PlantParams,
) -> Result<PlantState, SingularMass> {
    let shift = |s: &PlantState, d: &PlantState, h: f64| {
        let (sa, da) = (s.to_array(), d.to_array());
        let mut out = [0.0; 5];
        for i in 0..5 {
            out[i] = sa[i] + h * da[i];
        }
        PlantState::from_array(out)
    };
    let k1 = dynamics(state, u, params, None)?;
    let k2 = dynamics(&shift(state, &k1, dt / 2.0), u, params, None)?;
    let k3 = dynamics(&shift(state, &k2, dt / 2.0), u, params, None)?;
    let k4 = dynamics(&shift(state, &k3, dt), u, params, None)?;
    let (a, k1a, k2a, k3a, k4a) =
        (state.to_array(), k1.to_array(), k2.to_array(), k3.to_array(), k4.to_array());
    let mut out = [0.0; 5];
    for i in 0..5 {
        out[i] = a[i] + dt / 6.0 * (k1a[i] + 2.0 * k2a[i] + 2.0 * k3a[i] + k4a[i]);
    }
    Ok(PlantState::from_array(out))
}

/// Advance one controller sample under zero-order hold: `substeps` RK4
/// steps of length `sample_period / substeps`.
pub fn advance_sample(
    state: &PlantState,
    u: f64,
    sample_period: f64,
    substeps: u32,
    params: &PlantParams,
) -> Result<PlantState, SingularMass> {
    assert!(substeps >= 1);
    let dt = sample_period / f64::from(substeps);
    let mut s = *state;
    for _ in 0..substeps {
        s = rk4_step(&s, u, dt, params)?;
    }
    Ok(s)
}

/// Discrete-time linear model about the upright equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    /// 5×5 state transition.
    pub a: DMatrix<f64>,
    /// 5×1 input map.
    pub b: DMatrix<f64>,
    /// 2×5 output map selecting θ1 and θ2.
    pub c: DMatrix<f64>,
    /// Sample period (s).
    pub sample_period: f64,
}

/// Finite-difference step for the Jacobians.
const JACOBIAN_STEP: f64 = 1e-6;
/// Taylor-series tail tolerance for the matrix exponential.
const EXPM_TOL: f64 = 1e-12;

/// Linearize about the origin and discretize exactly under zero-order
/// hold: central differences give (A_c, B_c), and the top rows of
/// exp([[A_c, B_c], [0, 0]]·T_s) give (A_d, B_d).
pub fn linearize(params: &PlantParams, sample_period: f64) -> Result<LinearModel, SingularMass> {
    let h = JACOBIAN_STEP;
    let origin = PlantState::default();
    let mut a_c = DMatrix::zeros(5, 5);
    for j in 0..5 {
        let mut plus = origin.to_array();
        let mut minus = origin.to_array();
        plus[j] += h;
        minus[j] -= h;
        let fp = dynamics(&PlantState::from_array(plus), 0.0, params, None)?.to_array();
        let fm = dynamics(&PlantState::from_array(minus), 0.0, params, None)?.to_array();
        for i in 0..5 {
            a_c[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let fp = dynamics(&origin, h, params, None)?.to_array();
    let fm = dynamics(&origin, -h, params, None)?.to_array();
    let mut b_c = DMatrix::zeros(5, 1);
    for i in 0..5 {
        b_c[(i, 0)] = (fp[i] - fm[i]) / (2.0 * h);
    }

    // Augmented-matrix exponential trick for the exact ZOH pair.
    let mut aug = DMatrix::zeros(6, 6);
    aug.view_mut((0, 0), (5, 5)).copy_from(&a_c);
    aug.view_mut((0, 5), (5, 1)).copy_from(&b_c);
    let phi = expm(&(aug * sample_period));
    let a_d = phi.view((0, 0), (5, 5)).into_owned();
    let b_d = phi.view((0, 5), (5, 1)).into_owned();

    let mut c = DMatrix::zeros(2, 5);
    c[(0, 0)] = 1.0;
    c[(1, 2)] = 1.0;

    Ok(LinearModel { a: a_d, b: b_d, c, sample_period })
}

/// Matrix exponential by scaling and squaring with a truncated Taylor
/// series.
pub(crate) fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let norm = m
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 2f64.powi(squarings);
    let scaled = m.map(|v| v / scale);

    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    let mut k = 1.0f64;
    loop {
        term = (&term * &scaled) / k;
        sum += &term;
        let tail: f64 = term.iter().map(|v| v.abs()).sum();
        if tail < EXPM_TOL {
            break;
        }
        k += 1.0;
        assert!(k < 200.0, "matrix exponential failed to converge");
    }
    let mut out = sum;
    for _ in 0..squarings {
        out = &out * &out;
    }
    out
}
