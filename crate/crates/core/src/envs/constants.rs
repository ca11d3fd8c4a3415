//! Physical constants of the analytic environments. Values follow the
//! usual open-source classic-control implementations; each can be
//! overridden per experiment through the `[env]` config section.

// Pendulum: semi-implicit Euler. theta = 0 is the unstable equilibrium;
// the reward peaks at theta = pi.
pub const PENDULUM_GRAVITY: f64 = 10.0;
pub const PENDULUM_MASS: f64 = 1.0;
pub const PENDULUM_LENGTH: f64 = 1.0;
pub const PENDULUM_DT: f64 = 0.05;
pub const PENDULUM_MAX_TORQUE: f64 = 2.0;
pub const PENDULUM_MAX_SPEED: f64 = 8.0;
pub const PENDULUM_HORIZON: usize = 200;

// CartPole: explicit Euler. Observation (x, x_dot, theta, theta_dot),
// theta = 0 upright.
pub const CARTPOLE_GRAVITY: f64 = 9.8;
pub const CARTPOLE_CART_MASS: f64 = 1.0;
pub const CARTPOLE_POLE_MASS: f64 = 0.1;
/// Half the pole length.
pub const CARTPOLE_HALF_LENGTH: f64 = 0.5;
pub const CARTPOLE_FORCE_MAG: f64 = 10.0;
pub const CARTPOLE_DT: f64 = 0.02;
pub const CARTPOLE_HORIZON: usize = 200;
pub const CARTPOLE_INIT_RANGE: f64 = 0.05;
/// Early-termination thresholds for `cartpole_et`.
pub const CARTPOLE_ET_THETA_LIMIT: f64 = 0.4;
pub const CARTPOLE_ET_X_LIMIT: f64 = 2.4;

// Acrobot: RK4 over one control interval, "book" dynamics.
pub const ACROBOT_GRAVITY: f64 = 9.8;
pub const ACROBOT_LINK_LENGTH_1: f64 = 1.0;
pub const ACROBOT_LINK_MASS_1: f64 = 1.0;
pub const ACROBOT_LINK_MASS_2: f64 = 1.0;
pub const ACROBOT_LINK_COM_1: f64 = 0.5;
pub const ACROBOT_LINK_COM_2: f64 = 0.5;
pub const ACROBOT_LINK_MOI: f64 = 1.0;
pub const ACROBOT_DT: f64 = 0.2;
pub const ACROBOT_MAX_VEL_1: f64 = 4.0 * std::f64::consts::PI;
pub const ACROBOT_MAX_VEL_2: f64 = 9.0 * std::f64::consts::PI;
pub const ACROBOT_HORIZON: usize = 200;
pub const ACROBOT_INIT_RANGE: f64 = 0.1;

// MountainCar (continuous).
pub const MOUNTAINCAR_POWER: f64 = 0.0015;
pub const MOUNTAINCAR_HILL: f64 = 0.0025;
pub const MOUNTAINCAR_MIN_POSITION: f64 = -1.2;
pub const MOUNTAINCAR_MAX_POSITION: f64 = 0.6;
pub const MOUNTAINCAR_MAX_SPEED: f64 = 0.07;
pub const MOUNTAINCAR_HORIZON: usize = 200;

// Reacher2D: planar two-link arm of uniform rods, no gravity, viscous
// joint damping, RK4 over one control interval.
pub const REACHER_LINK_LENGTH_1: f64 = 0.1;
pub const REACHER_LINK_LENGTH_2: f64 = 0.11;
pub const REACHER_LINK_MASS_1: f64 = 0.1;
pub const REACHER_LINK_MASS_2: f64 = 0.1;
pub const REACHER_GEAR: f64 = 0.05;
pub const REACHER_DAMPING: f64 = 0.01;
pub const REACHER_DT: f64 = 0.02;
pub const REACHER_HORIZON: usize = 50;
pub const REACHER_TARGET_RADIUS: f64 = 0.2;
pub const REACHER_INIT_ANGLE_RANGE: f64 = 0.1;
pub const REACHER_INIT_VEL_RANGE: f64 = 0.005;
