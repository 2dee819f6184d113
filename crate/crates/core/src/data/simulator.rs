use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MotorPosition, SeriesRecord, SimParams};
use crate::error::{Error, Result};

/// Physical constants of the two-inertia drivetrain shared by every series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConstants {
    /// Motor-side inertia, kg·m².
    pub motor_inertia: f64,
    /// Wheel-side inertia, kg·m².
    pub wheel_inertia: f64,
    pub damping_ratio: f64,
    /// Common angular speed of motor and wheel at t = 0, rad/s.
    pub initial_speed: f64,
    /// Brake torque step on the wheel, N·m.
    pub brake_torque: f64,
    /// Rough-road telegraph amplitude at μ → 0, N·m.
    pub road_amplitude: f64,
    /// Expected telegraph sign flips per second.
    pub telegraph_rate: f64,
    /// RK4 steps per output sample.
    pub substeps: usize,
    pub divergence_bound: f64,
}

impl Default for SimConstants {
    fn default() -> Self {
        SimConstants {
            motor_inertia: 0.5,
            wheel_inertia: 1.5,
            damping_ratio: 0.02,
            initial_speed: 250.0,
            brake_torque: 20.0,
            road_amplitude: 3.0,
            telegraph_rate: 2.0,
            substeps: 20,
            divergence_bound: 1e9,
        }
    }
}

impl SimConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("motor_inertia", self.motor_inertia),
            ("wheel_inertia", self.wheel_inertia),
            ("divergence_bound", self.divergence_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("damping_ratio", self.damping_ratio),
            ("road_amplitude", self.road_amplitude),
            ("telegraph_rate", self.telegraph_rate),
            ("brake_torque", self.brake_torque),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.substeps == 0 {
            return Err(Error::config("substeps must be ≥ 1"));
        }
        Ok(())
    }

    /// `J_m·J_w / (J_m + J_w)`
    pub fn reduced_inertia(&self) -> f64 {
        self.motor_inertia * self.wheel_inertia / (self.motor_inertia + self.wheel_inertia)
    }

    /// Shaft damping for the configured damping ratio at stiffness `k`.
    pub fn damping(&self, stiffness: f64) -> f64 {
        2.0 * self.damping_ratio * (stiffness * self.reduced_inertia()).sqrt()
    }

    /// Undamped torsional eigenfrequency in Hz: `√(k(1/J_m + 1/J_w)) / 2π`.
    pub fn eigenfrequency(&self, stiffness: f64) -> f64 {
        (stiffness * (1.0 / self.motor_inertia + 1.0 / self.wheel_inertia)).sqrt() / (2.0 * PI)
    }
}

/// `[twist, motor speed, wheel speed]`
type State = [f64; 3];

struct Drivetrain {
    jm: f64,
    jw: f64,
    k: f64,
    c: f64,
}

impl Drivetrain {
    fn shaft_torque(&self, s: &State) -> f64 {
        self.k * s[0] + self.c * (s[1] - s[2])
    }

    /// `load` is the total external torque opposing the wheel.
    fn derivative(&self, s: &State, load: f64) -> State {
        let tau = self.shaft_torque(s);
        [s[1] - s[2], -tau / self.jm, (tau - load) / self.jw]
    }

    fn rk4(&self, s: &State, load: f64, h: f64) -> State {
        let add =
            |a: &State, b: &State, f: f64| [a[0] + f * b[0], a[1] + f * b[1], a[2] + f * b[2]];
        let k1 = self.derivative(s, load);
        let k2 = self.derivative(&add(s, &k1, h / 2.0), load);
        let k3 = self.derivative(&add(s, &k2, h / 2.0), load);
        let k4 = self.derivative(&add(s, &k3, h), load);
        std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }
}

/// Integrate the torsional drivetrain for `duration` seconds and sample it at
/// `sample_rate` Hz.
///
/// The brake step acts on the wheel from `brake_time` on; a rear motor sees
/// the brake reaction with the opposite sign. The road adds a random
/// telegraph torque of amplitude `road_amplitude·(1 − μ)` whose sign may flip
/// once per output sample.
pub fn simulate_sequence(
    id: &str,
    p: &SimParams,
    consts: &SimConstants,
    duration: f64,
    sample_rate: f64,
) -> Result<SeriesRecord> {
    p.validate(duration)?;
    consts.validate()?;
    if !(sample_rate > 0.0 && duration > 0.0) {
        return Err(Error::config(format!(
            "sample rate {sample_rate} and duration {duration} must be positive"
        )));
    }
    let n = (duration * sample_rate).round() as usize;
    if n == 0 {
        return Err(Error::config("series would have zero samples"));
    }

    let plant = Drivetrain {
        jm: consts.motor_inertia,
        jw: consts.wheel_inertia,
        k: p.stiffness,
        c: consts.damping(p.stiffness),
    };
    let brake_sign = match p.motor_position {
        MotorPosition::Front => 1.0,
        MotorPosition::Rear => -1.0,
    };
    let road = consts.road_amplitude * (1.0 - p.road_friction);
    let flip_prob = (consts.telegraph_rate / sample_rate).min(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut telegraph = if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    let dt = 1.0 / sample_rate;
    let h = dt / consts.substeps as f64;
    let w0 = consts.initial_speed;
    let mut s: State = [0.0, w0, w0];
    let mut mg_rpm = Vec::with_capacity(n);
    let mut ds_torque = Vec::with_capacity(n);

    for i in 0..n {
        mg_rpm.push(s[1] * 60.0 / (2.0 * PI));
        ds_torque.push(plant.shaft_torque(&s));
        if rng.random_bool(flip_prob) {
            telegraph = -telegraph;
        }
        for j in 0..consts.substeps {
            let t = i as f64 * dt + j as f64 * h;
            let brake = if t >= p.brake_time {
                brake_sign * consts.brake_torque
            } else {
                0.0
            };
            s = plant.rk4(&s, brake + road * telegraph, h);
        }
        let magnitude = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(magnitude <= consts.divergence_bound) {
            return Err(Error::Simulation {
                step: i + 1,
                time: (i + 1) as f64 * dt,
                magnitude,
            });
        }
    }

    Ok(SeriesRecord {
        series_id: id.to_string(),
        params: p.clone(),
        sample_rate,
        mg_rpm,
        ds_torque,
    })
}
