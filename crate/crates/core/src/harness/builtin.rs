//! Built-in scenarios. Motor commands and run lengths are back-solved from
//! the target geometry with noise-free planning runs of the vehicle model.

use super::{PlotFrame, Scenario, ScriptedCommand};
use crate::link::Message;
use crate::vehicle::{step, ActuatorCommand, PumpCommand, VehicleParams, VehicleState};

pub const NAMES: &[&str] = &["line", "circle", "zigzag", "pump_test"];

/// Straight-run length target, m.
pub const LINE_LENGTH: f64 = 3.05;
/// Circle radius target, m.
pub const CIRCLE_RADIUS: f64 = 1.83;
/// Peak depth target of the pump test, m.
pub const PUMP_TARGET_DEPTH: f64 = 1.0;

/// Gap between the two copies of each planar motor command, s.
const REPEAT_GAP: f64 = 0.1;
const PLANNING_LIMIT: f64 = 300.0;

pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "line" => "equal motor commands, sized for a 3.05 m straight run",
        "circle" => "constant differential thrust for a 1.83 m radius turn, one full lap",
        "zigzag" => "alternating left and right turns about a straight course",
        "pump_test" => "sink to about 1 m with the pump, then rise and sink again",
        _ => return None,
    })
}

pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "line" => Some(line()),
        "circle" => Some(circle()),
        "zigzag" => Some(zigzag()),
        "pump_test" => Some(pump_test()),
        _ => None,
    }
}

fn base(name: &str) -> Scenario {
    Scenario { name: name.to_string(), plot_frame: PlotFrame::Overhead, ..Scenario::default() }
}

/// Sends `msg` twice so a single radio loss does not change the run.
fn send_twice(script: &mut Vec<ScriptedCommand>, t: f64, msg: Message) {
    script.push(ScriptedCommand { time: t, message: msg });
    script.push(ScriptedCommand { time: t + REPEAT_GAP, message: msg });
}

fn motors(left: i8, right: i8) -> Message {
    Message::SetMotors { left, right }
}

/// Steps the vehicle with a fixed command until `stop` holds; returns the
/// final state and the planar path length travelled.
fn plan<F>(s: &Scenario, mut state: VehicleState, cmd: ActuatorCommand, mut stop: F) -> (VehicleState, f64)
where
    F: FnMut(&VehicleState, f64) -> bool,
{
    let mut path = 0.0;
    while !stop(&state, path) && state.t < PLANNING_LIMIT {
        let Ok(next) = step(&state, &cmd, s.dt, &s.vehicle) else { break };
        path += (next.position.x - state.position.x).hypot(next.position.y - state.position.y);
        state = next;
    }
    (state, path)
}

fn at_rest(s: &Scenario) -> VehicleState {
    s.initial_state()
}

/// Whole simulation steps covering `t`.
fn round_up(t: f64, dt: f64) -> f64 {
    (t / dt - 1e-9).ceil() * dt
}

fn line() -> Scenario {
    let mut s = base("line");
    s.start.x = 0.5;
    s.start.psi = 0.0;
    let t_cmd = 0.5;
    let (l, r) = (50, 50);
    send_twice(&mut s.command_script, t_cmd, motors(l, r));

    let applied = t_cmd + s.channel.latency;
    let idle = VehicleState { t: 0.0, ..at_rest(&s) };
    let (start, _) = plan(&s, idle, ActuatorCommand::default(), |st, _| st.t >= applied - 1e-12);
    let cmd = ActuatorCommand::new(f64::from(l) / 100.0, f64::from(r) / 100.0, PumpCommand::Off);
    let u_star = s.vehicle.terminal_surge(f64::from(l) / 100.0);
    let (steady, _) = plan(&s, start, cmd, |st, _| st.u >= 0.99 * u_star);
    let (end, _) = plan(&s, start, cmd, |_, path| path >= LINE_LENGTH);
    s.steady_after = Some(round_up(steady.t, s.dt));
    s.duration = round_up(end.t, s.dt);
    s
}

/// Steady surge and yaw rate for motor percentages `(left, right)`.
fn steady_turn(p: &VehicleParams, left: i8, right: i8) -> (f64, f64) {
    let tl = f64::from(left) / 100.0 * p.max_thrust_per_prop;
    let tr = f64::from(right) / 100.0 * p.max_thrust_per_prop;
    let u = ((tl + tr) / p.drag_surge).sqrt();
    let torque = (tr - tl) * p.propeller_separation / 2.0;
    let r = torque.signum() * (torque.abs() / p.drag_yaw).sqrt();
    (u, r)
}

/// Integer motor split around a common level whose steady radius is
/// closest to `radius`.
fn circle_commands(p: &VehicleParams, common: i8, radius: f64) -> (i8, i8) {
    (1..=common.min(100 - common))
        .map(|d| (common - d, common + d))
        .min_by(|a, b| {
            let err = |&(l, r): &(i8, i8)| {
                let (u, w) = steady_turn(p, l, r);
                (u / w - radius).abs()
            };
            err(a).total_cmp(&err(b))
        })
        .unwrap_or((common, common))
}

fn circle() -> Scenario {
    let mut s = base("circle");
    let (l, r) = circle_commands(&s.vehicle, 50, CIRCLE_RADIUS);
    let (u, w) = steady_turn(&s.vehicle, l, r);
    // Start on the southern rim heading north, turning towards the centre.
    let radius = u / w;
    s.start.x = s.tank.side / 2.0;
    s.start.y = s.tank.side / 2.0 - radius;
    s.start.psi = 0.0;
    let t_cmd = 0.5;
    send_twice(&mut s.command_script, t_cmd, motors(l, r));

    let settle = 8.0;
    s.steady_after = Some(settle);
    s.duration = round_up(settle + std::f64::consts::TAU / w + 1.0, s.dt);
    s
}

fn zigzag() -> Scenario {
    let mut s = base("zigzag");
    s.start.x = 0.4;
    s.start.psi = 0.0;
    let (common, diff) = (30, 25);
    let right = motors(common - diff, common + diff);
    let left = motors(common + diff, common - diff);
    let leg = 2.5;
    let mut t = 0.5;
    // Half leg, three full legs, half leg: heading swings symmetrically
    // about the initial course and ends back on it.
    for (msg, len) in [(right, 0.5), (left, 1.0), (right, 1.0), (left, 1.0), (right, 0.5)] {
        send_twice(&mut s.command_script, t, msg);
        t += len * leg;
    }
    send_twice(&mut s.command_script, t, motors(common, common));
    s.duration = round_up(t + 1.5, s.dt);
    s
}

/// Pump test plan: fill to sink, flood-expel when the planned peak hits the
/// target depth, refill on the way up, and expel once more.
fn pump_test() -> Scenario {
    let mut s = base("pump_test");
    s.plot_frame = PlotFrame::Ned;
    let trigger = solve_expel_trigger(&s);
    let (script, end) = pump_plan(&s, trigger);
    s.command_script = script;
    s.duration = round_up(end, s.dt);
    s
}

/// Long enough to saturate the syringe from either end.
const PUMP_FULL_MS: u16 = 20_000;
/// Commands in a burst and their spacing; depth-limited radio means any
/// single one may be lost.
const BURST: usize = 8;
const BURST_GAP: f64 = 0.25;
/// Depth at which the rising vehicle is told to refill, m.
const REFILL_DEPTH: f64 = 0.6;
const PUMP_START: f64 = 1.0;

fn pump(mode: PumpCommand) -> Message {
    Message::Pump { mode, duration_ms: PUMP_FULL_MS }
}

/// Planning run assuming every command arrives. Returns the script, the end
/// time and the peak depth of the first dive.
fn pump_plan_full(s: &Scenario, expel_at: f64) -> (Vec<ScriptedCommand>, f64, f64) {
    let mut script = Vec::new();
    let mut state = at_rest(s);
    let mut mode = PumpCommand::Off;
    let mut pump_until = 0.0;
    let mut applied: Vec<(f64, PumpCommand)> = Vec::new();
    let mut peak: f64 = 0.0;
    let mut phase = 0;
    let mut last_depth = 0.0;

    let burst = |script: &mut Vec<ScriptedCommand>, applied: &mut Vec<(f64, PumpCommand)>, t: f64, m| {
        for k in 0..BURST {
            // Microsecond grid keeps accumulated step error out of the script.
            let tk = ((t + k as f64 * BURST_GAP) * 1e6).round() / 1e6;
            script.push(ScriptedCommand { time: tk, message: pump(m) });
            applied.push((tk + s.channel.latency, m));
        }
    };
    burst(&mut script, &mut applied, PUMP_START, PumpCommand::Intake);
    phase += 1;

    while state.t < PLANNING_LIMIT {
        let t = state.t;
        let depth = state.depth();
        let sinking = depth > last_depth;
        last_depth = depth;
        match phase {
            1 | 3 if sinking && depth >= expel_at => {
                burst(&mut script, &mut applied, t, PumpCommand::Expel);
                phase += 1;
            }
            2 if !sinking && depth <= REFILL_DEPTH && t > PUMP_START + 5.0 => {
                burst(&mut script, &mut applied, t, PumpCommand::Intake);
                phase += 1;
            }
            4 if depth <= 0.0 => return (script, t + 2.0, peak),
            _ => {}
        }
        applied.retain(|&(ta, m)| {
            if ta <= t + 1e-12 {
                mode = m;
                pump_until = ta + f64::from(PUMP_FULL_MS) / 1000.0;
                false
            } else {
                true
            }
        });
        let p = if t < pump_until { mode } else { PumpCommand::Off };
        let Ok(next) = step(&state, &ActuatorCommand::new(0.0, 0.0, p), s.dt, &s.vehicle) else { break };
        state = next;
        if phase <= 2 {
            peak = peak.max(state.depth());
        }
    }
    (script, state.t, peak)
}

fn pump_plan(s: &Scenario, expel_at: f64) -> (Vec<ScriptedCommand>, f64) {
    let (script, end, _) = pump_plan_full(s, expel_at);
    (script, end)
}

/// Bisects the expel trigger depth so the planned first dive peaks at the
/// target depth.
fn solve_expel_trigger(s: &Scenario) -> f64 {
    let (mut lo, mut hi) = (0.05, PUMP_TARGET_DEPTH);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let (_, _, peak) = pump_plan_full(s, mid);
        if peak > PUMP_TARGET_DEPTH {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
