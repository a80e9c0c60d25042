use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::trajectory::{phasor_frequency, Trajectory};
use super::{integrate, Stats, Tolerances};
use crate::error::{Error, Result};
use crate::powernet::{node_powers, ClosedLoop, LyapunovFunction, Setpoints, Stage};

/// One scenario action; nodes are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    SetLoad { node: usize, conductance: f64 },
    SetSetpoints(Setpoints),
    EnableConverterStage { node: usize, stage: Stage },
    PerturbState { delta: Vec<f64> },
}

#[derive(Deserialize, Serialize)]
struct RawEvent {
    t: f64,
    action: String,
    #[serde(default)]
    args: Value,
}

#[derive(Deserialize, Serialize)]
struct LoadArgs {
    node: usize,
    conductance: f64,
}

#[derive(Deserialize, Serialize)]
struct StageArgs {
    node: usize,
    stage: Stage,
}

#[derive(Deserialize, Serialize)]
struct PerturbArgs {
    delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEvent", into = "RawEvent")]
pub struct Event {
    pub t: f64,
    pub action: Action,
}

impl TryFrom<RawEvent> for Event {
    type Error = String;

    fn try_from(raw: RawEvent) -> std::result::Result<Self, String> {
        let args = raw.args;
        let bad = |e: serde_json::Error| format!("event at t = {}: {e}", raw.t);
        let action = match raw.action.as_str() {
            "set-load" => {
                let a: LoadArgs = serde_json::from_value(args).map_err(bad)?;
                Action::SetLoad { node: a.node, conductance: a.conductance }
            }
            "set-setpoints" => Action::SetSetpoints(serde_json::from_value(args).map_err(bad)?),
            "enable-converter-stage" => {
                let a: StageArgs = serde_json::from_value(args).map_err(bad)?;
                Action::EnableConverterStage { node: a.node, stage: a.stage }
            }
            "perturb-state" => {
                let a: PerturbArgs = serde_json::from_value(args).map_err(bad)?;
                Action::PerturbState { delta: a.delta }
            }
            other => return Err(format!("unknown action '{other}'")),
        };
        Ok(Event { t: raw.t, action })
    }
}

impl From<Event> for RawEvent {
    fn from(e: Event) -> Self {
        let (action, args) = match e.action {
            Action::SetLoad { node, conductance } => ("set-load", serde_json::to_value(LoadArgs { node, conductance })),
            Action::SetSetpoints(sp) => ("set-setpoints", serde_json::to_value(sp)),
            Action::EnableConverterStage { node, stage } => {
                ("enable-converter-stage", serde_json::to_value(StageArgs { node, stage }))
            }
            Action::PerturbState { delta } => ("perturb-state", serde_json::to_value(PerturbArgs { delta })),
        };
        RawEvent { t: e.t, action: action.to_string(), args: args.unwrap_or(Value::Null) }
    }
}

/// Time-ordered events.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scenario {
    pub events: Vec<Event>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::input(format!("scenario: {e}")))?;
        s.check_times()?;
        Ok(s)
    }

    fn check_times(&self) -> Result<()> {
        let mut prev = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            if !(e.t >= prev) || !e.t.is_finite() {
                return Err(Error::input(format!("event {i} at t = {} is out of order", e.t)));
            }
            prev = e.t;
        }
        Ok(())
    }
}

/// Options of a scenario run.
#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    pub tolerances: Tolerances,
    /// Spacing of the output grid.
    pub sample_dt: f64,
    /// Supplies the `nu`, `dist_S` and `dist_A` channels when present.
    pub lyapunov: Option<&'a LyapunovFunction>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions { tolerances: Tolerances::default(), sample_dt: 1e-3, lyapunov: None }
    }
}

pub struct ScenarioRun {
    pub trajectory: Trajectory,
    pub stats: Stats,
    /// Model after the last event.
    pub model: ClosedLoop,
    pub final_state: Vec<f64>,
}

fn apply(model: &mut ClosedLoop, x: &mut [f64], action: &Action) -> Result<()> {
    match action {
        Action::SetLoad { node, conductance } => model.set_load(*node, *conductance),
        Action::SetSetpoints(sp) => model.set_setpoints(sp.clone()),
        Action::EnableConverterStage { node, stage } => model.set_stage(*node, *stage),
        Action::PerturbState { delta } => {
            if delta.len() != x.len() {
                return Err(Error::input(format!("perturbation has {} entries, state has {}", delta.len(), x.len())));
            }
            x.iter_mut().zip(delta).for_each(|(a, d)| *a += d);
            Ok(())
        }
    }
}

/// Integrates `model` from `x0` over `[0, t_end]`, applying each event at its
/// time. The output grid is `k * sample_dt`; a sample that coincides with an
/// event time shows the post-event state.
pub fn run_scenario(
    model: &ClosedLoop,
    scenario: &Scenario,
    x0: &[f64],
    t_end: f64,
    opts: &RunOptions,
) -> Result<ScenarioRun> {
    scenario.check_times()?;
    if !(t_end > 0.0 && t_end.is_finite()) || !(opts.sample_dt > 0.0) {
        return Err(Error::input("end time and sample spacing must be positive"));
    }
    if let Some(e) = scenario.events.iter().find(|e| e.t > t_end) {
        return Err(Error::input(format!("event at t = {} lies after the end time {t_end}", e.t)));
    }
    let mut model = model.clone();
    let mut x = x0.to_vec();
    if x.len() != model.layout.dim() {
        return Err(Error::input(format!("initial state has {} entries, model needs {}", x.len(), model.layout.dim())));
    }
    let grid: Vec<f64> = {
        let n = (t_end / opts.sample_dt + 1e-9).floor() as usize;
        let mut g: Vec<f64> = (0..=n).map(|i| i as f64 * opts.sample_dt).collect();
        if t_end - g[n] > 1e-9 * opts.sample_dt {
            g.push(t_end);
        }
        g
    };

    let mut traj = Trajectory::from_states(Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()), model.layout.names());
    let nodes = model.layout.nodes;
    traj.nodes = nodes;
    let mut stats = Stats::default();
    let mut next_sample = 0;
    let mut events = scenario.events.iter().peekable();
    let mut t = 0.0;

    let record = |traj: &mut Trajectory, model: &ClosedLoop, t: f64, x: Vec<f64>| {
        let v = &x[model.layout.v()..model.layout.v() + 2 * nodes];
        let (p, q) = node_powers(v, &model.output_currents(&x));
        traj.vmag.push((0..nodes).map(|k| v[2 * k].hypot(v[2 * k + 1])).collect());
        traj.p.push(p);
        traj.q.push(q);
        let l = opts.lyapunov.map(|f| f.evaluate(&x));
        traj.nu.push(l.map(|l| l.nu));
        traj.dist_s.push(l.map(|l| l.dist_s));
        traj.dist_a.push(l.map(|l| l.dist_a));
        traj.t.push(t);
        traj.x.push(x);
    };

    loop {
        while let Some(e) = events.next_if(|e| e.t <= t) {
            apply(&mut model, &mut x, &e.action)?;
        }
        let t_next = events.peek().map_or(t_end, |e| e.t);
        let last_segment = events.peek().is_none();
        let in_segment = |s: f64| if last_segment { s <= t_next } else { s < t_next };
        if t_next > t {
            let sol = integrate(&model, &x, (t, t_next), &opts.tolerances)?;
            stats.accepted += sol.stats.accepted;
            stats.rejected += sol.stats.rejected;
            stats.evaluations += sol.stats.evaluations;
            while next_sample < grid.len() && in_segment(grid[next_sample]) {
                let s = grid[next_sample];
                record(&mut traj, &model, s, sol.interpolate(s));
                next_sample += 1;
            }
            x = sol.last().to_vec();
        } else if last_segment {
            while next_sample < grid.len() && in_segment(grid[next_sample]) {
                record(&mut traj, &model, grid[next_sample], x.clone());
                next_sample += 1;
            }
        }
        t = t_next;
        if last_segment {
            break;
        }
    }

    let w0 = model.net.omega0;
    let per_node: Vec<Vec<Option<f64>>> = (0..nodes)
        .map(|k| {
            let ph: Vec<[f64; 2]> = traj.x.iter().map(|s| [s[2 * k], s[2 * k + 1]]).collect();
            phasor_frequency(&traj.t, &ph, w0)
        })
        .collect();
    traj.freq = (0..traj.t.len()).map(|i| per_node.iter().map(|f| f[i]).collect()).collect();

    Ok(ScenarioRun { trajectory: traj, stats, model, final_state: x })
}
