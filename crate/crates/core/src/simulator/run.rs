//! The tick loop: sample sources, detect, enforce, actuate, step physics.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::physics::{
    luminance_of, step_house, HouseModel, Outdoor, RoomParams, RoomState, ThermostatMode,
    COMFORT_LUX,
};
use super::scenario::{parse_thermostat, Enforcement, HouseConfig, Scenario, SourceSpec};
use crate::detector::{count_by_kind, sort_conflicts, Conflict, ConflictKind, Detector};
use crate::error::{Error, Result};
use crate::model::{
    ActionName, ActuatorId, ActuatorKind, DetectorConfig, Event, EventId, EventSignature,
    LocationId, PredicateClass, RuleId, RuleSet, SensorId, TimeStamp,
};

/// One rule-issued command and whether enforcement dropped it.
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub tick: u64,
    pub event: EventId,
    pub rule: RuleId,
    pub actuator: ActuatorId,
    pub action: ActionName,
    /// The conflict kind that blocked the command, if any.
    pub suppressed: Option<ConflictKind>,
}

/// Everything one run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    pub scenario: String,
    pub seed: u64,
    pub horizon: u64,
    pub rooms: Vec<LocationId>,
    /// Room states after each tick, indexed `[tick][room]`.
    pub samples: Vec<Vec<RoomState>>,
    pub events: Vec<Event>,
    pub commands: Vec<Command>,
    pub conflicts: Vec<Conflict>,
    /// Conflicts per kind, indexed by [`ConflictKind::index`].
    pub counts: [usize; 7],
    /// Applied commands per actuator.
    pub actuations: BTreeMap<ActuatorId, usize>,
    pub actuations_by_kind: BTreeMap<ActuatorKind, usize>,
    /// Applied commands that changed the device's state.
    pub state_changes: BTreeMap<ActuatorId, usize>,
    /// Dropped commands, by the kind of conflict that dropped them.
    pub suppressed: [usize; 7],
    /// Room-ticks where an occupied room with a light was outside the
    /// comfortable luminance band.
    pub out_of_range_ticks: usize,
}

impl TraceReport {
    fn empty(s: &Scenario, rooms: Vec<LocationId>) -> Self {
        TraceReport {
            scenario: s.id.clone(),
            seed: s.seed,
            horizon: s.horizon,
            rooms,
            samples: Vec::new(),
            events: Vec::new(),
            commands: Vec::new(),
            conflicts: Vec::new(),
            counts: [0; 7],
            actuations: BTreeMap::new(),
            actuations_by_kind: BTreeMap::new(),
            state_changes: BTreeMap::new(),
            suppressed: [0; 7],
            out_of_range_ticks: 0,
        }
    }

    pub fn total_conflicts(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn total_actuations(&self) -> usize {
        self.actuations.values().sum()
    }

    pub fn total_suppressed(&self) -> usize {
        self.suppressed.iter().sum()
    }

    pub fn room_index(&self, room: &str) -> Option<usize> {
        self.rooms.iter().position(|r| r.as_str() == room)
    }

    pub fn actuations_of_kind(&self, kind: &str) -> usize {
        self.actuations_by_kind.get(kind).copied().unwrap_or(0)
    }
}

/// A main run next to its baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pub main: TraceReport,
    pub baseline: TraceReport,
    /// Main minus baseline applied commands, per actuator kind.
    pub extra_actuations: BTreeMap<ActuatorKind, i64>,
    /// Mean absolute per-tick difference in the focus room.
    pub mean_temperature_deviation: f64,
    pub mean_humidity_deviation: f64,
}

impl PairedRun {
    pub fn extra_actuations_of(&self, kind: &str) -> i64 {
        self.extra_actuations.get(kind).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Thermostat,
    Humidifier,
    Light,
    Blind,
    Window,
    Door,
    Alarm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Setting {
    Mode(ThermostatMode),
    Switch(bool),
}

impl Setting {
    fn is_active(self) -> bool {
        match self {
            Setting::Mode(m) => m != ThermostatMode::Off,
            Setting::Switch(b) => b,
        }
    }
}

impl Field {
    fn of_kind(kind: &str) -> Option<Field> {
        Some(match kind {
            "thermostat" => Field::Thermostat,
            "humidifier" => Field::Humidifier,
            "light" => Field::Light,
            "blind" => Field::Blind,
            "window" => Field::Window,
            "door" => Field::Door,
            "alarm" => Field::Alarm,
            _ => return None,
        })
    }

    fn inactive(self) -> Setting {
        match self {
            Field::Thermostat => Setting::Mode(ThermostatMode::Off),
            _ => Setting::Switch(false),
        }
    }

    /// Effect of an action: `Some(None)` when it has no physical effect,
    /// `None` when the device does not understand it.
    fn effect(self, action: &str) -> Option<Option<Setting>> {
        let on = |b| Some(Some(Setting::Switch(b)));
        match (self, action) {
            (Field::Thermostat, "on" | "increase") => Some(Some(Setting::Mode(ThermostatMode::Heat))),
            (Field::Thermostat, "decrease") => Some(Some(Setting::Mode(ThermostatMode::Cool))),
            (Field::Thermostat, "off") => Some(Some(Setting::Mode(ThermostatMode::Off))),
            (Field::Humidifier | Field::Light, "on") => on(true),
            (Field::Humidifier | Field::Light, "off") => on(false),
            (Field::Blind | Field::Window | Field::Door, "open") => on(true),
            (Field::Blind | Field::Window | Field::Door, "close") => on(false),
            (Field::Door, "lock" | "unlock") => Some(None),
            (Field::Alarm, "sound" | "beep" | "flash") => on(true),
            (Field::Alarm, "silence") => on(false),
            _ => None,
        }
    }

    fn parse_initial(self, s: &str) -> Option<Setting> {
        match self {
            Field::Thermostat => parse_thermostat(s).map(Setting::Mode),
            _ => match s {
                "on" | "open" => Some(Setting::Switch(true)),
                "off" | "closed" | "close" => Some(Setting::Switch(false)),
                _ => None,
            },
        }
    }

    fn get(self, room: &RoomState) -> Option<Setting> {
        let switch = |b: Option<bool>| b.map(Setting::Switch);
        match self {
            Field::Thermostat => room.thermostat.map(Setting::Mode),
            Field::Humidifier => switch(room.humidifier),
            Field::Light => switch(room.light),
            Field::Blind => switch(room.blind),
            Field::Window => switch(room.window),
            Field::Door => switch(room.door),
            Field::Alarm => switch(room.alarm),
        }
    }

    fn set(self, room: &mut RoomState, setting: Setting) {
        match (self, setting) {
            (Field::Thermostat, Setting::Mode(m)) => room.thermostat = Some(m),
            (Field::Humidifier, Setting::Switch(b)) => room.humidifier = Some(b),
            (Field::Light, Setting::Switch(b)) => room.light = Some(b),
            (Field::Blind, Setting::Switch(b)) => room.blind = Some(b),
            (Field::Window, Setting::Switch(b)) => room.window = Some(b),
            (Field::Door, Setting::Switch(b)) => room.door = Some(b),
            (Field::Alarm, Setting::Switch(b)) => room.alarm = Some(b),
            _ => unreachable!("setting matches its field by construction"),
        }
    }
}

#[derive(Debug)]
struct Device {
    kind: ActuatorKind,
    room: usize,
    field: Field,
    hold: u64,
    release_at: Option<u64>,
    follows: Option<usize>,
}

#[derive(Debug)]
struct Source {
    spec: SourceSpec,
    rng: ChaCha8Rng,
    sensor: SensorId,
    signature: EventSignature,
    room: usize,
}

/// 64-bit FNV-1a, used to give every source its own random stream.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn invalid_house(reason: impl Into<String>) -> Error {
    Error::invalid("[house]", reason)
}

struct World {
    house: HouseModel,
    rooms: Vec<RoomState>,
    always_occupied: Vec<bool>,
    occupied_until: Vec<u64>,
    devices: Vec<Device>,
    device_index: HashMap<ActuatorId, usize>,
    device_ids: Vec<ActuatorId>,
}

fn build_world(house_cfg: &HouseConfig, rs: &RuleSet, cfg: &DetectorConfig) -> Result<World> {
    let registry = rs.registry();
    let rooms: Vec<LocationId> = registry.locations().to_vec();
    let room_of = |loc: &LocationId| {
        rooms
            .iter()
            .position(|r| r == loc)
            .ok_or_else(|| Error::unknown("location", loc.as_str()))
    };
    for loc in house_cfg.rooms.keys() {
        room_of(loc)?;
    }
    for id in house_cfg.devices.keys() {
        registry
            .actuator(id.as_str())
            .ok_or_else(|| Error::unknown("actuator", id.as_str()))?;
    }
    house_cfg
        .defaults
        .validate()
        .map_err(|e| invalid_house(format!("defaults: {e}")))?;
    for (name, value) in [
        ("k_adj", house_cfg.k_adj),
        ("daylight", house_cfg.daylight),
        ("outdoor_swing", house_cfg.outdoor_swing),
    ] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(invalid_house(format!("{name} must be a non-negative number")));
        }
    }
    if !house_cfg.outdoor_mean.is_finite() {
        return Err(invalid_house("outdoor_mean must be finite"));
    }

    let mut adjacency = Vec::new();
    for (a, b) in &house_cfg.adjacency {
        let (a, b) = (room_of(a)?, room_of(b)?);
        if a == b {
            return Err(invalid_house(format!("room `{}` is adjacent to itself", rooms[a])));
        }
        let pair = (a.min(b), a.max(b));
        if !adjacency.contains(&pair) {
            adjacency.push(pair);
        }
    }

    let outdoor = Outdoor {
        mean: house_cfg.outdoor_mean,
        swing: house_cfg.outdoor_swing,
        daylight: house_cfg.daylight,
        day_length: cfg.day_length,
    };
    let mut params = Vec::with_capacity(rooms.len());
    let mut states = Vec::with_capacity(rooms.len());
    let mut always_occupied = Vec::with_capacity(rooms.len());
    for loc in &rooms {
        let room_cfg = house_cfg.rooms.get(loc).cloned().unwrap_or_default();
        let p: RoomParams = room_cfg.apply(house_cfg.defaults);
        p.validate()
            .map_err(|e| invalid_house(format!("room `{loc}`: {e}")))?;
        let t = room_cfg.initial_temperature.unwrap_or(outdoor.temperature(0));
        let rh = room_cfg.initial_humidity.unwrap_or(45.0);
        if !t.is_finite() || !(0.0..=100.0).contains(&rh) {
            return Err(invalid_house(format!(
                "room `{loc}`: initial temperature must be finite and humidity within [0, 100]"
            )));
        }
        params.push(p);
        let mut state = RoomState::new(t, rh);
        state.occupied = room_cfg.always_occupied;
        states.push(state);
        always_occupied.push(room_cfg.always_occupied);
    }

    let mut devices = Vec::new();
    let mut device_index = HashMap::new();
    let mut device_ids = Vec::new();
    for decl in registry.actuators() {
        let field = Field::of_kind(decl.kind.as_str())
            .ok_or_else(|| Error::UnknownActuatorKind(decl.kind.to_string()))?;
        let room = room_of(&decl.location)?;
        if field.get(&states[room]).is_some() {
            return Err(invalid_house(format!(
                "room `{}` has more than one {} device",
                decl.location, decl.kind
            )));
        }
        let dev_cfg = house_cfg.devices.get(&decl.id).cloned().unwrap_or_default();
        let initial = match &dev_cfg.initial {
            Some(s) => field.parse_initial(s).ok_or_else(|| {
                invalid_house(format!("device `{}`: bad initial state `{s}`", decl.id))
            })?,
            None => field.inactive(),
        };
        field.set(&mut states[room], initial);
        device_index.insert(decl.id.clone(), devices.len());
        device_ids.push(decl.id.clone());
        devices.push(Device {
            kind: decl.kind.clone(),
            room,
            field,
            hold: dev_cfg.hold,
            release_at: None,
            follows: None,
        });
    }
    for (id, dev_cfg) in &house_cfg.devices {
        if let Some(target) = &dev_cfg.follows {
            let t = *device_index
                .get(target)
                .ok_or_else(|| Error::unknown("actuator", target.as_str()))?;
            let i = device_index[id];
            if devices[i].field == Field::Thermostat || devices[t].field == Field::Thermostat || i == t {
                return Err(invalid_house(format!(
                    "device `{id}` cannot follow `{target}`"
                )));
            }
            devices[i].follows = Some(t);
        }
    }
    for rule in rs.rules() {
        let d = &devices[device_index[&rule.action.actuator]];
        if d.field.effect(rule.action.action.as_str()).is_none() {
            return Err(Error::UnknownAction {
                kind: d.kind.to_string(),
                action: rule.action.action.to_string(),
            });
        }
    }

    let house = HouseModel {
        rooms,
        params,
        adjacency,
        k_adj: house_cfg.k_adj,
        outdoor,
    };
    for (i, state) in states.iter_mut().enumerate() {
        state.luminance = luminance_of(state, &house.params[i], outdoor.daylight);
    }
    let n = states.len();
    Ok(World {
        house,
        rooms: states,
        always_occupied,
        occupied_until: vec![0; n],
        devices,
        device_index,
        device_ids,
    })
}

fn build_sources(s: &Scenario, rs: &RuleSet, rooms: &[LocationId]) -> Result<Vec<Source>> {
    let registry = rs.registry();
    s.sources
        .iter()
        .map(|spec| {
            let decl = registry
                .sensor(spec.sensor().as_str())
                .ok_or_else(|| Error::unknown("sensor", spec.sensor().as_str()))?;
            let room = rooms
                .iter()
                .position(|r| *r == decl.location)
                .ok_or_else(|| Error::unknown("location", decl.location.as_str()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(stream_id(spec.name()));
            Ok(Source {
                spec: spec.clone(),
                rng,
                sensor: decl.id.clone(),
                signature: EventSignature {
                    sensor_kind: decl.kind.clone(),
                    predicate: PredicateClass::GreaterThan,
                    location: decl.location.clone(),
                },
                room,
            })
        })
        .collect()
}

fn measure(room: &RoomState, kind: &str) -> f64 {
    match kind {
        "temperature" => room.temperature,
        "humidity" => room.humidity,
        _ => room.luminance,
    }
}

/// Runs a scenario against `rs` and `cfg`, which may differ from the
/// scenario's own document (e.g. command-line window overrides).
pub fn run_scenario(s: &Scenario, rs: &RuleSet, cfg: &DetectorConfig) -> Result<TraceReport> {
    let house_cfg = s.house_config()?;
    let mut world = build_world(&house_cfg, rs, cfg)?;
    let mut sources = build_sources(s, rs, &world.house.rooms)?;
    let mut detector = Detector::new(rs, cfg)?;
    let mut report = TraceReport::empty(s, world.house.rooms.clone());
    report.samples.reserve(s.horizon as usize);

    let mut last_report: HashMap<SensorId, (f64, PredicateClass)> = HashMap::new();
    let mut reported: HashSet<SensorId> = HashSet::new();
    let mut commanded = vec![false; world.devices.len()];
    let mut next_event = 0u64;

    for t in 0..s.horizon {
        // Expire held devices and occupancy.
        for d in &mut world.devices {
            if d.release_at.is_some_and(|r| r <= t) {
                d.release_at = None;
                d.field.set(&mut world.rooms[d.room], d.field.inactive());
            }
        }
        for (i, room) in world.rooms.iter_mut().enumerate() {
            room.occupied = world.always_occupied[i] || world.occupied_until[i] > t;
        }

        // Sample sources in declaration order.
        let mut events = Vec::new();
        reported.clear();
        for src in &mut sources {
            let reading = match &src.spec {
                SourceSpec::Bernoulli { probability, value, .. } => {
                    let u: f64 = src.rng.gen();
                    (u < *probability).then_some((*value, PredicateClass::GreaterThan))
                }
                SourceSpec::Motion { probability, hold, .. } => {
                    let u: f64 = src.rng.gen();
                    (u < *probability).then(|| {
                        let until = &mut world.occupied_until[src.room];
                        *until = (*until).max(t + hold);
                        world.rooms[src.room].occupied = true;
                        (1.0, PredicateClass::GreaterThan)
                    })
                }
                SourceSpec::Measured { deadband, resolution, .. } => {
                    let raw = measure(&world.rooms[src.room], src.signature.sensor_kind.as_str());
                    let v = (raw / resolution).round() * resolution;
                    match last_report.get(&src.sensor) {
                        None => Some((v, PredicateClass::EqualTo)),
                        Some(&(last, _)) if (v - last).abs() >= *deadband => {
                            let p = if v > last {
                                PredicateClass::GreaterThan
                            } else if v < last {
                                PredicateClass::LessThan
                            } else {
                                PredicateClass::EqualTo
                            };
                            Some((v, p))
                        }
                        Some(_) => None,
                    }
                }
                SourceSpec::Clock { period, .. } => {
                    (t % period == 0).then(|| ((t % cfg.day_length) as f64, PredicateClass::EqualTo))
                }
                SourceSpec::Retransmit { probability, .. } => {
                    let u: f64 = src.rng.gen();
                    if u < *probability && !reported.contains(&src.sensor) {
                        last_report.get(&src.sensor).copied()
                    } else {
                        None
                    }
                }
            };
            if let Some((value, predicate)) = reading {
                last_report.insert(src.sensor.clone(), (value, predicate));
                reported.insert(src.sensor.clone());
                events.push(Event {
                    id: EventId(next_event),
                    sensor: src.sensor.clone(),
                    time: TimeStamp(t),
                    value,
                    signature: EventSignature {
                        predicate,
                        ..src.signature.clone()
                    },
                });
                next_event += 1;
            }
        }

        let outcome = detector.process_tick(TimeStamp(t), &events)?;
        let blocked = enforce(s.enforcement, t, &outcome.conflicts);

        commanded.fill(false);
        for ta in &outcome.actions {
            let suppressed = blocked.get(ta.event.id, ta.rule_index);
            report.commands.push(Command {
                tick: t,
                event: ta.event.id,
                rule: ta.rule.clone(),
                actuator: ta.action.actuator.clone(),
                action: ta.action.action.clone(),
                suppressed,
            });
            if let Some(kind) = suppressed {
                report.suppressed[kind.index()] += 1;
                continue;
            }
            let i = world.device_index[&ta.action.actuator];
            let d = &mut world.devices[i];
            *report.actuations.entry(ta.action.actuator.clone()).or_default() += 1;
            *report.actuations_by_kind.entry(d.kind.clone()).or_default() += 1;
            commanded[i] = true;
            let Some(setting) = d.field.effect(ta.action.action.as_str()).flatten() else {
                continue;
            };
            let room = &mut world.rooms[d.room];
            if d.field.get(room) != Some(setting) {
                *report.state_changes.entry(ta.action.actuator.clone()).or_default() += 1;
            }
            d.field.set(room, setting);
            d.release_at = (setting.is_active() && d.hold > 0).then_some(t + d.hold);
        }

        // Followers mirror the inverse of their target unless commanded.
        #[allow(clippy::needless_range_loop)]
        for i in 0..world.devices.len() {
            let Some(target) = world.devices[i].follows else {
                continue;
            };
            if commanded[i] {
                continue;
            }
            let tdev = &world.devices[target];
            let on = tdev.field.get(&world.rooms[tdev.room]) == Some(Setting::Switch(true));
            let d = &world.devices[i];
            d.field.set(&mut world.rooms[d.room], Setting::Switch(!on));
        }

        step_house(&world.house, &mut world.rooms, t);
        for room in &world.rooms {
            if room.occupied
                && room.light.is_some()
                && !(COMFORT_LUX.0..=COMFORT_LUX.1).contains(&room.luminance)
            {
                report.out_of_range_ticks += 1;
            }
        }
        report.samples.push(world.rooms.clone());
        report.events.extend(events);
        report.conflicts.extend(outcome.conflicts);
    }

    sort_conflicts(&mut report.conflicts);
    report.counts = count_by_kind(&report.conflicts);
    for id in &world.device_ids {
        report.actuations.entry(id.clone()).or_default();
    }
    Ok(report)
}

/// Runs a scenario against its own ruleset and detector configuration.
pub fn run(s: &Scenario) -> Result<TraceReport> {
    run_scenario(s, &s.document.ruleset, &s.document.config)
}

/// Runs the scenario and its baseline with the same seed and compares them.
/// Scenarios without a pairing are compared against themselves.
pub fn run_paired(s: &Scenario, rs: &RuleSet, cfg: &DetectorConfig) -> Result<PairedRun> {
    let main = run_scenario(s, rs, cfg)?;
    let baseline = match s.baseline() {
        Some(b) => run_scenario(&b, rs, cfg)?,
        None => main.clone(),
    };
    let mut extra_actuations = BTreeMap::new();
    for kind in main.actuations_by_kind.keys().chain(baseline.actuations_by_kind.keys()) {
        let delta = main.actuations_of_kind(kind.as_str()) as i64
            - baseline.actuations_of_kind(kind.as_str()) as i64;
        extra_actuations.insert(kind.clone(), delta);
    }
    let focus = s.focus.as_ref().and_then(|f| main.room_index(f.as_str()));
    let deviation = |get: fn(&RoomState) -> f64| match focus {
        Some(r) if !main.samples.is_empty() => {
            main.samples
                .iter()
                .zip(&baseline.samples)
                .map(|(a, b)| (get(&a[r]) - get(&b[r])).abs())
                .sum::<f64>()
                / main.samples.len() as f64
        }
        _ => 0.0,
    };
    Ok(PairedRun {
        mean_temperature_deviation: deviation(|r| r.temperature),
        mean_humidity_deviation: deviation(|r| r.humidity),
        extra_actuations,
        main,
        baseline,
    })
}

/// Actions dropped at one tick.
#[derive(Debug, Default)]
struct Blocked {
    /// Later events of C7 pairs; all their actions are dropped.
    events: HashSet<EventId>,
    actions: HashMap<(EventId, usize), ConflictKind>,
}

impl Blocked {
    fn get(&self, event: EventId, rule_index: usize) -> Option<ConflictKind> {
        if self.events.contains(&event) {
            Some(ConflictKind::C7)
        } else {
            self.actions.get(&(event, rule_index)).copied()
        }
    }
}

/// Decides which of this tick's triggered actions to drop. C7 drops every
/// action of the later duplicate event. Under full enforcement each C1..C6
/// pair that is still unresolved loses its participant from this tick, or
/// the one from the later-declared rule when both are new.
fn enforce(mode: Enforcement, tick: u64, conflicts: &[Conflict]) -> Blocked {
    let mut blocked = Blocked::default();
    if mode == Enforcement::None {
        return blocked;
    }
    for e in conflicts.iter().filter_map(Conflict::suppressible) {
        if e.time.0 == tick {
            blocked.events.insert(e.id);
        }
    }
    if mode != Enforcement::All {
        return blocked;
    }
    for c in conflicts {
        let Some([a, b]) = c.actions() else {
            continue;
        };
        let (new_a, new_b) = (a.time.0 == tick, b.time.0 == tick);
        if (new_a && blocked.get(a.event.id, a.rule_index).is_some())
            || (new_b && blocked.get(b.event.id, b.rule_index).is_some())
        {
            continue;
        }
        let victim = match (new_a, new_b) {
            (true, true) if a.rule_index > b.rule_index => a,
            (true, true) | (false, true) => b,
            (true, false) => a,
            (false, false) => continue,
        };
        blocked
            .actions
            .insert((victim.event.id, victim.rule_index), c.kind);
    }
    blocked
}
