//! First-order lumped room model: one temperature, humidity and luminance
//! value per room, updated once per tick.

use serde::{Deserialize, Serialize};

use crate::model::LocationId;

/// Luminance band considered comfortable in an occupied, lit room.
pub const COMFORT_LUX: (f64, f64) = (200.0, 450.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThermostatMode {
    #[default]
    Off,
    Heat,
    Cool,
}

impl ThermostatMode {
    pub fn sign(self) -> f64 {
        match self {
            ThermostatMode::Off => 0.0,
            ThermostatMode::Heat => 1.0,
            ThermostatMode::Cool => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ThermostatMode::Off => "off",
            ThermostatMode::Heat => "heat",
            ThermostatMode::Cool => "cool",
        }
    }
}

/// Per-room coefficients. All are non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomParams {
    /// Heat exchange with outdoors, per tick.
    pub k_loss: f64,
    /// Thermostat gain in °F per tick.
    pub g_heat: f64,
    /// Extra outdoor exchange through an open window, per tick.
    pub k_win: f64,
    /// Relative humidity drop in %RH per °F of warming.
    pub k_h: f64,
    /// Humidifier gain in %RH per tick.
    pub g_hum: f64,
    pub l_base: f64,
    pub l_window: f64,
    pub l_lamp: f64,
    /// Heat added per tick while the room is occupied.
    pub occupancy_heat: f64,
}

impl Default for RoomParams {
    fn default() -> Self {
        RoomParams {
            k_loss: 0.05,
            g_heat: 0.5,
            k_win: 0.1,
            k_h: 1.5,
            g_hum: 2.0,
            l_base: 100.0,
            l_window: 250.0,
            l_lamp: 250.0,
            occupancy_heat: 0.0,
        }
    }
}

impl RoomParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("k_loss", self.k_loss),
            ("g_heat", self.g_heat),
            ("k_win", self.k_win),
            ("k_h", self.k_h),
            ("g_hum", self.g_hum),
            ("l_base", self.l_base),
            ("l_window", self.l_window),
            ("l_lamp", self.l_lamp),
            ("occupancy_heat", self.occupancy_heat),
        ];
        for (name, value) in fields {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(format!("{name} must be a non-negative number"));
            }
        }
        Ok(())
    }
}

/// State of one room. Device fields are `None` when the room has no such
/// device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomState {
    pub temperature: f64,
    pub humidity: f64,
    pub luminance: f64,
    pub occupied: bool,
    pub thermostat: Option<ThermostatMode>,
    pub humidifier: Option<bool>,
    pub light: Option<bool>,
    pub blind: Option<bool>,
    pub window: Option<bool>,
    pub door: Option<bool>,
    pub alarm: Option<bool>,
}

impl RoomState {
    pub fn new(temperature: f64, humidity: f64) -> Self {
        RoomState {
            temperature,
            humidity,
            luminance: 0.0,
            occupied: false,
            thermostat: None,
            humidifier: None,
            light: None,
            blind: None,
            window: None,
            door: None,
            alarm: None,
        }
    }
}

/// Outdoor conditions: a daily sinusoid around `mean` and constant daylight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outdoor {
    pub mean: f64,
    pub swing: f64,
    pub daylight: f64,
    pub day_length: u64,
}

impl Outdoor {
    pub fn temperature(&self, tick: u64) -> f64 {
        let phase = (tick % self.day_length) as f64 / self.day_length as f64;
        self.mean + self.swing * (std::f64::consts::TAU * phase).sin()
    }

    pub fn min_temperature(&self) -> f64 {
        self.mean - self.swing.abs()
    }

    pub fn max_temperature(&self) -> f64 {
        self.mean + self.swing.abs()
    }
}

/// Rooms, their coefficients, and which rooms exchange heat.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseModel {
    pub rooms: Vec<LocationId>,
    pub params: Vec<RoomParams>,
    /// Undirected pairs of room indices.
    pub adjacency: Vec<(usize, usize)>,
    pub k_adj: f64,
    pub outdoor: Outdoor,
}

impl HouseModel {
    pub fn neighbours(&self, room: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.iter().filter_map(move |&(a, b)| {
            if a == room {
                Some(b)
            } else if b == room {
                Some(a)
            } else {
                None
            }
        })
    }
}

/// Next temperature of a room given the outdoor temperature and the
/// temperatures of its neighbours.
pub fn thermal_step(
    room: &RoomState,
    params: &RoomParams,
    outdoor: f64,
    neighbours: &[f64],
    k_adj: f64,
) -> f64 {
    let t = room.temperature;
    let mut next = t + params.k_loss * (outdoor - t);
    next += params.g_heat * room.thermostat.unwrap_or_default().sign();
    if room.window == Some(true) {
        next += params.k_win * (outdoor - t);
    }
    next += neighbours.iter().map(|n| k_adj * (n - t)).sum::<f64>();
    if room.occupied {
        next += params.occupancy_heat;
    }
    next
}

/// Relative humidity falls as air warms at fixed moisture, and rises while a
/// humidifier runs.
pub fn humidity_step(room: &RoomState, params: &RoomParams, delta_t: f64) -> f64 {
    let mut next = room.humidity - params.k_h * delta_t;
    if room.humidifier == Some(true) {
        next += params.g_hum;
    }
    next.clamp(0.0, 100.0)
}

pub fn luminance_of(room: &RoomState, params: &RoomParams, daylight: f64) -> f64 {
    let mut lux = params.l_base;
    if room.blind == Some(true) {
        lux += daylight.min(params.l_window);
    }
    if room.light == Some(true) {
        lux += params.l_lamp;
    }
    lux
}

/// Advances every room by one tick. Temperatures update synchronously from
/// the previous state; humidity follows each room's temperature change.
pub fn step_house(house: &HouseModel, rooms: &mut [RoomState], tick: u64) {
    let outdoor = house.outdoor.temperature(tick);
    let before: Vec<f64> = rooms.iter().map(|r| r.temperature).collect();
    let mut neighbours = Vec::new();
    for (i, room) in rooms.iter_mut().enumerate() {
        neighbours.clear();
        neighbours.extend(house.neighbours(i).map(|n| before[n]));
        let params = &house.params[i];
        let next = thermal_step(room, params, outdoor, &neighbours, house.k_adj);
        room.humidity = humidity_step(room, params, next - room.temperature);
        room.temperature = next;
        room.luminance = luminance_of(room, params, house.outdoor.daylight);
    }
}
