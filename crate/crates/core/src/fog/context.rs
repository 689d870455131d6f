use std::str::FromStr;

use crate::edge::FeatureRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeClass {
    Day,
    Evening,
    Night,
}

impl TimeClass {
    /// Day 07:00-18:00, evening 18:00-22:00, night otherwise.
    pub fn from_hour(hour: u32) -> Self {
        match hour {
            7..=17 => TimeClass::Day,
            18..=21 => TimeClass::Evening,
            _ => TimeClass::Night,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocationSensitivity {
    Public,
    Restricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuildingSecurity {
    Low,
    Medium,
    High,
}

macro_rules! parse_enum {
    ($ty:ty, $($s:literal => $v:expr),+) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok($v),)+
                    _ => Err(format!("unknown {} {s:?}", stringify!($ty))),
                }
            }
        }
    };
}

parse_enum!(TimeClass, "day" => TimeClass::Day, "evening" => TimeClass::Evening, "night" => TimeClass::Night);
parse_enum!(LocationSensitivity, "public" => LocationSensitivity::Public, "restricted" => LocationSensitivity::Restricted);
parse_enum!(BuildingSecurity, "low" => BuildingSecurity::Low, "medium" => BuildingSecurity::Medium, "high" => BuildingSecurity::High);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub time_class: TimeClass,
    pub location: LocationSensitivity,
    pub security: BuildingSecurity,
    pub camera_id: String,
}

/// Multiplicative context factors. The product is clamped to `[1, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    pub day: f64,
    pub evening: f64,
    pub night: f64,
    pub public: f64,
    pub restricted: f64,
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl Default for FactorTable {
    fn default() -> Self {
        FactorTable {
            day: 1.0,
            evening: 1.2,
            night: 1.5,
            public: 1.0,
            restricted: 1.3,
            low: 1.0,
            medium: 1.25,
            high: 1.5,
        }
    }
}

impl FactorTable {
    pub fn weight(&self, ctx: &Context) -> f64 {
        let t = match ctx.time_class {
            TimeClass::Day => self.day,
            TimeClass::Evening => self.evening,
            TimeClass::Night => self.night,
        };
        let l = match ctx.location {
            LocationSensitivity::Public => self.public,
            LocationSensitivity::Restricted => self.restricted,
        };
        let s = match ctx.security {
            BuildingSecurity::Low => self.low,
            BuildingSecurity::Medium => self.medium,
            BuildingSecurity::High => self.high,
        };
        (t * l * s).clamp(1.0, 2.0)
    }
}

/// Crisp inputs of the fuzzy system for one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextualInputs {
    pub speed: f64,
    /// Heading changes per second of dwell.
    pub dir_change_rate: f64,
    pub dwell: f64,
    pub context_weight: f64,
}

/// `frame_period` (seconds) floors the dwell used for the change rate, so a brand-new
/// object does not divide by zero.
pub fn contextualize(rec: &FeatureRecord, ctx: &Context, factors: &FactorTable, frame_period: f64) -> ContextualInputs {
    let dwell = rec.dwell.to_f64();
    ContextualInputs {
        speed: rec.speed.to_f64(),
        dir_change_rate: rec.direction_changes as f64 / dwell.max(frame_period),
        dwell,
        context_weight: factors.weight(ctx),
    }
}
