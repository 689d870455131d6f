//! Fog layer: contextualization, fuzzy suspicion scoring, alert dispatch and persistence.

mod alert;
mod context;
mod fuzzy;
mod persist;
mod rulebase;

pub use alert::{
    format_iso8601, Alert, AlertRef, AlertSink, DispatchConfig, DispatchOutcome, Dispatcher, FileSink, MemorySink, Receivers,
    SinkError, Suppressed,
};
pub use context::{
    contextualize, BuildingSecurity, Context, ContextualInputs, FactorTable, LocationSensitivity, TimeClass,
};
pub use fuzzy::{defuzzify_centroid, fuzzify, Aggregate, FuzzyError, FuzzyVariable};
pub use persist::{DailyLog, FileOpener, LogOpener, ReferenceStore, FLUSH_EVERY};
pub use rulebase::{Rule, RuleBase, DEFAULT_RULEBASE};

use chrono::{DateTime, FixedOffset, Timelike};

use crate::edge::{FeatureRecord, FrameFeatureSet, ObjectId};

/// Input names the scorer feeds to the rule base.
pub const INPUT_NAMES: [&str; 4] = ["speed", "dir_change_rate", "dwell", "context_weight"];

#[derive(Debug, Clone, PartialEq)]
pub struct SuspicionScore {
    pub object_id: ObjectId,
    pub camera_id: String,
    pub frame_index: u64,
    /// In `[0, 1]`.
    pub score: f64,
}

/// Contextualize, fuzzify, infer, defuzzify.
#[derive(Debug, Clone)]
pub struct SuspicionModel {
    rules: RuleBase,
    factors: FactorTable,
    frame_period: f64,
    // rule-base input index -> position in INPUT_NAMES
    slots: Vec<usize>,
}

impl SuspicionModel {
    /// Every input of `rules` must be one of [`INPUT_NAMES`].
    pub fn new(rules: RuleBase, factors: FactorTable, frame_period: f64) -> Result<Self, FuzzyError> {
        let slots = rules
            .inputs()
            .iter()
            .map(|v| {
                INPUT_NAMES
                    .iter()
                    .position(|n| *n == v.name())
                    .ok_or_else(|| FuzzyError::MissingInput(v.name().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SuspicionModel {
            rules,
            factors,
            frame_period,
            slots,
        })
    }

    pub fn with_defaults(frame_period: f64) -> Self {
        SuspicionModel::new(RuleBase::default_rules(), FactorTable::default(), frame_period)
            .expect("default rule base uses the standard inputs")
    }

    pub fn rules(&self) -> &RuleBase {
        &self.rules
    }

    pub fn factors(&self) -> &FactorTable {
        &self.factors
    }

    /// Score for already-contextualized inputs.
    pub fn score_inputs(&self, inputs: &ContextualInputs) -> Result<f64, FuzzyError> {
        let all = [inputs.speed, inputs.dir_change_rate, inputs.dwell, inputs.context_weight];
        let values: Vec<f64> = self.slots.iter().map(|&s| all[s]).collect();
        let agg = self.rules.infer_crisp(&values)?;
        defuzzify_centroid(&agg)
    }

    pub fn assess(&self, rec: &FeatureRecord, ctx: &Context, frame_index: u64) -> Result<SuspicionScore, FuzzyError> {
        let inputs = contextualize(rec, ctx, &self.factors, self.frame_period);
        Ok(SuspicionScore {
            object_id: rec.object_id,
            camera_id: ctx.camera_id.clone(),
            frame_index,
            score: self.score_inputs(&inputs)?,
        })
    }
}

/// Static site description plus how the time of day is chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextPolicy {
    pub location: LocationSensitivity,
    pub security: BuildingSecurity,
    /// Fixed class, or `None` to derive it from the frame's local hour.
    pub time_class: Option<TimeClass>,
    pub utc_offset_s: i32,
}

impl Default for ContextPolicy {
    fn default() -> Self {
        ContextPolicy {
            location: LocationSensitivity::Public,
            security: BuildingSecurity::Low,
            time_class: None,
            utc_offset_s: 0,
        }
    }
}

impl ContextPolicy {
    pub fn context_for(&self, camera_id: &str, frame_time_ms: u64) -> Context {
        let time_class = self.time_class.unwrap_or_else(|| {
            let offset = FixedOffset::east_opt(self.utc_offset_s).unwrap_or(FixedOffset::east_opt(0).expect("zero"));
            let hour = DateTime::from_timestamp_millis(frame_time_ms as i64)
                .map(|t| t.with_timezone(&offset).hour())
                .unwrap_or(12);
            TimeClass::from_hour(hour)
        });
        Context {
            time_class,
            location: self.location,
            security: self.security,
            camera_id: camera_id.to_string(),
        }
    }
}

/// Scores every object of a frame under the frame's context, in object-id order.
pub fn score_frame(
    model: &SuspicionModel,
    policy: &ContextPolicy,
    frame: &FrameFeatureSet,
) -> Result<Vec<(SuspicionScore, FeatureRecord)>, FuzzyError> {
    let ctx = policy.context_for(&frame.camera_id, frame.timestamp.millis());
    frame
        .objects
        .values()
        .map(|rec| Ok((model.assess(rec, &ctx, frame.frame_index)?, *rec)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::QuantizedBox;
    use crate::Fixed3;

    fn rec(speed: f64, dirch: u32, dwell: f64) -> FeatureRecord {
        FeatureRecord {
            object_id: Fixed3::from_millis(1),
            speed: Fixed3::from_f64(speed),
            direction_changes: dirch,
            dwell: Fixed3::from_f64(dwell),
            bbox: QuantizedBox {
                x_min: Fixed3::ZERO,
                y_min: Fixed3::ZERO,
                x_max: Fixed3::from_millis(40_000),
                y_max: Fixed3::from_millis(100_000),
            },
        }
    }

    fn day() -> Context {
        Context {
            time_class: TimeClass::Day,
            location: LocationSensitivity::Public,
            security: BuildingSecurity::Low,
            camera_id: "cam-01".into(),
        }
    }

    #[test]
    fn walker_below_loiterer() {
        let m = SuspicionModel::with_defaults(0.2);
        let walker = m.assess(&rec(5.0, 0, 8.0), &day(), 1).unwrap().score;
        let loiterer = m.assess(&rec(0.3, 0, 40.0), &day(), 1).unwrap().score;
        assert!(walker < loiterer, "{walker} vs {loiterer}");
        assert!(walker < 0.6 && loiterer > 0.6);
    }

    #[test]
    fn stationary_long_dwell_is_high() {
        let m = SuspicionModel::with_defaults(0.2);
        let s = m.assess(&rec(0.0, 0, 1.0e6), &day(), 1).unwrap().score;
        assert!(s > 0.5, "{s}");
    }

    #[test]
    fn degenerate_record_scores() {
        let m = SuspicionModel::with_defaults(0.2);
        let s = m.assess(&rec(0.0, 0, 0.0), &day(), 0).unwrap().score;
        assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn context_from_local_hour() {
        let p = ContextPolicy {
            utc_offset_s: 8 * 3600,
            ..ContextPolicy::default()
        };
        // 12:26 UTC is 20:26 at UTC+8
        assert_eq!(p.context_for("c", 1_600_000_000_000).time_class, TimeClass::Evening);
        assert_eq!(ContextPolicy::default().context_for("c", 1_600_000_000_000).time_class, TimeClass::Day);
    }

    #[test]
    fn unknown_input_rejected() {
        let rb = RuleBase::parse("input foo 0 1 a=0 b=1\noutput s 0 1 x=0 y=1\nrule foo=a => x\nrule foo=b => y").unwrap();
        assert!(matches!(
            SuspicionModel::new(rb, FactorTable::default(), 0.2),
            Err(FuzzyError::MissingInput(_))
        ));
    }
}
