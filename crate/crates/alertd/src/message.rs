//! Wire format: one JSON object per line.
//!
//! ```text
//! {"type":"register","encounter_id":"E1","hospital_id":"H1","age":71,"sex":"male",
//!  "ward":"W2","department":"internal_medicine","admission_time":"2020-01-01T08:00"}
//! {"encounter_id":"E1","ts":"2020-01-02T14:00","measure":"heart_rate","value":204}
//! {"type":"bundle","encounter_id":"E1","ts":"2020-01-02T14:00",
//!  "vitals":{"heart_rate":204,"systolic_bp":47}}
//! {"type":"snapshot"}
//! ```
//!
//! `type` defaults to `observation`.

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use ews_core::ingest::Sex;
use ews_core::VitalKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{AlertError, AlertResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registration {
    pub encounter_id: String,
    pub hospital_id: String,
    pub age: f64,
    pub sex: Sex,
    pub ward: String,
    pub department: String,
    #[serde(with = "ts_format")]
    pub admission_time: NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationEvent {
    pub encounter_id: String,
    #[serde(with = "ts_format")]
    pub ts: NaiveDateTime,
    pub measure: VitalKind,
    pub value: f64,
}

/// Several vitals charted together, ingested and scored as one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleEvent {
    pub encounter_id: String,
    #[serde(with = "ts_format")]
    pub ts: NaiveDateTime,
    pub vitals: BTreeMap<VitalKind, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Register(Registration),
    Observation(ObservationEvent),
    Bundle(BundleEvent),
    Snapshot,
}

mod ts_format {
    use chrono::NaiveDateTime;
    use ews_core::ColumnMapping;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    const FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

    pub fn serialize<S: Serializer>(ts: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.format(FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        ColumnMapping::default()
            .parse_timestamp(&raw)
            .ok_or_else(|| D::Error::custom(format!("cannot parse timestamp `{raw}`")))
    }
}

pub fn format_ts(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

impl Message {
    pub fn parse(line: &str) -> AlertResult<Message> {
        let malformed = |e: serde_json::Error| AlertError::Malformed(e.to_string());
        let mut v: Value = serde_json::from_str(line).map_err(malformed)?;
        let kind = match v.as_object_mut() {
            Some(obj) => match obj.remove("type") {
                None => "observation".to_string(),
                Some(Value::String(s)) => s,
                Some(other) => {
                    return Err(AlertError::Malformed(format!(
                        "`type` must be a string, got {other}"
                    )))
                }
            },
            None => return Err(AlertError::Malformed("expected a JSON object".into())),
        };
        match kind.as_str() {
            "register" => Ok(Message::Register(
                serde_json::from_value(v).map_err(malformed)?,
            )),
            "observation" => {
                let ev: ObservationEvent = serde_json::from_value(v).map_err(malformed)?;
                if !ev.value.is_finite() {
                    return Err(AlertError::Malformed("value must be finite".into()));
                }
                Ok(Message::Observation(ev))
            }
            "bundle" => {
                let ev: BundleEvent = serde_json::from_value(v).map_err(malformed)?;
                if ev.vitals.is_empty() {
                    return Err(AlertError::Malformed("bundle has no vitals".into()));
                }
                if ev.vitals.values().any(|v| !v.is_finite()) {
                    return Err(AlertError::Malformed("value must be finite".into()));
                }
                Ok(Message::Bundle(ev))
            }
            "snapshot" => Ok(Message::Snapshot),
            other => Err(AlertError::Malformed(format!("unknown type `{other}`"))),
        }
    }
}

impl ObservationEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("observation serializes")
    }
}

impl BundleEvent {
    pub fn to_line(&self) -> String {
        let mut v = serde_json::to_value(self).expect("bundle serializes");
        v["type"] = Value::String("bundle".into());
        v.to_string()
    }
}

impl Registration {
    pub fn to_line(&self) -> String {
        let mut v = serde_json::to_value(self).expect("registration serializes");
        v["type"] = Value::String("register".into());
        v.to_string()
    }
}
