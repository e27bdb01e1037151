use serde::{Deserialize, Serialize};

use super::{SimletId, ToolId, Vec3};

/// One timestamped record of a session trajectory. `t` is milliseconds
/// since session start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum EventKind {
    #[serde(rename_all = "camelCase")]
    ToolPose {
        tool_id: ToolId,
        tip: Vec3,
        activated: bool,
    },
    /// `stretch` is current length over rest length.
    #[serde(rename_all = "camelCase")]
    ForceSample {
        anatomy_id: SimletId,
        force: f64,
        stretch: f64,
    },
    /// `position` runs from 0 (proximal) to 1 (distal) along the vessel.
    #[serde(rename_all = "camelCase")]
    ClipApplied { vessel_id: SimletId, position: f64 },
    #[serde(rename_all = "camelCase")]
    Cut { anatomy_id: SimletId, position: f64 },
    #[serde(rename_all = "camelCase")]
    Suture { anatomy_id: SimletId, location: Vec3 },
    #[serde(rename_all = "camelCase")]
    Detach {
        child_id: SimletId,
        parent_id: SimletId,
    },
    #[serde(rename_all = "camelCase")]
    Retrieve { anatomy_id: SimletId, via_pouch: bool },
    SessionEnd,
}

impl SimEvent {
    pub fn new(t: u64, kind: EventKind) -> Self {
        Self { t, kind }
    }

    /// Checks numeric ranges: finite values, parameters in [0, 1].
    pub fn check_ranges(&self) -> Result<(), String> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        match &self.kind {
            EventKind::ToolPose { tip, .. } if !tip.is_finite() => {
                Err("tool tip is not finite".into())
            }
            EventKind::ForceSample { force, stretch, .. }
                if !(force.is_finite() && *force >= 0.0 && stretch.is_finite() && *stretch > 0.0) =>
            {
                Err(format!("invalid force sample ({force} N, stretch {stretch})"))
            }
            EventKind::ClipApplied { position, .. } | EventKind::Cut { position, .. }
                if !unit(*position) =>
            {
                Err(format!("position {position} outside [0, 1]"))
            }
            EventKind::Suture { location, .. } if !location.is_finite() => {
                Err("suture location is not finite".into())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_line_shape() {
        let e = SimEvent::new(
            100,
            EventKind::ToolPose {
                tool_id: "dissector".into(),
                tip: Vec3::new(7.0, 0.0, 50.0),
                activated: true,
            },
        );
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(
            s,
            r#"{"t":100,"type":"toolPose","toolId":"dissector","tip":[7.0,0.0,50.0],"activated":true}"#
        );
        assert_eq!(serde_json::from_str::<SimEvent>(&s).unwrap(), e);
        let end: SimEvent = serde_json::from_str(r#"{"t":5,"type":"sessionEnd"}"#).unwrap();
        assert_eq!(end.kind, EventKind::SessionEnd);
    }

    #[test]
    fn out_of_range_parameter_is_reported() {
        let e = SimEvent::new(
            0,
            EventKind::Cut {
                anatomy_id: "cystic_duct".into(),
                position: 1.5,
            },
        );
        assert!(e.check_ranges().is_err());
    }
}
