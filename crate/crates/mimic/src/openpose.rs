//! OpenPose per-frame JSON documents (COCO-18 layout only).

use mimic_core::pose::{Keypoint, Skeleton};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numbers per person: 18 joints × (x, y, confidence).
pub const COCO18_VALUES: usize = 54;

#[derive(Debug, Error)]
pub enum OpenPoseError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("person {person}: pose_keypoints_2d has {found} values, expected 54 (COCO-18); other pose models are not supported")]
    WrongKeypointCount { person: usize, found: usize },
}

#[derive(Deserialize)]
pub(crate) struct Document {
    pub people: Vec<Person>,
}

#[derive(Deserialize)]
pub(crate) struct Person {
    pub pose_keypoints_2d: Vec<f64>,
}

/// Values are stored at f32 precision so that a parsed frame serializes
/// and re-parses to itself.
fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

pub(crate) fn skeletons_of(people: &[Person]) -> Result<Vec<Skeleton>, OpenPoseError> {
    let mut out = Vec::with_capacity(people.len());
    for (i, p) in people.iter().enumerate() {
        let kp = &p.pose_keypoints_2d;
        if kp.len() != COCO18_VALUES {
            return Err(OpenPoseError::WrongKeypointCount { person: i, found: kp.len() });
        }
        let joints: [Keypoint; 18] = std::array::from_fn(|j| {
            let c = kp[3 * j + 2];
            let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
            Keypoint::new(quantize(kp[3 * j]), quantize(kp[3 * j + 1]), quantize(c))
        });
        // Persons with no confident joint at all are dropped.
        if let Ok(s) = Skeleton::new(joints) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Parses one OpenPose frame document. Extra keys are ignored.
pub fn parse_openpose_frame(bytes: &[u8]) -> Result<Vec<Skeleton>, OpenPoseError> {
    let doc: Document = serde_json::from_slice(bytes).map_err(|e| OpenPoseError::MalformedJson(e.to_string()))?;
    skeletons_of(&doc.people)
}

#[derive(Serialize)]
struct OutDocument<'a> {
    version: f32,
    people: Vec<OutPerson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_ms: Option<&'a u64>,
}

#[derive(Serialize)]
struct OutPerson {
    pose_keypoints_2d: Vec<f32>,
}

fn document(skeletons: &[Skeleton], t_ms: Option<&u64>) -> String {
    let people = skeletons
        .iter()
        .map(|s| OutPerson {
            pose_keypoints_2d: s
                .joints()
                .iter()
                .flat_map(|k| [k.x as f32, k.y as f32, k.confidence as f32])
                .collect(),
        })
        .collect();
    serde_json::to_string(&OutDocument { version: 1.3, people, t_ms }).expect("frame serializes")
}

/// Writes skeletons as an OpenPose frame document.
pub fn serialize_frame(skeletons: &[Skeleton]) -> String {
    document(skeletons, None)
}

/// One line of the live wire format: a frame document with `t_ms`.
pub fn serialize_live_line(skeletons: &[Skeleton], t_ms: u64) -> String {
    let mut line = document(skeletons, Some(&t_ms));
    line.push('\n');
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use mimic_core::pose::JointId;

    fn person(neck_conf: f64) -> String {
        let mut v = vec![0.0; 54];
        for j in 0..18 {
            v[3 * j] = 100.0 + j as f64;
            v[3 * j + 1] = 50.0 + 2.0 * j as f64;
            v[3 * j + 2] = 0.8;
        }
        v[3 * JointId::Neck.index() + 2] = neck_conf;
        serde_json::to_string(&v).unwrap()
    }

    #[test]
    fn empty_people() {
        assert!(parse_openpose_frame(br#"{"people":[]}"#).unwrap().is_empty());
    }

    #[test]
    fn one_full_person() {
        let doc = format!(r#"{{"version":1.3,"people":[{{"person_id":[-1],"pose_keypoints_2d":{}}}]}}"#, person(0.9));
        let s = parse_openpose_frame(doc.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].is_visible(JointId::Neck, 0.1));
        assert_eq!(s[0].get(JointId::Neck).x, 101.0);
    }

    #[test]
    fn body25_is_rejected() {
        let doc = format!(r#"{{"people":[{{"pose_keypoints_2d":{:?}}}]}}"#, vec![1.0; 75]);
        match parse_openpose_frame(doc.as_bytes()) {
            Err(OpenPoseError::WrongKeypointCount { person: 0, found: 75 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn confidences_are_clamped_and_blank_people_dropped() {
        let mut v = vec![0.0; 54];
        v[2] = 1.7;
        let blank = vec![0.0; 54];
        let doc = format!(r#"{{"people":[{{"pose_keypoints_2d":{v:?}}},{{"pose_keypoints_2d":{blank:?}}}]}}"#);
        let s = parse_openpose_frame(doc.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].get(JointId::Nose).confidence, 1.0);
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(parse_openpose_frame(b"{"), Err(OpenPoseError::MalformedJson(_))));
        assert!(matches!(parse_openpose_frame(br#"{"people":[{"pose_keypoints_2d":"x"}]}"#), Err(OpenPoseError::MalformedJson(_))));
        assert!(matches!(parse_openpose_frame(br#"{"persons":[]}"#), Err(OpenPoseError::MalformedJson(_))));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let doc = format!(r#"{{"people":[{{"pose_keypoints_2d":{}}}]}}"#, person(0.33));
        let s = parse_openpose_frame(doc.as_bytes()).unwrap();
        assert_eq!(parse_openpose_frame(serialize_frame(&s).as_bytes()).unwrap(), s);
    }
}
