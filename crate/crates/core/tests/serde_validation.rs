use relu_lab_core::{EmpiricalBatch, InputDistribution, InputPoint, NetworkShape, ParamVector};

fn roundtrip<T>(v: &T) -> T
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    serde_json::from_str(&serde_json::to_string(v).unwrap()).unwrap()
}

#[test]
fn valid_values_roundtrip() {
    let shape = NetworkShape::new(2, 3).unwrap();
    let phi = ParamVector::new(shape, (0..shape.param_count()).map(|i| i as f64 * 0.1 - 0.7).collect()).unwrap();
    assert_eq!(roundtrip(&phi), phi);

    let u = InputDistribution::uniform(-1.0, 2.0, 2).unwrap();
    assert_eq!(roundtrip(&u), u);

    let pts = vec![InputPoint::new(vec![0.25]), InputPoint::new(vec![0.75])];
    let disc = InputDistribution::discrete(0.0, 1.0, pts.clone(), vec![0.3, 0.7]).unwrap();
    assert_eq!(roundtrip(&disc), disc);

    let batch = EmpiricalBatch::new(7, pts).unwrap();
    assert_eq!(roundtrip(&batch), batch);
}

#[test]
fn invalid_values_are_rejected_on_load() {
    let bad = [
        // wrong parameter count for d = 1, H = 1
        r#"{"shape":{"d":1,"hidden":1},"values":[1.0,2.0]}"#,
        r#"{"shape":{"d":0,"hidden":1},"values":[]}"#,
    ];
    for text in bad {
        assert!(serde_json::from_str::<ParamVector>(text).is_err(), "{text}");
    }

    let bad = [
        r#"{"kind":"uniform_box","a":1.0,"b":0.0,"d":1}"#,
        r#"{"kind":"uniform_box","a":0.0,"b":1.0,"d":0}"#,
        r#"{"kind":"uniform_box","a":0.0,"b":1.0,"d":1,"extra":3}"#,
        r#"{"kind":"discrete","a":0.0,"b":1.0,"points":[[0.5]],"weights":[0.5]}"#,
        r#"{"kind":"discrete","a":0.0,"b":1.0,"points":[[2.0]],"weights":[1.0]}"#,
        r#"{"kind":"gaussian","a":0.0,"b":1.0,"d":1}"#,
    ];
    for text in bad {
        assert!(serde_json::from_str::<InputDistribution>(text).is_err(), "{text}");
    }

    assert!(serde_json::from_str::<EmpiricalBatch>(r#"{"step":0,"samples":[]}"#).is_err());
}
