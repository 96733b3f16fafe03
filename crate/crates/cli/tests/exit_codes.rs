use std::process::Command;

fn egogaze(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_egogaze")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn success_usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = |rel: &str| dir.path().join(rel).to_string_lossy().into_owned();

    assert_eq!(egogaze(&["--help"]).0, 0);
    assert_eq!(egogaze(&["frobnicate"]).0, 1);
    assert_eq!(egogaze(&["synth", "--frames", "3"]).0, 1);

    let (code, _) = egogaze(&["synth", "--out", &d("s"), "--frames", "30", "--width", "320", "--height", "180"]);
    assert_eq!(code, 0);

    std::fs::write(dir.path().join("bad.toml"), "version = 7\n").unwrap();
    assert_eq!(egogaze(&["--config", &d("bad.toml"), "classify", "--frames", &d("s/frames"), "--out", &d("o")]).0, 1);

    std::fs::write(dir.path().join("gaze.csv"), "frame,timestamp_ms,x,y,valid\n0,0,1,1,maybe\n").unwrap();
    let (code, stderr) = egogaze(&["ingest", "--gaze", &d("gaze.csv"), "--width", "320", "--height", "180"]);
    assert_eq!(code, 2);
    assert!(stderr.starts_with("error,"), "{stderr}");
}

#[test]
fn mostly_unlabelled_session_is_a_pipeline_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = |rel: &str| dir.path().join(rel).to_string_lossy().into_owned();
    let (code, _) = egogaze(&["synth", "--out", &d("s"), "--frames", "20", "--width", "320", "--height", "180"]);
    assert_eq!(code, 0);
    // Fifteen of twenty gaze records are invalid, so most frames go unlabelled.
    let mut log = String::from("frame,timestamp_ms,x,y,valid\n");
    for i in 0..20 {
        log.push_str(&format!("{i},{},100,100,{}\n", i * 40, u8::from(i < 5)));
    }
    std::fs::write(dir.path().join("gaze.csv"), log).unwrap();
    let (code, stderr) = egogaze(&[
        "classify", "--frames", &d("s/frames"), "--gaze", &d("gaze.csv"), "--out", &d("o"), "--class-embeddings",
        &d("s/class_embeddings.csv"),
    ]);
    assert_eq!(code, 3, "{stderr}");
}
