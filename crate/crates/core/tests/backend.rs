use std::sync::Arc;

use mirss_core::fixtures::synthetic_duet;
use mirss_core::{
    registry_load, select_model, CandidateModel, Error, OracleRefs, OracleSpec, SelectConfig,
    SeparationBackend, Stage,
};

#[test]
fn concurrent_external_runs_stay_isolated() {
    let song = synthetic_duet(5, 1.0).unwrap();
    let work = tempfile::tempdir().unwrap();
    // Staggered sleeps interleave the runs.
    let models: Vec<CandidateModel> = (0..16)
        .map(|i| {
            let cmd = format!(
                "cp {{input}} {{out_a}} && sleep 0.0{} && cp {{input}} {{out_b}}",
                i % 10
            );
            CandidateModel::new(
                format!("m{i:02}"),
                SeparationBackend::external(Stage::TwoVocals, cmd),
            )
        })
        .collect();
    let cfg = SelectConfig {
        jobs: 8,
        ..Default::default()
    };
    let sel = select_model(&song.vocals, &models, &cfg, work.path()).unwrap();
    assert_eq!(sel.candidates.len(), 16);
    let input = song.vocals.quantized().unwrap();
    for c in &sel.candidates {
        let (_, a, b) = c.result.as_ref().unwrap();
        assert_eq!(a.samples(), input.samples(), "{}", c.model_id);
        assert_eq!(b.samples(), input.samples(), "{}", c.model_id);
    }
    assert_eq!(sel.chosen, "m00");
    let leftovers = std::fs::read_dir(work.path()).unwrap().count();
    assert_eq!(leftovers, 0, "scratch directories were not removed");
}

#[test]
fn failing_candidates_are_reported_but_not_chosen() {
    let song = synthetic_duet(6, 1.0).unwrap();
    let work = tempfile::tempdir().unwrap();
    let refs = OracleRefs::Loaded(Arc::new([song.singer_a.clone(), song.singer_b.clone()]));
    let models = vec![
        CandidateModel::new(
            "a-broken",
            SeparationBackend::external(Stage::TwoVocals, "exit 1"),
        ),
        CandidateModel::new(
            "b-short",
            SeparationBackend::external(
                Stage::TwoVocals,
                "head -c 1000 {input} > {out_a} && cp {out_a} {out_b}",
            ),
        ),
        CandidateModel::new(
            "c-oracle",
            SeparationBackend::oracle(Stage::TwoVocals, OracleSpec::new(refs)),
        ),
    ];
    let sel = select_model(&song.vocals, &models, &SelectConfig::default(), work.path()).unwrap();
    assert_eq!(sel.chosen, "c-oracle");
    assert!(sel.candidates[0].result.is_err());
    assert!(sel.candidates[1].result.is_err());
}

#[test]
fn all_candidates_failing_is_a_backend_failure() {
    let song = synthetic_duet(7, 1.0).unwrap();
    let work = tempfile::tempdir().unwrap();
    let models = vec![CandidateModel::new(
        "broken",
        SeparationBackend::external(Stage::TwoVocals, "echo nope >&2; exit 3"),
    )];
    let err =
        select_model(&song.vocals, &models, &SelectConfig::default(), work.path()).unwrap_err();
    assert!(matches!(err, Error::BackendFailure { .. }), "{err}");
    assert!(err.to_string().contains("nope"));
}

#[test]
fn registry_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("models.json");
    std::fs::write(
        &path,
        r#"{"schema": "mir-ss-registry/1", "models": [
            {"model_id": "s1", "stage": "stage1", "kind": "passthrough"},
            {"model_id": "duet", "stage": "stage2", "command": "sep {input} {out_a} {out_b}"},
            {"model_id": "oracle", "stage": "stage2",
             "oracle": {"ref_a": "a.wav", "ref_b": "b.wav", "leak": 0.1, "swap": true}}
        ]}"#,
    )
    .unwrap();
    let models = registry_load(&path).unwrap();
    let ids: Vec<&str> = models.iter().map(|m| m.model_id.as_str()).collect();
    assert_eq!(ids, ["s1", "duet", "oracle"]);
    assert_eq!(models[0].backend.stage, Stage::VocalAccompaniment);
    assert_eq!(models[2].backend.kind_name(), "oracle");

    std::fs::write(
        &path,
        r#"[{"model_id": "x", "stage": "stage2", "kind": "oracle",
             "oracle": {"ref_a": "a.wav", "ref_b": "b.wav", "leak": 0.7}}]"#,
    )
    .unwrap();
    assert!(matches!(
        registry_load(&path),
        Err(Error::MalformedRegistry(_))
    ));
}
