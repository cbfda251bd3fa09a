//! File formats, fail-closed parsing, hashing, and manifests.

use std::fs;
use std::path::PathBuf;

use tbac::experiments::{ExperimentConfig, ExperimentKind};
use tbac::features::CriticFeatures;
use tbac::io::*;
use tbac::mdp::garnet;
use tbac::policy::PolicyFeatures;
use tbac::schedules::PowerSchedule;

#[test]
fn mdp_round_trips_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.toml");
    let mdp = garnet(6, 3, 3, 0.93, 17).unwrap().with_reward_noise(0.125).with_reward_bound(2.0);
    write_mdp(&p, &mdp).unwrap();
    assert_eq!(read_mdp(&p).unwrap(), mdp);
}

#[test]
fn features_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pf = PolicyFeatures::new(2, 2, 3, (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
    let cf = CriticFeatures::orthonormal_gaussian(5, 2, 8).unwrap();
    let (pp, cp) = (dir.path().join("p.toml"), dir.path().join("c.toml"));
    write_policy_features(&pp, &pf).unwrap();
    write_critic_features(&cp, &cf).unwrap();
    assert_eq!(read_policy_features(&pp).unwrap(), pf);
    let back = read_critic_features(&cp).unwrap();
    assert_eq!(back.matrix(), cf.matrix());
    assert_eq!(back.norm_bounded, cf.norm_bounded);
}

#[test]
fn unknown_keys_and_versions_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.toml");
    write_mdp(&p, &garnet(3, 2, 2, 0.9, 1).unwrap()).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    fs::write(&p, format!("colour = 3\n{text}")).unwrap();
    assert!(read_mdp(&p).is_err());
    fs::write(&p, text.replace("version = 1", "version = 2")).unwrap();
    assert!(read_mdp(&p).is_err());
}

#[test]
fn defective_mdp_rejected_but_readable_unchecked() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.toml");
    let mut mdp = garnet(3, 2, 2, 0.9, 1).unwrap();
    mdp.init_dist = vec![1.0, 0.1, 0.0];
    write_mdp(&p, &mdp).unwrap();
    assert!(read_mdp(&p).is_err());
    let raw = read_mdp_unchecked(&p).unwrap();
    assert_eq!(raw.validate().len(), 1);
}

#[test]
fn csv_floats_round_trip() {
    for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

#[test]
fn content_hash_is_git_blob_style() {
    assert_eq!(
        content_hash(b""),
        "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
    );
    assert_ne!(content_hash(b"a"), content_hash(b"b"));
}

#[test]
fn run_config_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    write_mdp(&dir.path().join("m.toml"), &garnet(4, 2, 2, 0.9, 3).unwrap()).unwrap();
    let cfg = RunConfigFile {
        version: FORMAT_VERSION,
        instance: InstanceSpec { mdp: Some(PathBuf::from("m.toml")), ..Default::default() },
        experiment: ExperimentConfig::new(ExperimentKind::CriticEval, PowerSchedule::corollary(0.0, 0.5, 0.5), 100, 2),
    };
    let p = dir.path().join("run.toml");
    write_toml(&p, &cfg).unwrap();
    let back = read_run_config(&p).unwrap();
    assert_eq!(back.instance.mdp, Some(dir.path().join("m.toml")));
    assert_eq!(back.experiment, cfg.experiment);
    let loaded = back.instance.load().unwrap();
    assert_eq!(loaded.instance.mdp.n_states, 4);
    assert_eq!(loaded.inputs.len(), 1);
}

#[test]
fn instance_spec_needs_exactly_one_source() {
    assert!(InstanceSpec::default().load().is_err());
    let both = InstanceSpec {
        builtin: Some("default-tabular".into()),
        mdp: Some(PathBuf::from("x.toml")),
        ..Default::default()
    };
    assert!(both.load().is_err());
    let unknown = InstanceSpec { builtin: Some("nope".into()), ..Default::default() };
    assert!(unknown.load().is_err());
}

#[test]
fn manifest_verification_detects_changes() {
    let dir = tempfile::tempdir().unwrap();
    let mp = dir.path().join("m.toml");
    write_mdp(&mp, &garnet(4, 2, 2, 0.9, 3).unwrap()).unwrap();
    let instance = InstanceSpec { mdp: Some(mp.clone()), ..Default::default() };
    let config = ExperimentConfig::new(ExperimentKind::CriticEval, PowerSchedule::corollary(0.0, 0.5, 0.5), 100, 2);
    let manifest = RunManifest {
        tool_version: "test".into(),
        command: "run".into(),
        config_hash: config_hash(&instance, &config).unwrap(),
        inputs: hash_inputs(&[("mdp".into(), mp.clone())]).unwrap(),
        instance,
        seeds: config.seeds(),
        config,
        outputs: vec![],
        started_at: 0,
        finished_at: 0,
    };
    let path = dir.path().join("manifest.json");
    manifest.write(&path).unwrap();
    let back = RunManifest::read(&path).unwrap();
    assert_eq!(back, manifest);
    assert!(back.verify().unwrap().is_empty());

    let mut tampered = back.clone();
    tampered.config.horizon = 101;
    assert_eq!(tampered.verify().unwrap().len(), 1);

    fs::write(&mp, fs::read_to_string(&mp).unwrap() + "\n").unwrap();
    assert_eq!(back.verify().unwrap().len(), 1);
}
