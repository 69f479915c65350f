use std::fs;

use optistate_sim::{config::CommandProfile, read_dataset, simulate, write_dataset, SimConfig};

fn tiny_config() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.duration = 1.5;
    cfg.seed = 3;
    cfg.camera.height = 16;
    cfg.camera.width = 16;
    cfg.camera.rate_hz = 20.0;
    cfg.command.profile = CommandProfile::StraightLine;
    cfg
}

#[test]
fn write_read_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.ostd");
    let ds = simulate(&tiny_config()).unwrap();
    write_dataset(&ds, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(ds, back);
    // The manifest is human-readable key = value text.
    let manifest = fs::read_to_string(optistate_sim::dataset::manifest_path(&path)).unwrap();
    assert!(manifest.contains("terrain.kind = flat"));
    assert!(manifest.contains("dataset.frames = 300"));
}

#[test]
fn truncated_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.ostd");
    let ds = simulate(&tiny_config()).unwrap();
    write_dataset(&ds, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    for keep in [3usize, 17, bytes.len() / 2, bytes.len() - 5] {
        let cut = path.with_extension(format!("cut{keep}"));
        fs::write(&cut, &bytes[..keep]).unwrap();
        let err = read_dataset(&cut).unwrap_err();
        assert!(
            matches!(err, optistate_sim::SimError::Format(_)),
            "keep={keep}: {err}"
        );
    }
}

#[test]
fn bad_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ostd");
    fs::write(&path, b"NOPE\x01\x00\x00\x00moredata").unwrap();
    let err = read_dataset(&path).unwrap_err();
    assert!(err.to_string().contains("magic"));
}

#[test]
fn frame_and_image_counts_follow_the_rates() {
    // One minute at 200 Hz with a 60 Hz camera: 12000 frames, 3600 images.
    let mut cfg = SimConfig::default();
    cfg.duration = 60.0;
    cfg.camera.height = 4;
    cfg.camera.width = 4;
    cfg.camera.rate_hz = 60.0;
    cfg.command.profile = CommandProfile::Standing;
    let ds = simulate(&cfg).unwrap();
    assert_eq!(ds.len(), 12_000);
    assert_eq!(ds.distinct_depth_images(), 3_600);
}
