use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phasemag::simulator::{estimate_displacement, tone_amplitude};
use phasemag::{load_radargram, FileFormat, RangeRoi};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phasemag"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn phasemag")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_units_and_exits_zero() {
    for sub in ["simulate", "magnify", "features", "train", "eval", "render"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
    }
    let text = String::from_utf8(run(&["magnify", "--help"]).stdout).unwrap();
    assert!(text.contains("Hz"));
    let text = String::from_utf8(run(&["features", "--help"]).stdout).unwrap();
    assert!(text.contains("seconds") && text.contains("Hz"));
}

#[test]
fn usage_error_exits_one() {
    assert_eq!(run(&["magnify", "in.rgrm"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn simulate_is_seeded_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let scene = configs().join("breather_scene.cfg");
    let (a, b) = (dir.path().join("a.rgrm"), dir.path().join("b.rgrm"));
    let truth = dir.path().join("truth.csv");
    ok(&[
        "simulate",
        s(&scene),
        "--seed",
        "3",
        "-o",
        s(&a),
        "--truth",
        s(&truth),
    ]);
    ok(&["simulate", s(&scene), "--seed", "3", "-o", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let t = std::fs::read_to_string(&truth).unwrap();
    assert!(t.starts_with("time_s,target_0\n"));
    assert_eq!(t.lines().count(), 1 + 1200);
}

#[test]
fn missing_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "duration_s=1\nfps=100\nbin_spacing=0.01\n").unwrap();
    let out = run(&["simulate", s(&cfg), "-o", s(&dir.path().join("x.rgrm"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_bins") && err.contains("error [scene]"), "{err}");
}

#[test]
fn config_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "duration_s=1\nfps=100\nn_bins=50\nbin_spacing=oops\n").unwrap();
    let out = run(&["simulate", s(&cfg), "-o", s(&dir.path().join("x.rgrm"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn magnify_then_render_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.rgrm");
    let mag = dir.path().join("mag.rgrm");
    ok(&["simulate", s(&configs().join("motion_scene.cfg")), "-o", s(&raw)]);
    ok(&[
        "magnify",
        s(&raw),
        s(&mag),
        "--alpha",
        "10",
        "--band",
        "40:50",
        "--bank",
        s(&configs().join("narrowband_bank.cfg")),
    ]);
    let r = load_radargram(&mag, FileFormat::Binary).unwrap();
    let d = estimate_displacement(&r, RangeRoi::new(90, 110).unwrap()).unwrap();
    let amp = tone_amplitude(&d, 200.0, 45.0);
    assert!((amp - 1.1).abs() <= 0.11, "{amp}");

    let (p1, p2) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
    ok(&[
        "render",
        s(&mag),
        s(&p1),
        "--colormap",
        "viridis",
        "--clip",
        "1:99",
    ]);
    ok(&[
        "render",
        s(&mag),
        s(&p2),
        "--colormap",
        "viridis",
        "--clip",
        "1:99",
    ]);
    let img = std::fs::read(&p1).unwrap();
    assert!(img.starts_with(b"P6\n400 400\n255\n"));
    assert_eq!(img, std::fs::read(&p2).unwrap());
}

#[test]
fn negative_alpha_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.rgrm");
    ok(&["simulate", s(&configs().join("motion_scene.cfg")), "-o", s(&raw)]);
    ok(&[
        "magnify",
        s(&raw),
        s(&dir.path().join("att.rgrm")),
        "--alpha",
        "-0.9",
        "--band",
        "40:50",
    ]);
    let out = run(&[
        "magnify",
        s(&raw),
        s(&dir.path().join("x.rgrm")),
        "--alpha",
        "-2",
        "--band",
        "40:50",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [args]"));
    let out = run(&[
        "magnify",
        s(&raw),
        s(&dir.path().join("x.rgrm")),
        "--alpha",
        "1",
        "--band",
        "40:150",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn features_train_eval() {
    let dir = tempfile::tempdir().unwrap();
    let scene = configs().join("breather_scene.cfg");
    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, "time_s,bpm\n0,15\n60,15\n").unwrap();
    let mut tables = Vec::new();
    for seed in 0..3 {
        let r = dir.path().join(format!("r{seed}.rgrm"));
        let f = dir.path().join(format!("f{seed}.csv"));
        ok(&["simulate", s(&scene), "--seed", &seed.to_string(), "-o", s(&r)]);
        ok(&[
            "features",
            s(&r),
            "--vital",
            "rr",
            "--roi",
            "22:38",
            "--labels",
            s(&labels),
            "-o",
            s(&f),
        ]);
        let text = std::fs::read_to_string(&f).unwrap();
        assert_eq!(text.lines().count(), 1 + 7);
        assert!(text.starts_with("window_start_s,fftpeak_l75,"));
        tables.push(f);
    }
    let again = dir.path().join("again.csv");
    ok(&[
        "features",
        s(&dir.path().join("r0.rgrm")),
        "--vital",
        "rr",
        "--roi",
        "22:38",
        "--labels",
        s(&labels),
        "-o",
        s(&again),
    ]);
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&tables[0]).unwrap());

    let model = dir.path().join("rf.pmdl");
    let cv = dir.path().join("cv.csv");
    let mut args = vec![
        "train",
        "--model",
        "rf",
        "-o",
        s(&model),
        "--cv",
        "3",
        "--report",
        s(&cv),
        "--trees",
        "20",
    ];
    args.extend(tables[..2].iter().map(|p| s(p)));
    ok(&args);
    assert!(std::fs::read_to_string(&cv)
        .unwrap()
        .contains("random_forest,mean,"));

    let report = dir.path().join("eval.txt");
    let out = ok(&[
        "eval",
        "--model",
        s(&model),
        s(&tables[2]),
        "--report",
        s(&report),
    ]);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("MAE") && text.contains("baseline"));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);

    let lr = dir.path().join("lr.pmdl");
    ok(&[
        "train",
        "--model",
        "lr",
        "--ridge",
        "0.001",
        "-o",
        s(&lr),
        s(&tables[0]),
        s(&tables[1]),
    ]);
    ok(&["eval", "--model", s(&lr), s(&tables[2])]);

    let out = run(&["eval", "--model", s(&tables[0]), s(&tables[2])]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [read]"));
}

#[test]
fn render_constant_radargram() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("z.csv");
    std::fs::write(&csv, "0,0,0,0\n0,0,0,0\n0,0,0,0\n0,0,0,0\n").unwrap();
    std::fs::write(dir.path().join("z.csv.meta"), "fps=10\n").unwrap();
    let ppm = dir.path().join("z.ppm");
    ok(&["render", s(&csv), s(&ppm)]);
    let img = std::fs::read(&ppm).unwrap();
    let header = b"P6\n4 4\n255\n";
    assert!(img[header.len()..].iter().all(|&b| b == 128));
}

#[test]
fn missing_input_is_user_error() {
    let out = run(&["render", "/nonexistent/in.rgrm", "/tmp/out.ppm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/in.rgrm"));
}
