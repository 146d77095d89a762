mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{fixture, gen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn odbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odbench")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn eval_writes_all_outputs_and_render_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture::write_benchmark(dir.path());
    let out = dir.path().join("out");
    let o = odbench(&["eval", "--manifest", s(&manifest), "--out", s(&out), "--workers", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.csv", "report.md", "report.json", "plotdata.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("model,attack,map,ap_loc,csr,map_drop,ap_loc_drop,csr_drop,l1,l2,linf,psnr,ssim,lpips"));

    let md = out.join("again.md");
    let o = odbench(&["render", s(&out.join("report.json")), "--format", "md", "--out", s(&md)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(md).unwrap(), std::fs::read(out.join("report.md")).unwrap());
    let o = odbench(&["render", s(&out.join("report.json")), "--format", "csv"]);
    assert_eq!(o.stdout, csv.as_bytes());
}

#[test]
fn eval_threshold_override_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture::write_benchmark(dir.path());
    let out = dir.path().join("out");
    let o = odbench(&["eval", "--manifest", s(&manifest), "--out", s(&out), "--iou-thr", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR validation:"), "{}", stderr(&o));

    std::fs::write(dir.path().join("dets/yolo_pgd.json"), "not json").unwrap();
    let o = odbench(&["eval", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ERROR parse: [pgd/yolo]"), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(!csv.contains("yolo,pgd"));
    assert!(csv.contains("yolo,caa"));
}

#[test]
fn missing_manifest_is_an_io_error() {
    let o = odbench(&["eval", "--manifest", "/nonexistent/run.json", "--out", "/tmp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR io:"), "{}", stderr(&o));
}

#[test]
fn perceptual_trees() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for sub in ["clean", "adv"] {
        std::fs::create_dir_all(dir.path().join(sub).join("nested")).unwrap();
    }
    for name in ["a", "nested/b"] {
        let img = gen::random_image(&mut rng, 16, 16);
        img.save_png(&dir.path().join("clean").join(format!("{name}.png"))).unwrap();
        img.save_png(&dir.path().join("adv").join(format!("{name}.png"))).unwrap();
    }
    let out = dir.path().join("out");
    let (clean, adv) = (dir.path().join("clean"), dir.path().join("adv"));
    let o = odbench(&["perceptual", "--clean", s(&clean), "--adv", s(&adv), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("linf\t0.00 ± 0.00"), "{stdout}");
    assert!(stdout.contains("psnr\tinf ± 0.00"), "{stdout}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("perceptual_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ssim"]["mean"], 1.0);
    assert_eq!(summary["psnr"]["mean"], "inf");
    assert_eq!(std::fs::read_to_string(out.join("perceptual.csv")).unwrap().lines().count(), 3);

    gen::random_image(&mut rng, 16, 16).save_png(&adv.join("extra.png")).unwrap();
    let o = odbench(&["perceptual", "--clean", s(&clean), "--adv", s(&adv)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("extra.png"));
}

#[test]
fn compose_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixture::write_mixture(dir.path(), 40, &[("benign", 0.5), ("pgd", 0.5)], Some(9));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = odbench(&["compose", "--spec", s(&spec), "--out", s(out), "--materialize"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(String::from_utf8(o.stdout).unwrap(), "benign\t20\npgd\t20\n");
    }
    for f in ["mixture.csv", "mixture.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    assert_eq!(std::fs::read_dir(a.join("pgd")).unwrap().count(), 20);

    let c = dir.path().join("c");
    let o = odbench(&["compose", "--spec", s(&spec), "--out", s(&c), "--seed", "10"]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(a.join("mixture.csv")).unwrap(), std::fs::read(c.join("mixture.csv")).unwrap());
}

#[test]
fn attack_toy_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = odbench(&["attack-toy", "--seed", "4", "--steps", "5", "--out", s(out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("(8/255)") || stdout.contains("(7/255)"), "{stdout}");
    let trace = std::fs::read_to_string(out.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("iteration,J,L_cls,L_loc,L_obj"));
    assert_eq!(trace.lines().count(), 7);
    let clean = odbench::data::load_image(&out.join("clean.png")).unwrap();
    let adv = odbench::data::load_image(&out.join("adversarial.png")).unwrap();
    assert_eq!(clean.dims(), (32, 32));
    let linf = clean.pixels().iter().zip(adv.pixels()).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
    assert!(linf <= 8);

    let o = odbench(&["attack-toy", "--eps=-1", "--out", s(out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR argument:"), "{}", stderr(&o));
}

#[test]
fn usage_errors_and_help() {
    let o = odbench(&["eval", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR usage:"), "{}", stderr(&o));
    let o = odbench(&[]);
    assert_eq!(o.status.code(), Some(1));

    let o = odbench(&["--help"]);
    assert!(o.status.success());
    let help = String::from_utf8(o.stdout).unwrap();
    for sub in ["eval", "perceptual", "compose", "attack-toy", "render"] {
        assert!(help.contains(sub), "{sub}");
    }
    let flags: [(&str, &[&str]); 5] = [
        ("eval", &["--manifest", "--out", "--iou-thr", "--workers"]),
        ("perceptual", &["--clean", "--adv", "--features", "--weights", "--out"]),
        ("compose", &["--spec", "--seed", "--out", "--materialize"]),
        ("attack-toy", &["--seed", "--eps", "--steps", "--alpha", "--targeted", "--clean", "--out"]),
        ("render", &["--format", "--out"]),
    ];
    for (sub, list) in flags {
        let o = odbench(&[sub, "--help"]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        for flag in list {
            assert!(text.contains(flag), "{sub} {flag}");
        }
    }
}
