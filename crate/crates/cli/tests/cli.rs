mod common;

use std::fs;

use common::*;
use mpi_stereo::archive::{color_file, MANIFEST_FILE};
use mpi_stereo::io::{read_image, BitDepth};
use mpi_stereo_core::{psnr, ImageBuffer};

#[test]
fn init_weights_is_deterministic_and_reports_schema() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    let ra = run_ok(&[
        "init-weights",
        "--out",
        s(&a),
        "--seed",
        "0",
        "--base-channels",
        "2",
    ]);
    let rb = run_ok(&[
        "init-weights",
        "--out",
        s(&b),
        "--seed",
        "0",
        "--base-channels",
        "2",
    ]);
    assert_schema(&ra, "init-weights");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ra["manifest_hash"], rb["manifest_hash"]);

    let c = dir.path().join("c.bin");
    run_ok(&[
        "init-weights",
        "--out",
        s(&c),
        "--seed",
        "1",
        "--base-channels",
        "2",
    ]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn classical_archive_renders_source_at_zero_shift() {
    let dir = tempfile::tempdir().unwrap();
    let img = test_image(24, 40, 1);
    let image = write_png(&dir.path().join("img.png"), &img, BitDepth::Sixteen);
    let depth = write_depth_png(&dir.path().join("depth.png"), &test_depth(24, 40));
    let archive = dir.path().join("mpi");
    let built = run_ok(&[
        "build-mpi",
        "--image",
        s(&image),
        "--depth",
        s(&depth),
        "--out",
        s(&archive),
    ]);
    assert_schema(&built, "build-mpi");
    assert_eq!(built["n_planes"], 16);

    let out = dir.path().join("view.png");
    let rendered = run_ok(&[
        "render",
        "--archive",
        s(&archive),
        "--out",
        s(&out),
        "--max-disparity-px",
        "0",
    ]);
    assert_schema(&rendered, "render");
    let (view, bits) = read_image(&out).unwrap();
    assert_eq!(bits, BitDepth::Sixteen);
    let worst = view
        .data()
        .iter()
        .zip(img.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(worst <= 1.0 / 65535.0 + 1e-6, "max diff {worst}");
}

#[test]
fn missing_plane_file_is_a_corrupt_archive() {
    let dir = tempfile::tempdir().unwrap();
    let image = write_png(
        &dir.path().join("img.png"),
        &test_image(8, 8, 0),
        BitDepth::Eight,
    );
    let depth = write_depth_png(&dir.path().join("d.png"), &test_depth(8, 8));
    let archive = dir.path().join("mpi");
    run_ok(&[
        "build-mpi",
        "--image",
        s(&image),
        "--depth",
        s(&depth),
        "--out",
        s(&archive),
        "--n-planes",
        "4",
    ]);
    fs::remove_file(archive.join(color_file(2))).unwrap();
    let out = dir.path().join("v.png");
    let (_, err) = run_err(&["render", "--archive", s(&archive), "--out", s(&out)]);
    assert_schema(&err, "error");
    assert_eq!(err["error"], "CorruptArchive");

    fs::write(archive.join(MANIFEST_FILE), "{").unwrap();
    let (_, err) = run_err(&["render", "--archive", s(&archive), "--out", s(&out)]);
    assert_eq!(err["error"], "CorruptArchive");
}

#[test]
fn convert_writes_pairs_and_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let depths = dir.path().join("depths");
    fs::create_dir_all(&frames).unwrap();
    fs::create_dir_all(&depths).unwrap();
    for i in 0..3 {
        write_png(
            &frames.join(format!("f{i:03}.png")),
            &test_image(16, 24, i),
            BitDepth::Eight,
        );
        write_depth_png(&depths.join(format!("f{i:03}.png")), &test_depth(16, 24));
    }
    let out = dir.path().join("pairs");
    let report = run_ok(&[
        "convert",
        "--input",
        s(&frames),
        "--depth",
        s(&depths),
        "--output",
        s(&out),
        "--n-planes",
        "8",
    ]);
    assert_schema(&report, "convert");
    let listed = report["frames"].as_array().unwrap();
    assert_eq!(listed.len(), 3);
    for (i, f) in listed.iter().enumerate() {
        assert!(f["input"]
            .as_str()
            .unwrap()
            .ends_with(&format!("f{i:03}.png")));
        for p in f["outputs"].as_array().unwrap() {
            let (v, bits) = read_image(p.as_str().unwrap().as_ref()).unwrap();
            assert_eq!((v.height(), v.width(), bits), (16, 24, BitDepth::Eight));
        }
    }
    let (left, _) = read_image(&out.join("f001_left.png")).unwrap();
    let (src, _) = read_image(&frames.join("f001.png")).unwrap();
    assert_eq!(left, src);

    let sbs = dir.path().join("sbs");
    let report = run_ok(&[
        "convert",
        "--input",
        s(&frames),
        "--depth",
        s(&depths),
        "--output",
        s(&sbs),
        "--layout",
        "sbs",
        "--mode",
        "dibr",
    ]);
    assert_schema(&report, "convert");
    let (v, _) = read_image(&sbs.join("f000_sbs.png")).unwrap();
    assert_eq!((v.height(), v.width()), (16, 48));
}

#[test]
fn convert_reads_a_job_file() {
    let dir = tempfile::tempdir().unwrap();
    write_png(
        &dir.path().join("a.png"),
        &test_image(12, 12, 3),
        BitDepth::Eight,
    );
    write_depth_png(&dir.path().join("a_depth.png"), &test_depth(12, 12));
    let job = dir.path().join("job.txt");
    fs::write(
        &job,
        "# stereo job\ninput = a.png\ndepth = a_depth.png\noutput = out\nn_planes = 4\nlayout = sbs\nmax_disparity_px = 0\n",
    )
    .unwrap();
    let report = run_ok(&["convert", "--config", s(&job)]);
    assert_schema(&report, "convert");
    assert_eq!(report["layout"], "sbs");
    let (v, _) = read_image(&dir.path().join("out").join("a_sbs.png")).unwrap();
    let (src, _) = read_image(&dir.path().join("a.png")).unwrap();
    let half = ImageBuffer::from_fn(12, 12, 3, |y, x, c| v.get(y, x + 12, c)).unwrap();
    assert_eq!(half, src);

    fs::write(&job, "input = a.png\nbogus = 1\n").unwrap();
    let (_, err) = run_err(&["convert", "--config", s(&job)]);
    assert_eq!(err["error"], "Config");
}

#[test]
fn zero_weight_network_converts_with_uniform_masks() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.bin");
    run_ok(&[
        "init-weights",
        "--out",
        s(&weights),
        "--zero",
        "--base-channels",
        "2",
    ]);
    let image = write_png(
        &dir.path().join("img.png"),
        &test_image(64, 96, 2),
        BitDepth::Eight,
    );
    let out = dir.path().join("out");
    let report = run_ok(&[
        "convert",
        "--input",
        s(&image),
        "--weights",
        s(&weights),
        "--mode",
        "network",
        "--output",
        s(&out),
        "--network-h",
        "64",
        "--network-w",
        "96",
    ]);
    assert_schema(&report, "convert");
    assert_eq!(report["factor"], 4);
    let err = report["frames"][0]["mask_sum_error"].as_f64().unwrap();
    assert!(err <= 1e-5, "mask sum error {err}");
    let (right, _) = read_image(&out.join("img_right.png")).unwrap();
    assert!(right.data().iter().all(|v| v.is_finite()));
}

#[test]
fn eval_caps_identical_frames_and_reports_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt, off) = (
        dir.path().join("pred"),
        dir.path().join("gt"),
        dir.path().join("off"),
    );
    for d in [&pred, &gt, &off] {
        fs::create_dir_all(d).unwrap();
    }
    let base = ImageBuffer::filled(16, 16, 3, 0.2).unwrap();
    let shifted = ImageBuffer::filled(16, 16, 3, 0.3).unwrap();
    for i in 0..2 {
        write_png(&pred.join(format!("{i}.png")), &base, BitDepth::Sixteen);
        write_png(&gt.join(format!("{i}.png")), &base, BitDepth::Sixteen);
        write_png(&off.join(format!("{i}.png")), &shifted, BitDepth::Sixteen);
    }
    let same = run_ok(&["eval", "--pred", s(&pred), "--gt", s(&gt)]);
    assert_schema(&same, "eval");
    assert_eq!(same["aggregate"]["psnr"], 100.0);
    assert!((same["aggregate"]["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let report_path = dir.path().join("eval.json");
    let offset = run_ok(&[
        "eval",
        "--pred",
        s(&off),
        "--gt",
        s(&gt),
        "--out",
        s(&report_path),
    ]);
    assert_schema(&offset, "eval");
    let p = offset["aggregate"]["psnr"].as_f64().unwrap();
    let (a, _) = read_image(&off.join("0.png")).unwrap();
    let (b, _) = read_image(&gt.join("0.png")).unwrap();
    assert!((p - psnr(&a, &b).unwrap()).abs() < 1e-9);
    assert!((p - 20.0).abs() < 0.01, "psnr {p}");
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(saved, offset);

    fs::remove_file(gt.join("1.png")).unwrap();
    let (_, err) = run_err(&["eval", "--pred", s(&pred), "--gt", s(&gt)]);
    assert_schema(&err, "error");
    assert_eq!(err["error"], "ListMismatch");
}

#[test]
fn small_bench_reports_schema() {
    for mode in ["network", "classical"] {
        let r = run_ok(&[
            "bench",
            "--width",
            "128",
            "--height",
            "64",
            "--n-planes",
            "4",
            "--runs",
            "2",
            "--warmups",
            "0",
            "--mode",
            mode,
            "--factors",
            "2,4",
        ]);
        assert_schema(&r, "bench");
        assert_eq!(r["mode"], mode);
        assert_eq!(r["factors"].as_array().unwrap().len(), 2);
        assert_eq!(r["full"]["mpi_width"], 128);
        assert_eq!(r["factors"][1]["mpi_height"], 16);
    }
    let (_, err) = run_err(&[
        "bench",
        "--width",
        "100",
        "--height",
        "64",
        "--factors",
        "3",
    ]);
    assert_eq!(err["error"], "Config");
}

#[test]
fn thread_env_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("MPI_STEREO_THREADS", "0")
        .args(["init-weights", "--out", s(&dir.path().join("w.bin"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "Config");

    let w = dir.path().join("w2.bin");
    let out = bin()
        .env("MPI_STEREO_THREADS", "1")
        .args(["init-weights", "--out", s(&w), "--base-channels", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn unreadable_inputs_fail_with_named_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("x.tiff");
    fs::write(&bogus, b"nope").unwrap();
    let (_, err) = run_err(&[
        "build-mpi",
        "--image",
        s(&bogus),
        "--depth",
        s(&bogus),
        "--out",
        s(dir.path()),
    ]);
    assert_schema(&err, "error");
    assert_eq!(err["error"], "UnsupportedFormat");

    let missing = dir.path().join("missing.png");
    let (_, err) = run_err(&["eval", "--pred", s(&missing), "--gt", s(&missing)]);
    assert_schema(&err, "error");
}
