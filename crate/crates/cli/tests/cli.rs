use std::f64::consts::PI;
use std::process::Command;

use ffembed::embedding::{angle_distance, poles_in};
use ffembed_cli::commands::{cmd_grid, cmd_oversampling_study, cmd_sweep, cmd_table};
use ffembed_cli::config::{ExperimentConfig, ShapeSource};
use ffembed_cli::output::{parse_written, CsvTable, RunMeta};

fn run_meta(command: &str) -> RunMeta {
    RunMeta { command: command.into(), version: "test".into(), timestamp: 0 }
}

fn written(table: &CsvTable) -> String {
    let mut buf = Vec::new();
    table.write(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn meta_value(text: &str, key: &str) -> f64 {
    let (meta, _) = parse_written(text);
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.parse().unwrap()).unwrap()
}

fn config(shape: &str, k: f64) -> ExperimentConfig {
    ExperimentConfig { shape: ShapeSource::Preset(shape.into()), k, ..ExperimentConfig::default() }
}

fn parse(cell: &str) -> f64 {
    match cell {
        "inf" => f64::INFINITY,
        other => other.parse().unwrap(),
    }
}

#[test]
fn sweep_shows_naive_blow_up_and_stable_output() {
    let mut cfg = config("square", 10.0);
    cfg.alpha = 5.0 * PI / 4.0;
    cfg.n_theta = 1000;
    let (table, report) = cmd_sweep(&cfg, &run_meta("sweep")).unwrap();
    let text = written(&table);
    let poles = poles_in(cfg.alpha, 2, 0.0, 2.0 * PI);
    let mut naive_near_pole_max: f64 = 0.0;
    let mut stab_max: f64 = 0.0;
    let scale = meta_value(&text, "reference_sup_norm");
    for row in &table.rows()[..] {
        let theta = parse(&row[0]);
        if poles.iter().any(|&p| angle_distance(theta, p) < 0.05) {
            naive_near_pole_max = naive_near_pole_max.max(parse(&row[1]));
        }
        stab_max = stab_max.max(parse(&row[2]) / scale);
    }
    assert_eq!(table.rows().len(), 1000);
    assert!(naive_near_pole_max > 1.0, "{naive_near_pole_max}");
    assert!(stab_max <= 1e-2, "{stab_max}");
    assert!((report.ratio - report.e_out / report.e_in).abs() <= 1e-12 * report.ratio);

    let (again, _) = cmd_sweep(&cfg, &run_meta("sweep")).unwrap();
    assert_eq!(written(&again), text);
}

#[test]
fn sweep_at_canonical_angle_matches_direct_solve() {
    let mut cfg = config("screen", 5.0);
    cfg.alpha = PI;
    cfg.mtilde = Some(4);
    cfg.n_theta = 200;
    let (_, report) = cmd_sweep(&cfg, &run_meta("sweep")).unwrap();
    // the canonical field itself carries the input error
    assert!(report.e_out <= 20.0 * report.e_in, "{} vs {}", report.e_out, report.e_in);
}

#[test]
fn grid_shape_canonical_columns_and_reciprocity() {
    let mut cfg = config("square", 10.0);
    cfg.n_theta = 36;
    cfg.n_alpha = 36;
    let out = cmd_grid(&cfg, &run_meta("grid")).unwrap();
    let text = written(&out.grid);
    let (_, lines) = parse_written(&text);
    assert_eq!(lines.len(), 1 + 36);
    assert!(lines.iter().all(|l| l.len() == 1 + 36));
    let values: Vec<Vec<f64>> = lines[1..].iter().map(|l| l[1..].iter().map(|c| parse(c)).collect()).collect();

    // α = 0 and α = π/2 are canonical angles of the default set
    let stored: Vec<f64> = lines[1..].iter().map(|l| parse(&l[1 + 9])).collect();
    let again = cmd_grid(&cfg, &run_meta("grid")).unwrap();
    let (_, lines2) = parse_written(&written(&again.grid));
    for (i, l) in lines2[1..].iter().enumerate() {
        assert_eq!(parse(&l[1 + 9]), stored[i]);
    }

    let e_in = meta_value(&text, "E_in");
    let max_abs = values.iter().flatten().map(|v| v.exp()).fold(0.0, f64::max);
    let mut defect: f64 = 0.0;
    for i in 0..36 {
        for j in 0..36 {
            defect = defect.max((values[i][j].exp() - values[j][i].exp()).abs());
        }
    }
    assert!(defect <= 10.0 * e_in * max_abs, "{defect} vs {}", e_in * max_abs);

    let (_, spot_lines) = parse_written(&written(&out.spot));
    assert_eq!(spot_lines.len(), 1 + 5 * 36);
    assert!(out.report.e_out < 1e-2);
}

#[test]
fn screen_study_separates_degenerate_and_oversampled_sets() {
    let mut cfg = config("screen", 10.0);
    cfg.n_theta = 40;
    cfg.n_alpha = 40;
    cfg.mtilde_list = vec![2, 3];
    cfg.delta_list = vec![1e-8];
    let (table, rows) = cmd_oversampling_study(&cfg, &run_meta("study-oversampling")).unwrap();
    assert_eq!(table.rows().len(), 4);
    for r in &rows {
        let e_out = r.e_out.unwrap();
        if r.mtilde == 2 {
            assert!(e_out >= 0.5, "{r:?}");
        } else if r.strategy == Some(2) {
            assert!(e_out <= 100.0 * r.e_in, "{r:?}");
        }
    }
    assert!(rows.iter().any(|r| r.mtilde == 2 && r.status.starts_with("failed")));
    assert!(rows.iter().any(|r| r.mtilde == 2 && r.status == "degenerate"));
}

#[test]
fn table_columns_are_consistent() {
    let mut cfg = config("square", 5.0);
    cfg.n_theta = 40;
    cfg.n_alpha = 40;
    cfg.k_list = vec![5.0];
    cfg.shape_list = vec!["square".into()];
    cfg.epw_list = vec![5.0, 10.0, 20.0];
    let (table, rows) = cmd_table(&cfg, &run_meta("table")).unwrap();
    let (_, lines) = parse_written(&written(&table));
    assert_eq!(lines[0], ["k", "shape", "N", "e_in", "e_out", "ratio", "cond"]);
    for (line, row) in lines[1..].iter().zip(&rows) {
        assert_eq!(parse(&line[5]), parse(&line[4]) / parse(&line[3]));
        assert!((1.0..=1e5).contains(&row.ratio), "{row:?}");
    }
    assert!(rows.windows(2).all(|w| w[1].e_in < w[0].e_in && w[1].n > w[0].n));
}

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ffembed"));
    cmd.env("SOURCE_DATE_EPOCH", "1700000000");
    cmd
}

#[test]
fn binary_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "shape = screen\nk = 5\ngrid.n_theta = 64\n").unwrap();
    let out = dir.path().join("a.csv");
    let mut texts = Vec::new();
    for _ in 0..2 {
        let status = binary()
            .args(["sweep", "--config", cfg_path.to_str().unwrap(), "--alpha", "pi/3", "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        texts.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let a = &texts[0];
    assert!(a.contains("# timestamp = 1700000000"));
    assert!(a.contains("# config.shape = screen"));
    assert!(a.contains("theta,naive_error,stabilized_error,branch"));

    let bad = binary().args(["sweep", "--shape", "square", "--k", "-1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad = binary().args(["sweep", "--shape", "hexagon"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad = binary().args(["grid", "--n-theta", "1000"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));

    let too_large = binary().args(["sweep", "--shape", "screen", "--k", "5", "--mtilde", "201", "--n-theta", "8"]).output().unwrap();
    assert_eq!(too_large.status.code(), Some(3), "{}", String::from_utf8_lossy(&too_large.stderr));

    let selftest = binary().arg("selftest").output().unwrap();
    assert_eq!(selftest.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&selftest.stdout).contains("ok   embedding"));
}
