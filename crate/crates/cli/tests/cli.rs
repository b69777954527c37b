use qsm_core::deepquench::{susceptibility, QuenchProtocol};
use std::path::{Path, PathBuf};
use std::process::Command;

fn qsm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qsm"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qsm-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect();
    (head, rows)
}

#[test]
fn chi_matches_library() {
    let dir = scratch("chi");
    let out = dir.join("chi.csv");
    let st = qsm()
        .args(["quench", "--d", "2", "--g", "0.1", "--gamma", "1", "--C", "0.25", "--tmin", "10", "--tmax", "1e4", "--nodes", "5", "--observable", "chi"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let (head, rows) = read_csv(&out);
    assert_eq!(head, ["t", "chi"]);
    assert_eq!(rows.len(), 5);

    let z_out = dir.join("z.csv");
    let st = qsm()
        .args(["quench", "--d", "2", "--g", "0.1", "--gamma", "1", "--C", "0.25", "--tmin", "10", "--tmax", "1e4", "--nodes", "5", "--observable", "Z"])
        .arg("--out")
        .arg(&z_out)
        .status()
        .unwrap();
    assert!(st.success());
    let (head, zrows) = read_csv(&z_out);
    assert_eq!(head, ["t", "Z", "tZ", "residual", "regime"]);

    let p = QuenchProtocol::new(2.0, 0.1, 1.0, 0.25).unwrap();
    for (r, zr) in rows.iter().zip(&zrows) {
        let t: f64 = r[0].parse().unwrap();
        let chi: f64 = r[1].parse().unwrap();
        let z: f64 = zr[1].parse().unwrap();
        let want = susceptibility(t, z, &p);
        assert!(((chi - want) / want).abs() < 1e-12, "t = {t}: {chi} vs {want}");
        let tz: f64 = zr[2].parse().unwrap();
        assert!((tz - t * z).abs() <= 1e-12 * tz.abs());
    }

    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("chi.csv.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "quench");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_and_json_output() {
    let dir = scratch("cfg");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "format = \"json\"\n[equilibrium]\nd = 3\ng = 0.2\nT-sweep = \"0.5:2:4\"\n").unwrap();
    let out = dir.join("eq.json");
    let st = qsm().arg("--config").arg(&cfg).arg("--out").arg(&out).arg("equilibrium").status().unwrap();
    assert!(st.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["g"], 0.2);
    assert!(rows.iter().all(|r| r["z"].as_f64().unwrap() >= 0.0));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn usage_errors_exit_2() {
    let dir = scratch("bad");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[quench]\nbogus = 1\n").unwrap();
    let o = qsm().arg("--config").arg(&cfg).arg("--out").arg(dir.join("x.csv")).arg("quench").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = qsm().args(["quench", "--C", "0.1"]).arg("--out").arg(dir.join("y.csv")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    std::fs::remove_dir_all(&dir).ok();
}
