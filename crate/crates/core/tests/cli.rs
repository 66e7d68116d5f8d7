use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gas_collide::qmath::SpinQuantum;
use gas_collide::spin::SpinScenario;
use gas_collide::C64;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gas-collide"))
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let o = bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    o.status.code().unwrap()
}

/// Header and rows as strings.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let h = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(str::to_string).collect())
        .collect();
    (h, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = read_csv(path);
    let i = h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name} in {h:?}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn integral_single_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "i.conf", "alpha_grid = 1\ns_grid = 0\n");
    let out = dir.path().join("i.csv");
    assert_eq!(run("integral", &cfg, &out, &[]), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("alpha,s,I\n"));
    assert!(!text.contains('\r'));
    let (_, rows) = read_csv(&out);
    assert_eq!(rows.len(), 1);
    let v: f64 = rows[0][2].parse().unwrap();
    assert!((v - 0.4).abs() < 1e-12);
    // 17 significant digits
    assert_eq!(rows[0][2].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn integral_grid_decreases_in_alpha() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "i.conf", "alpha_grid = linspace(0.1, 10, 12)\ns_grid = -10, -1, 0, 1, 10\n");
    let out = dir.path().join("i.csv");
    assert_eq!(run("integral", &cfg, &out, &[]), 0);
    let (a, s, i) = (column(&out, "alpha"), column(&out, "s"), column(&out, "I"));
    for k in 0..a.len() {
        for m in 0..a.len() {
            if s[k] == s[m] && a[m] > a[k] {
                assert!(i[m] < i[k]);
            }
        }
    }
}

#[test]
fn integral_rejects_empty_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "i.conf", "alpha_grid = \ns_grid = 0\n");
    assert_eq!(run("integral", &cfg, &dir.path().join("i.csv"), &[]), 2);
}

#[test]
fn invalid_configs_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o.csv");
    let bad = write_config(&dir, "b.conf", "J = 1\nwhatever = 3\n");
    assert_eq!(run("ergotropy", &bad, &out, &[]), 2);
    let half = write_config(&dir, "h.conf", "J = 0.3\nequilibrium = true\n");
    assert_eq!(run("ergotropy", &half, &out, &[]), 2);
    assert_eq!(run("ergotropy", &dir.path().join("missing.conf"), &out, &[]), 2);
    let ok = write_config(&dir, "ok.conf", "J = 1\nequilibrium = true\n");
    assert_eq!(run("ergotropy", &ok, &out, &["--sweep", "nonsense"]), 2);
    assert_eq!(bin().arg("explode").output().unwrap().status.code(), Some(2));
}

#[test]
fn ergotropy_stays_zero_without_inversion() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "e.conf", "J = 20\nalpha = 1\nD = 2\nA = 3\nt_max = 60\nn_samples = 61\n");
    let out = dir.path().join("e.csv");
    assert_eq!(run("ergotropy", &cfg, &out, &[]), 0);
    let (h, _) = read_csv(&out);
    assert_eq!(
        h,
        ["t_gamma", "ergotropy_over_hbar_omegaS", "E_S", "S", "Q_dot", "clausius_residual"]
    );
    assert!(column(&out, "ergotropy_over_hbar_omegaS").iter().all(|w| *w <= 1e-6));
}

#[test]
fn ergotropy_zero_in_equilibrium_from_ground() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "e.conf", "J = 2\nequilibrium = true\nD = 1\nt_max = 30\nn_samples = 31\n");
    let out = dir.path().join("e.csv");
    assert_eq!(run("ergotropy", &cfg, &out, &[]), 0);
    assert!(column(&out, "ergotropy_over_hbar_omegaS").iter().all(|w| *w <= 1e-10));
    // the pure initial state has no entropy rate, later samples do
    let (_, rows) = read_csv(&out);
    assert_eq!(rows[0][5], "");
    assert!(!rows[30][5].is_empty());
}

#[test]
fn equal_effective_temperatures_reach_equal_ergotropy() {
    let dir = TempDir::new().unwrap();
    let mut finals = Vec::new();
    for (d, a) in [(2, 1), (4, 3)] {
        let cfg = write_config(&dir, &format!("e{d}.conf"), &format!("J = 20\nD = {d}\nA = {a}\nt_max = 300\nn_samples = 4\n"));
        let out = dir.path().join(format!("e{d}.csv"));
        assert_eq!(run("ergotropy", &cfg, &out, &[]), 0);
        finals.push(*column(&out, "ergotropy_over_hbar_omegaS").last().unwrap());
    }
    assert!(finals[0] > 1.0);
    assert!((finals[0] - finals[1]).abs() <= 0.01 * finals[0], "{finals:?}");
}

fn verify_rows(out: &Path) -> Vec<(String, bool)> {
    let (_, rows) = read_csv(out);
    rows.iter().map(|r| (r[0].clone(), r[1] == "true")).collect()
}

#[test]
fn verify_equilibrium_defaults_pass() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "v.conf", "equilibrium = true\n");
    let out = dir.path().join("v.csv");
    assert_eq!(run("verify", &cfg, &out, &[]), 0);
    let rows = verify_rows(&out);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|(_, p)| *p), "{rows:?}");
}

#[test]
fn verify_flags_two_temperature_detailed_balance() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "v.conf", "J = 2\nD = 2\nA = 1\nt_max = 20\nn_samples = 21\n");
    let out = dir.path().join("v.csv");
    assert_eq!(run("verify", &cfg, &out, &[]), 4);
    let rows = verify_rows(&out);
    let get = |n: &str| rows.iter().find(|(m, _)| m == n).unwrap().1;
    assert!(!get("local_detailed_balance"));
    assert!(get("microreversibility"));
    // relaxation towards the negative effective temperature obeys its own Clausius inequality
    assert!(get("clausius"));
}

fn table_setup(dir: &TempDir, corrupt: bool) -> PathBuf {
    let s = SpinScenario::new(SpinQuantum::new(1.0).unwrap(), 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let p: Vec<f64> = (0..25).map(|k| 0.25 * k as f64).collect();
    let c: Vec<f64> = (0..9).map(|k| -1.0 + 0.25 * k as f64).collect();
    let mut t = s.born_table(&p, &c).unwrap();
    if corrupt {
        t.set((1, 0, 0, 1), 6, 4, C64::new(0.3, 0.0)).unwrap();
    }
    let path = dir.path().join(if corrupt { "bad.csv" } else { "good.csv" });
    t.write_csv(fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn verify_detects_corrupted_table() {
    let dir = TempDir::new().unwrap();
    for corrupt in [false, true] {
        let table = table_setup(&dir, corrupt);
        let cfg = write_config(
            &dir,
            "v.conf",
            &format!(
                "J = 1\nD = 0\nA = 1\namplitude_table = {}\nt_max = 10\nn_samples = 11\n",
                table.file_name().unwrap().to_str().unwrap()
            ),
        );
        let out = dir.path().join("v.csv");
        let code = run("verify", &cfg, &out, &[]);
        let rows = verify_rows(&out);
        let micro = rows.iter().find(|(m, _)| m == "microreversibility").unwrap().1;
        assert_eq!(micro, !corrupt);
        if corrupt {
            assert_eq!(code, 4);
        }
    }
}

#[test]
fn rates_match_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "r.conf", "J = 3\nD = 1\nA = 2\n");
    let out = dir.path().join("r.csv");
    assert_eq!(run("rates", &cfg, &out, &[]), 0);
    let (h, rows) = read_csv(&out);
    assert_eq!(h, ["i", "j", "rate", "analytic_rate", "rel_deviation"]);
    assert_eq!(rows.len(), 49);
    assert!(column(&out, "rel_deviation").iter().all(|d| *d <= 1e-4));
}

#[test]
fn zero_table_gives_zero_rates() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("zero.csv");
    let mut t = gas_collide::scattering::AmplitudeTable::new();
    t.insert_fn((1, 0, 0, 1), &[0.0, 5.0], &[-1.0, 1.0], |_, _| C64::new(0.0, 0.0)).unwrap();
    t.write_csv(fs::File::create(&table).unwrap()).unwrap();
    let cfg = write_config(&dir, "r.conf", "J = 0.5\nD = 0\nA = 1\namplitude_table = zero.csv\n");
    let out = dir.path().join("r.csv");
    assert_eq!(run("rates", &cfg, &out, &[]), 0);
    assert!(column(&out, "rate").iter().all(|r| *r == 0.0));
}

#[test]
fn detuning_sweep_suppresses_rates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "r.conf", "J = 1\nequilibrium = true\n");
    let out = dir.path().join("r.csv");
    assert_eq!(run("rates", &cfg, &out, &["--sweep", "D=0,2,4,8"]), 0);
    let mut maxima = Vec::new();
    for d in ["0", "2", "4", "8"] {
        let f = dir.path().join(format!("r_D={d}.csv"));
        maxima.push(column(&f, "rate").into_iter().fold(0.0, f64::max));
    }
    assert!(maxima.windows(2).all(|w| w[1] < w[0]), "{maxima:?}");
    assert!(maxima[3] < 1e-2 * maxima[0]);
    // merged file carries the swept key first
    let (h, rows) = read_csv(&out);
    assert_eq!(h[0], "D");
    assert_eq!(rows.len(), 4 * 9);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "e.conf", "J = 2\nD = 3\nA = 1\nt_max = 5\nn_samples = 11\ninitial_state = gibbs:2\n");
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert_eq!(run("ergotropy", &cfg, &a, &[]), 0);
    assert_eq!(run("ergotropy", &cfg, &b, &[]), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
