use std::process::Command;

fn ctd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctd"))
}

fn write_config(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn dump_coefficients_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.n1 = 8\ngrid.n2 = 8\ngrid.n3 = 2\n");
    let st = ctd().args(["dump-coefficients", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()).status().unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(dir.path().join("coefficients.csv")).unwrap();
    assert!(text.starts_with("node,det_jac,a11,a22,a33,a12,a13,a23"));
    assert_eq!(text.lines().count(), 1 + 8 * 8 * 3);
}

#[test]
fn unknown_key_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.nl = 8\n");
    let out = ctd().args(["verify", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}

#[test]
fn simulations_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.n1 = 16\ngrid.n2 = 8\ngrid.n3 = 4\nbulk.T = 2e-4\nsurface.T = 2e-4\nstudy.v0 = random\n",
    );
    let mut logs = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        for cmd in ["simulate-bulk", "simulate-surface"] {
            let st = ctd()
                .arg(cmd)
                .arg("--config")
                .arg(&cfg)
                .arg("--out-dir")
                .arg(&out)
                .args(["--seed", "4"])
                .status()
                .unwrap();
            assert!(st.success());
        }
        logs.push((
            std::fs::read(out.join("bulk_log.csv")).unwrap(),
            std::fs::read(out.join("surface_log.csv")).unwrap(),
            std::fs::read(out.join("bulk_snapshot_000020.csv")).unwrap(),
        ));
    }
    assert_eq!(logs[0], logs[1]);
    let log = String::from_utf8(logs[0].0.clone()).unwrap();
    assert!(log.starts_with("step,time,mass,energy,grad_w_norm,normal_deriv_norm\n"));
    assert_eq!(log.lines().count(), 22);
}

#[test]
fn converge_rejects_single_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "study.epsilons = 0.1\n");
    let st = ctd().args(["converge", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn residual_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.n1 = 16\ngrid.n2 = 8\nstudy.epsilons = 0.2, 0.1, 0.05\n");
    let st = ctd().args(["residual-sweep", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()).status().unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    assert!(text.starts_with("epsilon,zeta_delta_L2,zeta_F_L2,grad_zeta_delta_L2\n"));
}

#[test]
fn verify_flags_broken_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "surface.a = 1\nsurface.R = 2\nepsilon = 0.9\ngrid.n1 = 16\ngrid.n2 = 8\n");
    let out = ctd().args(["verify", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().next().unwrap().starts_with("FAIL geometry_identities"));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("SKIP")).count(), 7);
}

fn verify_lines(stabilization: f64) -> (Option<i32>, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "grid.n1 = 16\ngrid.n2 = 8\ngrid.n3 = 4\nstudy.v0_mean = 2\nverify.steps = 2\n\
             bulk.tau = 1\nsurface.tau = 1\nbulk.stabilization = {stabilization}\nsurface.stabilization = {stabilization}\n"
        ),
    );
    let out = ctd().args(["verify", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    (out.status.code(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn unstabilized_large_step_breaks_energy_but_not_mass() {
    let (code, stdout) = verify_lines(0.0);
    assert_eq!(code, Some(1));
    assert!(stdout.contains("PASS conservation"));
    assert!(stdout.contains("FAIL energy_monotonicity"));
}

#[test]
fn stabilized_large_step_dissipates() {
    let (code, stdout) = verify_lines(6.0);
    assert!(stdout.contains("PASS energy_monotonicity"), "{stdout}");
    assert_eq!(code, Some(0));
}
