use std::io::Write;
use std::process::{Command, Output, Stdio};

fn pi0lab(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pi0lab"))
        .args(args)
        .env_remove("PI0LAB_SEED")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn storey_from_stdin() {
    let o = pi0lab(&["estimate", "-", "--method", "storey", "--lambda", "0.5"], Some("pvalue\n0.1\n0.6\n0.7\n0.9\n"));
    assert!(o.status.success());
    // three of four values exceed 0.5: 3 / (4 * 0.5)
    assert_eq!(stdout(&o), "method,n,theta_hat,lambda\nstorey,4,1.5,0.5\n");
    let clamped = pi0lab(&["estimate", "-", "--method", "storey", "--clamp"], Some("0.1\n0.6\n0.7\n0.9\n"));
    assert_eq!(stdout(&clamped), "method,n,theta_hat,lambda\nstorey,4,1,0.5\n");
}

#[test]
fn bound_values() {
    let o = pi0lab(&["bound", "0.6", "0.3"], None);
    assert_eq!(stdout(&o), "information,optimal_variance\n0.609756,1.64\n");
    let zero = pi0lab(&["bound", "0.6", "0"], None);
    assert_eq!(stdout(&zero), "information,optimal_variance\n0,infinite\n");
}

#[test]
fn simulate_seed_from_env_matches_flag() {
    let args = ["simulate", "--model", "b1", "--n", "200,400", "--reps", "5", "--estimators", "hist,storey"];
    let flag = pi0lab(&[&args[..], &["--seed", "9"]].concat(), None);
    let env = Command::new(env!("CARGO_BIN_EXE_pi0lab")).args(args).env("PI0LAB_SEED", "9").output().unwrap();
    assert!(flag.status.success());
    assert_eq!(flag.stdout, env.stdout);
    let other = pi0lab(&[&args[..], &["--seed", "10"]].concat(), None);
    assert_ne!(flag.stdout, other.stdout);
}

#[test]
fn bad_input_exits_with_2() {
    let o = pi0lab(&["estimate", "-"], Some("0.2\n1.5\n"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let unknown = pi0lab(&["simulate", "--model", "z9"], None);
    assert_eq!(unknown.status.code(), Some(2));
    let help = pi0lab(&["--help"], None);
    assert_eq!(help.status.code(), Some(0));
}
