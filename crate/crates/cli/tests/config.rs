use std::path::PathBuf;

use wforge_cli::expr::{parse_field, Expr};
use wforge_cli::RunConfig;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_round_trip() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        assert_eq!(again.to_toml(), cfg.to_toml());
        seen += 1;
    }
    assert!(seen >= 4);
}

#[test]
fn defaults_fill_missing_sections() {
    let cfg = RunConfig::parse("[initial]\na0 = [\"1\", \"0\", \"1\"]\n").unwrap();
    assert_eq!(cfg.scheme.alpha, 0.1);
    assert_eq!(cfg.domain.margin, 0.3);
    assert_eq!(cfg.scheme.domain.margin, 0.3);
    assert_eq!(cfg.output.resolution, 64);
}

#[test]
fn inadmissible_alpha_is_rejected_at_load() {
    let e = RunConfig::parse("[initial]\na0 = [\"1\", \"0\", \"1\"]\n[scheme]\nalpha = 0.2\nbeta = 1.0\n").unwrap_err();
    assert!(e.message.contains("min(1/7, beta/2)"), "{e}");
}

#[test]
fn sigma_gate_is_checked_at_load() {
    let e = RunConfig::parse("[initial]\na0 = [\"1\", \"0\", \"1\"]\n[scheme]\nsigma = 4.0\ns = 0.7\n").unwrap_err();
    assert!(e.message.contains("must exceed 4"), "{e}");
}

#[test]
fn errors_carry_line_and_column() {
    let e = RunConfig::parse("[initial]\na0 = [\"1\", \"0\", \"1\"]\n\n[scheme]\nalpha = \"small\"\n").unwrap_err();
    assert_eq!(e.line, Some(5), "{e}");
    assert!(e.column.is_some());

    let e = RunConfig::parse("[initial]\na0 = [\"1\", \"0\", \"1\"]\n[scheme]\ncolour = 3\n").unwrap_err();
    assert_eq!(e.line, Some(4), "{e}");
    assert!(e.message.contains("colour"));

    // the column points into the expression
    let e = RunConfig::parse("[initial]\nv0 = \"x1 + * 2\"\na0 = [\"1\", \"0\", \"1\"]\n").unwrap_err();
    assert_eq!((e.line, e.column), (Some(2), Some(12)), "{e}");
    assert!(e.message.contains("v0"));
}

#[test]
fn missing_target_is_rejected() {
    let e = RunConfig::parse("[initial]\nv0 = \"x1\"\n").unwrap_err();
    assert!(e.message.contains("a0") && e.message.contains("f"), "{e}");
}

#[test]
fn expressions_evaluate() {
    let pi = std::f64::consts::PI;
    let f = parse_field("sin(pi*x1)*x2^2 - 3/2").unwrap();
    let p = [0.3, 0.7];
    assert!((f.eval(p) - ((pi * 0.3).sin() * 0.49 - 1.5)).abs() < 1e-15);
    let f = parse_field("-x1^2 + cos(2*x2)/4").unwrap();
    assert!((f.eval(p) - (-0.09 + (1.4f64).cos() / 4.0)).abs() < 1e-15);
    let f = parse_field("2^3^0.5").unwrap();
    assert!((f.eval(p) - 2f64.powf(3f64.sqrt())).abs() < 1e-14);
    assert_eq!(Expr::parse("2*(3+1)").unwrap().constant(), Some(8.0));
    assert_eq!(Expr::parse("x1").unwrap().constant(), None);
    // derivatives of parsed fields are exact
    let f = parse_field("0.5*(x1^2 + x2^2)").unwrap();
    assert_eq!(f.partial(0).eval([0.25, 0.5]), 0.25);
}

#[test]
fn expression_errors() {
    for (src, col) in [("x3", 1), ("(x1 + 1", 8), ("1 +", 4), ("sin x1", 5), ("2 $ 3", 3)] {
        let e = parse_field(src).unwrap_err();
        assert_eq!(e.column, col, "{src}: {e}");
    }
    assert!(parse_field("1/x1").is_err());
    assert!(parse_field("x1^x2").is_err());
}
