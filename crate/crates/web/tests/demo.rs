use qhet_web::{analyze_tables, parse_tables, pp_curves, tail_curves};

const TABLES: &str = "3 20 2 20\n5 20 1 20\n# comment\n8 20 4 20\n2,20,2,20\n";

#[test]
fn parses_counts_and_rejects_bad_lines() {
    assert_eq!(parse_tables(TABLES).unwrap().len(), 4);
    assert!(parse_tables("1 2 3").unwrap_err().contains("expected 4"));
    assert!(parse_tables("5 4 1 4").unwrap_err().contains("line 1"));
    assert!(parse_tables("a 4 1 4").is_err());
}

#[test]
fn analysis_matches_core() {
    let a = analyze_tables(TABLES, "lor").unwrap();
    let core = qhet_core::analyze(&parse_tables(TABLES).unwrap(), qhet_core::Measure::Lor).unwrap();
    assert_eq!(a.q_f, core.q_f.q);
    assert_eq!(a.k, 4);
    assert_eq!(a.p_values.len(), 5);
    let json = serde_json::to_string(&a).unwrap();
    assert!(json.contains("\"f_naive\""));
    assert!(analyze_tables("1 2 1 2\n1 2 1 2", "lor").is_err());
    assert!(analyze_tables(TABLES, "smd").is_err());
}

#[test]
fn tail_curves_start_at_one_and_decrease() {
    let c = tail_curves(TABLES, "lor", 101).unwrap();
    assert_eq!(c.grid_f.len(), 101);
    assert_eq!(c.curves_f.len(), 4);
    for curve in &c.curves_f {
        assert!((curve.sf[0] - 1.0).abs() < 1e-9);
        assert!(curve.sf.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{}", curve.method);
    }
    assert!(c.chisq.unwrap().windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn small_simulation_and_limits() {
    let p = pp_curves("lor", 5, 40, 0.2, 0.0, 0.0, 200, 1).unwrap();
    assert_eq!(p.nominal.len(), 17);
    assert_eq!(p.errors.len(), 5);
    assert_eq!(p.analyzed + p.discarded, 200);
    assert!(p.errors.iter().all(|c| c.sf.iter().zip(&p.nominal).all(|(e, n)| *e >= -n && *e <= 1.0 - n)));
    assert!(pp_curves("lor", 5, 40, 0.2, 0.0, 0.0, 0, 1).is_err());
    assert!(pp_curves("lor", 5, 40, 1.2, 0.0, 0.0, 10, 1).unwrap_err().contains("p_c"));
}
