use std::io::Write;

use lyapgauge::suite::{run_suite, SuiteConfig};

#[test]
fn acceptance() {
    let report = run_suite(&SuiteConfig::default());
    // written past the test harness capture so the lines show in every run
    let mut out = std::io::stdout().lock();
    for c in &report.criteria {
        writeln!(out, "{}", c.line()).unwrap();
    }
    out.flush().unwrap();
    let failed: Vec<u8> = report.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
