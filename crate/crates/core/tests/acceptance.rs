//! Acceptance criteria, one line per criterion. Runs without the libtest harness so
//! the verdicts are always printed; exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use shearlab::bifurcation;
use shearlab::suite::{self, CheckOutcome, SuiteOptions};
use shearlab::ShearModel;

fn main() -> ExitCode {
    let start = Instant::now();
    let model = ShearModel::default();
    let opts = SuiteOptions::default();
    let minimum = bifurcation::find_minimum(&model, 1).ok().flatten();
    let min = minimum.as_ref();
    let m = &model;
    let o = &opts;
    let jobs: Vec<Box<dyn Fn() -> CheckOutcome + Sync>> = vec![
        Box::new(|| suite::identity(m, o)),
        Box::new(|| suite::determinant_reduction(m, o)),
        Box::new(|| suite::closed_forms(m, o)),
        Box::new(|| suite::saddle_node(m, min)),
        Box::new(|| suite::zero_eigenvalue(m, min)),
        Box::new(|| suite::conservation(m, o)),
        Box::new(|| suite::shooting_oracle(m, o)),
        Box::new(|| suite::energy_decay(m, o, min)),
        Box::new(|| suite::small_speed_bounds(m)),
        Box::new(|| suite::self_convergence(m)),
    ];
    let outcomes: Vec<CheckOutcome> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs.iter().map(|job| s.spawn(move || job())).collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    println!("acceptance: 10 criteria");
    for c in &outcomes {
        println!("{}", c.line());
    }
    let failed = outcomes.iter().filter(|c| !c.passed()).count();
    println!("acceptance: {} passed, {failed} failed in {:.1?}", outcomes.len() - failed, start.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
