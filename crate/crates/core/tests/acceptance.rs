//! Acceptance gate. One line per criterion; details indented below it.
//! Exits non-zero when any criterion is red.

use std::process::ExitCode;
use std::time::Instant;

use apkinetic::acceptance::CRITERIA;

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for (i, crit) in CRITERIA.iter().enumerate() {
        let start = Instant::now();
        match crit() {
            Ok(r) => {
                println!("{r} ({:.1}s)", start.elapsed().as_secs_f64());
                for d in &r.details {
                    println!("      {d}");
                }
                if !r.passed {
                    failed.push(r.id);
                }
            }
            Err(e) => {
                println!("C{:<2} FAIL error: {e}", i + 1);
                failed.push(i as u8 + 1);
            }
        }
    }
    println!();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of {} criteria fail: {:?}", failed.len(), CRITERIA.len(), failed);
        ExitCode::FAILURE
    }
}
