use spanforge::cli::criteria;
use spanforge::tol::Tolerances;

fn main() {
    let tol = Tolerances::from_env().unwrap_or_else(|e| {
        println!("bad tolerances: {e}");
        std::process::exit(2)
    });
    let verbose = std::env::args().any(|a| a == "--verbose") || std::env::var_os("SPANFORGE_VERBOSE").is_some();
    let mut failed = 0;
    for id in 1..=criteria::NAMES.len() {
        match criteria::run(id, &tol) {
            Ok(r) => {
                let tag = if r.pass { "PASS" } else { "FAIL" };
                println!("criterion {id} [{}] {tag}: {} ({:.1} s)", r.name, r.summary, r.seconds);
                for d in &r.details {
                    if verbose || d.starts_with("FAIL") {
                        println!("    {d}");
                    }
                }
                if !r.pass {
                    failed += 1;
                }
            }
            Err(e) => {
                println!("criterion {id} [{}] FAIL: error {e}", criteria::NAMES[id - 1]);
                failed += 1;
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
