//! Small timing sweep; prints fitted log-log slopes per method.

use flt::cli::bench::{measure_all, BenchConfig, Grids};

fn main() -> flt::Result<()> {
    let grid = vec![256, 512, 1024, 2048];
    let cfg = BenchConfig {
        grids: Grids {
            exact: grid.clone(),
            performer: grid.clone(),
            flt: grid.clone(),
            loglinear: grid,
        },
        reps: 5,
        ..BenchConfig::default()
    };
    let report = measure_all(&cfg, &mut std::io::sink())?;
    for fit in &report.slopes {
        match fit.slope {
            Some(s) => println!("{:<10} slope {s:.2} over {:?}", fit.method.name(), fit.used),
            None => println!("{:<10} too few points", fit.method.name()),
        }
    }
    Ok(())
}
