//! Writes a small phantom suite to disk, benchmarks it from its manifest and
//! prints the CSV report.
//!
//! ```text
//! cargo run --release --example benchmark -- [patients] [acquisitions per patient] [3d3d|3do2d]
//! ```

use trus_track::harness::{run_benchmark, write_suite, BenchOptions, Manifest, SuiteSpec};
use trus_track::pipeline::{Mode, RegistrationConfig};

fn main() -> trus_track::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let suite = SuiteSpec {
        patients: args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2),
        tracking_per_patient: args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2),
        ..Default::default()
    };
    let mode: Mode = args.get(3).map_or(Ok(Mode::Volume), |s| s.parse())?;
    let dir = std::env::temp_dir().join("trus-track-benchmark");
    let manifest = Manifest::read(write_suite(&suite, &dir)?)?;

    let options = BenchOptions {
        restarts: 0,
        ..Default::default()
    };
    let report = run_benchmark(&manifest, &RegistrationConfig::for_mode(mode), mode, &options)?;
    print!("{}", report.to_csv()?);
    report.write(&dir.join("report"))?;
    let a = &report.aggregates;
    println!(
        "success {}/{} ({:.1}%), eps_E r.m.s. {:.2} mm, mean time {:.0} ms",
        a.successes,
        a.pairs,
        100.0 * a.success_rate,
        a.eps_e_rms_mm.unwrap_or(f64::NAN),
        a.mean_time_ms.unwrap_or(f64::NAN)
    );
    println!("report written to {}", dir.join("report").display());
    Ok(())
}
