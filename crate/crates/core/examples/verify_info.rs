//! Variance decomposition and conditional-entropy checks on the toy chain.

use asyncnav::learn::infotheory::run_info_checks;

fn main() -> asyncnav::Result<()> {
    let samples = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200_000);
    let r = run_info_checks(samples, 11)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    println!("all checks pass: {}", r.passed());
    Ok(())
}
