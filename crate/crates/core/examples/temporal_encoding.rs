//! Prints the four-slot encoding of a few perception ages.

use asyncnav::temporal::{encode, quantize, DEFAULT_RESOLUTION};

fn main() -> asyncnav::Result<()> {
    for dt in [0.0, 0.004, 0.005, 0.05, 0.14, 1.0, 3.0] {
        let e = encode(dt, DEFAULT_RESOLUTION)?;
        let slots: Vec<String> = e.as_slice().iter().map(|x| format!("{x:+.4}")).collect();
        println!(
            "age {dt:>5.3} s  step {:>3}  [{}]",
            quantize(dt, DEFAULT_RESOLUTION),
            slots.join(", ")
        );
    }
    Ok(())
}
