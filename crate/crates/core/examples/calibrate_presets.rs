//! Recomputes the preset concentrations at the reference scale.
//!
//! `cargo run --release -p skewscope-core --example calibrate_presets`

use skewscope::workload::{calibrate_alpha, mean_reference_gini, PresetClass, ReferenceScale};

fn main() -> skewscope::Result<()> {
    let scale = ReferenceScale::default();
    let only: Vec<String> = std::env::args().skip(1).collect();
    for class in PresetClass::ALL {
        if !only.is_empty() && !only.iter().any(|n| format!("{class:?}") == *n) {
            continue;
        }
        let (lo, hi) = class.band();
        let target = 0.5 * (lo + hi);
        let alpha = calibrate_alpha(target, &scale, 20, 2024, 16)?;
        let check = mean_reference_gini(alpha, &scale, 20, 7)?;
        println!("{class:<16} target {target:.4} alpha {alpha:.4} check-gini {check:.4}");
    }
    Ok(())
}
