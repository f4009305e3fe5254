// Distance transform of a mask and the blend coefficients derived from it.

use noise_edit::maskops::{coefficient_field, distance_transform};
use noise_edit::{EditMask, PlaneShape};

pub fn run_example() -> noise_edit::Result<()> {
    let shape = PlaneShape::new(1, 9, 40)?;
    // a 3x3 block near the left edge
    let mask = EditMask::from_fn(shape, |_, y, x| (3..6).contains(&y) && (2..5).contains(&x))?;
    let dist = distance_transform(&mask);
    let coeffs = coefficient_field(&dist, 16.0)?;

    println!("row 4, x = 0..40 step 4");
    println!("{:>4} {:>8} {:>6}", "x", "dist", "D");
    for x in (0..40).step_by(4) {
        println!(
            "{x:>4} {:>8.3} {:>6.3}",
            dist.field().get(0, 4, x),
            coeffs.field().get(0, 4, x)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
