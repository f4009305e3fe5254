// Write a latent and a mask to LATF containers and read them back.

use noise_edit::container::{self, Container};
use noise_edit::rng::NoiseSource;
use noise_edit::{EditMask, Shape};

pub fn run_example() -> noise_edit::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let shape = Shape::new(2, 4, 8, 8)?;
    let latent = NoiseSource::new(7).gaussian("example/latent", shape);
    let mask = EditMask::from_fn(shape.plane_shape(), |_, y, x| {
        (2..6).contains(&y) && (3..7).contains(&x)
    })?;

    let latent_path = dir.path().join("clip.latf");
    let mask_path = dir.path().join("clip_mask.latf");
    container::write_latent(&latent_path, &latent)?;
    container::write_mask(&mask_path, &mask)?;

    let bytes = std::fs::read(&latent_path).expect("just written");
    let header = container::parse_header(&bytes)?;
    println!(
        "{}: kind {:?}, shape {}, {} bytes",
        latent_path.display(),
        header.kind,
        header.shape,
        bytes.len()
    );

    // values are stored as f32
    let back = container::read_latent(&latent_path)?;
    let max_err = back
        .values()
        .iter()
        .zip(latent.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("latent round trip max |error| = {max_err:.3e}");

    match container::read_volume(&mask_path)? {
        Container::Mask(m) => println!(
            "mask round trip: {} of {} pixels set, equal = {}",
            m.count(),
            m.shape().len(),
            m == mask
        ),
        Container::Latent(_) => unreachable!("mask containers decode to masks"),
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
