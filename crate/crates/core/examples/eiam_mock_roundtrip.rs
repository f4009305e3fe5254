// Start the mock analysis services on a free port and run caption,
// reasoning and segmentation over HTTP against the demo fixtures.

use std::net::SocketAddr;

use noise_edit::eiam::{analyze, demo, embed_prompt, Endpoints, HttpBackend, Instruction, MockBackend, MockServer};

pub fn run_example() -> noise_edit::Result<()> {
    let set = demo::demo_set()?;
    let server = MockServer::spawn(MockBackend::new(set.fixtures), SocketAddr::from(([127, 0, 0, 1], 0)))?;
    println!("mock services on {}", server.base_url());

    let backend = HttpBackend::new(Endpoints::on_host(&server.base_url()))?;
    let analysis = analyze(&backend, demo::VIDEO_REF, &Instruction::new(demo::INSTRUCTION)?)?;
    println!("source prompt: {}", analysis.prompts.source);
    println!("target prompt: {}", analysis.prompts.target);
    println!("objects:       {:?}", analysis.prompts.objects);
    println!(
        "mask:          {} pixels over {}",
        analysis.mask.count(),
        analysis.mask.shape()
    );
    for (name, text) in [
        ("source", &analysis.prompts.source),
        ("target", &analysis.prompts.target),
    ] {
        println!(
            "{name} condition id: {}",
            embed_prompt(text, demo::CONDITION_LENGTH)?.condition_id()
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
