//! `synth`: generate a deterministic synthetic dataset — one class-colored
//! circle per image with its exact bounding-square annotation.

use sungold::dataset::{ripeness_classes, synthesize_dataset, write_dataset};

use crate::common::{usage, CliResult};
use crate::SynthArgs;

pub fn run(args: SynthArgs) -> CliResult<()> {
    if args.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if args.size < 16 {
        return Err(usage("--size must be at least 16"));
    }
    let table = ripeness_classes();
    let samples = synthesize_dataset(args.n, args.seed, &table, args.size);
    write_dataset(&samples, &table, &args.out)?;
    println!(
        "wrote {} images ({}x{}) to {}",
        samples.len(),
        args.size,
        args.size,
        args.out.display()
    );
    Ok(())
}
