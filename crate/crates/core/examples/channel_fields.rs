//! Generates a two-channel field, perturbs it, and writes both as CSV,
//! JSON sidecar and PGM into `out/channel_fields/`.

use std::fs;

use podflow::io::write_pgm;
use podflow::mesh::build_mesh;
use podflow::perm::{count_components, gen_channelized, perturb};

fn main() -> podflow::Result<()> {
    let mesh = build_mesh(64, 64)?;
    let truth = gen_channelized(11, 2, 1000.0, &mesh)?;
    let model = perturb(&truth, 0.05, 12)?;

    let dir = std::path::Path::new("out/channel_fields");
    fs::create_dir_all(dir)?;
    for (name, field) in [("truth", &truth), ("perturbed", &model)] {
        let (nx, ny) = field.dims();
        let high = field.high_mask();
        let fraction = high.iter().filter(|&&h| h).count() as f64 / high.len() as f64;
        println!(
            "{name:>9}: {} channels, {} connected high-permeability regions, area fraction {:.3}",
            field.channels().len(),
            count_components(&high, nx, ny),
            fraction
        );
        for c in field.channels() {
            println!(
                "           ordinate {:.3} amplitude {:.3} frequency {:.3} thickness {:.3}",
                c.ordinate, c.amplitude, c.frequency, c.thickness
            );
        }
        field.write_csv(dir.join(format!("{name}.csv")))?;
        field.write_sidecar(dir.join(format!("{name}.json")))?;
        write_pgm(nx, ny, field.values(), dir.join(format!("{name}.pgm")))?;
    }

    let (t, m) = (truth.high_mask(), model.high_mask());
    let changed = t.iter().zip(&m).filter(|(a, b)| a != b).count();
    println!("perturbation moved {changed} of {} elements", t.len());
    println!("wrote {}", dir.display());
    Ok(())
}
