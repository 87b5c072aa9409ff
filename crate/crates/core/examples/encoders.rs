//! The three sequence encoders map one 15-value window to a fixed-width
//! feature vector.
//!
//! `cargo run --example encoders`

use carets::data::{default_train_points, prepare};
use carets::encoders::{Encoder, EncoderConfig, EncoderKind};
use carets::synthetic::{generate, SyntheticConfig};
use carets::tape::ParamStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> carets::Result<()> {
    let series = generate(&SyntheticConfig { len: 400, ..SyntheticConfig::default() });
    let data = prepare(&series, 12, 6, default_train_points(series.len()))?;
    let window = &data.pool[0].features;

    for kind in EncoderKind::ALL {
        let config = EncoderConfig::new(kind).with_hidden_dim(16);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let encoder = Encoder::new(&config, &mut store, &mut rng)?;
        let h = encoder.encode(&store, window);
        let head: Vec<String> = h.0.iter().take(4).map(|v| format!("{v:+.3}")).collect();
        println!(
            "{:<12} {:>6} params, feature dim {}, first entries [{}]",
            kind.to_string(),
            store.num_scalars(),
            h.dim(),
            head.join(", ")
        );
    }
    Ok(())
}
