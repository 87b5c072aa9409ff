//! How each head variant turns trend and deviation outputs into a forecast.
//!
//! `cargo run --example fusion_rules`

use carets::heads::{fuse_carets1, fuse_carets2, fuse_carets3, fuse_carets4, trend_decide, trend_sigmoid, trend_softmax};

fn main() -> carets::Result<()> {
    let x_n = 0.50;
    let logits = [2.0, -1.0, 0.3];
    let p: Vec<f64> = logits.iter().map(|z| trend_sigmoid(*z)).collect();
    let d: Vec<i8> = p.iter().map(|v| trend_decide(*v)).collect();
    println!("last observation x_n = {x_n}");
    println!("trend probabilities {p:.3?} -> decisions {d:?}");

    let abs = [0.10, 0.20, 0.05];
    println!("CaReTS1 (one deviation, signed by trend): {:.3?}", fuse_carets1(x_n, &d, &abs)?);

    let up = [0.10, 0.02, 0.08];
    let down = [0.03, 0.20, 0.04];
    println!("CaReTS2 (pick the up or down deviation):  {:.3?}", fuse_carets2(x_n, &d, &up, &down)?);

    let pair: Vec<(f64, f64)> = [(1.5, -0.5), (-0.2, 0.9), (0.0, 0.0)].iter().map(|(a, b)| trend_softmax(*a, *b)).collect();
    let p_up: Vec<f64> = pair.iter().map(|(u, _)| *u).collect();
    println!("softmax up/down pairs {pair:.3?}");
    println!("CaReTS3 (probability-weighted blend):     {:.3?}", fuse_carets3(x_n, &p_up, &up, &down)?);

    let residual = [0.07, -0.12, 0.01];
    println!("CaReTS4 (signed residual on x_n):         {:.3?}", fuse_carets4(x_n, &residual));
    Ok(())
}
