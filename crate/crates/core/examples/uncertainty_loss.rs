//! Uncertainty-weighted combination of the task losses, its clamp, and the
//! stationary point of each summand.
//!
//! `cargo run --example uncertainty_loss`

use carets::loss::{clamp_state, summand_gradient, total_loss, Arch, TaskLosses, UncertaintyState};

fn main() -> carets::Result<()> {
    let losses = TaskLosses { ca: 0.45, de: 0.02, op: 0.004 };
    let even = UncertaintyState::default();
    for arch in [Arch::A, Arch::B] {
        let b = total_loss(&losses, &even, arch, 0.01)?;
        println!("{arch:?} at zero log-variances: total {:.5}, weights ca {:.3} de {:?} op {:.3}", b.total, b.weight_ca, b.weight_de, b.weight_op);
    }

    // Each summand is minimised (without the penalty) at log-variance = ln L.
    let tuned = UncertaintyState {
        log_var_ca: losses.ca.ln(),
        log_var_de: losses.de.ln(),
        log_var_op: losses.op.ln(),
    };
    let b = total_loss(&losses, &tuned, Arch::A, 0.0)?;
    println!("at s = ln L: total {:.5}", b.total);
    for (name, l, s) in [("ca", losses.ca, tuned.log_var_ca), ("de", losses.de, tuned.log_var_de), ("op", losses.op, tuned.log_var_op)] {
        println!("  d/ds {name}: {:+.2e}", summand_gradient(l, s, 0.0));
    }

    let wild = UncertaintyState { log_var_ca: -40.0, log_var_de: 3.0, log_var_op: 25.0 };
    println!("clamped {:?} -> {:?}", wild.as_array(), clamp_state(wild).as_array());
    Ok(())
}
