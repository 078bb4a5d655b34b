//! Prints the cosine schedule with warm restarts over three cycles for both
//! parameter groups.
//!
//! cargo run --example lr_schedule

use ferkit::training::{TrainConfig, WarmRestarts};

fn main() -> ferkit::Result<()> {
    let cfg = TrainConfig::default();
    let schedule = WarmRestarts::new(4, cfg.sched_t_mult, cfg.eta_min)?;
    println!(
        "{:>4} {:>6} {:>6} {:>12} {:>12}",
        "step", "t_cur", "T_i", "encoder", "decoder"
    );
    for step in 0..28 {
        let (t, period) = schedule.position(step);
        println!(
            "{step:>4} {t:>6} {period:>6} {:>12.3e} {:>12.3e}",
            schedule.lr(step, cfg.lr_encoder),
            schedule.lr(step, cfg.lr_decoder)
        );
    }
    Ok(())
}
