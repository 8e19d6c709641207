//! Runs a TOML configuration through the same path as `kan-nqs train`.
//!
//!     cargo run --release --example run_config -- configs/tfim_desk.toml

use kan_nqs::config::{Overrides, RunConfig};
use kan_nqs::runner::cmd_train;

fn main() -> kan_nqs::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/heisenberg_desk.toml".into());
    let run = RunConfig::load(&path)?.resolve(&Overrides { desk_scale: true, ..Default::default() })?;
    println!("{}: {} epochs into {}", run.run_id, run.train.schedule.total, run.out_dir.display());
    let res = cmd_train(&run, true)?;
    println!("{}", res.record.to_json());
    Ok(())
}
