//! Forward-pass latency of the three model families at full size.

use kan_nqs::ansatz::{Ansatz, SineKanOptions};
use kan_nqs::bench::{bench_csv, sweep};

fn main() -> kan_nqs::Result<()> {
    let lengths = [16, 32, 64, 128];
    let (passes, warmup) = (5_000, 1_000);
    let mut rows = sweep(&lengths, passes, warmup, |n| Ansatz::sinekan(n, &SineKanOptions::default()))?;
    rows.extend(sweep(&lengths, passes, warmup, |n| Ansatz::mlp(n, &[256, 256], false, 0))?);
    rows.extend(sweep(&lengths, passes / 10, warmup / 10, |n| Ansatz::rbm(n, 128, false, 0))?);
    print!("{}", bench_csv(&rows));
    Ok(())
}
