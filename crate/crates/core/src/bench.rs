//! Single-configuration forward-pass timing.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ansatz::{Ansatz, Workspace};
use crate::error::{Error, Result};
use crate::spin::SpinConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub tag: String,
    pub n_sites: usize,
    pub param_count: usize,
    pub passes: usize,
    pub warmup_passes: usize,
    pub mean_ns: f64,
}

pub const BENCH_HEADER: &str = "model_tag,n_sites,param_count,passes,warmup_passes,mean_ns";

impl BenchRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.tag, self.n_sites, self.param_count, self.passes, self.warmup_passes, self.mean_ns
        )
    }
}

/// Mean latency of `log ψ` on one random configuration. Timings are
/// recorded, never compared.
pub fn time_forward(model: &Ansatz, passes: usize, warmup_passes: usize, seed: u64) -> Result<BenchRow> {
    if passes == 0 {
        return Err(Error::Config("bench needs passes >= 1".into()));
    }
    let n = model.n_sites();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spins: Vec<f64> = (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
    let c = SpinConfig::from_spins(&spins)?;
    let mut ws = Workspace::default();
    let mut sink = 0.0;
    for _ in 0..warmup_passes {
        sink += model.log_psi_with(std::hint::black_box(&c), &mut ws);
    }
    let start = Instant::now();
    for _ in 0..passes {
        sink += model.log_psi_with(std::hint::black_box(&c), &mut ws);
    }
    let elapsed = start.elapsed();
    std::hint::black_box(sink);
    Ok(BenchRow {
        tag: model.tag(),
        n_sites: n,
        param_count: model.param_count(),
        passes,
        warmup_passes,
        mean_ns: elapsed.as_nanos() as f64 / passes as f64,
    })
}

/// Times one model per chain length, built by `make`.
pub fn sweep(
    lengths: &[usize],
    passes: usize,
    warmup_passes: usize,
    mut make: impl FnMut(usize) -> Result<Ansatz>,
) -> Result<Vec<BenchRow>> {
    lengths
        .iter()
        .map(|&n| time_forward(&make(n)?, passes, warmup_passes, n as u64))
        .collect()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("{BENCH_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::SineKanOptions;

    #[test]
    fn records_requested_counts() {
        let make = |n| {
            Ansatz::sinekan(n, &SineKanOptions { hidden: vec![4], grid: 2, ..Default::default() })
        };
        let a = sweep(&[16, 32], 50, 20, make).unwrap();
        let b = sweep(&[16, 32], 50, 20, make).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.passes, x.warmup_passes, x.n_sites), (y.passes, y.warmup_passes, y.n_sites));
            assert!(x.mean_ns > 0.0);
        }
        let csv = bench_csv(&a);
        assert!(csv.starts_with(BENCH_HEADER));
        assert!(csv.lines().nth(2).unwrap().starts_with("vSineKAN,32,"));
        assert!(time_forward(&make(8).unwrap(), 0, 0, 0).is_err());
    }
}
