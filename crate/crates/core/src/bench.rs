//! Timing and operation counts for the interaction kernels.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernels::{count_kernel_ops, enumerate_interactions, interaction_recursion, KernelKind};

/// Enumeration runs are skipped above this many multiplies per call.
pub const DEFAULT_ENUMERATION_CAP: u64 = 2_000_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub kernel: KernelKind,
    pub m: usize,
    pub k: usize,
    pub t: usize,
    pub multiplies: u64,
    /// Mean wall time of one call.
    pub wall_ns: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchPlan {
    pub kernels: Vec<KernelKind>,
    pub m: Vec<usize>,
    pub k: Vec<usize>,
    pub t: Vec<usize>,
    /// Calls per configuration (recursion); enumeration uses fewer when slow.
    pub calls: usize,
    pub enumeration_cap: u64,
    pub seed: u64,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            kernels: vec![KernelKind::Recursion, KernelKind::Enumeration],
            m: vec![10, 20, 50],
            k: vec![32],
            t: vec![2, 3, 4],
            calls: 100,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    /// Human-readable reasons for skipped configurations.
    pub notes: Vec<String>,
}

impl BenchResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kernel,m,k,t,multiplies,wall_ns")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{},{:.1}", r.kernel.as_str(), r.m, r.k, r.t, r.multiplies, r.wall_ns)?;
        }
        Ok(())
    }
}

pub fn random_reprs(m: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// Mean nanoseconds per call over `calls` calls.
pub fn time_kernel(kind: KernelKind, reprs: &[Vec<f64>], t: usize, calls: usize) -> f64 {
    let calls = calls.max(1);
    let start = Instant::now();
    for _ in 0..calls {
        match kind {
            KernelKind::Recursion => {
                black_box(interaction_recursion(black_box(reprs), t));
            }
            KernelKind::Enumeration => {
                black_box(enumerate_interactions(black_box(reprs), t));
            }
        }
    }
    start.elapsed().as_nanos() as f64 / calls as f64
}

/// Runs every configuration in the plan.
///
/// Before timing, recursion and enumeration outputs are compared whenever the
/// enumeration is within the cap; a mismatch is an error.
pub fn run_bench(plan: &BenchPlan) -> Result<BenchResult, String> {
    if plan.m.contains(&0) || plan.k.contains(&0) || plan.t.contains(&0) {
        return Err("benchmark sizes must be positive".into());
    }
    let mut result = BenchResult::default();
    for &m in &plan.m {
        for &k in &plan.k {
            let reprs = random_reprs(m, k, plan.seed);
            for &t in &plan.t {
                let enum_ops = count_kernel_ops(KernelKind::Enumeration, m, k, t);
                let enum_ok = enum_ops.multiplies <= plan.enumeration_cap;
                if enum_ok {
                    let stack = interaction_recursion(&reprs, t);
                    let oracle = enumerate_interactions(&reprs, t);
                    let scale = oracle.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                    let worst = stack
                        .fi(t)
                        .iter()
                        .zip(&oracle)
                        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                    if worst > 1e-9 * scale {
                        return Err(format!(
                            "kernels disagree at m={m}, k={k}, t={t}: max difference {worst:e}"
                        ));
                    }
                }
                for &kind in &plan.kernels {
                    let ops = count_kernel_ops(kind, m, k, t);
                    if kind == KernelKind::Enumeration && !enum_ok {
                        result.notes.push(format!(
                            "skipped enumeration at m={m}, k={k}, t={t}: {} multiplies exceeds cap {}",
                            ops.multiplies, plan.enumeration_cap
                        ));
                        continue;
                    }
                    let calls = match kind {
                        KernelKind::Recursion => plan.calls,
                        KernelKind::Enumeration => {
                            let budget = (plan.enumeration_cap / ops.multiplies.max(1)) as usize;
                            plan.calls.min(budget.max(1))
                        }
                    };
                    result.rows.push(BenchRow {
                        kernel: kind,
                        m,
                        k,
                        t,
                        multiplies: ops.multiplies,
                        wall_ns: time_kernel(kind, &reprs, t, calls),
                    });
                }
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_plan_runs_and_writes_fixed_columns() {
        let plan = BenchPlan {
            m: vec![4, 6],
            k: vec![2],
            t: vec![1, 3],
            calls: 3,
            ..BenchPlan::default()
        };
        let res = run_bench(&plan).unwrap();
        assert_eq!(res.rows.len(), 8);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kernel,m,k,t,multiplies,wall_ns\n"));
        assert_eq!(text.lines().count(), 9);
    }

    #[test]
    fn oversized_enumeration_is_skipped() {
        let plan = BenchPlan {
            m: vec![30],
            k: vec![2],
            t: vec![6],
            calls: 2,
            enumeration_cap: 1000,
            ..BenchPlan::default()
        };
        let res = run_bench(&plan).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.rows[0].kernel, KernelKind::Recursion);
        assert_eq!(res.notes.len(), 1);
    }

    #[test]
    fn zero_sizes_are_rejected() {
        let plan = BenchPlan {
            m: vec![0],
            ..BenchPlan::default()
        };
        assert!(run_bench(&plan).is_err());
    }
}
