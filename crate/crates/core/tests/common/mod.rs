//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nf_noma::rates::{rate_h, EffectiveGains, PowerAllocation, Role};

/// Brute-force optimum of the power problems with two clusters.
///
/// H-powers are swept on a grid of step `P_max / steps`. For each pair the
/// L-powers are set to the least fixed point of their lower bounds, found by
/// monotone iteration; every bound only grows with the other powers, so that
/// point is the cheapest and least interfering feasible completion.
pub struct GridOracle<'a> {
    pub gains: &'a EffectiveGains,
    pub rate_h_min: f64,
    pub rate_l_min: f64,
    pub pmax: f64,
    pub noise: f64,
    /// Keep inter-cluster interference in the H-user constraints and
    /// objective (multi-beam problem) or drop it (single-beam problem).
    pub h_interference: bool,
}

impl GridOracle<'_> {
    fn gain(&self, stream: usize, cluster: usize, role: Role) -> f64 {
        let k = if role == Role::H { 0 } else { 1 };
        self.gains.matrix()[(2 * cluster + k, stream)].norm_sqr()
    }

    fn inter(&self, p: &[f64; 4], m: usize, role: Role) -> f64 {
        let o = 1 - m;
        (p[2 * o] + p[2 * o + 1]) * self.gain(o, m, role)
    }

    fn complete(&self, ph: [f64; 2]) -> Option<[f64; 4]> {
        let floor = 1e-9 * self.pmax;
        let rl = self.rate_l_min.exp2() - 1.0;
        let rh = self.rate_h_min.exp2() - 1.0;
        let mut p = [ph[0], floor, ph[1], floor];
        for _ in 0..500 {
            let mut next = p;
            for m in 0..2 {
                let gh = self.gain(m, m, Role::H);
                let gl = self.gain(m, m, Role::L);
                let ih = if self.h_interference {
                    self.inter(&p, m, Role::H)
                } else {
                    0.0
                };
                let at_l = rl * (p[2 * m] + (self.inter(&p, m, Role::L) + self.noise) / gl);
                let at_h = rl * (p[2 * m] + (ih + self.noise) / gh);
                next[2 * m + 1] = floor.max(at_l).max(at_h);
            }
            let total: f64 = next.iter().sum();
            if total > self.pmax * (1.0 + 1e-12) {
                return None;
            }
            let moved = (0..4).any(|i| (next[i] - p[i]).abs() > 1e-15 * self.pmax);
            p = next;
            if !moved {
                break;
            }
        }
        for m in 0..2 {
            let ih = if self.h_interference {
                self.inter(&p, m, Role::H)
            } else {
                0.0
            };
            if p[2 * m] < rh * (ih + self.noise) / self.gain(m, m, Role::H) {
                return None;
            }
        }
        Some(p)
    }

    pub fn objective(&self, p: &[f64; 4]) -> f64 {
        if self.h_interference {
            let alloc = PowerAllocation::new(p.to_vec()).unwrap();
            (0..2)
                .map(|m| rate_h(&alloc, self.gains, self.noise, m))
                .sum()
        } else {
            (0..2)
                .map(|m| (1.0 + p[2 * m] * self.gain(m, m, Role::H) / self.noise).log2())
                .sum()
        }
    }

    /// Best objective on the grid, or `None` if no grid point is feasible.
    pub fn best(&self, steps: usize) -> Option<f64> {
        let mut best: Option<f64> = None;
        let step = self.pmax / steps as f64;
        for i in 1..steps {
            for j in 1..(steps - i) {
                if let Some(p) = self.complete([i as f64 * step, j as f64 * step]) {
                    let v = self.objective(&p);
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
        }
        best
    }
}
