//! Seeded linear congruential generator used for all random initial data.
//!
//! State update `x ← 6364136223846793005·x + 1442695040888963407 (mod 2⁶⁴)`;
//! a uniform draw on `[0, 1)` is the top 53 bits of the new state divided by
//! `2⁵³`. The seed is first advanced once so that seed 0 is usable.

#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

const MUL: u64 = 6364136223846793005;
const INC: u64 = 1442695040888963407;

impl Lcg {
    pub fn new(seed: u64) -> Self {
        let mut g = Self { state: seed };
        g.next_u64();
        g
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(MUL).wrapping_add(INC);
        self.state
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform on `[-1, 1)`.
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }
}
