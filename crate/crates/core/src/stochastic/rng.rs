//! Counter-based Gaussian streams for the particle ensembles.
//!
//! Every draw is a pure function of (root seed, particle index, tick
//! index, lane), so particle paths are reproducible bit-for-bit and can be
//! generated in parallel with no shared state. The mixer is the splitmix64
//! finalizer applied to the combined counters; Gaussians come from
//! Box-Muller on fixed lanes.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const MUL1: u64 = 0xbf58_476d_1ce4_e5b9;
const MUL2: u64 = 0x94d0_49bb_1331_11eb;

#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MUL1);
    z = (z ^ (z >> 27)).wrapping_mul(MUL2);
    z ^ (z >> 31)
}

#[inline]
fn to_unit(bits: u64) -> f64 {
    // (0, 1]: never 0, so ln() below is always finite
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Per-particle stream handle; cheap to construct.
#[derive(Debug, Clone, Copy)]
pub struct ParticleStream {
    key: u64,
}

impl ParticleStream {
    pub fn new(root_seed: u64, particle: u64) -> Self {
        let key = finalize(
            finalize(root_seed ^ GOLDEN) ^ finalize(particle.wrapping_mul(GOLDEN) ^ 0x5851_f42d_4c95_7f2d),
        );
        Self { key }
    }

    /// Stream carved out for a sub-context (e.g. one quadrature point).
    pub fn with_context(root_seed: u64, context: u64, particle: u64) -> Self {
        let mixed = finalize(root_seed ^ context.wrapping_mul(MUL2));
        Self::new(mixed, particle)
    }

    #[inline]
    fn lane(&self, tick: u64, lane: u64) -> u64 {
        finalize(
            finalize(self.key ^ tick.wrapping_mul(GOLDEN)).wrapping_add(lane.wrapping_mul(MUL1)),
        )
    }

    /// Three independent standard normals for the given tick.
    #[inline]
    pub fn gaussian3(&self, tick: u64) -> [f64; 3] {
        let u0 = to_unit(self.lane(tick, 0));
        let u1 = to_unit(self.lane(tick, 1));
        let u2 = to_unit(self.lane(tick, 2));
        let u3 = to_unit(self.lane(tick, 3));
        let r0 = (-2.0 * u0.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u1).sin_cos();
        let r1 = (-2.0 * u2.ln()).sqrt();
        let c1 = (std::f64::consts::TAU * u3).cos();
        [r0 * c, r0 * s, r1 * c1]
    }
}
