/// Stable 64-bit seed derivation.
///
/// The parts are fed to FNV-1a (64-bit) with a `0x1f` separator after each
/// part, and the digest is finalized with the SplitMix64 mixer. The result
/// depends only on the parts, never on the process, platform or the set of
/// other policies in the experiment.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(PRIME);
        }
        hash ^= 0x1f;
        hash = hash.wrapping_mul(PRIME);
    };
    feed(&base.to_le_bytes());
    for part in parts {
        feed(part.as_bytes());
    }
    splitmix64(hash)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the environment instance and event stream for one trial.
pub fn environment_seed(base: u64, trial: usize) -> u64 {
    derive_seed(base, &["environment", &trial.to_string()])
}

/// Seed of a policy's random streams for one (policy, budget, trial) cell.
pub fn policy_seed(base: u64, policy: &str, budget: &str, trial: usize) -> u64 {
    derive_seed(base, &["policy", policy, budget, &trial.to_string()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_values() {
        // Frozen so that any change to the derivation is noticed.
        assert_eq!(derive_seed(0, &[]), 0xda5b_a57c_eade_2cb1);
        assert_eq!(environment_seed(7, 3), 0x23f8_9c70_cde9_e74c);
        assert_eq!(policy_seed(1, "CATS", "2", 0), 0xb095_4414_0614_5c32);
        assert_ne!(derive_seed(0, &["a", "bc"]), derive_seed(0, &["ab", "c"]));
        assert_ne!(policy_seed(1, "CATS", "2", 0), policy_seed(1, "CATS", "2", 1));
        assert_ne!(policy_seed(1, "CATS", "2", 0), policy_seed(2, "CATS", "2", 0));
    }
}
