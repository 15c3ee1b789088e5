//! Truncated Hilbert space of one qubit and `M` bosonic modes.
//!
//! The bath is restricted to occupation vectors with a global budget
//! `sum_k n_k <= N_ph` (the zero-temperature reference state is the vacuum).
//! States are laid out spin-major: every `spin = +1` configuration comes
//! first, followed by the same occupation vectors with `spin = -1`, so the
//! two spin blocks of a state vector are contiguous halves of equal length.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Per-mode occupations are packed into 4-bit nibbles.
pub const MAX_EXCITATIONS: usize = 15;

/// Default ceiling on the total dimension (qubit x bath).
pub const DEFAULT_MAX_DIMENSION: u128 = 100_000_000;

const NIBBLES_PER_WORD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    /// `sigma_z = +1`
    Up,
    /// `sigma_z = -1`
    Down,
}

impl Spin {
    pub fn sign(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    fn block(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasisConfig {
    pub spin: Spin,
    pub occupations: Vec<u8>,
}

impl BasisConfig {
    pub fn vacuum(spin: Spin, modes: usize) -> Self {
        BasisConfig {
            spin,
            occupations: vec![0; modes],
        }
    }

    pub fn excitations(&self) -> usize {
        self.occupations.iter().map(|&n| n as usize).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Raise,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct PackedOccupation(Box<[u64]>);

impl PackedOccupation {
    fn pack(occupations: &[u8]) -> Self {
        let words = occupations.len().div_ceil(NIBBLES_PER_WORD);
        let mut packed = vec![0u64; words];
        for (k, &n) in occupations.iter().enumerate() {
            packed[k / NIBBLES_PER_WORD] |= (n as u64 & 0xf) << (4 * (k % NIBBLES_PER_WORD));
        }
        PackedOccupation(packed.into_boxed_slice())
    }
}

/// Number of qubit+bath states for `modes` modes and budget `max_excitations`,
/// counting the zero-excitation sector: `2 + 2 sum_{j=1}^{N} C(N,j) C(M,j)`.
pub fn dimension_estimate(modes: usize, max_excitations: usize) -> u128 {
    let mut total: u128 = 1;
    for j in 1..=max_excitations.min(modes) {
        total = total.saturating_add(binomial(max_excitations, j).saturating_mul(binomial(modes, j)));
    }
    total.saturating_mul(2)
}

/// Rough working-set size of a propagation in bytes: `krylov_dim + 3`
/// complex vectors plus the bath-block coupling matrix.
pub fn memory_estimate(modes: usize, max_excitations: usize, krylov_dim: usize) -> u128 {
    let dim = dimension_estimate(modes, max_excitations);
    let bath_dim = dim / 2;
    let vectors = dim.saturating_mul(16).saturating_mul(krylov_dim as u128 + 3);
    // every raise entry is stored twice (value + column index, 12 bytes)
    let coupling = bath_dim
        .saturating_mul(modes.min(2 * max_excitations.max(1)) as u128)
        .saturating_mul(24);
    let table = bath_dim.saturating_mul(modes as u128 + 48);
    vectors.saturating_add(coupling).saturating_add(table)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Immutable enumeration of the truncated basis with its inverse index.
#[derive(Debug, Clone)]
pub struct BasisTable {
    modes: usize,
    max_excitations: usize,
    /// Row-major `bath_dim x modes` occupation table shared by both spin blocks.
    occupations: Vec<u8>,
    index: HashMap<PackedOccupation, u32>,
}

impl BasisTable {
    pub fn enumerate(modes: usize, max_excitations: usize) -> Result<Self> {
        Self::enumerate_with_limit(modes, max_excitations, DEFAULT_MAX_DIMENSION)
    }

    pub fn enumerate_with_limit(
        modes: usize,
        max_excitations: usize,
        max_dimension: u128,
    ) -> Result<Self> {
        if modes == 0 {
            return Err(Error::Domain("number of modes must be at least 1".into()));
        }
        if max_excitations > MAX_EXCITATIONS {
            return Err(Error::Capacity {
                what: "excitation budget N_ph",
                requested: max_excitations as u128,
                limit: MAX_EXCITATIONS as u128,
            });
        }
        let dim = dimension_estimate(modes, max_excitations);
        let limit = max_dimension.min(u32::MAX as u128);
        if dim > limit {
            return Err(Error::Capacity {
                what: "basis dimension",
                requested: dim,
                limit,
            });
        }
        let bath_dim = (dim / 2) as usize;

        let mut occupations = Vec::with_capacity(bath_dim * modes);
        let mut index = HashMap::with_capacity(bath_dim);
        let mut current = vec![0u8; modes];
        let mut sum = 0usize;
        loop {
            index.insert(PackedOccupation::pack(&current), (occupations.len() / modes) as u32);
            occupations.extend_from_slice(&current);

            // next vector in lexicographic order
            if sum < max_excitations {
                current[modes - 1] += 1;
                sum += 1;
                continue;
            }
            let last_nonzero = match current.iter().rposition(|&n| n > 0) {
                Some(j) => j,
                None => break,
            };
            if last_nonzero == 0 {
                break;
            }
            sum -= current[last_nonzero] as usize;
            current[last_nonzero] = 0;
            current[last_nonzero - 1] += 1;
            sum += 1;
        }
        debug_assert_eq!(occupations.len(), bath_dim * modes);

        Ok(BasisTable {
            modes,
            max_excitations,
            occupations,
            index,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn max_excitations(&self) -> usize {
        self.max_excitations
    }

    /// Size of one spin block (number of bath occupation vectors).
    pub fn bath_dim(&self) -> usize {
        self.occupations.len() / self.modes
    }

    pub fn dimension(&self) -> usize {
        2 * self.bath_dim()
    }

    /// Occupation vector of bath state `b` (shared by both spin blocks).
    pub fn bath_occupations(&self, b: usize) -> &[u8] {
        &self.occupations[b * self.modes..(b + 1) * self.modes]
    }

    pub fn bath_index(&self, occupations: &[u8]) -> Option<usize> {
        if occupations.len() != self.modes {
            return None;
        }
        self.index
            .get(&PackedOccupation::pack(occupations))
            .map(|&i| i as usize)
    }

    pub fn config(&self, ordinal: usize) -> BasisConfig {
        let bath = self.bath_dim();
        let (spin, b) = if ordinal < bath {
            (Spin::Up, ordinal)
        } else {
            (Spin::Down, ordinal - bath)
        };
        BasisConfig {
            spin,
            occupations: self.bath_occupations(b).to_vec(),
        }
    }

    pub fn configs(&self) -> impl Iterator<Item = BasisConfig> + '_ {
        (0..self.dimension()).map(|i| self.config(i))
    }

    pub fn ordinal(&self, spin: Spin, bath_index: usize) -> usize {
        spin.block() * self.bath_dim() + bath_index
    }

    pub fn index_of(&self, config: &BasisConfig) -> Result<usize> {
        if config.occupations.len() != self.modes {
            return Err(Error::NotFound(format!(
                "expected {} modes, got {}",
                self.modes,
                config.occupations.len()
            )));
        }
        if config.excitations() > self.max_excitations
            || config.occupations.iter().any(|&n| n as usize > MAX_EXCITATIONS)
        {
            return Err(Error::NotFound(format!(
                "{:?} exceeds excitation budget {}",
                config.occupations, self.max_excitations
            )));
        }
        self.bath_index(&config.occupations)
            .map(|b| self.ordinal(config.spin, b))
            .ok_or_else(|| Error::NotFound(format!("{:?}", config.occupations)))
    }

    /// Action of `b_k^dagger` or `b_k` on a basis configuration, projected onto
    /// the truncated space. Returns `None` when the result leaves the space.
    pub fn ladder_action(
        &self,
        config: &BasisConfig,
        mode: usize,
        direction: Ladder,
    ) -> Option<(BasisConfig, f64)> {
        assert!(mode < self.modes, "mode {mode} out of range 0..{}", self.modes);
        let n = config.occupations[mode];
        let mut out = config.clone();
        match direction {
            Ladder::Raise => {
                if config.excitations() >= self.max_excitations {
                    return None;
                }
                out.occupations[mode] = n + 1;
                Some((out, (n as f64 + 1.0).sqrt()))
            }
            Ladder::Lower => {
                if n == 0 {
                    return None;
                }
                out.occupations[mode] = n - 1;
                Some((out, (n as f64).sqrt()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: every vector in {0..=N}^M, filtered by the budget.
    fn brute_force_count(modes: usize, nph: usize) -> usize {
        let mut count = 0;
        let total = (nph + 1).pow(modes as u32);
        for mut code in 0..total {
            let mut sum = 0;
            for _ in 0..modes {
                sum += code % (nph + 1);
                code /= nph + 1;
            }
            if sum <= nph {
                count += 1;
            }
        }
        2 * count
    }

    #[test]
    fn two_modes_one_excitation() {
        let table = BasisTable::enumerate(2, 1).unwrap();
        assert_eq!(table.dimension(), 6);
        let occ: Vec<Vec<u8>> = (0..table.bath_dim())
            .map(|b| table.bath_occupations(b).to_vec())
            .collect();
        assert_eq!(occ, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        assert_eq!(table.config(0), BasisConfig::vacuum(Spin::Up, 2));
        assert_eq!(table.config(3), BasisConfig::vacuum(Spin::Down, 2));
    }

    #[test]
    fn zero_budget_is_vacuum_only() {
        let table = BasisTable::enumerate(5, 0).unwrap();
        assert_eq!(table.dimension(), 2);
    }

    #[test]
    fn counts_match_brute_force() {
        for modes in 1..=6 {
            for nph in 0..=4 {
                let table = BasisTable::enumerate(modes, nph).unwrap();
                assert_eq!(table.dimension(), brute_force_count(modes, nph), "M={modes} N={nph}");
                assert_eq!(table.dimension() as u128, dimension_estimate(modes, nph));
            }
        }
    }

    #[test]
    fn large_basis_dimension_formula() {
        // 2 + 2 sum_j C(6,j) C(50,j) = 2 C(56,6) by Vandermonde
        let expected = 2 + 2
            * (6 * 50
                + 15 * 1225
                + 20 * 19600
                + 15 * 230300
                + 6 * 2118760
                + 15890700);
        assert_eq!(dimension_estimate(50, 6), expected as u128);
        assert_eq!(dimension_estimate(50, 6), 2 * binomial(56, 6));
    }

    #[test]
    fn ordering_is_lexicographic_and_unique() {
        let table = BasisTable::enumerate(4, 3).unwrap();
        for b in 1..table.bath_dim() {
            assert!(table.bath_occupations(b - 1) < table.bath_occupations(b));
        }
    }

    #[test]
    fn round_trip_index() {
        let table = BasisTable::enumerate(3, 2).unwrap();
        for (i, config) in table.configs().enumerate() {
            assert_eq!(table.index_of(&config).unwrap(), i);
        }
        assert_eq!(table.index_of(&BasisConfig::vacuum(Spin::Up, 3)).unwrap(), 0);
        assert_eq!(
            table.index_of(&BasisConfig::vacuum(Spin::Down, 3)).unwrap(),
            table.bath_dim()
        );
    }

    #[test]
    fn index_of_rejects_out_of_budget() {
        let table = BasisTable::enumerate(3, 2).unwrap();
        let config = BasisConfig {
            spin: Spin::Up,
            occupations: vec![1, 1, 1],
        };
        assert!(matches!(table.index_of(&config), Err(Error::NotFound(_))));
    }

    #[test]
    fn ladder_basics() {
        let table = BasisTable::enumerate(3, 2).unwrap();
        let vac = BasisConfig::vacuum(Spin::Up, 3);
        let (raised, amp) = table.ladder_action(&vac, 0, Ladder::Raise).unwrap();
        assert_eq!(raised.occupations, vec![1, 0, 0]);
        assert_eq!(amp, 1.0);
        assert!(table.ladder_action(&vac, 0, Ladder::Lower).is_none());

        let full = BasisConfig {
            spin: Spin::Down,
            occupations: vec![1, 0, 1],
        };
        assert!(table.ladder_action(&full, 1, Ladder::Raise).is_none());
    }

    #[test]
    fn raise_then_lower_returns_with_n_plus_one() {
        let table = BasisTable::enumerate(4, 4).unwrap();
        for config in table.configs() {
            for k in 0..4 {
                if let Some((up, a)) = table.ladder_action(&config, k, Ladder::Raise) {
                    let (back, b) = table.ladder_action(&up, k, Ladder::Lower).unwrap();
                    assert_eq!(back, config);
                    let n = config.occupations[k] as f64;
                    assert!((a * b - (n + 1.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn capacity_limit() {
        let err = BasisTable::enumerate_with_limit(10, 3, 100).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
        assert!(matches!(
            BasisTable::enumerate(3, 20),
            Err(Error::Capacity { .. })
        ));
    }
}
