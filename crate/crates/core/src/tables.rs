//! Published reference values for the exceptional lattices, embedded so the
//! reproduction checks do not depend on any external file.

use std::f64::consts::PI;

use crate::lattice::LatticeSpec;
use crate::vanhove::Rational;

/// What a catalog row is noted as, beyond its signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowNote {
    Plain,
    Minimum,
    Maximum,
    /// Critical point with a five-dimensional zero eigenspace.
    Degenerate,
    /// A second, separate class at an energy already listed.
    Distinct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VanHoveRow {
    pub energy: Rational,
    pub n_down: usize,
    pub n_up: usize,
    pub note: RowNote,
}

const fn row(num: i64, den: u64, n_down: usize, n_up: usize, note: RowNote) -> VanHoveRow {
    VanHoveRow { energy: Rational { num, den }, n_down, n_up, note }
}

const E6_ROWS: [VanHoveRow; 5] = [
    row(-72, 1, 0, 6, RowNote::Minimum),
    row(-8, 1, 1, 5, RowNote::Plain),
    row(0, 1, 2, 4, RowNote::Plain),
    row(8, 1, 1, 0, RowNote::Degenerate),
    row(9, 1, 6, 0, RowNote::Maximum),
];

const E7_ROWS: [VanHoveRow; 8] = [
    row(-126, 1, 0, 7, RowNote::Minimum),
    row(-18, 1, 1, 6, RowNote::Plain),
    row(2, 1, 1, 6, RowNote::Plain),
    row(18, 5, 2, 5, RowNote::Plain),
    row(6, 1, 3, 4, RowNote::Plain),
    row(9, 1, 2, 0, RowNote::Degenerate),
    row(10, 1, 6, 1, RowNote::Plain),
    row(14, 1, 7, 0, RowNote::Maximum),
];

const E8_ROWS: [VanHoveRow; 11] = [
    row(-240, 1, 0, 8, RowNote::Minimum),
    row(-16, 1, 1, 7, RowNote::Plain),
    row(3, 1, 2, 6, RowNote::Plain),
    row(8, 1, 3, 5, RowNote::Plain),
    row(10, 1, 4, 4, RowNote::Plain),
    row(11, 1, 5, 3, RowNote::Plain),
    row(185, 16, 6, 2, RowNote::Plain),
    row(320, 27, 7, 1, RowNote::Plain),
    row(12, 1, 7, 1, RowNote::Plain),
    row(12, 1, 8, 0, RowNote::Distinct),
    row(16, 1, 8, 0, RowNote::Maximum),
];

/// Critical-point rows in increasing energy; `None` for non-exceptional lattices.
pub fn van_hove_rows(spec: LatticeSpec) -> Option<&'static [VanHoveRow]> {
    match exceptional_rank(spec)? {
        6 => Some(&E6_ROWS),
        7 => Some(&E7_ROWS),
        _ => Some(&E8_ROWS),
    }
}

/// Band-edge data and return probability of one lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeData {
    /// `−ε_min/ε_max`.
    pub gamma: i64,
    pub epsilon_max: i64,
    /// `lim ρ/x^{d/2−1}` at the bottom and the top of the band.
    pub min_tail: f64,
    pub max_tail: f64,
    /// Global maxima per unit cell of the reciprocal lattice.
    pub n_max: usize,
    /// Published 95% interval of the return probability.
    pub return_ci: (f64, f64),
}

impl EdgeData {
    pub fn return_midpoint(&self) -> f64 {
        0.5 * (self.return_ci.0 + self.return_ci.1)
    }
}

pub fn edge_data(spec: LatticeSpec) -> Option<EdgeData> {
    let sqrt3 = 3f64.sqrt();
    Some(match exceptional_rank(spec)? {
        6 => EdgeData {
            gamma: 8,
            epsilon_max: 9,
            min_tail: 1.0 / (8192.0 * 9.0 * sqrt3 * PI.powi(3)),
            max_tail: 5.0 / (9.0 * sqrt3 * PI.powi(3)),
            n_max: 80,
            return_ci: (0.022901, 0.022916),
        },
        7 => EdgeData {
            gamma: 9,
            epsilon_max: 14,
            min_tail: 1.0 / (128.0 * 6561.0 * 5.0 * PI.powi(4)),
            max_tail: 3.0 / (160.0 * PI.powi(4)),
            n_max: 36,
            return_ci: (0.011973, 0.011982),
        },
        _ => EdgeData {
            gamma: 15,
            epsilon_max: 16,
            min_tail: 1.0 / (8192.0 * 243.0 * 625.0 * PI.powi(4)),
            max_tail: 45.0 / (8192.0 * PI.powi(4)),
            n_max: 135,
            return_ci: (0.0059014, 0.0059064),
        },
    })
}

/// Closed walks of lengths 3 through 8.
pub fn walk_counts(spec: LatticeSpec) -> Option<[u64; 6]> {
    Some(match exceptional_rank(spec)? {
        6 => [1_440, 54_216, 2_134_080, 93_993_120, 4_423_628_160, 219_463_602_120],
        7 => [4_032, 228_690, 14_394_240, 1_020_623_940, 78_353_170_560, 6_393_827_197_170],
        _ => [13_440, 1_260_720, 137_813_760, 17_141_798_400, 2_336_327_078_400, 341_350_907_713_200],
    })
}

/// Integer-sequence catalogue number of the closed-walk sequence.
pub fn oeis_id(spec: LatticeSpec) -> Option<&'static str> {
    Some(match exceptional_rank(spec)? {
        6 => "A292881",
        7 => "A292882",
        _ => "A292883",
    })
}

/// Return probability of the simple cubic walk, `1 − 16·∛4·π⁴/(9Γ(1/3)⁶)`,
/// which is the `A_3` case here.
pub fn watson_a3() -> f64 {
    let g = statrs::function::gamma::gamma(1.0 / 3.0);
    1.0 - 16.0 * 4f64.cbrt() * PI.powi(4) / (9.0 * g.powi(6))
}

fn exceptional_rank(spec: LatticeSpec) -> Option<usize> {
    (spec.family() == crate::lattice::Family::E).then(|| spec.rank())
}
