//! Cross-check of the determinant certificate against the PBH rank test on
//! random and deliberately degenerate `(A, B)` pairs.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::stabcheck::{self, DEFAULT_PBH_TOL};

/// Number of constructed degenerate pairs added to a non-empty audit.
pub const CONSTRUCTED_PAIRS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairOrigin {
    Random,
    Constructed,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditCase {
    pub origin: PairOrigin,
    pub n: usize,
    pub m: usize,
    pub y_positive: bool,
    pub pbh_stabilizable: bool,
}

impl AuditCase {
    pub fn agrees(&self) -> bool {
        self.y_positive == self.pbh_stabilizable
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AuditReport {
    pub samples: usize,
    pub constructed: usize,
    pub both_yes: usize,
    pub both_no: usize,
    pub y_only: usize,
    pub pbh_only: usize,
    pub agreement_rate: f64,
    #[serde(skip)]
    pub cases: Vec<AuditCase>,
}

impl AuditReport {
    pub fn total(&self) -> usize {
        self.both_yes + self.both_no + self.y_only + self.pbh_only
    }

    pub fn disagreements(&self) -> usize {
        self.y_only + self.pbh_only
    }

    fn push(&mut self, case: AuditCase) {
        match (case.y_positive, case.pbh_stabilizable) {
            (true, true) => self.both_yes += 1,
            (false, false) => self.both_no += 1,
            (true, false) => self.y_only += 1,
            (false, true) => self.pbh_only += 1,
        }
        self.cases.push(case);
    }
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    normal_matrix(rng, n, n).qr().q()
}

/// `(A, B)` with entries from a standard normal distribution.
pub fn random_pair(rng: &mut impl Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rng.random_range(1..=5);
    let m = rng.random_range(1..=3);
    (normal_matrix(rng, n, n), normal_matrix(rng, n, m))
}

/// Uncontrollable pair `T [[A₁₁, A₁₂], [0, A₂₂]] Tᵀ`, `T [[B₁], [0]]` with a
/// random orthogonal `T`. The uncontrollable block has well separated
/// eigenvalues, unstable when `unstable` is set.
pub fn constructed_pair(rng: &mut impl Rng, unstable: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rng.random_range(2..=5);
    let m = rng.random_range(1..=3);
    let n2 = rng.random_range(1..n);
    let n1 = n - n2;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n1, n1)).copy_from(&normal_matrix(rng, n1, n1));
    a.view_mut((0, n1), (n1, n2)).copy_from(&normal_matrix(rng, n1, n2));
    // Uncontrollable block: distinct real parts offset from the axis.
    let sign = if unstable { 1.0 } else { -1.0 };
    for j in 0..n2 {
        a[(n1 + j, n1 + j)] = sign * (0.3 + 0.7 * j as f64 + 0.2 * rng.random::<f64>());
    }
    if n2 >= 2 && rng.random::<bool>() {
        // rotate the first two into a complex pair; when unstable, only the
        // pair needs to sit in the right half-plane
        let re = a[(n1, n1)];
        let im = 0.5 + rng.random::<f64>();
        a[(n1, n1)] = re;
        a[(n1 + 1, n1 + 1)] = re;
        a[(n1, n1 + 1)] = im;
        a[(n1 + 1, n1)] = -im;
    }
    let mut b = DMatrix::zeros(n, m);
    b.view_mut((0, 0), (n1, m)).copy_from(&normal_matrix(rng, n1, m));
    let t = random_orthogonal(rng, n);
    (&t * a * t.transpose(), t * b)
}

fn evaluate(origin: PairOrigin, a: &DMatrix<f64>, b: &DMatrix<f64>) -> AuditCase {
    AuditCase {
        origin,
        n: a.nrows(),
        m: b.ncols(),
        y_positive: stabcheck::y_certificate(a, b).is_positive(),
        pbh_stabilizable: stabcheck::pbh_stabilizable(a, b, DEFAULT_PBH_TOL),
    }
}

/// `samples` random pairs plus, when `samples > 0`, the hand example
/// `(diag(1, −1), [0, 1]ᵀ)` and `CONSTRUCTED_PAIRS − 1` random degenerate pairs.
pub fn run_audit(samples: usize, seed: u64) -> AuditReport {
    let mut report = AuditReport {
        samples,
        ..Default::default()
    };
    if samples == 0 {
        report.agreement_rate = 1.0;
        return report;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let (a, b) = random_pair(&mut rng);
        report.push(evaluate(PairOrigin::Random, &a, &b));
    }
    let hand_a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let hand_b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    report.push(evaluate(PairOrigin::Constructed, &hand_a, &hand_b));
    for i in 1..CONSTRUCTED_PAIRS {
        let (a, b) = constructed_pair(&mut rng, i % 2 == 1);
        report.push(evaluate(PairOrigin::Constructed, &a, &b));
    }
    report.constructed = CONSTRUCTED_PAIRS;
    report.agreement_rate = (report.both_yes + report.both_no) as f64 / report.total() as f64;
    report
}
