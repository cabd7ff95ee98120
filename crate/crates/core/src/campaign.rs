//! Seeded property campaigns shared by the CLI sweeps and the acceptance run.
//! Each instance is a pure function of `(seed, index)`.

use serde::Serialize;

use crate::chern_moser::{verify_uniqueness_instance, SystemStatus};
use crate::error::Result;
use crate::quadric::SignatureForm;
use crate::random::{instance_rng, random_s_tilde};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UniquenessRecord {
    pub index: u64,
    pub terms: usize,
    pub restriction_zero: bool,
    pub status: SystemStatus,
    pub certificate_degree: Option<u32>,
    pub certificate_verified: bool,
}

/// One instance of the uniqueness campaign: a random member of the
/// all-slices class with bound `n - 1`, checked against the normalized
/// linearized equation.
pub fn uniqueness_instance(form: SignatureForm, cap: u32, seed: u64, index: u64) -> Result<UniquenessRecord> {
    let mut rng = instance_rng(seed, index);
    let a = random_s_tilde(form.n, cap, form.n.saturating_sub(1).max(1), &mut rng);
    let rep = verify_uniqueness_instance(&a, form)?;
    Ok(UniquenessRecord {
        index,
        terms: a.terms().len(),
        restriction_zero: rep.restriction_zero,
        status: rep.system_status,
        certificate_degree: rep.certificate.as_ref().map(|c| c.sigma),
        certificate_verified: rep.certificate.as_ref().map_or(false, |c| c.verified),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UniquenessSummary {
    pub count: usize,
    pub certificates: usize,
    pub only_zero: usize,
    pub violations: usize,
    pub records: Vec<UniquenessRecord>,
}

impl UniquenessSummary {
    /// Records may arrive in any order; they are sorted by index.
    pub fn new(mut records: Vec<UniquenessRecord>) -> Self {
        records.sort_by_key(|r| r.index);
        let certificates = records.iter().filter(|r| r.status == SystemStatus::Inconsistent && r.certificate_verified).count();
        let only_zero = records.iter().filter(|r| r.status == SystemStatus::OnlyZeroSolution).count();
        let violations = records.iter().filter(|r| r.status == SystemStatus::Violation).count();
        UniquenessSummary { count: records.len(), certificates, only_zero, violations, records }
    }

    /// Every instance has nonzero trace and a verified certificate.
    pub fn all_refuted(&self) -> bool {
        self.certificates == self.count && self.records.iter().all(|r| !r.restriction_zero)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub index: u64,
    pub series_zero: bool,
    pub restriction_zero: bool,
}

/// A vanishing trace on the quadric must come from the zero series.
pub fn trace_instance(form: SignatureForm, cap: u32, k: usize, seed: u64, index: u64) -> Result<TraceRecord> {
    let mut rng = instance_rng(seed, index);
    let a = random_s_tilde(form.n, cap, k, &mut rng);
    let restriction_zero = a.restrict_to_quadric(form.ell)?.is_zero();
    Ok(TraceRecord { index, series_zero: a.is_zero(), restriction_zero })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        let form = SignatureForm::new(2, 0).unwrap();
        let a = uniqueness_instance(form, 6, 11, 4).unwrap();
        assert_eq!(a, uniqueness_instance(form, 6, 11, 4).unwrap());
        assert_eq!(a.status, SystemStatus::Inconsistent);
        assert!(a.certificate_verified);
    }

    #[test]
    fn summary_sorts_records() {
        let form = SignatureForm::new(2, 1).unwrap();
        let recs: Vec<_> = (0..3).rev().map(|i| uniqueness_instance(form, 6, 5, i).unwrap()).collect();
        let s = UniquenessSummary::new(recs);
        assert_eq!(s.records.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(s.all_refuted());
    }
}
