//! Linear comb systems relating observables to spectral samples at harmonics.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::symmetry::{HarmonicPoint, PrincipalDomainSet, SymmetryGroup};
use crate::error::{Error, Result};
use crate::sequences::{FilterEval, SequenceSet};
use crate::simulate::ObservableRecord;

/// Below this many repetitions the comb approximation is usually poor.
pub const COMB_VALIDITY_REPETITIONS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    Chi,
    Phi,
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Observable::Chi => "chi",
            Observable::Phi => "phi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Classical,
    SpinBosonEntangled,
    SpinBosonSeparable,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Classical => "classical",
            Branch::SpinBosonEntangled => "spin-boson-entangled",
            Branch::SpinBosonSeparable => "spin-boson-separable",
        })
    }
}

/// What a column stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownKind {
    /// Classical polyspectrum of the given order (1 = PSD, 2 = bispectrum).
    Polyspectrum(usize),
    EffectiveSpectrum,
    EffectiveTrispectrum,
    SeparableTrispectrum,
}

impl UnknownKind {
    pub fn name(&self) -> String {
        match self {
            UnknownKind::Polyspectrum(1) => "S".into(),
            UnknownKind::Polyspectrum(k) => format!("S{k}"),
            UnknownKind::EffectiveSpectrum => "S_eff".into(),
            UnknownKind::EffectiveTrispectrum => "J3".into(),
            UnknownKind::SeparableTrispectrum => "j3".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "S" => UnknownKind::Polyspectrum(1),
            "S_eff" => UnknownKind::EffectiveSpectrum,
            "J3" => UnknownKind::EffectiveTrispectrum,
            "j3" => UnknownKind::SeparableTrispectrum,
            _ => match s.strip_prefix('S').and_then(|k| k.parse().ok()) {
                Some(k) => UnknownKind::Polyspectrum(k),
                None => return Err(Error::Parse(format!("unknown spectral quantity {s:?}"))),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unknown {
    pub kind: UnknownKind,
    pub point: HarmonicPoint,
    pub multiplicity: usize,
}

impl Unknown {
    pub fn label(&self) -> String {
        format!("{}({})", self.kind.name(), self.point.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowLabel {
    pub sequence: String,
    pub observable: Observable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub rows: Vec<RowLabel>,
    pub columns: Vec<Unknown>,
    pub matrix: DMatrix<f64>,
    pub repetitions: u32,
    pub period: f64,
    pub branch: Branch,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `prod_j F(h_j) * F(-sum h_j)`.
fn filter_product(filter: &FilterEval, point: &HarmonicPoint, period: f64) -> Complex64 {
    let w = point.frequencies(period);
    let total: f64 = w.iter().sum();
    w.iter().fold(filter.eval(-total), |acc, &x| acc * filter.eval(x))
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// Measurement vector in row order.
    pub fn measurements(&self, records: &[ObservableRecord]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            let rec = records
                .iter()
                .find(|r| r.label == row.sequence && r.repetitions == self.repetitions)
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "no observable for sequence {} at M = {}",
                        row.sequence, self.repetitions
                    ))
                })?;
            out[i] = match row.observable {
                Observable::Chi => rec.chi,
                Observable::Phi => rec.phi,
            };
        }
        Ok(out)
    }

    /// Matrix with row and column labels.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sequence".to_string(), "observable".to_string()];
        header.extend(self.columns.iter().map(Unknown::label));
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![row.sequence.clone(), row.observable.to_string()];
            rec.extend((0..self.ncols()).map(|j| format!("{:e}", self.matrix[(i, j)])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_set(seqs: &SequenceSet) -> Result<()> {
    if seqs.is_empty() {
        return Err(Error::Empty("sequence set".into()));
    }
    if seqs.repetitions() < COMB_VALIDITY_REPETITIONS {
        log::warn!(
            "M = {} is below {COMB_VALIDITY_REPETITIONS}; the comb approximation may be inaccurate",
            seqs.repetitions()
        );
    }
    Ok(())
}

/// Classical system truncated at cumulant order `2 * truncation`: chi rows
/// carry the odd orders `1, 3, ..`, phi rows the even orders `2, 4, ..`.
/// `domains` supplies one polyspectrum domain per order `1..=2 * truncation`.
pub fn assemble_classical(
    seqs: &SequenceSet,
    truncation: usize,
    domains: &[PrincipalDomainSet],
) -> Result<DesignMatrix> {
    check_set(seqs)?;
    if truncation == 0 {
        return Err(Error::InvalidParameter("cumulant truncation must be at least 1".into()));
    }
    let mut columns = Vec::new();
    let mut orders = Vec::new();
    for order in 1..=2 * truncation {
        let d = domains
            .iter()
            .find(|d| d.order == order)
            .ok_or_else(|| Error::Empty(format!("principal domain of order {order}")))?;
        if d.group != SymmetryGroup::Polyspectrum {
            return Err(Error::InvalidParameter(
                "classical unknowns need the polyspectrum symmetry".into(),
            ));
        }
        if d.is_empty() {
            return Err(Error::Empty(format!("principal domain of order {order}")));
        }
        for (p, &m) in d.points.iter().zip(&d.multiplicity) {
            columns.push(Unknown {
                kind: UnknownKind::Polyspectrum(order),
                point: p.clone(),
                multiplicity: m,
            });
            orders.push(order);
        }
    }
    let m = seqs.repetitions() as f64;
    let period = seqs.timing().cycle();
    let mut rows = Vec::new();
    for s in seqs.sequences() {
        for obs in [Observable::Chi, Observable::Phi] {
            rows.push((s, obs));
        }
    }
    let values: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|(s, obs)| {
            let filter = FilterEval::new(s);
            columns
                .iter()
                .zip(&orders)
                .map(|(u, &order)| {
                    let odd = order % 2 == 1;
                    if odd != (*obs == Observable::Chi) {
                        return 0.0;
                    }
                    // chi = sum_l (-1)^{l+1} U^{2l} / (2l)!,  phi = sum_l (-1)^l U^{2l+1} / (2l+1)!
                    let l = order.div_ceil(2) as i32;
                    let sign = if odd { (-1f64).powi(l + 1) } else { (-1f64).powi(l) };
                    let coeff = sign * m / (factorial(order + 1) * period.powi(order as i32));
                    coeff * u.multiplicity as f64 * filter_product(&filter, &u.point, period).re
                })
                .collect()
        })
        .collect();
    let matrix = DMatrix::from_fn(rows.len(), columns.len(), |i, j| values[i][j]);
    Ok(DesignMatrix {
        rows: rows
            .iter()
            .map(|(s, o)| RowLabel {
                sequence: s.label().to_string(),
                observable: *o,
            })
            .collect(),
        columns,
        matrix,
        repetitions: seqs.repetitions(),
        period,
        branch: Branch::Classical,
    })
}

/// Gaussian system (chi rows only): PSD samples on an order-1 domain.
pub fn assemble_gaussian(seqs: &SequenceSet, domain: &PrincipalDomainSet) -> Result<DesignMatrix> {
    check_set(seqs)?;
    if domain.order != 1 || domain.is_empty() {
        return Err(Error::InvalidParameter(
            "Gaussian system needs a non-empty order-1 domain".into(),
        ));
    }
    let m = seqs.repetitions() as f64;
    let period = seqs.timing().cycle();
    let columns: Vec<Unknown> = domain
        .points
        .iter()
        .zip(&domain.multiplicity)
        .map(|(p, &mult)| Unknown {
            kind: UnknownKind::Polyspectrum(1),
            point: p.clone(),
            multiplicity: mult,
        })
        .collect();
    let values: Vec<Vec<f64>> = seqs
        .sequences()
        .par_iter()
        .map(|s| {
            let filter = FilterEval::new(s);
            columns
                .iter()
                .map(|u| {
                    let w = u.point.frequencies(period)[0];
                    m / (2.0 * period) * u.multiplicity as f64 * filter.power(w)
                })
                .collect()
        })
        .collect();
    let matrix = DMatrix::from_fn(values.len(), columns.len(), |i, j| values[i][j]);
    Ok(DesignMatrix {
        rows: seqs
            .sequences()
            .iter()
            .map(|s| RowLabel {
                sequence: s.label().to_string(),
                observable: Observable::Chi,
            })
            .collect(),
        columns,
        matrix,
        repetitions: seqs.repetitions(),
        period,
        branch: Branch::Classical,
    })
}

/// Spin-boson system (chi rows only): `S_eff` at harmonics `0..=radius` plus
/// the fourth-order unknowns of the chosen branch. The entangled branch needs
/// a dihedral order-2 domain; the separable branch uses order-1 points.
pub fn assemble_spinboson(
    seqs: &SequenceSet,
    radius: i64,
    fourth: &PrincipalDomainSet,
    branch: Branch,
) -> Result<DesignMatrix> {
    check_set(seqs)?;
    let m = seqs.repetitions() as f64;
    let period = seqs.timing().cycle();
    let mut columns: Vec<Unknown> = (0..=radius)
        .map(|k| Unknown {
            kind: UnknownKind::EffectiveSpectrum,
            point: HarmonicPoint::new(vec![k]),
            multiplicity: if k == 0 { 1 } else { 2 },
        })
        .collect();
    let kind = match branch {
        Branch::SpinBosonEntangled => {
            if fourth.order != 2 || fourth.group != SymmetryGroup::Dihedral {
                return Err(Error::InvalidParameter(
                    "entangled branch needs a dihedral order-2 domain".into(),
                ));
            }
            UnknownKind::EffectiveTrispectrum
        }
        Branch::SpinBosonSeparable => {
            if fourth.order != 1 {
                return Err(Error::InvalidParameter(
                    "separable branch needs an order-1 domain".into(),
                ));
            }
            UnknownKind::SeparableTrispectrum
        }
        Branch::Classical => {
            return Err(Error::InvalidParameter(
                "use assemble_classical for classical noise".into(),
            ))
        }
    };
    if fourth.is_empty() {
        return Err(Error::Empty("fourth-order principal domain".into()));
    }
    for (p, &mult) in fourth.points.iter().zip(&fourth.multiplicity) {
        columns.push(Unknown {
            kind,
            point: p.clone(),
            multiplicity: mult,
        });
    }
    let pi = std::f64::consts::PI;
    let values: Vec<Vec<f64>> = seqs
        .sequences()
        .par_iter()
        .map(|s| {
            let filter = FilterEval::new(s);
            let power = |n: i64| filter.power(2.0 * pi * n as f64 / period);
            columns
                .iter()
                .map(|u| {
                    let mult = u.multiplicity as f64;
                    let idx = &u.point.indices;
                    match u.kind {
                        UnknownKind::EffectiveSpectrum => m / (2.0 * period) * mult * power(idx[0]),
                        UnknownKind::EffectiveTrispectrum => {
                            -0.5 * (pi * m / period).powi(2) * mult * power(idx[0]) * power(idx[1])
                        }
                        UnknownKind::SeparableTrispectrum => {
                            -pi * m.powi(3) / (6.0 * period) * mult * power(idx[0]).powi(2)
                        }
                        UnknownKind::Polyspectrum(_) => unreachable!(),
                    }
                })
                .collect()
        })
        .collect();
    let matrix = DMatrix::from_fn(values.len(), columns.len(), |i, j| values[i][j]);
    Ok(DesignMatrix {
        rows: seqs
            .sequences()
            .iter()
            .map(|s| RowLabel {
                sequence: s.label().to_string(),
                observable: Observable::Chi,
            })
            .collect(),
        columns,
        matrix,
        repetitions: seqs.repetitions(),
        period,
        branch,
    })
}
