//! Least-squares inversion of the comb systems.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{Branch, DesignMatrix, Unknown, UnknownKind};
use super::symmetry::HarmonicPoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Singular values below this fraction of the largest (after column
    /// scaling) count as zero.
    pub rank_tol: f64,
    /// Truncated-SVD cutoff; when set, small singular values are dropped
    /// instead of reported as rank deficiency.
    pub truncation: Option<f64>,
    /// Per-row weights for weighted least squares.
    pub weights: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rank_tol: 1e-10,
            truncation: None,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub unknown: Unknown,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub branch: Branch,
    pub period: f64,
    pub repetitions: u32,
    pub estimates: Vec<Estimate>,
    /// `|A x - b|_2`.
    pub residual: f64,
    /// 2-norm condition number of the column-scaled matrix.
    pub condition: f64,
    pub rank: usize,
}

impl ReconstructionResult {
    /// Estimates of one kind, as `(point, value)`.
    pub fn samples(&self, kind: UnknownKind) -> Vec<(HarmonicPoint, f64)> {
        self.estimates
            .iter()
            .filter(|e| e.unknown.kind == kind)
            .map(|e| (e.unknown.point.clone(), e.value))
            .collect()
    }

    pub fn value(&self, kind: UnknownKind, indices: &[i64]) -> Option<f64> {
        self.estimates
            .iter()
            .find(|e| e.unknown.kind == kind && e.unknown.point.indices == indices)
            .map(|e| e.value)
    }

    /// `kind,order,indices,frequencies,estimate,multiplicity`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "order", "indices", "frequencies", "estimate", "multiplicity"])?;
        for e in &self.estimates {
            let freqs = e
                .unknown
                .point
                .frequencies(self.period)
                .iter()
                .map(|f| format!("{f:e}"))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                e.unknown.kind.name(),
                e.unknown.point.order().to_string(),
                e.unknown.point.key(),
                freqs,
                format!("{:e}", e.value),
                e.unknown.multiplicity.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the table written by [`write_csv`](Self::write_csv); the
    /// diagnostics are not stored there and come back as NaN.
    pub fn read_csv<R: Read>(input: R, branch: Branch, period: f64, repetitions: u32) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut estimates = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| {
                rec.get(i)
                    .ok_or_else(|| Error::Parse("short reconstruction row".into()))
            };
            let kind = UnknownKind::parse(field(0)?)?;
            let indices = field(2)?
                .split(';')
                .map(|s| {
                    s.trim()
                        .parse::<i64>()
                        .map_err(|e| Error::Parse(format!("bad index {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let value: f64 = field(4)?
                .parse()
                .map_err(|e| Error::Parse(format!("bad estimate: {e}")))?;
            let multiplicity: usize = field(5)?
                .parse()
                .map_err(|e| Error::Parse(format!("bad multiplicity: {e}")))?;
            estimates.push(Estimate {
                unknown: Unknown {
                    kind,
                    point: HarmonicPoint::new(indices),
                    multiplicity,
                },
                value,
            });
        }
        if estimates.is_empty() {
            return Err(Error::Empty("reconstruction table".into()));
        }
        Ok(ReconstructionResult {
            branch,
            period,
            repetitions,
            estimates,
            residual: f64::NAN,
            condition: f64::NAN,
            rank: 0,
        })
    }
}

/// Column-scaled SVD least squares `min |W (A x - b)|`.
pub fn solve(design: &DesignMatrix, measurements: &DVector<f64>, opts: &SolveOptions) -> Result<ReconstructionResult> {
    let (rows, cols) = design.matrix.shape();
    if measurements.len() != rows {
        return Err(Error::InvalidParameter(format!(
            "{} measurements for {rows} rows",
            measurements.len()
        )));
    }
    if rows < cols {
        return Err(Error::Underdetermined { rows, cols });
    }
    let mut a = design.matrix.clone();
    let mut b = measurements.clone();
    if let Some(w) = &opts.weights {
        if w.len() != rows {
            return Err(Error::InvalidParameter("row weights must match the row count".into()));
        }
        for (i, &wi) in w.iter().enumerate() {
            a.row_mut(i).scale_mut(wi);
            b[i] *= wi;
        }
    }
    let scale = equilibrate(&mut a);
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let cutoff = opts.truncation.unwrap_or(opts.rank_tol) * smax;
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if rank < cols && opts.truncation.is_none() {
        // a unit vector e_j lies in the row space iff its null-space
        // projection vanishes
        let null: Vec<usize> = (0..cols).filter(|&k| sv[k] <= cutoff).collect();
        let unidentifiable = (0..cols)
            .filter(|&j| null.iter().map(|&k| vt[(k, j)].powi(2)).sum::<f64>().sqrt() > 1e-6)
            .map(|j| design.columns[j].label())
            .collect();
        return Err(Error::RankDeficient {
            rank,
            cols,
            unidentifiable,
        });
    }
    let mut y = DVector::zeros(cols);
    for k in 0..cols {
        if sv[k] > cutoff {
            let c = u.column(k).dot(&b) / sv[k];
            y += vt.row(k).transpose() * c;
        }
    }
    let x = DVector::from_iterator(cols, y.iter().zip(&scale).map(|(v, s)| v * s));
    let residual = (&design.matrix * &x - measurements).norm();
    Ok(ReconstructionResult {
        branch: design.branch,
        period: design.period,
        repetitions: design.repetitions,
        estimates: design
            .columns
            .iter()
            .zip(x.iter())
            .map(|(u, &v)| Estimate {
                unknown: u.clone(),
                value: v,
            })
            .collect(),
        residual,
        condition,
        rank,
    })
}

/// Scales every nonzero column to unit norm; returns the applied factors.
fn equilibrate(a: &mut DMatrix<f64>) -> Vec<f64> {
    let scale: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        })
        .collect();
    for (j, &s) in scale.iter().enumerate() {
        a.column_mut(j).scale_mut(s);
    }
    scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankAnalysis {
    pub rank: usize,
    pub condition: f64,
    /// Columns with a component in the numerical null space.
    pub null_columns: Vec<usize>,
}

/// Numerical rank of the column-equilibrated matrix, with the same tolerance
/// semantics as [`solve`].
pub fn rank_analysis(matrix: &DMatrix<f64>, rank_tol: f64) -> RankAnalysis {
    let (rows, cols) = matrix.shape();
    let mut a = matrix.clone();
    equilibrate(&mut a);
    // pad so that V spans the full column space when rows < cols
    if rows < cols {
        a = a.resize_vertically(cols, 0.0);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let cutoff = rank_tol * smax;
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    let smin = sv.min();
    let condition = if smin > 0.0 && smax > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    let null: Vec<usize> = (0..cols).filter(|&k| sv[k] <= cutoff).collect();
    let null_columns = (0..cols)
        .filter(|&j| null.iter().map(|&k| vt[(k, j)].powi(2)).sum::<f64>().sqrt() > 1e-6)
        .collect();
    RankAnalysis {
        rank,
        condition,
        null_columns,
    }
}

/// Forward map `A x` for given spectral values (synthetic measurements).
pub fn forward(design: &DesignMatrix, values: &[f64]) -> Result<DVector<f64>> {
    if values.len() != design.ncols() {
        return Err(Error::InvalidParameter(
            "value count must match the column count".into(),
        ));
    }
    Ok(&design.matrix * DVector::from_column_slice(values))
}

/// Column values of a design built from a model function.
pub fn sample_columns(design: &DesignMatrix, f: impl Fn(&Unknown) -> f64) -> Vec<f64> {
    design.columns.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comb_inversion::design::{assemble_classical, assemble_spinboson};
    use crate::comb_inversion::symmetry::{enumerate_principal, SymmetryGroup, Truncation};
    use crate::sequences::{build_sequence, SequenceSet, TimingConfig};

    fn cdd_set() -> SequenceSet {
        let t = TimingConfig::new(1e-5, 1e-5, 16).unwrap();
        let mut seqs = Vec::new();
        let parts: [&[u64]; 4] = [&[16], &[8, 8], &[4, 4, 8], &[8, 4, 4]];
        let mut k = 0;
        for p in parts {
            let n = p.len();
            for code in 0..4u32.pow(n as u32) {
                let orders: Vec<u32> = (0..n).map(|j| (code / 4u32.pow(j as u32)) % 4).collect();
                if let Ok(s) = build_sequence(p, &orders, t, format!("s{k}")) {
                    seqs.push(s);
                    k += 1;
                }
            }
        }
        SequenceSet::new(seqs, 20).unwrap()
    }

    #[test]
    fn noiseless_synthetic_data_is_recovered() {
        let set = cdd_set();
        let d1 = enumerate_principal(1, 6, SymmetryGroup::Polyspectrum, Truncation::Box).unwrap();
        let d2 = enumerate_principal(2, 1, SymmetryGroup::Polyspectrum, Truncation::Hexagonal).unwrap();
        let design = assemble_classical(&set, 1, &[d1, d2]).unwrap();
        let truth: Vec<f64> = (0..design.ncols()).map(|j| 1.0 + 0.3 * j as f64).collect();
        let b = forward(&design, &truth).unwrap();
        let r = solve(&design, &b, &SolveOptions::default()).unwrap();
        for (e, t) in r.estimates.iter().zip(&truth) {
            assert!((e.value / t - 1.0).abs() < 1e-10, "{} vs {t}", e.value);
        }
        assert!(r.residual <= 1e-10 * b.norm());
        assert!(r.condition.is_finite() && r.condition >= 1.0);
    }

    #[test]
    fn cpmg_only_set_is_rank_deficient_at_zero() {
        let t = TimingConfig::new(1e-5, 1e-5, 16).unwrap();
        let seqs: Vec<_> = (1..=4)
            .map(|k| build_sequence(&[16], &[k], t, format!("c{k}")).unwrap())
            .collect();
        let set = SequenceSet::new(seqs, 20).unwrap();
        let dom = enumerate_principal(1, 0, SymmetryGroup::Polyspectrum, Truncation::Box).unwrap();
        let design = assemble_spinboson(&set, 0, &dom, crate::comb_inversion::Branch::SpinBosonSeparable).unwrap();
        let b = DVector::zeros(design.nrows());
        match solve(&design, &b, &SolveOptions::default()) {
            Err(Error::RankDeficient { unidentifiable, .. }) => {
                assert!(unidentifiable.contains(&"S_eff(0)".to_string()), "{unidentifiable:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_svd_returns_minimum_norm_solution() {
        let set = cdd_set();
        let d1 = enumerate_principal(1, 30, SymmetryGroup::Polyspectrum, Truncation::Box).unwrap();
        let d2 = enumerate_principal(2, 0, SymmetryGroup::Polyspectrum, Truncation::Box).unwrap();
        let design = assemble_classical(&set, 1, &[d1, d2]).unwrap();
        let b = DVector::from_element(design.nrows(), 1.0);
        assert!(matches!(
            solve(&design, &b, &SolveOptions::default()),
            Err(Error::RankDeficient { .. })
        ));
        let opts = SolveOptions {
            truncation: Some(1e-8),
            ..Default::default()
        };
        let r = solve(&design, &b, &opts).unwrap();
        assert!(r.rank < design.ncols());
        assert!(r.estimates.iter().all(|e| e.value.is_finite()));
    }

    #[test]
    fn csv_round_trip() {
        let set = cdd_set();
        let d1 = enumerate_principal(1, 4, SymmetryGroup::Polyspectrum, Truncation::Box).unwrap();
        let d2 = enumerate_principal(2, 1, SymmetryGroup::Polyspectrum, Truncation::Hexagonal).unwrap();
        let design = assemble_classical(&set, 1, &[d1, d2]).unwrap();
        let truth: Vec<f64> = (0..design.ncols()).map(|j| 2.0 - 0.1 * j as f64).collect();
        let r = solve(&design, &forward(&design, &truth).unwrap(), &SolveOptions::default()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = ReconstructionResult::read_csv(&buf[..], r.branch, r.period, r.repetitions).unwrap();
        assert_eq!(back.estimates.len(), r.estimates.len());
        for (a, b) in back.estimates.iter().zip(&r.estimates) {
            assert_eq!(a.unknown, b.unknown);
            assert!((a.value - b.value).abs() <= 1e-14 * b.value.abs().max(1e-300) * 10.0);
        }
    }
}
