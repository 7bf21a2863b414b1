//! Structural identities connecting torsion and linking: locating a segment
//! point whose torsion matches the endpoint linking, invariance under the
//! choice of isotopy, the snapshot angle decomposition for twist maps, and
//! the (-pi, 0) twist band.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{oriented_angle, RefinementPolicy, Vec2};
use crate::linking::linking_finite;
use crate::systems::{check_twist, sample_grid, IsotopySystem, Surface, TwistReport};
use crate::torsion::torsion_finite;

const BISECTION_LIMIT: u32 = 200;

/// Reference direction used internally; torsion and linking values do not
/// depend on it.
const X_REF: Vec2 = Vec2 { x: 1.0, y: 0.0 };

/// Torsion sampled at one segment parameter.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentSample {
    pub s: f64,
    pub point: Vec2,
    pub torsion: f64,
    /// torsion - target linking.
    pub gap: f64,
}

/// Scan of s -> Torsion_n(x + s(y - x), y - x) against Linking_n(x, y).
#[derive(Debug, Clone, Serialize)]
pub struct SegmentScan {
    pub x: Vec2,
    pub y: Vec2,
    pub horizon: u32,
    pub target_linking: f64,
    pub samples: Vec<SegmentSample>,
    /// Parameter where the torsion meets the linking, when one was found.
    pub located_s: Option<f64>,
    pub located_point: Option<Vec2>,
    /// |gap| at the located parameter, or the smallest |gap| seen.
    pub residual: f64,
}

/// Find s in [0, 1] with Torsion_n(x + s(y-x), y-x) = Linking_n(x, y),
/// scanning `scan_count` + 1 nodes and bisecting the first sign change.
pub fn locate_torsion_point(
    sys: &IsotopySystem,
    x: Vec2,
    y: Vec2,
    n: u32,
    scan_count: u32,
    tol: f64,
    policy: &RefinementPolicy,
) -> Result<SegmentScan> {
    if scan_count < 2 {
        return Err(Error::InvalidParameter {
            message: "segment scan needs at least 2 intervals".into(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            message: "tolerance must be positive".into(),
        });
    }
    let xi = y - x;
    let target = linking_finite(sys, x, y, n, X_REF, policy)?.value;
    let gap_at = |s: f64| -> Result<(Vec2, f64)> {
        let z = x + xi * s;
        let t = torsion_finite(sys, z, xi, n, X_REF, policy)?.value;
        Ok((z, t - target))
    };

    let mut samples = Vec::with_capacity(scan_count as usize + 1);
    for i in 0..=scan_count {
        let s = i as f64 / scan_count as f64;
        let (point, gap) = gap_at(s)?;
        samples.push(SegmentSample {
            s,
            point,
            torsion: gap + target,
            gap,
        });
    }

    let mut located = samples
        .iter()
        .find(|smp| smp.gap.abs() <= tol)
        .map(|smp| (smp.s, smp.point, smp.gap.abs()));

    if located.is_none() {
        if let Some(w) = samples
            .windows(2)
            .find(|w| w[0].gap.signum() * w[1].gap.signum() < 0.0)
        {
            let (mut lo, mut glo) = (w[0].s, w[0].gap);
            let mut hi = w[1].s;
            let mut best = (w[0].s, w[0].point, w[0].gap.abs());
            let mut converged = false;
            for _ in 0..BISECTION_LIMIT {
                let mid = 0.5 * (lo + hi);
                let (point, gmid) = gap_at(mid)?;
                if gmid.abs() < best.2 {
                    best = (mid, point, gmid.abs());
                }
                if gmid.abs() <= tol {
                    converged = true;
                    break;
                }
                if glo.signum() * gmid.signum() < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    glo = gmid;
                }
            }
            if !converged {
                return Err(Error::BisectionStall { residual: best.2 });
            }
            located = Some(best);
        }
    }

    let residual = match &located {
        Some((_, _, r)) => *r,
        None => samples
            .iter()
            .map(|smp| smp.gap.abs())
            .fold(f64::INFINITY, f64::min),
    };
    Ok(SegmentScan {
        x,
        y,
        horizon: n,
        target_linking: target,
        located_s: located.map(|(s, _, _)| s),
        located_point: located.map(|(_, p, _)| p),
        samples,
        residual,
    })
}

/// One point compared under two isotopies with the same time-1 map.
#[derive(Debug, Clone, Serialize)]
pub struct IndependenceSample {
    pub point: Vec2,
    pub value_a: f64,
    pub value_b: f64,
}

/// Agreement of torsion across two isotopies of a common annulus map.
#[derive(Debug, Clone, Serialize)]
pub struct IndependenceReport {
    /// Max distance between the two time-1 images over the sample points.
    pub time1_deviation: f64,
    /// Max |torsion gap| over the sample points.
    pub max_gap: f64,
    pub samples: Vec<IndependenceSample>,
}

/// Compare Torsion_n between two annulus isotopies sharing a time-1 map.
pub fn isotopy_independence_check(
    sys_a: &IsotopySystem,
    sys_b: &IsotopySystem,
    points: &[Vec2],
    xi: Vec2,
    n: u32,
    policy: &RefinementPolicy,
) -> Result<IndependenceReport> {
    if sys_a.surface() == Surface::Plane || sys_b.surface() == Surface::Plane {
        return Err(Error::InvalidParameter {
            message: "isotopy independence needs periodic lifts; plane isotopies \
                      can disagree by full turns"
                .into(),
        });
    }
    if points.is_empty() {
        return Err(Error::InvalidParameter {
            message: "need at least one sample point".into(),
        });
    }
    let mut time1_deviation = 0.0f64;
    for &z in points {
        let (a, _) = sys_a.evaluate(z, 1.0)?;
        let (b, _) = sys_b.evaluate(z, 1.0)?;
        time1_deviation = time1_deviation.max((a - b).norm());
    }
    if time1_deviation > 1e-8 {
        return Err(Error::VariantMismatch {
            deviation: time1_deviation,
        });
    }
    let mut samples = Vec::with_capacity(points.len());
    let mut max_gap = 0.0f64;
    for &z in points {
        let value_a = torsion_finite(sys_a, z, xi, n, X_REF, policy)?.value;
        let value_b = torsion_finite(sys_b, z, xi, n, X_REF, policy)?.value;
        max_gap = max_gap.max((value_a - value_b).abs());
        samples.push(IndependenceSample {
            point: z,
            value_a,
            value_b,
        });
    }
    Ok(IndependenceReport {
        time1_deviation,
        max_gap,
        samples,
    })
}

/// Map x to its representative in the half-open interval (upper - 2pi, upper].
pub fn reduce_into_halfopen(x: f64, upper: f64) -> f64 {
    x - std::f64::consts::TAU * ((x - upper) / std::f64::consts::TAU).ceil()
}

/// Angle bookkeeping for one application of the time-1 map.
#[derive(Debug, Clone, Serialize)]
pub struct SnapshotStep {
    pub point: Vec2,
    /// Angle of the current vector from the vertical, in (-2pi, 0].
    pub theta0: f64,
    /// Angle of the image of the vertical, in (-2pi, 0].
    pub beta: f64,
    /// Angle of the image vector from the vertical, in (beta - 2pi, beta].
    pub theta1: f64,
    pub summand: f64,
}

/// The snapshot angle sum for a positive twist map: per-step turns measured
/// against the vertical with the image of the vertical fixing the branch.
#[derive(Debug, Clone, Serialize)]
pub struct SnapshotSum {
    pub steps: Vec<SnapshotStep>,
    pub theta_n: f64,
    pub horizon: u32,
}

/// Accumulate the snapshot angles along the orbit of (p, eta) under the
/// time-1 map. Fails on any point where the twist coefficient is not
/// strictly positive.
pub fn snapshot_angle_sum(
    sys: &IsotopySystem,
    p: Vec2,
    eta: Vec2,
    n: u32,
) -> Result<SnapshotSum> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            message: "horizon must be at least 1".into(),
        });
    }
    let vertical = Vec2::new(0.0, 1.0);
    let mut point = p;
    let mut e = eta.normalized().map_err(|_| Error::ZeroVector)?;
    let mut steps = Vec::with_capacity(n as usize);
    let mut theta_n = 0.0;
    for k in 0..n {
        let (next, df) = sys.evaluate(point, 1.0)?;
        if df.m12 <= 0.0 {
            return Err(Error::NotATwistFamily {
                min_coefficient: df.m12,
            });
        }
        let image_vertical = df * vertical;
        let beta = reduce_into_halfopen(oriented_angle(vertical, image_vertical)?, 0.0);
        let theta0 = reduce_into_halfopen(oriented_angle(vertical, e)?, 0.0);
        let image = df * e;
        let theta1 = reduce_into_halfopen(oriented_angle(vertical, image)?, beta);
        let summand = theta1 - theta0;
        theta_n += summand;
        steps.push(SnapshotStep {
            point,
            theta0,
            beta,
            theta1,
            summand,
        });
        point = next;
        e = image.normalized().map_err(|_| Error::DegenerateDifferential {
            time: (k + 1) as f64,
        })?;
    }
    Ok(SnapshotSum {
        steps,
        theta_n,
        horizon: n,
    })
}

/// Both sides of the identity n * Torsion_n = theta_n for twist families.
#[derive(Debug, Clone, Serialize)]
pub struct SnapshotEquivalence {
    pub theta_n: f64,
    pub scaled_torsion: f64,
    pub gap: f64,
    pub twist: TwistReport,
}

/// Grid used to certify the twist hypothesis before snapshot or band checks.
pub fn default_twist_grid() -> Vec<Vec2> {
    sample_grid(25, 13, (0.0, std::f64::consts::TAU), (-4.0, 4.0))
}

fn require_twist(sys: &IsotopySystem) -> Result<TwistReport> {
    let grid = default_twist_grid();
    let half = check_twist(sys, 0.5, &grid)?;
    let full = check_twist(sys, 1.0, &grid)?;
    let report = if half.min_coefficient < full.min_coefficient {
        half
    } else {
        full
    };
    if !report.is_positive() {
        return Err(Error::NotATwistFamily {
            min_coefficient: report.min_coefficient,
        });
    }
    Ok(report)
}

/// Check n * Torsion_n(p, eta) against the snapshot angle sum.
pub fn snapshot_equivalence_gap(
    sys: &IsotopySystem,
    p: Vec2,
    eta: Vec2,
    n: u32,
    policy: &RefinementPolicy,
) -> Result<SnapshotEquivalence> {
    let twist = require_twist(sys)?;
    let sum = snapshot_angle_sum(sys, p, eta, n)?;
    let torsion = torsion_finite(sys, p, eta, n, X_REF, policy)?;
    let scaled_torsion = torsion.value * n as f64;
    Ok(SnapshotEquivalence {
        theta_n: sum.theta_n,
        scaled_torsion,
        gap: (sum.theta_n - scaled_torsion).abs(),
        twist,
    })
}

/// Extremes of the vertical-seed torsion at one horizon.
#[derive(Debug, Clone, Serialize)]
pub struct TwistBand {
    pub n: u32,
    pub min: f64,
    pub max: f64,
}

/// One vertical-seed torsion value checked against the open band (-pi, 0).
#[derive(Debug, Clone, Serialize)]
pub struct TwistEvaluation {
    pub n: u32,
    pub point: Vec2,
    pub value: f64,
    pub pass: bool,
}

/// Vertical-seed torsion over points and horizons, checked against (-pi, 0).
#[derive(Debug, Clone, Serialize)]
pub struct TwistSweepReport {
    pub twist: TwistReport,
    pub bands: Vec<TwistBand>,
    pub evaluations: Vec<TwistEvaluation>,
    pub pass: bool,
}

impl TwistSweepReport {
    pub fn violations(&self) -> impl Iterator<Item = &TwistEvaluation> {
        self.evaluations.iter().filter(|e| !e.pass)
    }
}

/// For a positive twist family, Torsion_n(z, (0,1)) stays in (-pi, 0).
pub fn twist_bound_sweep(
    sys: &IsotopySystem,
    points: &[Vec2],
    horizons: &[u32],
    policy: &RefinementPolicy,
) -> Result<TwistSweepReport> {
    use rayon::prelude::*;

    if points.is_empty() || horizons.is_empty() {
        return Err(Error::InvalidParameter {
            message: "twist sweep needs points and horizons".into(),
        });
    }
    let twist = require_twist(sys)?;
    let vertical = Vec2::new(0.0, 1.0);
    let tasks: Vec<(u32, Vec2)> = horizons
        .iter()
        .flat_map(|&n| points.iter().map(move |&z| (n, z)))
        .collect();
    let evaluations: Vec<TwistEvaluation> = tasks
        .par_iter()
        .map(|&(n, z)| {
            let value = torsion_finite(sys, z, vertical, n, X_REF, policy)?.value;
            let pass = value > -std::f64::consts::PI && value < 0.0;
            Ok(TwistEvaluation {
                n,
                point: z,
                value,
                pass,
            })
        })
        .collect::<Result<_>>()?;
    let bands = horizons
        .iter()
        .map(|&n| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for e in evaluations.iter().filter(|e| e.n == n) {
                min = min.min(e.value);
                max = max.max(e.value);
            }
            TwistBand { n, min, max }
        })
        .collect();
    let pass = evaluations.iter().all(|e| e.pass);
    Ok(TwistSweepReport {
        twist,
        bands,
        evaluations,
        pass,
    })
}
