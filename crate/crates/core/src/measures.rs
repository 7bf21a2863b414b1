//! Empirical measures on the unit tangent bundle: orbit averages of the
//! single-step torsion, and the null-torsion search on exactly periodic
//! torus lifts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{RefinementPolicy, Vec2};
use crate::linking::linking_finite;
use crate::systems::{check_lift_periodicity, sample_grid, IsotopySystem, Surface};
use crate::theorems::{locate_torsion_point, SegmentScan};
use crate::torsion::torsion_finite;

const X_REF: Vec2 = Vec2 { x: 1.0, y: 0.0 };

/// One weighted point of an empirical measure on the unit tangent bundle.
#[derive(Debug, Clone, Serialize)]
pub struct MeasureAtom {
    pub point: Vec2,
    /// Unit tangent direction carried along the orbit.
    pub direction: Vec2,
    pub weight: f64,
}

/// The orbit average measure of a seeded tangent line at a finite horizon.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<MeasureAtom>,
    pub horizon: u32,
    pub seed_point: Vec2,
    pub seed_direction: Vec2,
}

/// Equidistribute 1/n mass on the first n points of the projectivized
/// tangent orbit of (z, xi).
pub fn empirical_measure(
    sys: &IsotopySystem,
    z: Vec2,
    xi: Vec2,
    n: u32,
) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            message: "measure horizon must be at least 1".into(),
        });
    }
    let seed_direction = xi.normalized().map_err(|_| Error::ZeroVector)?;
    let orbit = sys.orbit(z, n)?;
    let weight = 1.0 / n as f64;
    let mut atoms = Vec::with_capacity(n as usize);
    for k in 0..n as usize {
        let v = orbit.differential(k) * seed_direction;
        let direction = v.normalized().map_err(|_| Error::DegenerateDifferential {
            time: k as f64,
        })?;
        atoms.push(MeasureAtom {
            point: orbit.point(k),
            direction,
            weight,
        });
    }
    Ok(EmpiricalMeasure {
        atoms,
        horizon: n,
        seed_point: z,
        seed_direction,
    })
}

/// Single-step torsion of every atom, in atom order.
pub fn atom_torsions(
    sys: &IsotopySystem,
    measure: &EmpiricalMeasure,
    policy: &RefinementPolicy,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    measure
        .atoms
        .par_iter()
        .map(|atom| Ok(torsion_finite(sys, atom.point, atom.direction, 1, X_REF, policy)?.value))
        .collect()
}

/// Integrate the single-step torsion against a measure on the tangent bundle.
pub fn measure_torsion(
    sys: &IsotopySystem,
    measure: &EmpiricalMeasure,
    policy: &RefinementPolicy,
) -> Result<f64> {
    let values = atom_torsions(sys, measure, policy)?;
    Ok(measure
        .atoms
        .iter()
        .zip(&values)
        .map(|(atom, v)| atom.weight * v)
        .sum())
}

/// Outcome of the null-torsion search on a torus lift.
#[derive(Debug, Clone, Serialize)]
pub struct NullTorsionSearch {
    /// Max deviation of the lift from exact double periodicity.
    pub periodicity_deviation: f64,
    /// Linking of a point with its horizontal period translate.
    pub translate_linking: f64,
    pub scan: SegmentScan,
}

/// On an exactly periodic torus lift the linking of a deck-translate pair is
/// null, so some point of the segment joining them carries zero torsion.
pub fn torus_null_torsion_search(
    sys: &IsotopySystem,
    n: u32,
    scan_count: u32,
    tol: f64,
    policy: &RefinementPolicy,
) -> Result<NullTorsionSearch> {
    if sys.surface() != Surface::TorusLift {
        return Err(Error::InvalidParameter {
            message: format!(
                "null torsion search needs a torus lift, got {:?}",
                sys.surface()
            ),
        });
    }
    let samples = sample_grid(5, 5, (0.0, std::f64::consts::TAU), (0.0, std::f64::consts::TAU));
    let mut periodicity_deviation = 0.0f64;
    for &t in &[0.5, 1.0] {
        periodicity_deviation = periodicity_deviation.max(check_lift_periodicity(sys, t, &samples)?);
    }
    if periodicity_deviation > 1e-8 {
        return Err(Error::PeriodicityViolation {
            deviation: periodicity_deviation,
        });
    }

    let x = Vec2::new(0.0, 0.0);
    let y = Vec2::new(std::f64::consts::TAU, 0.0);
    let translate_linking = linking_finite(sys, x, y, n, X_REF, policy)?.value;
    let scan = locate_torsion_point(sys, x, y, n, scan_count, tol, policy)?;
    Ok(NullTorsionSearch {
        periodicity_deviation,
        translate_linking,
        scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat2;
    use crate::systems::{register_builtins, SystemSpec};
    use std::collections::BTreeMap;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol:e})");
    }

    fn standard_map(lambda: f64) -> IsotopySystem {
        register_builtins()
            .build(&SystemSpec::new("standard_map").with_param("lambda", lambda))
            .unwrap()
    }

    fn policy() -> RefinementPolicy {
        RefinementPolicy::default()
    }

    #[test]
    fn measure_average_telescopes_to_the_horizon_torsion() {
        let sys = standard_map(5.0);
        let z = Vec2::new(0.3, 0.15);
        let xi = Vec2::new(0.0, 1.0);
        let n = 12;
        let measure = empirical_measure(&sys, z, xi, n).unwrap();
        assert_eq!(measure.atoms.len(), n as usize);
        let total_weight: f64 = measure.atoms.iter().map(|a| a.weight).sum();
        assert_close(total_weight, 1.0, 1e-12);

        let averaged = measure_torsion(&sys, &measure, &policy()).unwrap();
        let direct = torsion_finite(&sys, z, xi, n, X_REF, &policy()).unwrap().value;
        assert_close(averaged, direct, 1e-9);
    }

    #[test]
    fn atoms_ride_the_orbit_with_unit_directions() {
        let sys = standard_map(2.0);
        let z = Vec2::new(1.0, -0.5);
        let measure = empirical_measure(&sys, z, Vec2::new(3.0, 1.0), 6).unwrap();
        let orbit = sys.orbit(z, 6).unwrap();
        for (k, atom) in measure.atoms.iter().enumerate() {
            let p = orbit.point(k);
            assert_close(atom.point.x, p.x, 0.0);
            assert_close(atom.point.y, p.y, 0.0);
            assert_close(atom.direction.norm(), 1.0, 1e-12);
        }
    }

    #[test]
    fn pushing_the_seed_forward_shifts_one_boundary_atom() {
        let sys = standard_map(4.0);
        let z = Vec2::new(0.8, 0.3);
        let xi = Vec2::new(0.0, 1.0);
        let n = 9;
        let orbit = sys.orbit(z, n + 1).unwrap();
        let (z1, df1) = sys.evaluate(z, 1.0).unwrap();
        let original = empirical_measure(&sys, z, xi, n).unwrap();
        let pushed = empirical_measure(&sys, z1, df1 * xi, n).unwrap();

        let a = measure_torsion(&sys, &original, &policy()).unwrap();
        let b = measure_torsion(&sys, &pushed, &policy()).unwrap();

        let first = torsion_finite(&sys, z, xi, 1, X_REF, &policy()).unwrap().value;
        let last_point = orbit.point(n as usize);
        let last_dir = orbit.differential(n as usize) * xi;
        let last = torsion_finite(&sys, last_point, last_dir, 1, X_REF, &policy())
            .unwrap()
            .value;
        assert_close(b - a, (last - first) / n as f64, 1e-9);
    }

    #[test]
    fn skew_torus_lift_carries_a_null_torsion_point() {
        let sys = register_builtins()
            .build(&SystemSpec::new("torus_skew"))
            .unwrap();
        let search = torus_null_torsion_search(&sys, 3, 64, 1e-8, &policy()).unwrap();
        assert!(search.periodicity_deviation <= 1e-12);
        assert_close(search.translate_linking, 0.0, 1e-10);
        let s = search.scan.located_s.expect("null torsion point");
        assert!((0.0..=1.0).contains(&s));
        assert!(search.scan.residual <= 1e-8);
    }

    #[test]
    fn translationlike_torus_lift_is_null_everywhere() {
        let sys = register_builtins()
            .build(&SystemSpec::new("torus_translationlike"))
            .unwrap();
        let search = torus_null_torsion_search(&sys, 2, 16, 1e-8, &policy()).unwrap();
        assert_eq!(search.scan.located_s, Some(0.0));
        assert_close(search.scan.residual, 0.0, 1e-12);
    }

    #[test]
    fn null_search_guards_its_hypotheses() {
        assert!(matches!(
            torus_null_torsion_search(&standard_map(1.0), 2, 16, 1e-8, &policy()),
            Err(Error::InvalidParameter { .. })
        ));

        // Tagged as a torus lift but drifting off periodicity.
        let fake = IsotopySystem::from_fn(
            "drift",
            Surface::TorusLift,
            BTreeMap::new(),
            "",
            |z, t| {
                let s = 1.0 + 0.01 * t;
                Ok((Vec2::new(z.x * s, z.y), Mat2::new(s, 0.0, 0.0, 1.0)))
            },
        );
        assert!(matches!(
            torus_null_torsion_search(&fake, 2, 16, 1e-8, &policy()),
            Err(Error::PeriodicityViolation { .. })
        ));
    }
}
