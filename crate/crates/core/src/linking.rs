//! Finite-time linking: the averaged winding of the difference vector of two
//! orbits under the same isotopy, against a constant reference direction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    frame_coordinates, lift_angle_path_on_grid, AngleLiftTrace, RefinementPolicy, Vec2,
};
use crate::systems::IsotopySystem;
use crate::torsion::{integer_aligned_grid, AveragedSeries};

/// Orbits closer than this are treated as collapsed: the difference angle is
/// numerically meaningless below it.
pub const SEPARATION_FLOOR: f64 = 1e-12;

/// Linking of an ordered pair at one horizon, with the lift it came from.
#[derive(Debug, Clone, Serialize)]
pub struct LinkingResult {
    /// Total winding divided by the horizon.
    pub value: f64,
    pub horizon: u32,
    /// Lift variation over [0, horizon].
    pub total_winding: f64,
    /// Smallest separation of the two orbits seen at any sampled time.
    pub min_separation: f64,
    pub reference_field: Vec2,
    pub trace: AngleLiftTrace,
}

struct DifferenceTrace {
    trace: AngleLiftTrace,
    min_separation: f64,
}

fn difference_angle_trace(
    sys: &IsotopySystem,
    z1: Vec2,
    z2: Vec2,
    n: u32,
    x_ref: Vec2,
    policy: &RefinementPolicy,
) -> Result<DifferenceTrace> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            message: "linking horizon must be at least 1".into(),
        });
    }
    if z1.x == z2.x && z1.y == z2.y {
        return Err(Error::DiagonalInput);
    }
    let x_unit = x_ref.normalized().map_err(|_| Error::InvalidParameter {
        message: "reference field must be a nonzero vector".into(),
    })?;
    let orbit1 = sys.orbit(z1, n)?;
    let orbit2 = sys.orbit(z2, n)?;

    let mut min_separation = f64::INFINITY;
    let trace = {
        let sampler = |t: f64| -> Result<Vec2> {
            let (p1, _) = sys.eval_on_orbit(&orbit1, t)?;
            let (p2, _) = sys.eval_on_orbit(&orbit2, t)?;
            let diff = p2 - p1;
            let separation = diff.norm();
            if separation < SEPARATION_FLOOR {
                return Err(Error::SeparationCollapse {
                    time: t,
                    separation,
                });
            }
            min_separation = min_separation.min(separation);
            frame_coordinates(x_unit, diff)
        };
        let first = frame_coordinates(x_unit, z2 - z1)?;
        let initial_angle = f64::atan2(first.y, first.x);
        let grid = integer_aligned_grid(n, policy.steps_per_unit);
        lift_angle_path_on_grid(sampler, &grid, initial_angle, policy)?
    };
    Ok(DifferenceTrace {
        trace,
        min_separation,
    })
}

/// Linking of the ordered pair (z1, z2) at horizon n against `x_ref`.
pub fn linking_finite(
    sys: &IsotopySystem,
    z1: Vec2,
    z2: Vec2,
    n: u32,
    x_ref: Vec2,
    policy: &RefinementPolicy,
) -> Result<LinkingResult> {
    let d = difference_angle_trace(sys, z1, z2, n, x_ref, policy)?;
    let total_winding = d.trace.winding();
    Ok(LinkingResult {
        value: total_winding / n as f64,
        horizon: n,
        total_winding,
        min_separation: d.min_separation,
        reference_field: x_ref,
        trace: d.trace,
    })
}

/// Linking at every horizon up to n_max, from a single cumulative lift.
pub fn linking_asymptotic(
    sys: &IsotopySystem,
    z1: Vec2,
    z2: Vec2,
    n_max: u32,
    x_ref: Vec2,
    policy: &RefinementPolicy,
) -> Result<AveragedSeries> {
    let d = difference_angle_trace(sys, z1, z2, n_max, x_ref, policy)?;
    AveragedSeries::from_trace(&d.trace, n_max)
}

/// One vertical pair with its single-step linking value.
#[derive(Debug, Clone, Serialize)]
pub struct VerticalPairSample {
    pub lower: Vec2,
    pub upper: Vec2,
    pub value: f64,
}

/// Single-step linking over pairs sharing a first coordinate, checked
/// against the open interval (-pi, 0).
#[derive(Debug, Clone, Serialize)]
pub struct VerticalPairReport {
    pub samples: Vec<VerticalPairSample>,
    pub min_value: f64,
    pub max_value: f64,
    /// True when every value lies strictly inside (-pi, 0).
    pub pass: bool,
}

/// Evaluate Linking_1 on pairs of points lying on common verticals.
pub fn vertical_pair_bound_check(
    sys: &IsotopySystem,
    pairs: &[(Vec2, Vec2)],
    policy: &RefinementPolicy,
) -> Result<VerticalPairReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter {
            message: "need at least one pair".into(),
        });
    }
    let mut samples = Vec::with_capacity(pairs.len());
    let mut min_value = f64::INFINITY;
    let mut max_value = f64::NEG_INFINITY;
    for &(a, b) in pairs {
        if a.x != b.x {
            return Err(Error::InvalidParameter {
                message: "vertical pairs must share their first coordinate".into(),
            });
        }
        let r = linking_finite(sys, a, b, 1, Vec2::new(1.0, 0.0), policy)?;
        min_value = min_value.min(r.value);
        max_value = max_value.max(r.value);
        samples.push(VerticalPairSample {
            lower: a,
            upper: b,
            value: r.value,
        });
    }
    let pass = min_value > -std::f64::consts::PI && max_value < 0.0;
    Ok(VerticalPairReport {
        samples,
        min_value,
        max_value,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat2;
    use crate::systems::{register_builtins, Surface, SystemSpec};
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol:e})");
    }

    fn standard_map(lambda: f64) -> IsotopySystem {
        register_builtins()
            .build(&SystemSpec::new("standard_map").with_param("lambda", lambda))
            .unwrap()
    }

    #[test]
    fn translated_orbits_never_link() {
        let sys = register_builtins()
            .build(&SystemSpec::new("translation"))
            .unwrap();
        let policy = RefinementPolicy::default();
        let r = linking_finite(
            &sys,
            Vec2::new(0.2, 1.0),
            Vec2::new(-1.0, 3.5),
            8,
            Vec2::new(1.0, 0.0),
            &policy,
        )
        .unwrap();
        assert_close(r.value, 0.0, 0.0);
        assert_close(r.min_separation, (Vec2::new(-1.2, 2.5)).norm(), 1e-12);
    }

    #[test]
    fn rotation_links_at_the_angular_speed() {
        let omega = 0.9;
        let sys = register_builtins()
            .build(&SystemSpec::new("rotation").with_param("omega", omega))
            .unwrap();
        let r = linking_finite(
            &sys,
            Vec2::new(1.0, 0.0),
            Vec2::new(-0.5, 0.7),
            5,
            Vec2::new(1.0, 0.0),
            &RefinementPolicy::default(),
        )
        .unwrap();
        assert_close(r.value, omega, 1e-10);
    }

    #[test]
    fn linking_is_symmetric_in_the_pair() {
        let sys = standard_map(1.5);
        let policy = RefinementPolicy::default();
        let z1 = Vec2::new(0.4, 0.8);
        let z2 = Vec2::new(2.0, -0.3);
        let a = linking_finite(&sys, z1, z2, 3, Vec2::new(1.0, 0.0), &policy).unwrap();
        let b = linking_finite(&sys, z2, z1, 3, Vec2::new(1.0, 0.0), &policy).unwrap();
        assert_close(a.value, b.value, 1e-12);
    }

    #[test]
    fn vertical_pair_single_step_is_quarter_turn_down() {
        // The difference of two orbits on a common vertical follows
        // (y2 - y1) (t, 1) during the first unit of time, whatever lambda.
        let policy = RefinementPolicy::default();
        for &lambda in &[0.3, 5.0, 9999.0] {
            let sys = standard_map(lambda);
            let r = linking_finite(
                &sys,
                Vec2::new(0.7, -1.0),
                Vec2::new(0.7, 2.0),
                1,
                Vec2::new(1.0, 0.0),
                &policy,
            )
            .unwrap();
            assert_close(r.value, -PI / 4.0, 1e-12);
        }
    }

    #[test]
    fn vertical_pair_report_stays_in_the_twist_band() {
        let sys = standard_map(2.0);
        let pairs = [
            (Vec2::new(0.7, 0.0), Vec2::new(0.7, 1.0)),
            (Vec2::new(3.0, -2.0), Vec2::new(3.0, 0.5)),
            (Vec2::new(-1.2, 0.1), Vec2::new(-1.2, 0.2)),
        ];
        let report =
            vertical_pair_bound_check(&sys, &pairs, &RefinementPolicy::default()).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.min_value > -PI && report.max_value < 0.0);

        let bad = [(Vec2::new(0.0, 0.0), Vec2::new(0.1, 1.0))];
        assert!(matches!(
            vertical_pair_bound_check(&sys, &bad, &RefinementPolicy::default()),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn stable_pair_linking_tracks_the_fixed_point_torsion() {
        // Seed the second point along the stable eigendirection at the
        // hyperbolic fixed point; for a short horizon the difference vector
        // behaves like a tangent vector and the linking sits near -pi.
        let sys = standard_map(5.0);
        let mu = (-3.0 + 5f64.sqrt()) / 2.0;
        let dir = Vec2::new(1.0, 4.0 + mu).normalized().unwrap();
        let z1 = Vec2::new(0.0, 0.0);
        let z2 = z1 + dir * 1e-4;
        let r = linking_finite(&sys, z1, z2, 10, Vec2::new(1.0, 0.0), &RefinementPolicy::default())
            .unwrap();
        assert!((r.value + PI).abs() < 0.01, "value {}", r.value);
        assert!(r.min_separation > SEPARATION_FLOOR);
    }

    #[test]
    fn diagonal_input_is_rejected() {
        let sys = standard_map(1.0);
        let z = Vec2::new(0.5, 0.5);
        assert!(matches!(
            linking_finite(&sys, z, z, 1, Vec2::new(1.0, 0.0), &RefinementPolicy::default()),
            Err(Error::DiagonalInput)
        ));
    }

    #[test]
    fn collapsing_orbits_are_reported() {
        let sys = IsotopySystem::from_fn(
            "squeeze",
            Surface::Plane,
            BTreeMap::new(),
            "",
            |z, t| {
                let s = (-60.0 * t).exp();
                Ok((z * s, Mat2::new(s, 0.0, 0.0, s)))
            },
        );
        let err = linking_finite(
            &sys,
            Vec2::new(0.0, 0.0),
            Vec2::new(1e-6, 0.0),
            1,
            Vec2::new(1.0, 0.0),
            &RefinementPolicy::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SeparationCollapse { .. }));
    }

    #[test]
    fn asymptotic_series_is_flat_for_rotation() {
        let omega = -1.3;
        let sys = register_builtins()
            .build(&SystemSpec::new("rotation").with_param("omega", omega))
            .unwrap();
        let series = linking_asymptotic(
            &sys,
            Vec2::new(0.3, 0.0),
            Vec2::new(0.0, 0.9),
            40,
            Vec2::new(1.0, 0.0),
            &RefinementPolicy::default(),
        )
        .unwrap();
        assert_eq!(series.values.len(), 40);
        for &(_, v) in &series.values {
            assert_close(v, omega, 1e-9);
        }
        assert!(series.cauchy_diagnostic < 1e-9);
    }
}
