//! Finite-time torsion: the averaged winding of a tangent vector pushed
//! through an isotopy, measured against a constant reference direction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    frame_coordinates, lift_angle_path_on_grid, AngleLiftTrace, RefinementPolicy, Vec2,
};
use crate::systems::IsotopySystem;

/// Torsion at one horizon, with the lift it came from.
#[derive(Debug, Clone, Serialize)]
pub struct TorsionResult {
    /// Total winding divided by the horizon.
    pub value: f64,
    pub horizon: u32,
    /// Lift variation over [0, horizon].
    pub total_winding: f64,
    pub reference_field: Vec2,
    pub trace: AngleLiftTrace,
}

/// A sequence n -> averaged winding at horizon n, from one cumulative lift.
#[derive(Debug, Clone, Serialize)]
pub struct AveragedSeries {
    /// (n, value) for n = 1 ..= n_max.
    pub values: Vec<(u32, f64)>,
    /// Value at the largest horizon.
    pub final_value: f64,
    /// Max deviation from the final value over the last quartile of horizons.
    pub cauchy_diagnostic: f64,
}

impl AveragedSeries {
    pub(crate) fn from_trace(trace: &AngleLiftTrace, n_max: u32) -> Result<AveragedSeries> {
        let initial = trace.initial();
        let mut values = Vec::with_capacity(n_max as usize);
        for n in 1..=n_max {
            let lifted = trace.at_time(n as f64).ok_or(Error::InvalidParameter {
                message: format!("lift trace lost the integer node {n}"),
            })?;
            values.push((n, (lifted - initial) / n as f64));
        }
        let final_value = values.last().expect("n_max >= 1").1;
        let quartile_start = (3 * n_max).div_ceil(4).max(1);
        let cauchy_diagnostic = values
            .iter()
            .filter(|(n, _)| *n >= quartile_start)
            .map(|(_, v)| (v - final_value).abs())
            .fold(0.0, f64::max);
        Ok(AveragedSeries {
            values,
            final_value,
            cauchy_diagnostic,
        })
    }
}

/// Seed grid over [0, n] whose integer nodes are exact floats.
pub(crate) fn integer_aligned_grid(n: u32, steps_per_unit: u32) -> Vec<f64> {
    let spu = steps_per_unit.max(1);
    let mut grid = Vec::with_capacity((n * spu) as usize + 1);
    for k in 0..n {
        for j in 0..spu {
            grid.push(k as f64 + j as f64 / spu as f64);
        }
    }
    grid.push(n as f64);
    grid
}

fn validated_direction(v: Vec2, what: &str) -> Result<Vec2> {
    let unit = v.normalized().map_err(|_| Error::InvalidParameter {
        message: format!("{what} must be a nonzero vector"),
    })?;
    Ok(unit)
}

/// Continuous lift of the angle from `x_ref` to DF_t(z) xi over t in [0, n].
pub(crate) fn tangent_angle_trace(
    sys: &IsotopySystem,
    z: Vec2,
    xi: Vec2,
    n: u32,
    x_ref: Vec2,
    policy: &RefinementPolicy,
) -> Result<AngleLiftTrace> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            message: "torsion horizon must be at least 1".into(),
        });
    }
    let x_unit = validated_direction(x_ref, "reference field")?;
    if xi.norm() < crate::geometry::NORM_FLOOR {
        return Err(Error::ZeroVector);
    }
    let orbit = sys.orbit(z, n)?;
    let sampler = |t: f64| -> Result<Vec2> {
        let (_, j) = sys.eval_on_orbit(&orbit, t)?;
        let v = j * xi;
        if v.norm() < crate::geometry::NORM_FLOOR {
            return Err(Error::DegenerateDifferential { time: t });
        }
        frame_coordinates(x_unit, v)
    };
    let first = frame_coordinates(x_unit, xi)?;
    let initial_angle = f64::atan2(first.y, first.x);
    let grid = integer_aligned_grid(n, policy.steps_per_unit);
    lift_angle_path_on_grid(sampler, &grid, initial_angle, policy)
}

/// Torsion of (z, xi) at horizon n against the constant field `x_ref`.
pub fn torsion_finite(
    sys: &IsotopySystem,
    z: Vec2,
    xi: Vec2,
    n: u32,
    x_ref: Vec2,
    policy: &RefinementPolicy,
) -> Result<TorsionResult> {
    let trace = tangent_angle_trace(sys, z, xi, n, x_ref, policy)?;
    let total_winding = trace.winding();
    Ok(TorsionResult {
        value: total_winding / n as f64,
        horizon: n,
        total_winding,
        reference_field: x_ref,
        trace,
    })
}

/// Torsion at every horizon up to n_max, from a single cumulative lift.
pub fn torsion_asymptotic(
    sys: &IsotopySystem,
    z: Vec2,
    xi: Vec2,
    n_max: u32,
    x_ref: Vec2,
    policy: &RefinementPolicy,
) -> Result<AveragedSeries> {
    let trace = tangent_angle_trace(sys, z, xi, n_max, x_ref, policy)?;
    AveragedSeries::from_trace(&trace, n_max)
}

/// How far two tangent seeds can disagree at the same horizon.
pub fn vector_independence_gap(
    sys: &IsotopySystem,
    z: Vec2,
    xi: Vec2,
    delta: Vec2,
    n: u32,
    x_ref: Vec2,
    policy: &RefinementPolicy,
) -> Result<f64> {
    let a = torsion_finite(sys, z, xi, n, x_ref, policy)?;
    let b = torsion_finite(sys, z, delta, n, x_ref, policy)?;
    Ok((a.value - b.value).abs())
}

/// The two-parameter winding family W(s, t): the lifted angle at time t of
/// the pushed-forward frame direction at angle s, normalized by W(0, 0) = 0
/// with the anchor column s = 0 lifted continuously in t.
#[derive(Debug, Clone, Serialize)]
pub struct WGrid {
    pub base_point: Vec2,
    pub reference_field: Vec2,
    pub s_values: Vec<f64>,
    pub t_values: Vec<f64>,
    /// values[i][j] = W(s_values[i], t_values[j]).
    pub values: Vec<Vec<f64>>,
}

/// Deviations of a [`WGrid`] from its three structural properties.
#[derive(Debug, Clone, Serialize)]
pub struct WGridReport {
    /// Max |W(s, 0) - s| when t = 0 is a grid column.
    pub identity_deviation: Option<f64>,
    /// Smallest increment of s -> W(s, t) across the grid; positive means
    /// strictly increasing.
    pub min_s_increment: f64,
    /// Max |W(s + pi, t) - W(s, t) - pi| over paired s nodes.
    pub half_turn_deviation: f64,
}

impl WGridReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.identity_deviation.is_none_or(|d| d <= tol)
            && self.min_s_increment > 0.0
            && self.half_turn_deviation <= tol
    }
}

impl WGrid {
    pub fn validate(&self) -> WGridReport {
        let identity_deviation = self
            .t_values
            .iter()
            .position(|&t| t == 0.0)
            .map(|j| {
                self.s_values
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| (self.values[i][j] - s).abs())
                    .fold(0.0, f64::max)
            });
        let mut min_s_increment = f64::INFINITY;
        for j in 0..self.t_values.len() {
            for i in 1..self.s_values.len() {
                min_s_increment = min_s_increment.min(self.values[i][j] - self.values[i - 1][j]);
            }
        }
        let half = self.s_values.len() / 2;
        let mut half_turn_deviation = 0.0f64;
        for j in 0..self.t_values.len() {
            for i in 0..self.s_values.len() - half {
                let d = self.values[i + half][j] - self.values[i][j] - std::f64::consts::PI;
                half_turn_deviation = half_turn_deviation.max(d.abs());
            }
        }
        WGridReport {
            identity_deviation,
            min_s_increment,
            half_turn_deviation,
        }
    }
}

/// Build the W(s, t) family for `s_count` + 1 directions spanning [0, 2pi]
/// (s_count even, at least 8) at the given times.
pub fn w_grid(
    sys: &IsotopySystem,
    z: Vec2,
    t_values: &[f64],
    s_count: u32,
    x_ref: Vec2,
    policy: &RefinementPolicy,
) -> Result<WGrid> {
    if s_count < 8 || s_count % 2 != 0 {
        return Err(Error::InvalidParameter {
            message: "s_count must be even and at least 8".into(),
        });
    }
    if t_values.is_empty() {
        return Err(Error::InvalidParameter {
            message: "need at least one time value".into(),
        });
    }
    if t_values.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidParameter {
            message: "time values must be finite and nonnegative".into(),
        });
    }
    if t_values.windows(2).any(|w| w[1] - w[0] < 1e-6) {
        return Err(Error::InvalidParameter {
            message: "time values must increase by at least 1e-6".into(),
        });
    }

    let x_unit = validated_direction(x_ref, "reference field")?;
    let jx = x_unit.perp();
    let t_max = *t_values.last().expect("nonempty");
    let horizon = t_max.ceil().max(1.0) as u32;
    let orbit = sys.orbit(z, horizon)?;

    // Anchor: W(0, t), the lift in t of the angle of DF_t applied to x_ref.
    let anchor = if t_max > 0.0 {
        let sampler = |t: f64| -> Result<Vec2> {
            let (_, j) = sys.eval_on_orbit(&orbit, t)?;
            let v = j * x_unit;
            if v.norm() < crate::geometry::NORM_FLOOR {
                return Err(Error::DegenerateDifferential { time: t });
            }
            frame_coordinates(x_unit, v)
        };
        let grid = anchor_grid(t_max, t_values, policy.steps_per_unit);
        Some(lift_angle_path_on_grid(sampler, &grid, 0.0, policy)?)
    } else {
        None
    };

    let s_values: Vec<f64> = (0..=s_count)
        .map(|i| std::f64::consts::TAU * i as f64 / s_count as f64)
        .collect();

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let anchor_value = match &anchor {
            Some(trace) => trace.at_time(t).ok_or(Error::InvalidParameter {
                message: format!("anchor lift lost the requested time {t}"),
            })?,
            None => 0.0,
        };
        let (_, j) = sys.eval_on_orbit(&orbit, t)?;
        let sampler = |s: f64| -> Result<Vec2> {
            let direction = x_unit * s.cos() + jx * s.sin();
            let v = j * direction;
            if v.norm() < crate::geometry::NORM_FLOOR {
                return Err(Error::DegenerateDifferential { time: t });
            }
            frame_coordinates(x_unit, v)
        };
        let trace = lift_angle_path_on_grid(sampler, &s_values, anchor_value, policy)?;
        let column: Vec<f64> = s_values
            .iter()
            .map(|&s| {
                trace.at_time(s).ok_or(Error::InvalidParameter {
                    message: format!("column lift lost the s node {s}"),
                })
            })
            .collect::<Result<_>>()?;
        columns.push(column);
    }

    // Transpose to values[s_index][t_index].
    let values = (0..s_values.len())
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect();

    Ok(WGrid {
        base_point: z,
        reference_field: x_ref,
        s_values,
        t_values: t_values.to_vec(),
        values,
    })
}

/// Uniform grid over [0, t_max] with the requested times spliced in exactly.
fn anchor_grid(t_max: f64, t_values: &[f64], steps_per_unit: u32) -> Vec<f64> {
    let uniform = crate::geometry::uniform_grid(0.0, t_max, steps_per_unit);
    let mut grid: Vec<f64> = t_values.to_vec();
    if t_values[0] > 0.0 {
        grid.insert(0, 0.0);
    }
    for u in uniform {
        if grid.iter().all(|r| (u - r).abs() > 1e-9) {
            grid.push(u);
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    grid
}

/// Winding of integer-time snapshots, valid when every per-unit winding of
/// the underlying family stays strictly inside (-pi, pi).
pub fn snapshot_winding(vectors: &[Vec2]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(Error::InvalidParameter {
            message: "need at least two snapshots".into(),
        });
    }
    let mut prev = vectors[0];
    let mut total = 0.0;
    for &v in &vectors[1..] {
        total += crate::geometry::oriented_angle(prev, v)?;
        prev = v;
    }
    Ok(total)
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

    fn build(name: &str) -> IsotopySystem {
        register_builtins().build(&SystemSpec::new(name)).unwrap()
    }

    fn standard_map(lambda: f64) -> IsotopySystem {
        register_builtins()
            .build(&SystemSpec::new("standard_map").with_param("lambda", lambda))
            .unwrap()
    }

    #[test]
    fn shear_torsion_matches_closed_form() {
        // The vertical tangent under the shear follows (t, 1), so the torsion
        // at horizon n is -atan(n)/n.
        let sys = build("shear");
        let policy = RefinementPolicy::default();
        for &n in &[1u32, 2, 7, 30] {
            let r = torsion_finite(
                &sys,
                Vec2::new(0.3, -2.0),
                Vec2::new(0.0, 1.0),
                n,
                Vec2::new(0.0, 1.0),
                &policy,
            )
            .unwrap();
            assert_close(r.value, -(n as f64).atan() / n as f64, 1e-11);
            assert_close(r.total_winding, r.value * n as f64, 1e-12);
        }
    }

    #[test]
    fn rotation_torsion_is_the_angular_speed() {
        let omega = 2.5;
        let sys = register_builtins()
            .build(&SystemSpec::new("rotation").with_param("omega", omega))
            .unwrap();
        let policy = RefinementPolicy::default();
        let r = torsion_finite(
            &sys,
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            6,
            Vec2::new(1.0, 0.0),
            &policy,
        )
        .unwrap();
        assert_close(r.value, omega, 1e-10);
    }

    #[test]
    fn identity_torsion_vanishes() {
        let r = torsion_finite(
            &build("identity"),
            Vec2::new(0.4, 0.9),
            Vec2::new(3.0, -1.0),
            5,
            Vec2::new(1.0, 0.0),
            &RefinementPolicy::default(),
        )
        .unwrap();
        assert_close(r.value, 0.0, 0.0);
    }

    #[test]
    fn standard_map_first_step_torsion_is_quarter_turn_down() {
        // For this family DF_t(z)(0,1) = (t, 1) regardless of z and lambda.
        let policy = RefinementPolicy::default();
        for &lambda in &[0.5, 5.0, 9999.0] {
            let sys = standard_map(lambda);
            let r = torsion_finite(
                &sys,
                Vec2::new(1.9, 0.7),
                Vec2::new(0.0, 1.0),
                1,
                Vec2::new(0.0, 1.0),
                &policy,
            )
            .unwrap();
            assert_close(r.value, -PI / 4.0, 1e-12);
        }
    }

    #[test]
    fn fixed_point_torsion_matches_matrix_power_oracle() {
        // At the origin the orbit is constant and the tangent dynamics is the
        // single matrix [[-4,1],[-5,1]]. Its per-unit winding stays inside
        // (-pi, 0), so integer snapshots never alias and give an independent
        // value to compare against.
        let sys = standard_map(5.0);
        let policy = RefinementPolicy::default();
        let xi = Vec2::new(0.0, 1.0);
        let a = Mat2::new(-4.0, 1.0, -5.0, 1.0);
        let n = 12u32;

        let mut snapshots = vec![xi];
        let mut w = xi;
        for _ in 0..n {
            w = a * w;
            // Keep snapshot magnitudes tame; direction is all that matters.
            w = w * (1.0 / w.norm());
            snapshots.push(w);
        }
        let oracle = snapshot_winding(&snapshots).unwrap() / n as f64;

        let r = torsion_finite(&sys, Vec2::new(0.0, 0.0), xi, n, Vec2::new(0.0, 1.0), &policy)
            .unwrap();
        assert_close(r.value, oracle, 1e-9);
        assert!(r.value > -PI && r.value < 0.0);
    }

    #[test]
    fn torsion_is_invariant_under_the_constant_reference_field() {
        let sys = standard_map(3.0);
        let policy = RefinementPolicy::default();
        let z = Vec2::new(0.8, -0.6);
        let xi = Vec2::new(1.0, 2.0);
        let base = torsion_finite(&sys, z, xi, 5, Vec2::new(1.0, 0.0), &policy)
            .unwrap()
            .value;
        for x_ref in [Vec2::new(0.0, 1.0), Vec2::new(0.6, 0.8), Vec2::new(-1.0, 0.3)] {
            let v = torsion_finite(&sys, z, xi, 5, x_ref, &policy).unwrap().value;
            assert_close(v, base, 1e-10);
        }
    }

    #[test]
    fn torsion_is_scale_invariant_in_the_seed_vector() {
        let sys = standard_map(4.0);
        let policy = RefinementPolicy::default();
        let z = Vec2::new(2.0, 0.3);
        let a = torsion_finite(&sys, z, Vec2::new(1.0, -1.0), 6, Vec2::new(1.0, 0.0), &policy)
            .unwrap()
            .value;
        let b = torsion_finite(&sys, z, Vec2::new(2.0, -2.0), 6, Vec2::new(1.0, 0.0), &policy)
            .unwrap()
            .value;
        assert_close(a, b, 1e-12);
    }

    #[test]
    fn seed_vector_gap_stays_below_pi_over_n() {
        let sys = standard_map(5.0);
        let policy = RefinementPolicy::default();
        let z = Vec2::new(1.3, 0.2);
        for &n in &[1u32, 4, 9] {
            let gap = vector_independence_gap(
                &sys,
                z,
                Vec2::new(1.0, 0.0),
                Vec2::new(0.0, 1.0),
                n,
                Vec2::new(1.0, 0.0),
                &policy,
            )
            .unwrap();
            assert!(gap < PI / n as f64, "n={n}: gap {gap}");
        }
    }

    #[test]
    fn asymptotic_series_matches_closed_form_for_shear() {
        let sys = build("shear");
        let series = torsion_asymptotic(
            &sys,
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            100,
            Vec2::new(0.0, 1.0),
            &RefinementPolicy::default(),
        )
        .unwrap();
        assert_eq!(series.values.len(), 100);
        for &(n, v) in &series.values {
            assert_close(v, -(n as f64).atan() / n as f64, 1e-9);
        }
        assert_close(series.final_value, -(100f64).atan() / 100.0, 1e-9);
        // |T_n - T_100| is largest at the quartile start n = 75.
        let expected = (100f64.atan() / 100.0 - 75f64.atan() / 75.0).abs();
        assert_close(series.cauchy_diagnostic, expected, 1e-9);
    }

    #[test]
    fn torsion_rejects_zero_inputs() {
        let sys = build("shear");
        let policy = RefinementPolicy::default();
        assert!(matches!(
            torsion_finite(&sys, Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0), 1, Vec2::new(1.0, 0.0), &policy),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            torsion_finite(&sys, Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 0, Vec2::new(1.0, 0.0), &policy),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn degenerate_differential_is_reported() {
        let sys = IsotopySystem::from_fn(
            "collapse",
            Surface::Plane,
            BTreeMap::new(),
            "",
            |z, t| {
                let s = 1.0 - t;
                Ok((Vec2::new(z.x * s, z.y), Mat2::new(s, 0.0, 0.0, 1.0)))
            },
        );
        let err = torsion_finite(
            &sys,
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 0.0),
            1,
            Vec2::new(1.0, 0.0),
            &RefinementPolicy::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateDifferential { .. }));
    }

    #[test]
    fn w_grid_structure_on_a_twist_family() {
        let sys = standard_map(5.0);
        let grid = w_grid(
            &sys,
            Vec2::new(1.0, 0.5),
            &[0.0, 0.25, 0.5, 1.0],
            64,
            Vec2::new(0.0, 1.0),
            &RefinementPolicy::default(),
        )
        .unwrap();
        let report = grid.validate();
        assert!(report.ok(1e-9), "{report:?}");
        assert_eq!(grid.values.len(), 65);
        assert_eq!(grid.values[0].len(), 4);
        // Normalization: W(0, 0) = 0.
        assert_close(grid.values[0][0], 0.0, 0.0);
    }

    #[test]
    fn w_grid_identity_column_is_exact_at_time_zero() {
        let sys = build("shear");
        let grid = w_grid(
            &sys,
            Vec2::new(0.0, 0.0),
            &[0.0],
            16,
            Vec2::new(1.0, 0.0),
            &RefinementPolicy::default(),
        )
        .unwrap();
        for (i, &s) in grid.s_values.iter().enumerate() {
            assert_close(grid.values[i][0], s, 1e-12);
        }
    }

    #[test]
    fn w_grid_validates_its_inputs() {
        let sys = build("shear");
        let policy = RefinementPolicy::default();
        let z = Vec2::new(0.0, 0.0);
        let x = Vec2::new(1.0, 0.0);
        assert!(w_grid(&sys, z, &[0.0, 1.0], 7, x, &policy).is_err());
        assert!(w_grid(&sys, z, &[0.0, 1.0], 6, x, &policy).is_err());
        assert!(w_grid(&sys, z, &[], 16, x, &policy).is_err());
        assert!(w_grid(&sys, z, &[1.0, 0.5], 16, x, &policy).is_err());
        assert!(w_grid(&sys, z, &[-1.0, 0.5], 16, x, &policy).is_err());
    }
}
