//! Isotopies of plane diffeomorphisms: builtin families, evaluation beyond
//! time 1 by composition with the time-1 map, orbit caches, and structural
//! checks (twist coefficient, lift periodicity).

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Vec2};

/// Orbit coordinates beyond this magnitude are numerically untrustworthy.
pub const OVERFLOW_LIMIT: f64 = 1e150;

/// Largest accepted evaluation time.
const MAX_TIME: f64 = 1e7;

/// What kind of surface the plane model stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    /// The plane itself.
    Plane,
    /// Universal cover of the annulus: maps commute with z -> z + (2pi, 0).
    AnnulusLift,
    /// Universal cover of the torus: maps commute with both 2pi translations.
    TorusLift,
}

impl Surface {
    /// Deck translations the lift must commute with.
    pub fn periods(self) -> &'static [Vec2] {
        const AX: [Vec2; 1] = [Vec2::new(std::f64::consts::TAU, 0.0)];
        const TXY: [Vec2; 2] = [
            Vec2::new(std::f64::consts::TAU, 0.0),
            Vec2::new(0.0, std::f64::consts::TAU),
        ];
        match self {
            Surface::Plane => &[],
            Surface::AnnulusLift => &AX,
            Surface::TorusLift => &TXY,
        }
    }
}

/// Serializable recipe for building a system from the registry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Isotopy variant for systems that have more than one; empty = default.
    #[serde(default)]
    pub variant: String,
}

impl SystemSpec {
    pub fn new(name: &str) -> Self {
        SystemSpec {
            name: name.to_string(),
            params: BTreeMap::new(),
            variant: String::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_variant(mut self, variant: &str) -> Self {
        self.variant = variant.to_string();
        self
    }
}

type BaseFn = dyn Fn(Vec2, f64) -> Result<(Vec2, Mat2)> + Send + Sync;

/// An isotopy (F_t) from the identity, evaluated with its differential.
///
/// The stored closure covers t in [0, 1]; [`IsotopySystem::evaluate`] extends
/// it to all t >= 0 by composing the fractional-time map with iterates of the
/// time-1 map (chain rule for the differential).
#[derive(Clone)]
pub struct IsotopySystem {
    name: String,
    variant: String,
    surface: Surface,
    params: BTreeMap<String, f64>,
    base: Arc<BaseFn>,
}

impl std::fmt::Debug for IsotopySystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IsotopySystem")
            .field("name", &self.name)
            .field("variant", &self.variant)
            .field("surface", &self.surface)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

/// Forward orbit of a point with cumulative differentials of the time-1 map.
#[derive(Debug, Clone)]
pub struct Orbit {
    points: Vec<Vec2>,
    cumulative: Vec<Mat2>,
}

impl Orbit {
    /// F^k of the seed, for k up to the orbit horizon.
    pub fn point(&self, k: usize) -> Vec2 {
        self.points[k]
    }

    /// D(F^k) at the seed.
    pub fn differential(&self, k: usize) -> Mat2 {
        self.cumulative[k]
    }

    pub fn horizon(&self) -> usize {
        self.points.len() - 1
    }
}

impl IsotopySystem {
    /// Wrap a custom isotopy. The closure must satisfy f(z, 0) = (z, identity).
    pub fn from_fn<F>(
        name: &str,
        surface: Surface,
        params: BTreeMap<String, f64>,
        variant: &str,
        base: F,
    ) -> Self
    where
        F: Fn(Vec2, f64) -> Result<(Vec2, Mat2)> + Send + Sync + 'static,
    {
        IsotopySystem {
            name: name.to_string(),
            variant: variant.to_string(),
            surface,
            params,
            base: Arc::new(base),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variant(&self) -> &str {
        &self.variant
    }

    pub fn surface(&self) -> Surface {
        self.surface
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    fn guard_point(z: Vec2, time: f64) -> Result<()> {
        if !z.is_finite() || z.x.abs() > OVERFLOW_LIMIT || z.y.abs() > OVERFLOW_LIMIT {
            return Err(Error::NumericOverflow { time });
        }
        Ok(())
    }

    /// Evaluate the raw isotopy at t in [0, 1].
    pub fn base_eval(&self, z: Vec2, t: f64) -> Result<(Vec2, Mat2)> {
        (self.base)(z, t)
    }

    /// F_t(z) and DF_t(z) for any t >= 0, composing past t = 1.
    pub fn evaluate(&self, z: Vec2, t: f64) -> Result<(Vec2, Mat2)> {
        if !(0.0..=MAX_TIME).contains(&t) {
            return Err(Error::InvalidParameter {
                message: format!("evaluation time must lie in [0, {MAX_TIME:e}], got {t}"),
            });
        }
        Self::guard_point(z, 0.0)?;
        if t <= 1.0 {
            return (self.base)(z, t);
        }
        let whole = t.floor();
        let frac = t - whole;
        let mut point = z;
        let mut diff = Mat2::identity();
        for k in 0..whole as u64 {
            let (next, step) = (self.base)(point, 1.0)?;
            point = next;
            diff = step * diff;
            Self::guard_point(point, (k + 1) as f64)?;
        }
        let (image, step) = (self.base)(point, frac)?;
        Self::guard_point(image, t)?;
        Ok((image, step * diff))
    }

    /// Forward orbit under the time-1 map with cumulative differentials.
    pub fn orbit(&self, z: Vec2, n: u32) -> Result<Orbit> {
        Self::guard_point(z, 0.0)?;
        let mut points = Vec::with_capacity(n as usize + 1);
        let mut cumulative = Vec::with_capacity(n as usize + 1);
        points.push(z);
        cumulative.push(Mat2::identity());
        let mut point = z;
        let mut diff = Mat2::identity();
        for k in 0..n {
            let (next, step) = (self.base)(point, 1.0)?;
            point = next;
            diff = step * diff;
            Self::guard_point(point, (k + 1) as f64)?;
            points.push(point);
            cumulative.push(diff);
        }
        Ok(Orbit { points, cumulative })
    }

    /// F_t(z) and DF_t(z) through a precomputed orbit of z, in O(1) per call.
    pub fn eval_on_orbit(&self, orbit: &Orbit, t: f64) -> Result<(Vec2, Mat2)> {
        let n = orbit.horizon() as f64;
        if !(0.0..=n).contains(&t) {
            return Err(Error::InvalidParameter {
                message: format!("time {t} outside cached orbit range [0, {n}]"),
            });
        }
        let k = (t.floor() as usize).min(orbit.horizon());
        let frac = t - k as f64;
        let (image, step) = (self.base)(orbit.point(k), frac)?;
        Self::guard_point(image, t)?;
        Ok((image, step * orbit.differential(k)))
    }

    /// The same family run at n-fold speed: G_t := F_{n t}.
    pub fn compress_time(&self, factor: u32) -> IsotopySystem {
        let inner = self.clone();
        let f = factor.max(1) as f64;
        IsotopySystem {
            name: format!("{}_x{}", self.name, factor),
            variant: self.variant.clone(),
            surface: self.surface,
            params: self.params.clone(),
            base: Arc::new(move |z, t| inner.evaluate(z, f * t)),
        }
    }
}

/// Smallest twist coefficient found on a sample grid.
#[derive(Debug, Clone, Serialize)]
pub struct TwistReport {
    /// min over the grid of the (1,2) entry of DF_t.
    pub min_coefficient: f64,
    /// Sample attaining the minimum.
    pub argmin: Vec2,
    pub samples: usize,
}

impl TwistReport {
    /// Positive twist on the sampled grid.
    pub fn is_positive(&self) -> bool {
        self.min_coefficient > 0.0
    }
}

/// Scan the twist coefficient d(p1 . F_t)/dy over a grid of base points.
pub fn check_twist(sys: &IsotopySystem, t: f64, grid: &[Vec2]) -> Result<TwistReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter {
            message: "twist check needs a nonempty grid".into(),
        });
    }
    let mut min_coefficient = f64::INFINITY;
    let mut argmin = grid[0];
    for &z in grid {
        let (_, j) = sys.evaluate(z, t)?;
        if j.m12 < min_coefficient {
            min_coefficient = j.m12;
            argmin = z;
        }
    }
    Ok(TwistReport {
        min_coefficient,
        argmin,
        samples: grid.len(),
    })
}

/// Max deviation of F_t from commuting with the surface's deck translations.
pub fn check_lift_periodicity(sys: &IsotopySystem, t: f64, samples: &[Vec2]) -> Result<f64> {
    let periods = sys.surface().periods();
    if periods.is_empty() {
        return Err(Error::InvalidParameter {
            message: format!("surface {:?} has no deck translations", sys.surface()),
        });
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter {
            message: "periodicity check needs sample points".into(),
        });
    }
    let mut worst = 0.0f64;
    for &z in samples {
        let (fz, _) = sys.evaluate(z, t)?;
        for &period in periods {
            let (fzp, _) = sys.evaluate(z + period, t)?;
            worst = worst.max((fzp - fz - period).norm());
        }
    }
    Ok(worst)
}

/// Rectangular grid of sample points, row-major.
pub fn sample_grid(nx: usize, ny: usize, x_range: (f64, f64), y_range: (f64, f64)) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let x = x_range.0 + (x_range.1 - x_range.0) * i as f64 / (nx.max(2) - 1) as f64;
        for j in 0..ny {
            let y = y_range.0 + (y_range.1 - y_range.0) * j as f64 / (ny.max(2) - 1) as f64;
            out.push(Vec2::new(x, y));
        }
    }
    out
}

type Builder = fn(&SystemSpec) -> Result<IsotopySystem>;

/// Name-indexed collection of builtin system builders.
pub struct Registry {
    builders: BTreeMap<&'static str, Builder>,
}

impl Registry {
    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(&self, spec: &SystemSpec) -> Result<IsotopySystem> {
        match self.builders.get(spec.name.as_str()) {
            Some(builder) => builder(spec),
            None => Err(Error::UnknownSystem {
                name: spec.name.clone(),
            }),
        }
    }
}

/// Registry with every builtin family registered.
pub fn register_builtins() -> Registry {
    let mut builders: BTreeMap<&'static str, Builder> = BTreeMap::new();
    builders.insert("identity", build_identity);
    builders.insert("rotation", build_rotation);
    builders.insert("translation", build_translation);
    builders.insert("shear", build_shear);
    builders.insert("standard_map", build_standard_map);
    builders.insert("torus_translationlike", build_torus_translationlike);
    builders.insert("torus_skew", build_torus_skew);
    Registry { builders }
}

/// Defaults overlaid with the spec's params; unknown keys are rejected.
fn resolve_params(
    spec: &SystemSpec,
    allowed: &[(&'static str, f64)],
) -> Result<BTreeMap<String, f64>> {
    for key in spec.params.keys() {
        if !allowed.iter().any(|(name, _)| name == key) {
            return Err(Error::InvalidParameter {
                message: format!("system '{}' has no parameter '{key}'", spec.name),
            });
        }
    }
    let mut out = BTreeMap::new();
    for (name, default) in allowed {
        let value = *spec.params.get(*name).unwrap_or(default);
        if !value.is_finite() {
            return Err(Error::InvalidParameter {
                message: format!("parameter '{name}' must be finite"),
            });
        }
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

fn reject_variant(spec: &SystemSpec) -> Result<()> {
    if spec.variant.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            message: format!("system '{}' has no isotopy variants", spec.name),
        })
    }
}

fn build_identity(spec: &SystemSpec) -> Result<IsotopySystem> {
    let params = resolve_params(spec, &[])?;
    reject_variant(spec)?;
    Ok(IsotopySystem::from_fn(
        "identity",
        Surface::Plane,
        params,
        "",
        |z, _t| Ok((z, Mat2::identity())),
    ))
}

fn build_rotation(spec: &SystemSpec) -> Result<IsotopySystem> {
    let params = resolve_params(spec, &[("omega", 1.0), ("cx", 0.0), ("cy", 0.0)])?;
    reject_variant(spec)?;
    let omega = params["omega"];
    let center = Vec2::new(params["cx"], params["cy"]);
    Ok(IsotopySystem::from_fn(
        "rotation",
        Surface::Plane,
        params,
        "",
        move |z, t| {
            let r = Mat2::rotation(omega * t);
            Ok((center + r * (z - center), r))
        },
    ))
}

fn build_translation(spec: &SystemSpec) -> Result<IsotopySystem> {
    let params = resolve_params(spec, &[("vx", 1.0), ("vy", 0.0)])?;
    reject_variant(spec)?;
    let v = Vec2::new(params["vx"], params["vy"]);
    Ok(IsotopySystem::from_fn(
        "translation",
        Surface::Plane,
        params,
        "",
        move |z, t| Ok((z + v * t, Mat2::identity())),
    ))
}

fn build_shear(spec: &SystemSpec) -> Result<IsotopySystem> {
    let params = resolve_params(spec, &[])?;
    reject_variant(spec)?;
    Ok(IsotopySystem::from_fn(
        "shear",
        Surface::AnnulusLift,
        params,
        "",
        |z, t| {
            Ok((
                Vec2::new(z.x + t * z.y, z.y),
                Mat2::new(1.0, t, 0.0, 1.0),
            ))
        },
    ))
}

fn build_standard_map(spec: &SystemSpec) -> Result<IsotopySystem> {
    let params = resolve_params(spec, &[("lambda", 1.0)])?;
    let lambda = params["lambda"];
    let variant = match spec.variant.as_str() {
        "" | "lecalvez" => "lecalvez",
        "sequential" => "sequential",
        other => {
            return Err(Error::InvalidParameter {
                message: format!("standard_map has variants lecalvez|sequential, got '{other}'"),
            })
        }
    };
    let base: Arc<BaseFn> = match variant {
        // One family of twist maps: F_t(x, y) = (x + t(y - t k(x)), y - t k(x)).
        "lecalvez" => Arc::new(move |z: Vec2, t: f64| {
            let (sin_x, cos_x) = z.x.sin_cos();
            let kick = lambda * sin_x;
            let dk = lambda * cos_x;
            let y1 = z.y - t * kick;
            Ok((
                Vec2::new(z.x + t * y1, y1),
                Mat2::new(1.0 - t * t * dk, t, -t * dk, 1.0),
            ))
        }),
        // Fiber kick on [0, 1/2], then the horizontal shear on [1/2, 1].
        _ => Arc::new(move |z: Vec2, t: f64| {
            let (sin_x, cos_x) = z.x.sin_cos();
            let dk = lambda * cos_x;
            if t <= 0.5 {
                let u = 2.0 * t;
                Ok((
                    Vec2::new(z.x, z.y - u * lambda * sin_x),
                    Mat2::new(1.0, 0.0, -u * dk, 1.0),
                ))
            } else {
                let s = 2.0 * t - 1.0;
                let y1 = z.y - lambda * sin_x;
                Ok((
                    Vec2::new(z.x + s * y1, y1),
                    Mat2::new(1.0 - s * dk, s, -dk, 1.0),
                ))
            }
        }),
    };
    Ok(IsotopySystem {
        name: "standard_map".into(),
        variant: variant.into(),
        surface: Surface::AnnulusLift,
        params,
        base,
    })
}

fn build_torus_translationlike(spec: &SystemSpec) -> Result<IsotopySystem> {
    let params = resolve_params(spec, &[("vx", 1.0), ("vy", 0.5)])?;
    reject_variant(spec)?;
    let v = Vec2::new(params["vx"], params["vy"]);
    Ok(IsotopySystem::from_fn(
        "torus_translationlike",
        Surface::TorusLift,
        params,
        "",
        move |z, t| Ok((z + v * t, Mat2::identity())),
    ))
}

fn build_torus_skew(spec: &SystemSpec) -> Result<IsotopySystem> {
    let params = resolve_params(spec, &[("vx", 1.0), ("vy", 0.7), ("eps", 0.1)])?;
    reject_variant(spec)?;
    let v = Vec2::new(params["vx"], params["vy"]);
    let eps = params["eps"];
    // Composition of two doubly periodic skew translations, det = 1 for all t.
    Ok(IsotopySystem::from_fn(
        "torus_skew",
        Surface::TorusLift,
        params,
        "",
        move |z, t| {
            let xp = z.x + t * v.x + eps * t * z.y.sin();
            let yp = z.y + t * v.y + eps * t * xp.sin();
            let b = Mat2::new(1.0, eps * t * z.y.cos(), 0.0, 1.0);
            let a = Mat2::new(1.0, 0.0, eps * t * xp.cos(), 1.0);
            Ok((Vec2::new(xp, yp), a * b))
        },
    ))
}
