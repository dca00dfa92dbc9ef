//! Seeded benchmark distributions.
//!
//! The two-dimensional mixtures follow the usual three-blob conventions:
//! `Aniso` shears unit blobs with `[[0.6, -0.6], [-0.4, 0.8]]` (applied to row
//! vectors) and `Varied` uses per-blob standard deviations `1.0, 2.5, 0.5`.
//! Blob means are spaced widely enough that every blob is its own mode.
//!
//! `Trajectories` draws `x = s * x_i R(theta)^T + L n` where `x_i` is one of six
//! fixed 12-step pedestrian paths, `theta` and `s` are Gaussian jitters,
//! `n` is per-coordinate Gaussian noise and `L` is the 12x12 lower-triangular
//! matrix of ones (a cumulative sum over timesteps). Rows are flattened as
//! `(x1, y1, ..., x12, y12)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::density::LogDensity;
use crate::error::{Result, RomeError};
use crate::gaussian::Gaussian;

/// Timesteps per trajectory.
pub const TRAJECTORY_STEPS: usize = 12;

/// A fixed pedestrian path: 12 `(x, y)` positions in metres.
pub type Trajectory = [[f64; 2]; TRAJECTORY_STEPS];

// Output-space means of the three sheared blobs, spaced along the short axis
// of the shear so the stripes sit side by side.
const ANISO_MEANS: [[f64; 2]; 3] = [[-6.5, -4.6], [0.0, 0.0], [6.5, 4.6]];

const ANISO_SHEAR: [[f64; 2]; 2] = [[0.6, -0.6], [-0.4, 0.8]];

const VARIED_MEANS: [[f64; 2]; 3] = [[-12.0, -8.0], [0.0, 8.0], [12.0, -6.0]];

const VARIED_STDS: [f64; 3] = [1.0, 2.5, 0.5];

const MOON_NOISE_STD: f64 = 0.08;

// straight, left turn, right turn, accelerating, decelerating, S-curve
const BASE_TRAJECTORIES: [Trajectory; 6] = [
    [
        [5.500, 4.200], [5.500, 4.550], [5.500, 4.900], [5.500, 5.250],
        [5.500, 5.600], [5.500, 5.950], [5.500, 6.300], [5.500, 6.650],
        [5.500, 7.000], [5.500, 7.350], [5.500, 7.700], [5.500, 8.050],
    ],
    [
        [5.300, 4.200], [5.300, 4.530], [5.300, 4.860], [5.243, 5.185],
        [5.130, 5.495], [4.965, 5.781], [4.753, 6.034], [4.500, 6.246],
        [4.214, 6.411], [3.904, 6.524], [3.579, 6.581], [3.249, 6.581],
    ],
    [
        [5.700, 4.200], [5.700, 4.530], [5.700, 4.860], [5.757, 5.185],
        [5.870, 5.495], [6.035, 5.781], [6.247, 6.034], [6.500, 6.246],
        [6.786, 6.411], [7.096, 6.524], [7.421, 6.581], [7.751, 6.581],
    ],
    [
        [5.100, 4.300], [5.037, 4.436], [4.961, 4.599], [4.872, 4.789],
        [4.770, 5.007], [4.656, 5.252], [4.529, 5.524], [4.390, 5.823],
        [4.238, 6.149], [4.073, 6.502], [3.896, 6.883], [3.705, 7.291],
    ],
    [
        [5.900, 4.300], [6.090, 4.708], [6.268, 5.088], [6.432, 5.442],
        [6.585, 5.768], [6.724, 6.067], [6.851, 6.339], [6.965, 6.584],
        [7.066, 6.801], [7.155, 6.992], [7.231, 7.155], [7.295, 7.291],
    ],
    [
        [5.500, 4.200], [5.500, 4.560], [5.307, 4.864], [5.023, 5.084],
        [4.738, 5.304], [4.545, 5.609], [4.545, 5.969], [4.738, 6.273],
        [5.023, 6.493], [5.307, 6.713], [5.500, 7.017], [5.500, 7.377],
    ],
];

/// The six base pedestrian paths used by the trajectory distributions.
pub fn base_trajectories() -> [Trajectory; 6] {
    BASE_TRAJECTORIES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistributionKind {
    Aniso,
    Varied,
    TwoMoons,
    Trajectories,
    Gaussian,
    Elliptical,
    RotatedElliptical,
    TrajectoriesUniModal,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 8] = [
        DistributionKind::Aniso,
        DistributionKind::Varied,
        DistributionKind::TwoMoons,
        DistributionKind::Trajectories,
        DistributionKind::Gaussian,
        DistributionKind::Elliptical,
        DistributionKind::RotatedElliptical,
        DistributionKind::TrajectoriesUniModal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistributionKind::Aniso => "aniso",
            DistributionKind::Varied => "varied",
            DistributionKind::TwoMoons => "two-moons",
            DistributionKind::Trajectories => "trajectories",
            DistributionKind::Gaussian => "gaussian",
            DistributionKind::Elliptical => "elliptical",
            DistributionKind::RotatedElliptical => "rotated-elliptical",
            DistributionKind::TrajectoriesUniModal => "trajectories-unimodal",
        }
    }

    pub fn dims(self) -> usize {
        match self {
            DistributionKind::Trajectories | DistributionKind::TrajectoriesUniModal => {
                2 * TRAJECTORY_STEPS
            }
            _ => 2,
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistributionKind {
    type Err = RomeError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        DistributionKind::ALL
            .into_iter()
            .find(|k| k.name().replace('-', "") == key)
            .ok_or_else(|| RomeError::Config(format!("unknown distribution {s:?}")))
    }
}

/// One Gaussian of a ground-truth mixture, written as `x = mean + z A` with
/// `z ~ N(0, I)`, so the covariance is `A^T A`.
#[derive(Debug, Clone)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub factor: Vec<Vec<f64>>,
}

impl MixtureComponent {
    pub fn isotropic(mean: [f64; 2], std: f64) -> Self {
        Self {
            weight: 1.0,
            mean: mean.to_vec(),
            factor: vec![vec![std, 0.0], vec![0.0, std]],
        }
    }

    fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean.len();
        DMatrix::from_fn(m, m, |i, j| {
            self.factor.iter().map(|row| row[i] * row[j]).sum::<f64>()
        })
    }
}

/// Jitter parameters of the trajectory distributions. Every value is a
/// standard deviation; all-zero stds reproduce the base paths exactly.
#[derive(Debug, Clone)]
pub struct TrajectoryParams {
    pub base: Vec<Trajectory>,
    pub rotation_std: f64,
    pub scale_std: f64,
    pub noise_std: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            base: BASE_TRAJECTORIES.to_vec(),
            rotation_std: PI / 180.0,
            scale_std: 0.03,
            noise_std: 0.03,
        }
    }
}

#[derive(Debug, Clone)]
pub enum DistributionParams {
    Mixture(Vec<MixtureComponent>),
    Moons { noise_std: f64 },
    Trajectories(TrajectoryParams),
}

/// A benchmark distribution: its kind plus the numeric parameters it samples with.
#[derive(Debug, Clone)]
pub struct DistributionSpec {
    kind: DistributionKind,
    params: DistributionParams,
    mixture: Option<Vec<(f64, Gaussian)>>,
}

impl DistributionSpec {
    pub fn new(kind: DistributionKind, params: DistributionParams) -> Result<Self> {
        let dims = kind.dims();
        let mixture = match &params {
            DistributionParams::Mixture(components) => {
                if components.is_empty() {
                    return Err(RomeError::Config("mixture has no components".into()));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let mut gaussians = Vec::with_capacity(components.len());
                for c in components {
                    if c.mean.len() != dims
                        || c.factor.len() != dims
                        || c.factor.iter().any(|r| r.len() != dims)
                    {
                        return Err(RomeError::Shape(format!(
                            "{kind} components must be {dims}-dimensional"
                        )));
                    }
                    let finite = c.mean.iter().chain(c.factor.iter().flatten()).all(|v| v.is_finite());
                    if !finite || !(c.weight > 0.0 && c.weight.is_finite()) {
                        return Err(RomeError::Config(format!(
                            "{kind} component parameters must be finite with positive weight"
                        )));
                    }
                    gaussians.push(((c.weight / total).ln(), Gaussian::new(&c.mean, &c.covariance())?));
                }
                Some(gaussians)
            }
            DistributionParams::Moons { noise_std } => {
                if !(noise_std.is_finite() && *noise_std >= 0.0) {
                    return Err(RomeError::Config("moon noise must be finite and >= 0".into()));
                }
                None
            }
            DistributionParams::Trajectories(p) => {
                if p.base.is_empty() {
                    return Err(RomeError::Config("no base trajectories".into()));
                }
                let stds = [p.rotation_std, p.scale_std, p.noise_std];
                if stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(RomeError::Config(
                        "trajectory jitter stds must be finite and >= 0".into(),
                    ));
                }
                None
            }
        };
        let expected_variant = matches!(
            (kind, &params),
            (
                DistributionKind::Aniso
                    | DistributionKind::Varied
                    | DistributionKind::Gaussian
                    | DistributionKind::Elliptical
                    | DistributionKind::RotatedElliptical,
                DistributionParams::Mixture(_)
            ) | (DistributionKind::TwoMoons, DistributionParams::Moons { .. })
                | (
                    DistributionKind::Trajectories | DistributionKind::TrajectoriesUniModal,
                    DistributionParams::Trajectories(_)
                )
        );
        if !expected_variant {
            return Err(RomeError::Config(format!(
                "parameters do not match distribution kind {kind}"
            )));
        }
        Ok(Self {
            kind,
            params,
            mixture,
        })
    }

    /// The default parameterisation of `kind`.
    pub fn standard(kind: DistributionKind) -> Self {
        let params = match kind {
            DistributionKind::Aniso => DistributionParams::Mixture(
                ANISO_MEANS
                    .iter()
                    .map(|m| MixtureComponent {
                        weight: 1.0,
                        mean: m.to_vec(),
                        factor: ANISO_SHEAR.iter().map(|r| r.to_vec()).collect(),
                    })
                    .collect(),
            ),
            DistributionKind::Varied => DistributionParams::Mixture(
                VARIED_MEANS
                    .iter()
                    .zip(VARIED_STDS)
                    .map(|(c, s)| MixtureComponent::isotropic(*c, s))
                    .collect(),
            ),
            DistributionKind::TwoMoons => DistributionParams::Moons {
                noise_std: MOON_NOISE_STD,
            },
            DistributionKind::Gaussian => {
                DistributionParams::Mixture(vec![MixtureComponent::isotropic([0.0, 0.0], 1.0)])
            }
            DistributionKind::Elliptical => DistributionParams::Mixture(vec![MixtureComponent {
                weight: 1.0,
                mean: vec![0.0, 0.0],
                factor: vec![vec![2.0, 0.0], vec![0.0, 0.5]],
            }]),
            DistributionKind::RotatedElliptical => {
                let (s, c) = (PI / 4.0).sin_cos();
                // rows of diag(2, 0.5) rotated by 45 degrees
                DistributionParams::Mixture(vec![MixtureComponent {
                    weight: 1.0,
                    mean: vec![0.0, 0.0],
                    factor: vec![vec![2.0 * c, 2.0 * s], vec![-0.5 * s, 0.5 * c]],
                }])
            }
            DistributionKind::Trajectories => DistributionParams::Trajectories(TrajectoryParams::default()),
            DistributionKind::TrajectoriesUniModal => DistributionParams::Trajectories(TrajectoryParams {
                base: vec![BASE_TRAJECTORIES[0]],
                ..TrajectoryParams::default()
            }),
        };
        Self::new(kind, params).expect("built-in parameters are valid")
    }

    /// Looks up a built-in distribution by name (`aniso`, `two-moons`, ...).
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::standard(name.parse()?))
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn params(&self) -> &DistributionParams {
        &self.params
    }

    pub fn dims(&self) -> usize {
        self.kind.dims()
    }

    /// Draws `n` samples. The output is a pure function of `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        Ok(self.sample_labeled(n, seed)?.0)
    }

    /// As [`Self::sample`], also returning the generating mode of every row:
    /// mixture component, moon, or base trajectory index.
    pub fn sample_labeled(&self, n: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
        if n == 0 {
            return Err(RomeError::InsufficientData("cannot draw 0 samples".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.dims();
        let mut values = Array2::zeros((n, m));
        let mut labels = Vec::with_capacity(n);
        for mut row in values.rows_mut() {
            let (label, x) = self.draw_one(&mut rng);
            row.iter_mut().zip(x).for_each(|(r, v)| *r = v);
            labels.push(label);
        }
        Ok((Dataset::new(values, seed)?.with_tag(self.name()), labels))
    }

    fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        match &self.params {
            DistributionParams::Mixture(components) => {
                let i = pick_weighted(rng, components.iter().map(|c| c.weight));
                let c = &components[i];
                let z: Vec<f64> = (0..c.mean.len()).map(|_| rng.sample(StandardNormal)).collect();
                let x = (0..c.mean.len())
                    .map(|j| c.mean[j] + z.iter().zip(&c.factor).map(|(zk, row)| zk * row[j]).sum::<f64>())
                    .collect();
                (i, x)
            }
            DistributionParams::Moons { noise_std } => {
                let t = rng.random::<f64>() * PI;
                let outer = rng.random::<bool>();
                let (x, y) = if outer {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                (usize::from(!outer), vec![x + noise_std * nx, y + noise_std * ny])
            }
            DistributionParams::Trajectories(p) => {
                let i = rng.random_range(0..p.base.len());
                let z_theta: f64 = rng.sample(StandardNormal);
                let z_scale: f64 = rng.sample(StandardNormal);
                let theta = p.rotation_std * z_theta;
                let scale = 1.0 + p.scale_std * z_scale;
                let mut noise = [[0.0; 2]; TRAJECTORY_STEPS];
                for step in noise.iter_mut() {
                    for v in step.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = p.noise_std * z;
                    }
                }
                (i, compose_trajectory(&p.base[i], theta, scale, &noise).to_vec())
            }
        }
    }

    /// Exact log-density where the distribution is a Gaussian mixture;
    /// `Ok(None)` for the moon and trajectory kinds.
    pub fn true_log_density(&self, x: &[f64]) -> Result<Option<f64>> {
        if x.len() != self.dims() {
            return Err(RomeError::Shape(format!(
                "query has {} dims, {} expects {}",
                x.len(),
                self.kind,
                self.dims()
            )));
        }
        Ok(self.mixture.as_ref().map(|gs| mixture_log_pdf(gs, x)))
    }

    pub fn has_true_density(&self) -> bool {
        self.mixture.is_some()
    }

    /// The exact density as a [`LogDensity`], if available.
    pub fn true_density(&self) -> Result<TrueDensity<'_>> {
        if self.has_true_density() {
            Ok(TrueDensity { spec: self })
        } else {
            Err(RomeError::Unsupported(format!(
                "no closed-form density for {}",
                self.kind
            )))
        }
    }
}

fn mixture_log_pdf(gs: &[(f64, Gaussian)], x: &[f64]) -> f64 {
    crate::density::log_sum_exp(gs.iter().map(|(lw, g)| lw + g.log_pdf(x)))
}

fn pick_weighted<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if u < w {
            return i;
        }
        u -= w;
        last = i;
    }
    last
}

/// `scale * base R(theta)^T + L noise`, flattened row-major.
pub fn compose_trajectory(
    base: &Trajectory,
    theta: f64,
    scale: f64,
    noise: &[[f64; 2]; TRAJECTORY_STEPS],
) -> [f64; 2 * TRAJECTORY_STEPS] {
    let (s, c) = theta.sin_cos();
    let mut out = [0.0; 2 * TRAJECTORY_STEPS];
    let mut cum = [0.0; 2];
    for (t, (p, n)) in base.iter().zip(noise).enumerate() {
        cum[0] += n[0];
        cum[1] += n[1];
        out[2 * t] = scale * (c * p[0] - s * p[1]) + cum[0];
        out[2 * t + 1] = scale * (s * p[0] + c * p[1]) + cum[1];
    }
    out
}

/// Borrowed view of a distribution's closed-form density.
#[derive(Debug, Clone, Copy)]
pub struct TrueDensity<'a> {
    spec: &'a DistributionSpec,
}

impl LogDensity for TrueDensity<'_> {
    fn dims(&self) -> usize {
        self.spec.dims()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        mixture_log_pdf(self.spec.mixture.as_ref().expect("checked on construction"), x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn base_trajectories_are_plausible() {
        let paths = base_trajectories();
        assert_eq!(paths.len(), 6);
        for path in &paths {
            assert_eq!(path.len(), 12);
            for w in path.windows(2) {
                let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
                assert!(d <= 1.0, "step of {d} m");
            }
            for p in path {
                assert!((3.0..=8.0).contains(&p[0]) && (4.0..=8.5).contains(&p[1]));
            }
        }
        assert_eq!(base_trajectories(), base_trajectories());
    }

    #[test]
    fn identity_jitter_reproduces_base_path() {
        for i in 0..6 {
            let spec = DistributionSpec::new(
                DistributionKind::Trajectories,
                DistributionParams::Trajectories(TrajectoryParams {
                    base: vec![BASE_TRAJECTORIES[i]],
                    rotation_std: 0.0,
                    scale_std: 0.0,
                    noise_std: 0.0,
                }),
            )
            .unwrap();
            let ds = spec.sample(3, 11).unwrap();
            let flat: Vec<f64> = BASE_TRAJECTORIES[i].iter().flatten().copied().collect();
            for row in ds.rows() {
                assert_eq!(row, flat.as_slice());
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = DistributionSpec::standard(DistributionKind::Aniso);
        let a = spec.sample(3000, 7).unwrap();
        let b = spec.sample(3000, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, spec.sample(3000, 8).unwrap());
    }

    #[test]
    fn dims_per_kind() {
        for kind in DistributionKind::ALL {
            let ds = DistributionSpec::standard(kind).sample(5, 1).unwrap();
            assert_eq!(ds.dims(), kind.dims());
            assert_eq!(ds.n(), 5);
        }
        assert_eq!(DistributionKind::Trajectories.dims(), 24);
    }

    #[test]
    fn zero_samples_rejected() {
        let spec = DistributionSpec::standard(DistributionKind::Gaussian);
        assert!(matches!(spec.sample(0, 1), Err(RomeError::InsufficientData(_))));
    }

    #[test]
    fn names_parse() {
        for kind in DistributionKind::ALL {
            assert_eq!(kind.name().parse::<DistributionKind>().unwrap(), kind);
        }
        assert_eq!("TwoMoons".parse::<DistributionKind>().unwrap(), DistributionKind::TwoMoons);
        assert!(matches!(DistributionSpec::by_name("spiral"), Err(RomeError::Config(_))));
    }

    #[test]
    fn mismatched_params_rejected() {
        let err = DistributionSpec::new(
            DistributionKind::Aniso,
            DistributionParams::Moons { noise_std: 0.1 },
        );
        assert!(matches!(err, Err(RomeError::Config(_))));
    }

    #[test]
    fn standard_gaussian_density_at_origin() {
        let spec = DistributionSpec::standard(DistributionKind::Gaussian);
        let v = spec.true_log_density(&[0.0, 0.0]).unwrap().unwrap();
        assert_abs_diff_eq!(v, -(2.0 * PI).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, -1.837877, epsilon = 1e-6);
    }

    #[test]
    fn density_availability() {
        let x = [0.1, 0.2];
        for kind in [DistributionKind::Aniso, DistributionKind::Varied, DistributionKind::Elliptical] {
            let v = DistributionSpec::standard(kind).true_log_density(&x).unwrap();
            assert!(v.unwrap().is_finite());
        }
        let moons = DistributionSpec::standard(DistributionKind::TwoMoons);
        assert_eq!(moons.true_log_density(&x).unwrap(), None);
        assert!(matches!(moons.true_density(), Err(RomeError::Unsupported(_))));
        let traj = DistributionSpec::standard(DistributionKind::Trajectories);
        assert_eq!(traj.true_log_density(&[0.0; 24]).unwrap(), None);
        assert!(matches!(
            DistributionSpec::standard(DistributionKind::Aniso).true_log_density(&[0.0; 3]),
            Err(RomeError::Shape(_))
        ));
    }

    #[test]
    fn rotated_elliptical_covariance() {
        let DistributionParams::Mixture(c) =
            DistributionSpec::standard(DistributionKind::RotatedElliptical).params().clone()
        else {
            unreachable!()
        };
        let cov = c[0].covariance();
        // R diag(4, 0.25) R^T at 45 degrees
        assert_abs_diff_eq!(cov[(0, 0)], 2.125, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[(1, 1)], 2.125, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[(0, 1)], 1.875, epsilon = 1e-12);
    }
}
