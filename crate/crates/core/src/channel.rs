//! Clustered mmWave channel synthesis.
//!
//! A user channel is a sum of rank-one ray contributions between two uniform
//! planar arrays, scaled by a large-scale amplitude that folds in path loss,
//! shadowing, transmit power and the receiver noise floor. Downstream code
//! therefore always sees unit-variance complex noise.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Uniform planar array, elements indexed row-major as `p * cols + q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
}

impl ArrayGeometry {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        Self::with_spacing(rows, cols, 0.5)
    }

    pub fn with_spacing(rows: usize, cols: usize, element_spacing: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain(format!("array must be at least 1x1, got {rows}x{cols}")));
        }
        if !(element_spacing > 0.0 && element_spacing.is_finite()) {
            return Err(Error::Domain(format!("element spacing {element_spacing} must be positive")));
        }
        Ok(Self {
            rows,
            cols,
            element_spacing,
        })
    }

    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LinkTag {
    Los,
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub tag: LinkTag,
    pub distance: f64,
    pub shadowing_db: f64,
}

/// Angles of one ray: (azimuth AoA, elevation AoA, azimuth AoD, elevation AoD).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayAngles {
    pub azimuth_aoa: f64,
    pub elevation_aoa: f64,
    pub azimuth_aod: f64,
    pub elevation_aod: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub central: RayAngles,
    /// Per-ray offsets from the central angles.
    pub ray_offsets: Vec<RayAngles>,
    /// Per-ray small-scale gains as `[re, im]`.
    pub ray_gains: Vec<[f64; 2]>,
}

impl Cluster {
    pub fn ray_angles(&self, ray: usize) -> RayAngles {
        let c = &self.central;
        let o = &self.ray_offsets[ray];
        RayAngles {
            azimuth_aoa: wrap_angle(c.azimuth_aoa + o.azimuth_aoa),
            elevation_aoa: clamp_elevation(c.elevation_aoa + o.elevation_aoa),
            azimuth_aod: wrap_angle(c.azimuth_aod + o.azimuth_aod),
            elevation_aod: clamp_elevation(c.elevation_aod + o.elevation_aod),
        }
    }

    pub fn ray_gain(&self, ray: usize) -> C64 {
        let [re, im] = self.ray_gains[ray];
        C64::new(re, im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn total_rays(&self) -> usize {
        self.clusters.iter().map(|c| c.ray_offsets.len()).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::Domain("cluster set is empty".into()));
        }
        for (j, c) in self.clusters.iter().enumerate() {
            if c.ray_offsets.len() != c.ray_gains.len() || c.ray_offsets.is_empty() {
                return Err(Error::Dimension(format!(
                    "cluster {j}: {} ray offsets vs {} ray gains",
                    c.ray_offsets.len(),
                    c.ray_gains.len()
                )));
            }
        }
        Ok(())
    }
}

/// Channel between the BS and one user, `n_r x n_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub h: DMatrix<C64>,
    pub beta_linear: f64,
    pub link: LinkState,
    pub clusters: ClusterSet,
}

/// Angular statistics of the cluster model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AngleModel {
    pub rays_per_cluster: usize,
    pub cluster_lambda: f64,
    pub azimuth_spread_deg: f64,
    pub elevation_spread_deg: f64,
    /// Central elevation range of BS departures, radians.
    pub bs_elevation_range: [f64; 2],
    /// Central elevation range of user arrivals, radians.
    pub user_elevation_range: [f64; 2],
}

impl Default for AngleModel {
    fn default() -> Self {
        Self {
            rays_per_cluster: 20,
            cluster_lambda: 1.8,
            azimuth_spread_deg: 10.0,
            elevation_spread_deg: 6.0,
            bs_elevation_range: [-FRAC_PI_4, 0.0],
            user_elevation_range: [-FRAC_PI_2, FRAC_PI_2],
        }
    }
}

/// Large-scale propagation constants (dB-domain path loss fits and LOS decay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossModel {
    pub los_intercept_db: f64,
    pub los_slope_db: f64,
    pub los_shadowing_db: f64,
    pub nlos_intercept_db: f64,
    pub nlos_slope_db: f64,
    pub nlos_shadowing_db: f64,
    pub los_decay_per_m: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            los_intercept_db: 61.4,
            los_slope_db: 20.0,
            los_shadowing_db: 5.8,
            nlos_intercept_db: 72.0,
            nlos_slope_db: 29.2,
            nlos_shadowing_db: 8.7,
            los_decay_per_m: 0.0149,
        }
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

fn clamp_elevation(a: f64) -> f64 {
    a.clamp(-FRAC_PI_2, FRAC_PI_2)
}

/// Probability that a link of length `d` meters is line-of-sight.
pub fn los_probability(d: f64) -> Result<f64> {
    los_probability_with(d, PathLossModel::default().los_decay_per_m)
}

pub fn los_probability_with(d: f64, decay_per_m: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("distance {d} must be nonnegative")));
    }
    Ok((-decay_per_m * d).exp().clamp(0.0, 1.0))
}

/// Path loss in dB including the caller-drawn shadowing term.
pub fn path_loss_db(d: f64, tag: LinkTag, shadowing_db: f64) -> Result<f64> {
    PathLossModel::default().path_loss_db(d, tag, shadowing_db)
}

impl PathLossModel {
    pub fn path_loss_db(&self, d: f64, tag: LinkTag, shadowing_db: f64) -> Result<f64> {
        if !(d >= 1.0) {
            return Err(Error::Domain(format!(
                "distance {d} m is below the 1 m validity floor"
            )));
        }
        let (a, b) = match tag {
            LinkTag::Los => (self.los_intercept_db, self.los_slope_db),
            LinkTag::Nlos => (self.nlos_intercept_db, self.nlos_slope_db),
        };
        Ok(a + b * d.log10() + shadowing_db)
    }

    pub fn shadowing_std_db(&self, tag: LinkTag) -> f64 {
        match tag {
            LinkTag::Los => self.los_shadowing_db,
            LinkTag::Nlos => self.nlos_shadowing_db,
        }
    }

    /// Draws the LOS state and shadowing for a link of length `d`.
    pub fn sample_link<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> Result<LinkState> {
        let p_los = los_probability_with(d, self.los_decay_per_m)?;
        let tag = if rng.random::<f64>() < p_los {
            LinkTag::Los
        } else {
            LinkTag::Nlos
        };
        let z: f64 = StandardNormal.sample(rng);
        Ok(LinkState {
            tag,
            distance: d,
            shadowing_db: z * self.shadowing_std_db(tag),
        })
    }
}

/// Receiver noise floor in dBm: thermal density + 10 log10(bandwidth) + noise figure.
pub fn noise_floor_dbm(density_dbm_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    density_dbm_hz + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Array response of a UPA towards (azimuth, elevation).
pub fn upa_steering(azimuth: f64, elevation: f64, geom: &ArrayGeometry) -> Result<DVector<C64>> {
    if !(azimuth > -PI - 1e-12 && azimuth <= PI + 1e-12) {
        return Err(Error::Domain(format!("azimuth {azimuth} outside (-pi, pi]")));
    }
    if !(elevation.abs() <= FRAC_PI_2 + 1e-12) {
        return Err(Error::Domain(format!("elevation {elevation} outside [-pi/2, pi/2]")));
    }
    Ok(steering_unchecked(azimuth, elevation, geom))
}

fn steering_unchecked(azimuth: f64, elevation: f64, geom: &ArrayGeometry) -> DVector<C64> {
    let k = TAU * geom.element_spacing;
    let vert = k * elevation.sin();
    let horiz = k * azimuth.sin() * elevation.cos();
    DVector::from_fn(geom.elements(), |idx, _| {
        let p = (idx / geom.cols) as f64;
        let q = (idx % geom.cols) as f64;
        C64::from_polar(1.0, p * vert + q * horiz)
    })
}

/// Number of clusters, `max(1, Poisson(lambda))`.
pub fn sample_cluster_count<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<usize> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("Poisson mean {lambda} must be positive")));
    }
    let n: f64 = Poisson::new(lambda)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng);
    Ok((n as usize).max(1))
}

/// Draws cluster geometry and per-ray gains normalized so that the gains'
/// total power is one.
pub fn sample_clusters<R: Rng + ?Sized>(model: &AngleModel, rng: &mut R) -> Result<ClusterSet> {
    if model.rays_per_cluster == 0 {
        return Err(Error::Domain("rays_per_cluster must be at least 1".into()));
    }
    let count = sample_cluster_count(model.cluster_lambda, rng)?;
    let total_rays = count * model.rays_per_cluster;
    let gain_std = (0.5 / total_rays as f64).sqrt();
    let az = Normal::new(0.0, model.azimuth_spread_deg.to_radians())
        .map_err(|e| Error::Domain(e.to_string()))?;
    let el = Normal::new(0.0, model.elevation_spread_deg.to_radians())
        .map_err(|e| Error::Domain(e.to_string()))?;
    let uniform = |rng: &mut R, [lo, hi]: [f64; 2]| lo + (hi - lo) * rng.random::<f64>();

    let clusters = (0..count)
        .map(|_| {
            let central = RayAngles {
                azimuth_aoa: wrap_angle(uniform(rng, [-PI, PI])),
                elevation_aoa: uniform(rng, model.user_elevation_range),
                azimuth_aod: wrap_angle(uniform(rng, [-PI, PI])),
                elevation_aod: uniform(rng, model.bs_elevation_range),
            };
            let mut ray_offsets = Vec::with_capacity(model.rays_per_cluster);
            let mut ray_gains = Vec::with_capacity(model.rays_per_cluster);
            for _ in 0..model.rays_per_cluster {
                ray_offsets.push(RayAngles {
                    azimuth_aoa: az.sample(rng),
                    elevation_aoa: el.sample(rng),
                    azimuth_aod: az.sample(rng),
                    elevation_aod: el.sample(rng),
                });
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                ray_gains.push([re * gain_std, im * gain_std]);
            }
            Cluster {
                central,
                ray_offsets,
                ray_gains,
            }
        })
        .collect();
    Ok(ClusterSet { clusters })
}

/// Sums the ray contributions `beta * g * a_r a_t^H` into an `n_r x n_t` matrix.
pub fn synthesize_channel(
    clusters: &ClusterSet,
    bs: &ArrayGeometry,
    user: &ArrayGeometry,
    beta_linear: f64,
    link: LinkState,
) -> Result<ChannelMatrix> {
    clusters.validate()?;
    if !(beta_linear >= 0.0 && beta_linear.is_finite()) {
        return Err(Error::Domain(format!("beta {beta_linear} must be finite and nonnegative")));
    }
    let mut h = DMatrix::<C64>::zeros(user.elements(), bs.elements());
    for cluster in &clusters.clusters {
        for ray in 0..cluster.ray_offsets.len() {
            let ang = cluster.ray_angles(ray);
            let a_r = steering_unchecked(ang.azimuth_aoa, ang.elevation_aoa, user);
            let a_t = steering_unchecked(ang.azimuth_aod, ang.elevation_aod, bs);
            let g = cluster.ray_gain(ray) * beta_linear;
            h.gerc(g, &a_r, &a_t, C64::new(1.0, 0.0));
        }
    }
    Ok(ChannelMatrix {
        h,
        beta_linear,
        link,
        clusters: clusters.clone(),
    })
}

/// User position in the horizontal plane, BS at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub radius: f64,
    pub azimuth: f64,
}

impl Position {
    pub fn xy(&self) -> (f64, f64) {
        (self.radius * self.azimuth.cos(), self.radius * self.azimuth.sin())
    }
}

/// Drops a user uniformly by area in the ring `[inner, outer]`.
pub fn drop_user<R: Rng + ?Sized>(inner: f64, outer: f64, rng: &mut R) -> Result<Position> {
    if !(inner > 0.0 && inner < outer && outer.is_finite()) {
        return Err(Error::Domain(format!(
            "ring radii must satisfy 0 < inner < outer, got ({inner}, {outer})"
        )));
    }
    let u: f64 = rng.random();
    let radius = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
    let azimuth = wrap_angle(rng.random::<f64>() * TAU - PI);
    Ok(Position { radius, azimuth })
}

/// Serializable snapshot of a channel realization, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub drop_id: u64,
    pub user_id: u64,
    pub n_r: usize,
    pub n_t: usize,
    pub beta_linear: f64,
    pub link: LinkState,
    pub clusters: ClusterSet,
    /// Row-major real parts of `h`.
    pub h_re: Vec<f64>,
    /// Row-major imaginary parts of `h`.
    pub h_im: Vec<f64>,
}

impl ChannelRecord {
    pub fn from_channel(drop_id: u64, user_id: u64, ch: &ChannelMatrix) -> Self {
        let (n_r, n_t) = ch.h.shape();
        let mut h_re = Vec::with_capacity(n_r * n_t);
        let mut h_im = Vec::with_capacity(n_r * n_t);
        for r in 0..n_r {
            for c in 0..n_t {
                h_re.push(ch.h[(r, c)].re);
                h_im.push(ch.h[(r, c)].im);
            }
        }
        Self {
            drop_id,
            user_id,
            n_r,
            n_t,
            beta_linear: ch.beta_linear,
            link: ch.link,
            clusters: ch.clusters.clone(),
            h_re,
            h_im,
        }
    }

    pub fn to_channel(&self) -> Result<ChannelMatrix> {
        let n = self.n_r * self.n_t;
        if self.h_re.len() != n || self.h_im.len() != n {
            return Err(Error::Dimension(format!(
                "record holds {} / {} entries for a {}x{} channel",
                self.h_re.len(),
                self.h_im.len(),
                self.n_r,
                self.n_t
            )));
        }
        let h = DMatrix::from_fn(self.n_r, self.n_t, |r, c| {
            let i = r * self.n_t + c;
            C64::new(self.h_re[i], self.h_im[i])
        });
        Ok(ChannelMatrix {
            h,
            beta_linear: self.beta_linear,
            link: self.link,
            clusters: self.clusters.clone(),
        })
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SimRng;
    use rand::SeedableRng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn los_probability_values() {
        assert_eq!(los_probability(0.0).unwrap(), 1.0);
        assert!(close(los_probability(10.0).unwrap(), (-0.149f64).exp(), 1e-15));
        assert!(close(los_probability(10.0).unwrap(), 0.8616, 1e-4));
        let half = std::f64::consts::LN_2 / 0.0149;
        assert!(close(los_probability(half).unwrap(), 0.5, 1e-12));
        assert!(los_probability(-1.0).is_err());
        assert!(los_probability(f64::NAN).is_err());
    }

    #[test]
    fn path_loss_values() {
        assert!(close(path_loss_db(10.0, LinkTag::Los, 0.0).unwrap(), 81.4, 1e-12));
        assert!(close(path_loss_db(1.0, LinkTag::Los, 0.0).unwrap(), 61.4, 1e-12));
        assert!(close(path_loss_db(10.0, LinkTag::Nlos, 0.0).unwrap(), 101.2, 1e-12));
        assert!(close(path_loss_db(10.0, LinkTag::Nlos, 3.0).unwrap(), 104.2, 1e-12));
        assert!(path_loss_db(0.5, LinkTag::Los, 0.0).is_err());
    }

    #[test]
    fn noise_floor_matches_table_values() {
        assert!(close(noise_floor_dbm(-174.0, 1e9, 6.0), -78.0, 1e-12));
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        let g = ArrayGeometry::new(4, 4).unwrap();
        let a = upa_steering(0.0, 0.0, &g).unwrap();
        assert_eq!(a.len(), 16);
        for z in a.iter() {
            assert!(close(z.re, 1.0, 1e-15) && close(z.im, 0.0, 1e-15));
        }
    }

    #[test]
    fn steering_norm_and_conjugate_symmetry() {
        let g = ArrayGeometry::new(8, 8).unwrap();
        let a = upa_steering(0.7, -0.3, &g).unwrap();
        assert!(close(a.norm_squared(), 64.0, 1e-9));

        let row = ArrayGeometry::new(1, 6).unwrap();
        let (az, el) = (1.1, 0.4);
        let a = upa_steering(az, el, &row).unwrap();
        let b = upa_steering(-az, el, &row).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!(close(x.re, y.re, 1e-12) && close(x.im, -y.im, 1e-12));
        }
        // direct phase of element q = 3
        let phase = std::f64::consts::PI * 3.0 * az.sin() * el.cos();
        assert!(close(a[3].arg(), wrap_angle(phase), 1e-12));
    }

    #[test]
    fn steering_rejects_bad_angles() {
        let g = ArrayGeometry::new(2, 2).unwrap();
        assert!(upa_steering(4.0, 0.0, &g).is_err());
        assert!(upa_steering(0.0, 2.0, &g).is_err());
    }

    #[test]
    fn cluster_count_mean() {
        let mut rng = SimRng::seed_from_u64(11);
        let n = 1_000_000;
        let mut sum = 0usize;
        for _ in 0..n {
            let c = sample_cluster_count(1.8, &mut rng).unwrap();
            assert!(c >= 1);
            sum += c;
        }
        let mean = sum as f64 / n as f64;
        let expected = 1.8 + (-1.8f64).exp();
        assert!(close(mean, expected, 0.01), "mean {mean} vs {expected}");
        assert!(close(expected, 1.9653, 1e-4));
    }

    #[test]
    fn cluster_count_tiny_lambda_is_one() {
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_cluster_count(1e-12, &mut rng).unwrap(), 1);
        }
        assert!(sample_cluster_count(0.0, &mut rng).is_err());
    }

    fn one_ray() -> ClusterSet {
        let zero = RayAngles {
            azimuth_aoa: 0.0,
            elevation_aoa: 0.0,
            azimuth_aod: 0.0,
            elevation_aod: 0.0,
        };
        ClusterSet {
            clusters: vec![Cluster {
                central: RayAngles {
                    azimuth_aoa: 0.3,
                    elevation_aoa: 0.1,
                    azimuth_aod: -1.0,
                    elevation_aod: -0.2,
                },
                ray_offsets: vec![zero],
                ray_gains: vec![[0.6, -0.8]],
            }],
        }
    }

    fn link() -> LinkState {
        LinkState {
            tag: LinkTag::Los,
            distance: 20.0,
            shadowing_db: 0.0,
        }
    }

    #[test]
    fn single_ray_is_rank_one_and_linear_in_beta() {
        let bs = ArrayGeometry::new(8, 8).unwrap();
        let ue = ArrayGeometry::new(4, 4).unwrap();
        let ch = synthesize_channel(&one_ray(), &bs, &ue, 1.0, link()).unwrap();
        assert_eq!(ch.h.shape(), (16, 64));
        let sv = ch.h.clone().singular_values();
        assert!(sv[1] < 1e-9 * sv[0]);
        // |g| = 1 so ||H||_F^2 = n_r n_t
        assert!(close(ch.h.norm_squared(), 1024.0, 1e-8));

        let ch3 = synthesize_channel(&one_ray(), &bs, &ue, 3.0, link()).unwrap();
        assert!(close(ch3.h.norm(), 3.0 * ch.h.norm(), 1e-9));
    }

    #[test]
    fn synthesize_rejects_malformed_clusters() {
        let bs = ArrayGeometry::new(2, 2).unwrap();
        let mut c = one_ray();
        c.clusters[0].ray_gains.push([1.0, 0.0]);
        assert!(synthesize_channel(&c, &bs, &bs, 1.0, link()).is_err());
        let empty = ClusterSet { clusters: vec![] };
        assert!(synthesize_channel(&empty, &bs, &bs, 1.0, link()).is_err());
    }

    #[test]
    fn channel_energy_normalization() {
        let bs = ArrayGeometry::new(8, 8).unwrap();
        let ue = ArrayGeometry::new(4, 4).unwrap();
        let model = AngleModel::default();
        let mut rng = SimRng::seed_from_u64(5);
        let beta = 0.37;
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let cl = sample_clusters(&model, &mut rng).unwrap();
            let ch = synthesize_channel(&cl, &bs, &ue, beta, link()).unwrap();
            assert!(ch.h.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
            acc += ch.h.norm_squared() / (beta * beta * 1024.0);
        }
        let mean = acc / n as f64;
        assert!(close(mean, 1.0, 0.05), "mean normalized energy {mean}");
    }

    #[test]
    fn rank_bounded_by_ray_count() {
        let bs = ArrayGeometry::new(8, 8).unwrap();
        let ue = ArrayGeometry::new(4, 4).unwrap();
        let model = AngleModel {
            rays_per_cluster: 3,
            ..AngleModel::default()
        };
        let mut rng = SimRng::seed_from_u64(9);
        for _ in 0..20 {
            let cl = sample_clusters(&model, &mut rng).unwrap();
            let ch = synthesize_channel(&cl, &bs, &ue, 1.0, link()).unwrap();
            let sv = ch.h.clone().singular_values();
            let rank = sv.iter().filter(|&&s| s > 1e-9 * sv[0]).count();
            assert!(rank <= cl.total_rays());
        }
    }

    #[test]
    fn ring_drop_moments() {
        let mut rng = SimRng::seed_from_u64(3);
        let n = 100_000;
        let mut m2 = 0.0;
        for _ in 0..n {
            let p = drop_user(10.0, 50.0, &mut rng).unwrap();
            assert!((10.0..=50.0).contains(&p.radius));
            m2 += p.radius * p.radius;
        }
        let m2 = m2 / n as f64;
        assert!((m2 / 1300.0 - 1.0).abs() < 0.01, "E[r^2] = {m2}");
    }

    #[test]
    fn degenerate_ring_and_errors() {
        let mut rng = SimRng::seed_from_u64(4);
        let p = drop_user(50.0 - 1e-9, 50.0, &mut rng).unwrap();
        assert!(close(p.radius, 50.0, 1e-8));
        assert!(drop_user(50.0, 10.0, &mut rng).is_err());
        assert!(drop_user(0.0, 10.0, &mut rng).is_err());
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let bs = ArrayGeometry::new(8, 8).unwrap();
        let ue = ArrayGeometry::new(4, 4).unwrap();
        let make = || {
            let mut rng = SimRng::seed_from_u64(99);
            let cl = sample_clusters(&AngleModel::default(), &mut rng).unwrap();
            synthesize_channel(&cl, &bs, &ue, 0.5, link()).unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn record_json_roundtrip() {
        let bs = ArrayGeometry::new(2, 2).unwrap();
        let ch = synthesize_channel(&one_ray(), &bs, &bs, 2.0, link()).unwrap();
        let rec = ChannelRecord::from_channel(3, 4, &ch);
        let back = ChannelRecord::from_json_line(&rec.to_json_line().unwrap()).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_channel().unwrap(), ch);
    }
}
