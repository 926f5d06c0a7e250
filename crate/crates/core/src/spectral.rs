//! Explicit spectral models: eigenvalues, orthonormal eigenfunctions, quadrature
//! grids and subdomain masks.
//!
//! Three domains are built in: the Dirichlet Laplacian on an interval and on a
//! square, and the Stokes operator on the flat torus realized by divergence-free
//! Fourier fields. Downstream code only ever sees eigenvalues and quadrature
//! values of the eigenfunctions.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::CompositeRule;

/// Gauss nodes per panel; one panel per half-wavelength of the highest mode.
/// Products of eigenfunctions then integrate to near machine precision.
const NODES_PER_PANEL: usize = 12;

/// Relative slack in [`is_low`].
pub const LOW_MODE_SLACK: f64 = 1e-12;

/// `gamma <= cutoff` up to [`LOW_MODE_SLACK`].
pub fn is_low(gamma: f64, cutoff: f64) -> bool {
    gamma <= cutoff * (1.0 + LOW_MODE_SLACK)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Interval { length: f64 },
    Square { side: f64 },
    Torus { period: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Cos,
    Sin,
}

/// Which eigenfunction a mode is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeShape {
    /// `sqrt(2/L) sin(k pi x / L)`
    Sine { k: u32 },
    /// `(2/L) sin(p pi x / L) sin(q pi y / L)`
    SineProduct { p: u32, q: u32 },
    /// `(kperp/|k|) trig(2 pi k.x / P) * sqrt(2)/P`, divergence free.
    Fourier { k1: i32, k2: i32, phase: Phase },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub gamma: f64,
    pub shape: ModeShape,
}

/// Axis-aligned box `lo <= x <= hi`; one coordinate per spatial dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Region { lo: alloc::vec![lo], hi: alloc::vec![hi] }
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Region { lo: lo.to_vec(), hi: hi.to_vec() }
    }

    fn contains(&self, p: &[f64; 2]) -> bool {
        self.lo.iter().zip(&self.hi).enumerate().all(|(d, (lo, hi))| *lo <= p[d] && p[d] <= *hi)
    }
}

/// Selector for [`SpectralModel::build`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    DirichletInterval,
    DirichletSquare,
    TorusStokes,
}

#[derive(Clone, Debug)]
pub struct SpectralModel {
    domain: Domain,
    modes: Vec<Mode>,
    components: usize,
    dim: usize,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl SpectralModel {
    /// Builds a model whose quadrature panels are aligned with the edges of `regions`,
    /// so that mass matrices over those regions are integrated without edge error.
    pub fn build(kind: ModelKind, num_modes: usize, length: f64, regions: &[Region]) -> Result<Self> {
        let (mut xb, mut yb) = (Vec::new(), Vec::new());
        for r in regions {
            if let (Some(lo), Some(hi)) = (r.lo.first(), r.hi.first()) {
                xb.push(*lo);
                xb.push(*hi);
            }
            if let (Some(lo), Some(hi)) = (r.lo.get(1), r.hi.get(1)) {
                yb.push(*lo);
                yb.push(*hi);
            }
        }
        match kind {
            ModelKind::DirichletInterval => Self::dirichlet_interval_with_breaks(num_modes, length, &xb),
            ModelKind::DirichletSquare => Self::dirichlet_square_with_breaks(num_modes, length, &xb, &yb),
            ModelKind::TorusStokes => Self::torus_stokes(num_modes, length),
        }
    }

    /// Dirichlet Laplacian on (0, L): `gamma_k = (k pi / L)^2`.
    pub fn dirichlet_interval(num_modes: usize, length: f64) -> Result<Self> {
        Self::dirichlet_interval_with_breaks(num_modes, length, &[])
    }

    pub fn dirichlet_interval_with_breaks(num_modes: usize, length: f64, breaks: &[f64]) -> Result<Self> {
        check_size(num_modes, length)?;
        let modes = (1..=num_modes as u32)
            .map(|k| {
                let w = k as f64 * PI / length;
                Mode { gamma: w * w, shape: ModeShape::Sine { k } }
            })
            .collect();
        let rule = CompositeRule::uniform(0.0, length, num_modes, NODES_PER_PANEL, breaks);
        let points = rule.nodes.iter().map(|&x| [x, 0.0]).collect();
        Ok(SpectralModel {
            domain: Domain::Interval { length },
            modes,
            components: 1,
            dim: 1,
            points,
            weights: rule.weights,
        })
    }

    /// Dirichlet Laplacian on (0, L)^2, modes ordered by `p^2 + q^2` then `(p, q)`.
    pub fn dirichlet_square(num_modes: usize, side: f64) -> Result<Self> {
        Self::dirichlet_square_with_breaks(num_modes, side, &[], &[])
    }

    pub fn dirichlet_square_with_breaks(
        num_modes: usize,
        side: f64,
        xbreaks: &[f64],
        ybreaks: &[f64],
    ) -> Result<Self> {
        check_size(num_modes, side)?;
        let mut radius = 1u32;
        let pairs = loop {
            let r2 = radius * radius;
            let mut pairs: Vec<(u32, u32)> = (1..=radius)
                .flat_map(|p| (1..=radius).map(move |q| (p, q)))
                .filter(|&(p, q)| p * p + q * q <= r2)
                .collect();
            if pairs.len() >= num_modes {
                pairs.sort_by_key(|&(p, q)| (p * p + q * q, p, q));
                pairs.truncate(num_modes);
                break pairs;
            }
            radius += 1;
        };
        let unit = PI / side;
        let modes: Vec<Mode> = pairs
            .iter()
            .map(|&(p, q)| Mode {
                gamma: unit * unit * (p * p + q * q) as f64,
                shape: ModeShape::SineProduct { p, q },
            })
            .collect();
        let top = pairs.iter().map(|&(p, q)| p.max(q)).max().unwrap_or(1) as usize;
        let rx = CompositeRule::uniform(0.0, side, top, NODES_PER_PANEL, xbreaks);
        let ry = CompositeRule::uniform(0.0, side, top, NODES_PER_PANEL, ybreaks);
        let mut points = Vec::with_capacity(rx.len() * ry.len());
        let mut weights = Vec::with_capacity(rx.len() * ry.len());
        for (x, wx) in rx.nodes.iter().zip(&rx.weights) {
            for (y, wy) in ry.nodes.iter().zip(&ry.weights) {
                points.push([*x, *y]);
                weights.push(wx * wy);
            }
        }
        Ok(SpectralModel {
            domain: Domain::Square { side },
            modes,
            components: 1,
            dim: 2,
            points,
            weights,
        })
    }

    /// Stokes operator on the torus `[0, P)^2`. Each wavevector `k` in the half-plane
    /// `k1 > 0 or (k1 = 0, k2 > 0)` carries a cosine and a sine field along `k^perp`;
    /// the constant mode is excluded.
    pub fn torus_stokes(num_modes: usize, period: f64) -> Result<Self> {
        check_size(num_modes, period)?;
        let mut radius = 1i32;
        let waves = loop {
            let r2 = radius * radius;
            let mut waves: Vec<(i32, i32, Phase)> = Vec::new();
            for k1 in 0..=radius {
                for k2 in -radius..=radius {
                    let upper = k1 > 0 || k2 > 0;
                    if upper && k1 * k1 + k2 * k2 <= r2 {
                        waves.push((k1, k2, Phase::Cos));
                        waves.push((k1, k2, Phase::Sin));
                    }
                }
            }
            if waves.len() >= num_modes {
                waves.sort_by_key(|&(a, b, ph)| (a * a + b * b, a, b, ph));
                waves.truncate(num_modes);
                break waves;
            }
            radius += 1;
        };
        let unit = 2.0 * PI / period;
        let modes: Vec<Mode> = waves
            .iter()
            .map(|&(k1, k2, phase)| Mode {
                gamma: unit * unit * (k1 * k1 + k2 * k2) as f64,
                shape: ModeShape::Fourier { k1, k2, phase },
            })
            .collect();
        let kmax = waves.iter().map(|&(a, b, _)| a.abs().max(b.abs())).max().unwrap_or(1) as usize;
        // Trapezoidal rule is exact for trigonometric polynomials of degree < N.
        let per_axis = (NODES_PER_PANEL * kmax).max(16);
        let h = period / per_axis as f64;
        let mut points = Vec::with_capacity(per_axis * per_axis);
        for i in 0..per_axis {
            for j in 0..per_axis {
                points.push([i as f64 * h, j as f64 * h]);
            }
        }
        let weights = alloc::vec![h * h; per_axis * per_axis];
        Ok(SpectralModel {
            domain: Domain::Torus { period },
            modes,
            components: 2,
            dim: 2,
            points,
            weights,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn gamma(&self, mode: usize) -> f64 {
        self.modes[mode].gamma
    }

    pub fn gammas(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.gamma)
    }

    pub fn max_gamma(&self) -> f64 {
        self.modes.last().map_or(0.0, |m| m.gamma)
    }

    /// Modes with `gamma <= cutoff`, up to a relative `1e-12` so that `(k pi / L)^2`
    /// rounding above `k^2` does not drop a mode.
    pub fn low_modes(&self, cutoff: f64) -> Vec<usize> {
        (0..self.modes.len()).filter(|&i| is_low(self.modes[i].gamma, cutoff)).collect()
    }

    /// Number of vector components of each eigenfunction.
    pub fn components(&self) -> usize {
        self.components
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total quadrature measure of the domain.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Value of eigenfunction `mode` at an arbitrary point; unused components are zero.
    pub fn eval_at(&self, mode: usize, p: &[f64; 2]) -> [f64; 2] {
        match (self.modes[mode].shape, self.domain) {
            (ModeShape::Sine { k }, Domain::Interval { length }) => {
                let c = libm::sqrt(2.0 / length);
                [c * libm::sin(k as f64 * PI * p[0] / length), 0.0]
            }
            (ModeShape::SineProduct { p: a, q: b }, Domain::Square { side }) => {
                let c = 2.0 / side;
                let u = PI / side;
                [c * libm::sin(a as f64 * u * p[0]) * libm::sin(b as f64 * u * p[1]), 0.0]
            }
            (ModeShape::Fourier { k1, k2, phase }, Domain::Torus { period }) => {
                let (dir, arg) = fourier_geometry(k1, k2, period, p);
                let amp = SQRT_2 / period;
                let s = match phase {
                    Phase::Cos => libm::cos(arg),
                    Phase::Sin => libm::sin(arg),
                };
                [amp * s * dir[0], amp * s * dir[1]]
            }
            _ => unreachable!("mode shape and domain are constructed together"),
        }
    }

    /// Value of eigenfunction `mode` at quadrature node `node`.
    pub fn eval(&self, mode: usize, node: usize) -> [f64; 2] {
        self.eval_at(mode, &self.points[node])
    }

    /// Analytic divergence of a vector mode at `p`; `None` for scalar models.
    pub fn divergence_at(&self, mode: usize, p: &[f64; 2]) -> Option<f64> {
        match (self.modes[mode].shape, self.domain) {
            (ModeShape::Fourier { k1, k2, phase }, Domain::Torus { period }) => {
                let (dir, arg) = fourier_geometry(k1, k2, period, p);
                let amp = SQRT_2 / period;
                let unit = 2.0 * PI / period;
                // d/dx_j of trig(arg) = trig'(arg) * unit * k_j
                let dtrig = match phase {
                    Phase::Cos => -libm::sin(arg),
                    Phase::Sin => libm::cos(arg),
                };
                let kdotdir = k1 as f64 * dir[0] + k2 as f64 * dir[1];
                Some(amp * dtrig * unit * kdotdir)
            }
            _ => None,
        }
    }

    /// `max |Gram - I|` over all modes under the quadrature.
    pub fn orthonormality_residual(&self) -> f64 {
        let all: Vec<usize> = (0..self.len()).collect();
        let members: Vec<usize> = (0..self.points.len()).collect();
        let g = self.gram_on(&members, &all, &all);
        let mut worst = 0.0f64;
        for i in 0..all.len() {
            for j in 0..all.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `sum_nodes w <phi_r, phi_c>` over the node subset `members`.
    fn gram_on(&self, members: &[usize], rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let c = self.components;
        let table = |modes: &[usize]| {
            let mut t = DMatrix::<f64>::zeros(modes.len(), members.len() * c);
            for (j, &node) in members.iter().enumerate() {
                let sw = libm::sqrt(self.weights[node]);
                for (i, &mode) in modes.iter().enumerate() {
                    let v = self.eval(mode, node);
                    for comp in 0..c {
                        t[(i, j * c + comp)] = sw * v[comp];
                    }
                }
            }
            t
        };
        let a = table(rows);
        if rows == cols {
            &a * a.transpose()
        } else {
            let b = table(cols);
            &a * b.transpose()
        }
    }
}

fn fourier_geometry(k1: i32, k2: i32, period: f64, p: &[f64; 2]) -> ([f64; 2], f64) {
    let norm = libm::sqrt((k1 * k1 + k2 * k2) as f64);
    let dir = [-(k2 as f64) / norm, k1 as f64 / norm];
    let arg = 2.0 * PI / period * (k1 as f64 * p[0] + k2 as f64 * p[1]);
    (dir, arg)
}

fn check_size(num_modes: usize, length: f64) -> Result<()> {
    if num_modes == 0 {
        return Err(Error::InvalidArgument("num_modes must be at least 1".into()));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidArgument(format!("domain size must be positive, got {length}")));
    }
    Ok(())
}

/// Control subdomain `omega_j`, rasterized onto the quadrature nodes of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct SubdomainMask {
    pub channel: usize,
    members: Vec<usize>,
    measure: f64,
}

impl SubdomainMask {
    /// Union of boxes. A node belongs to the mask iff it lies in one of the boxes.
    pub fn from_regions(model: &SpectralModel, channel: usize, regions: &[Region]) -> Result<Self> {
        for r in regions {
            if r.lo.len() != model.dim() || r.hi.len() != model.dim() {
                return Err(Error::Dimension(format!(
                    "region for channel {channel} has {} coordinates, model is {}-dimensional",
                    r.lo.len(),
                    model.dim()
                )));
            }
            if r.lo.iter().chain(&r.hi).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("region bounds"));
            }
        }
        let members: Vec<usize> = (0..model.points.len())
            .filter(|&i| regions.iter().any(|r| r.contains(&model.points[i])))
            .collect();
        let measure: f64 = members.iter().map(|&i| model.weights[i]).sum();
        if measure <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "subdomain for channel {channel} has zero measure on the quadrature grid"
            )));
        }
        Ok(SubdomainMask { channel, members, measure })
    }

    /// The whole domain.
    pub fn full(model: &SpectralModel, channel: usize) -> Self {
        SubdomainMask {
            channel,
            members: (0..model.points.len()).collect(),
            measure: model.measure(),
        }
    }

    /// Mask from an explicit list of node indices.
    pub fn from_nodes(model: &SpectralModel, channel: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.iter().any(|&i| i >= model.points.len()) {
            return Err(Error::InvalidArgument("node index out of range".into()));
        }
        let measure: f64 = members.iter().map(|&i| model.weights[i]).sum();
        if measure <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "subdomain for channel {channel} has zero measure"
            )));
        }
        Ok(SubdomainMask { channel, members, measure })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }
}

/// Mass matrix `M_kl = int_omega <phi_k, phi_l>` for the modes in `modes`.
pub fn mass_matrix(model: &SpectralModel, mask: &SubdomainMask, modes: &[usize]) -> Result<DMatrix<f64>> {
    mass_matrix_rect(model, mask, modes, modes)
}

/// Rectangular variant: rows indexed by `rows`, columns by `cols`.
pub fn mass_matrix_rect(
    model: &SpectralModel,
    mask: &SubdomainMask,
    rows: &[usize],
    cols: &[usize],
) -> Result<DMatrix<f64>> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidArgument("mass matrix over an empty mode set".into()));
    }
    if let Some(&bad) = rows.iter().chain(cols).find(|&&i| i >= model.len()) {
        return Err(Error::InvalidArgument(format!("mode {bad} not in model")));
    }
    if mask.members.iter().any(|&i| i >= model.points.len()) {
        return Err(Error::InvalidArgument("mask does not belong to this model".into()));
    }
    let mut g = model.gram_on(&mask.members, rows, cols);
    if rows == cols {
        let sym = (&g + g.transpose()) * 0.5;
        g = sym;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_spectrum_and_orthonormality() {
        let m = SpectralModel::dirichlet_interval(3, PI).unwrap();
        let g: Vec<f64> = m.gammas().collect();
        for (a, b) in g.iter().zip([1.0, 4.0, 9.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(m.points().len() >= 24);
        assert!(m.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn interval_half_domain_masses() {
        let m = SpectralModel::dirichlet_interval_with_breaks(4, PI, &[PI / 2.0]).unwrap();
        let mask = SubdomainMask::from_regions(&m, 0, &[Region::interval(0.0, PI / 2.0)]).unwrap();
        let mm = mass_matrix(&m, &mask, &[0, 1]).unwrap();
        assert!((mm[(0, 0)] - 0.5).abs() < 1e-13);
        assert!((mm[(0, 1)] - 4.0 / (3.0 * PI)).abs() < 1e-13);
        assert!((mask.measure() - PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn square_multiplicities() {
        let m = SpectralModel::dirichlet_square(6, PI).unwrap();
        let g: Vec<f64> = m.gammas().collect();
        assert_eq!(&g[..4], &[2.0, 5.0, 5.0, 8.0]);
        assert_eq!(m.modes()[1].shape, ModeShape::SineProduct { p: 1, q: 2 });
        assert_eq!(m.modes()[2].shape, ModeShape::SineProduct { p: 2, q: 1 });
        assert!(m.orthonormality_residual() < 1e-10);
    }

    #[test]
    fn torus_lowest_shell() {
        let m = SpectralModel::torus_stokes(12, 2.0 * PI).unwrap();
        let ones = m.gammas().filter(|&g| (g - 1.0).abs() < 1e-12).count();
        assert_eq!(ones, 4);
        assert!((m.gamma(4) - 2.0).abs() < 1e-12);
        assert!(m.orthonormality_residual() < 1e-10);
        for i in 0..m.len() {
            for p in [[0.3, 1.7], [4.0, 5.5], [6.0, 0.1]] {
                assert!(m.divergence_at(i, &p).unwrap().abs() < 1e-12);
                if let ModeShape::Fourier { k1, k2, .. } = m.modes()[i].shape {
                    let v = m.eval_at(i, &p);
                    assert!((k1 as f64 * v[0] + k2 as f64 * v[1]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn full_mask_is_identity_and_errors() {
        let m = SpectralModel::dirichlet_interval(5, 2.0).unwrap();
        let full = SubdomainMask::full(&m, 0);
        let mm = mass_matrix(&m, &full, &[0, 1, 2, 3, 4]).unwrap();
        assert!((mm - DMatrix::<f64>::identity(5, 5)).abs().max() < 1e-12);
        assert!(mass_matrix(&m, &full, &[]).is_err());
        assert!(SubdomainMask::from_regions(&m, 0, &[Region::interval(3.0, 4.0)]).is_err());
        assert!(SubdomainMask::from_regions(&m, 0, &[Region::rect([0.0, 0.0], [1.0, 1.0])]).is_err());
    }
}
