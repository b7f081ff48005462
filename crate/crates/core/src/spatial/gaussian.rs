//! 2D Gaussian helpers and the Normal-Inverse-Wishart conjugate machinery
//! used by the region components.

use std::f64::consts::PI;

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

const DIM: f64 = 2.0;

pub(crate) fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub(crate) fn inverse(m: &Mat2) -> Mat2 {
    let d = det(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

pub(crate) fn is_spd(m: &Mat2) -> bool {
    let finite = m.iter().flatten().all(|v| v.is_finite());
    finite && m[0][1] == m[1][0] && m[0][0] > 0.0 && det(m) > 0.0
}

fn quad_form(x: Vec2, mean: Vec2, inv: &Mat2) -> f64 {
    let d = [x[0] - mean[0], x[1] - mean[1]];
    d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1])
}

/// Log density of `N(x; mean, cov)`.
pub fn gaussian_log_density(x: Vec2, mean: Vec2, cov: &Mat2) -> f64 {
    let inv = inverse(cov);
    -0.5 * (DIM * (2.0 * PI).ln() + det(cov).ln() + quad_form(x, mean, &inv))
}

/// Running sufficient statistics of the positions assigned to one region.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct NiwStats {
    pub n: usize,
    pub sum: Vec2,
    pub outer: Mat2,
}

impl NiwStats {
    pub fn add(&mut self, x: Vec2) {
        self.n += 1;
        self.sum[0] += x[0];
        self.sum[1] += x[1];
        self.outer[0][0] += x[0] * x[0];
        self.outer[0][1] += x[0] * x[1];
        self.outer[1][0] += x[1] * x[0];
        self.outer[1][1] += x[1] * x[1];
    }

    pub fn remove(&mut self, x: Vec2) {
        debug_assert!(self.n > 0);
        self.n -= 1;
        if self.n == 0 {
            *self = NiwStats::default();
            return;
        }
        self.sum[0] -= x[0];
        self.sum[1] -= x[1];
        self.outer[0][0] -= x[0] * x[0];
        self.outer[0][1] -= x[0] * x[1];
        self.outer[1][0] -= x[1] * x[0];
        self.outer[1][1] -= x[1] * x[1];
    }
}

/// Posterior NIW parameters `(m_n, kappa_n, nu_n, Psi_n)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NiwPosterior {
    pub mean: Vec2,
    pub kappa: f64,
    pub nu: f64,
    pub scale: Mat2,
}

impl NiwPosterior {
    pub fn new(m0: Vec2, kappa0: f64, nu0: f64, psi0: &Mat2, stats: &NiwStats) -> Self {
        let n = stats.n as f64;
        let kappa = kappa0 + n;
        let nu = nu0 + n;
        let mean = [(kappa0 * m0[0] + stats.sum[0]) / kappa, (kappa0 * m0[1] + stats.sum[1]) / kappa];
        let mut scale = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                scale[a][b] = psi0[a][b] + stats.outer[a][b] + kappa0 * m0[a] * m0[b]
                    - kappa * mean[a] * mean[b];
            }
        }
        let off = 0.5 * (scale[0][1] + scale[1][0]);
        scale[0][1] = off;
        scale[1][0] = off;
        NiwPosterior { mean, kappa, nu, scale }
    }

    /// Log density of the Student-t posterior predictive at `x`.
    pub fn predictive_log_density(&self, x: Vec2) -> f64 {
        let df = self.nu - DIM + 1.0;
        let factor = (self.kappa + 1.0) / (self.kappa * df);
        let shape = [
            [self.scale[0][0] * factor, self.scale[0][1] * factor],
            [self.scale[1][0] * factor, self.scale[1][1] * factor],
        ];
        let delta = quad_form(x, self.mean, &inverse(&shape));
        libm::lgamma((df + DIM) / 2.0)
            - libm::lgamma(df / 2.0)
            - (DIM / 2.0) * (df * PI).ln()
            - 0.5 * det(&shape).ln()
            - ((df + DIM) / 2.0) * (delta / df).ln_1p()
    }

    /// Posterior mean of the covariance when it exists (`nu > d + 1`),
    /// otherwise the posterior mode.
    pub fn covariance_estimate(&self) -> Mat2 {
        let denom = if self.nu > DIM + 1.0 { self.nu - DIM - 1.0 } else { self.nu + DIM + 1.0 };
        [
            [self.scale[0][0] / denom, self.scale[0][1] / denom],
            [self.scale[1][0] / denom, self.scale[1][1] / denom],
        ]
    }
}
