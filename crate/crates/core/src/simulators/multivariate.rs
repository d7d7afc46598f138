use nalgebra::{Matrix5, SymmetricEigen, Vector5};

use crate::dist::{standard_normal, Distribution};
use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Seed of the standard-normal matrix behind the committed mixing matrix.
pub const R_MATRIX_SEED: u64 = 5_0505;

const COMMITTED_R: &str = include_str!("../../data/multivariate_r.txt");

/// 5x5 mixing matrix `x = R z`.
#[derive(Clone, Debug, PartialEq)]
pub struct RMatrix(Matrix5<f64>);

impl RMatrix {
    pub fn identity() -> Self {
        Self(Matrix5::identity())
    }

    pub fn from_rows(rows: [[f64; 5]; 5]) -> Self {
        Self(Matrix5::from_fn(|i, j| rows[i][j]))
    }

    /// The matrix shipped in `data/multivariate_r.txt`.
    pub fn committed() -> Self {
        Self::parse(COMMITTED_R).expect("committed R matrix parses")
    }

    /// Five whitespace-separated rows of five decimals; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Configuration(format!("bad R entry '{v}': {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        if rows.len() != 5 || rows.iter().any(|r| r.len() != 5) {
            return Err(Error::Configuration("R matrix must be 5x5".into()));
        }
        Ok(Self(Matrix5::from_fn(|i, j| rows[i][j])))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# 5x5 mixing matrix of the multivariate simulator, row-major\n");
        for i in 0..5 {
            let row: Vec<String> = (0..5).map(|j| format!("{:.17e}", self.0[(i, j)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn apply(&self, z: &[f64; 5]) -> [f64; 5] {
        let x = self.0 * Vector5::from_column_slice(z);
        [x[0], x[1], x[2], x[3], x[4]]
    }

    pub fn inverse(&self) -> Result<RMatrix> {
        self.0
            .try_inverse()
            .map(RMatrix)
            .ok_or_else(|| Error::Configuration("R matrix is not invertible".into()))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (self.0 + self.0.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// `A^T A + 0.1 I` for a standard-normal `A` drawn from `seed`, rescaled so
/// the largest eigenvalue is 2.
pub fn generate_r_matrix(seed: u64) -> RMatrix {
    let mut rng = RandomSource::new(seed);
    let a = Matrix5::from_fn(|_, _| standard_normal(&mut rng));
    let r = a.transpose() * a + Matrix5::identity() * 0.1;
    let top = SymmetricEigen::new(r).eigenvalues.max();
    RMatrix(r * (2.0 / top))
}

/// Latent marginals for `theta`; `z1`'s second argument is a standard
/// deviation, as are the mixture component scales.
pub fn latent_marginals(theta: [f64; 3]) -> Result<[Distribution; 5]> {
    if !(theta[2] > -5.0) {
        return Err(Error::ParameterDomain(format!(
            "uniform upper bound theta_2 = {} must exceed -5",
            theta[2]
        )));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::ParameterDomain(format!("non-finite parameter {theta:?}")));
    }
    Ok([
        Distribution::Normal { mean: theta[0], std: 1.0 },
        Distribution::Normal {
            mean: 3.0,
            std: (theta[1] / 3.0).exp(),
        },
        Distribution::GaussianMixture(vec![(0.5, -2.0, 0.5), (0.5, 2.0, 1.0)]),
        Distribution::Uniform {
            low: -5.0,
            high: theta[2],
        },
        Distribution::Exponential { rate: 0.5 },
    ])
}

/// `m` observations `x = R z` with independent latent components.
pub fn multivariate_forward(theta: [f64; 3], m: usize, r: &RMatrix, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
    let marginals = latent_marginals(theta)?;
    Ok((0..m)
        .map(|_| {
            let mut z = [0.0; 5];
            for (zi, d) in z.iter_mut().zip(&marginals) {
                *zi = d.draw(rng);
            }
            r.apply(&z).to_vec()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_mean(obs: &[Vec<f64>], j: usize) -> f64 {
        obs.iter().map(|o| o[j]).sum::<f64>() / obs.len() as f64
    }

    #[test]
    fn committed_matrix_matches_generator() {
        let generated = generate_r_matrix(R_MATRIX_SEED);
        let committed = RMatrix::committed();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(generated.get(i, j), committed.get(i, j), "entry ({i},{j})");
            }
        }
        let ev = committed.eigenvalues();
        assert!((ev[4] - 2.0).abs() < 1e-12);
        assert!(ev[0] > 0.0);
        assert!(committed.inverse().is_ok());
    }

    #[test]
    fn identity_marginal_means() {
        let n = 100_000;
        let theta = [1.2, 0.0, 2.0];
        let obs = multivariate_forward(theta, n, &RMatrix::identity(), &mut RandomSource::new(1)).unwrap();
        let se = |var: f64| 3.0 * (var / n as f64).sqrt();
        assert!((column_mean(&obs, 0) - 1.2).abs() < se(1.0));
        assert!((column_mean(&obs, 4) - 2.0).abs() < se(4.0));
    }

    #[test]
    fn mixed_means_follow_linearity() {
        let n = 100_000;
        let theta = [-1.0, 1.5, 0.5];
        let r = RMatrix::committed();
        let marg = latent_marginals(theta).unwrap();
        let ez: Vec<f64> = marg.iter().map(Distribution::mean).collect();
        assert_eq!(ez, vec![-1.0, 3.0, 0.0, (0.5 - 5.0) / 2.0, 2.0]);
        let ex = r.apply(&[ez[0], ez[1], ez[2], ez[3], ez[4]]);
        let obs = multivariate_forward(theta, n, &r, &mut RandomSource::new(2)).unwrap();
        for j in 0..5 {
            let var: f64 = (0..5).map(|k| r.get(j, k).powi(2) * marg[k].variance()).sum();
            assert!((column_mean(&obs, j) - ex[j]).abs() < 3.0 * (var / n as f64).sqrt(), "component {j}");
        }
    }

    #[test]
    fn identity_marginals_pass_ks() {
        let n = 10_000;
        let theta = [0.5, -1.0, 1.0];
        let obs = multivariate_forward(theta, n, &RMatrix::identity(), &mut RandomSource::new(3)).unwrap();
        let marg = latent_marginals(theta).unwrap();
        for (j, d) in marg.iter().enumerate() {
            let mut col: Vec<f64> = obs.iter().map(|o| o[j]).collect();
            col.sort_by(f64::total_cmp);
            let ks = col
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = d.cdf(x);
                    (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 1.63 / (n as f64).sqrt(), "component {j}: KS {ks}");
        }
    }

    #[test]
    fn uniform_bound_domain() {
        let r = RMatrix::identity();
        assert!(matches!(
            multivariate_forward([0.0, 0.0, -5.0], 3, &r, &mut RandomSource::new(0)),
            Err(Error::ParameterDomain(_))
        ));
        assert!(multivariate_forward([0.0, 0.0, -4.9], 3, &r, &mut RandomSource::new(0)).is_ok());
    }

    #[test]
    fn parse_rejects_bad_text() {
        assert!(RMatrix::parse("1 2 3").is_err());
        assert!(RMatrix::parse(&RMatrix::identity().to_text()).is_ok());
        let singular = RMatrix::from_rows([[0.0; 5]; 5]);
        assert!(singular.inverse().is_err());
    }
}
