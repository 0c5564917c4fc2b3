//! Weighted matrix factorization for implicit feedback, fit by alternating
//! least squares.
//!
//! Preferences are the binarized interactions; confidence is
//! `c = 1 + alpha * p`, so every unobserved cell still carries weight 1.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::BinaryInteractions;
use crate::ndiff::{dot, DenseArray, Parameterized};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmfConfig {
    pub rank: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for WmfConfig {
    fn default() -> Self {
        Self {
            rank: 50,
            alpha: 40.0,
            lambda: 0.01,
            sweeps: 15,
            seed: 0,
        }
    }
}

impl WmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.sweeps == 0 {
            return Err(Error::Config("wmf rank and sweeps must be >= 1".into()));
        }
        if !(self.alpha >= 0.0) || !(self.lambda > 0.0) {
            return Err(Error::Config(format!(
                "wmf needs alpha >= 0 and lambda > 0, got {} / {}",
                self.alpha, self.lambda
            )));
        }
        Ok(())
    }
}

/// User and item latent factors, `[num_users, D]` and `[num_items, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub users: DenseArray,
    pub items: DenseArray,
}

impl Factors {
    pub fn rank(&self) -> usize {
        self.users.cols()
    }
}

impl Parameterized for Factors {
    fn named_arrays(&self) -> Vec<(String, &DenseArray)> {
        vec![("users".into(), &self.users), ("items".into(), &self.items)]
    }

    fn arrays_mut(&mut self) -> Vec<&mut DenseArray> {
        vec![&mut self.users, &mut self.items]
    }
}

fn gram(m: &DenseArray) -> DMatrix<f64> {
    let d = m.cols();
    let mut g = DMatrix::zeros(d, d);
    for r in 0..m.rows() {
        let row = m.row(r);
        for a in 0..d {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            for b in a..d {
                g[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// Normal equations `(YᵀC Y + λI) x = YᵀC p` for one row whose positives are
/// `pos` (rows of `fixed`).
pub fn normal_equations(
    fixed: &DenseArray,
    fixed_gram: &DMatrix<f64>,
    pos: &[usize],
    alpha: f64,
    lambda: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let d = fixed.cols();
    let mut a = fixed_gram.clone();
    let mut rhs = DVector::zeros(d);
    for &i in pos {
        let y = fixed.row(i);
        for p in 0..d {
            rhs[p] += (1.0 + alpha) * y[p];
            let ay = alpha * y[p];
            for q in 0..d {
                a[(p, q)] += ay * y[q];
            }
        }
    }
    for p in 0..d {
        a[(p, p)] += lambda;
    }
    (a, rhs)
}

fn solve_rows(
    target: &mut DenseArray,
    fixed: &DenseArray,
    lists: &[Vec<usize>],
    cfg: &WmfConfig,
) -> Result<()> {
    let g = gram(fixed);
    for (r, pos) in lists.iter().enumerate() {
        let (a, rhs) = normal_equations(fixed, &g, pos, cfg.alpha, cfg.lambda);
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("normal equations for row {r} not SPD")))?;
        let x = chol.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite ridge solution at row {r}")));
        }
        target.row_mut(r).copy_from_slice(x.as_slice());
    }
    Ok(())
}

/// ALS state, exposed so callers can observe each half-sweep.
pub struct WmfTrainer<'a> {
    pub factors: Factors,
    cfg: WmfConfig,
    user_lists: Vec<Vec<usize>>,
    item_lists: Vec<Vec<usize>>,
    data: &'a BinaryInteractions,
}

impl<'a> WmfTrainer<'a> {
    pub fn new(b: &'a BinaryInteractions, cfg: &WmfConfig) -> Result<Self> {
        cfg.validate()?;
        if b.num_positives() == 0 {
            return Err(Error::Validation("wmf needs at least one positive".into()));
        }
        let mut rng = rng::substream(cfg.seed, streams::INIT);
        // N(0, 0.01): variance 0.01
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut init = |rows: usize| {
            let data = (0..rows * cfg.rank).map(|_| normal.sample(&mut rng)).collect();
            DenseArray::from_parts_unchecked(vec![rows, cfg.rank], data)
        };
        let users = init(b.num_users());
        let items = init(b.num_items);
        Ok(Self {
            factors: Factors { users, items },
            cfg: cfg.clone(),
            user_lists: (0..b.num_users()).map(|u| b.positives(u).to_vec()).collect(),
            item_lists: b.item_users(),
            data: b,
        })
    }

    pub fn solve_users(&mut self) -> Result<()> {
        solve_rows(
            &mut self.factors.users,
            &self.factors.items,
            &self.user_lists,
            &self.cfg,
        )
    }

    pub fn solve_items(&mut self) -> Result<()> {
        solve_rows(
            &mut self.factors.items,
            &self.factors.users,
            &self.item_lists,
            &self.cfg,
        )
    }

    pub fn objective(&self) -> f64 {
        wmf_objective(&self.factors, self.data, &self.cfg)
    }

    /// Normal equations of user `u` against the current item factors.
    pub fn user_system(&self, u: usize) -> (DMatrix<f64>, DVector<f64>) {
        let g = gram(&self.factors.items);
        normal_equations(
            &self.factors.items,
            &g,
            &self.user_lists[u],
            self.cfg.alpha,
            self.cfg.lambda,
        )
    }

    /// Normal equations of item `i` against the current user factors.
    pub fn item_system(&self, i: usize) -> (DMatrix<f64>, DVector<f64>) {
        let g = gram(&self.factors.users);
        normal_equations(
            &self.factors.users,
            &g,
            &self.item_lists[i],
            self.cfg.alpha,
            self.cfg.lambda,
        )
    }

    pub fn into_factors(self) -> Factors {
        self.factors
    }
}

/// Runs exactly `cfg.sweeps` alternations (users, then items).
pub fn fit_wmf(b: &BinaryInteractions, cfg: &WmfConfig) -> Result<Factors> {
    let mut t = WmfTrainer::new(b, cfg)?;
    for _ in 0..cfg.sweeps {
        t.solve_users()?;
        t.solve_items()?;
    }
    Ok(t.into_factors())
}

/// `Σ c (p − uᵀv)² + λ(‖U‖² + ‖V‖²)` over every cell.
pub fn wmf_objective(f: &Factors, b: &BinaryInteractions, cfg: &WmfConfig) -> f64 {
    // Σ_all s² = Σ_u uᵀ (VᵀV) u, then correct the positive cells.
    let g = gram(&f.items);
    let d = f.rank();
    let mut total = 0.0;
    for u in 0..f.users.rows() {
        let x = f.users.row(u);
        let mut q = 0.0;
        for a in 0..d {
            q += x[a] * (0..d).map(|c| g[(a, c)] * x[c]).sum::<f64>();
        }
        total += q;
        for &i in b.positives(u) {
            let s = dot(x, f.items.row(i));
            total += (1.0 + cfg.alpha) * (1.0 - s) * (1.0 - s) - s * s;
        }
    }
    total + cfg.lambda * (f.users.sum_squares() + f.items.sum_squares())
}

/// `V u` for one user factor.
pub fn score_items(user: &DenseArray, items: &DenseArray) -> Result<DenseArray> {
    if items.ndim() != 2 || user.len() != items.cols() {
        return Err(Error::Dimension(format!(
            "score_items: user {:?} vs items {:?}",
            user.shape(),
            items.shape()
        )));
    }
    let scores = (0..items.rows())
        .map(|i| dot(user.data(), items.row(i)))
        .collect();
    Ok(DenseArray::from_parts_unchecked(vec![items.rows()], scores))
}
