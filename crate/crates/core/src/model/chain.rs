use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, SystemModel};
use crate::dsl::{Dual, Expr};
use crate::poly::{Monomial, PolyVector, TruncatedPoly};

/// Settings for certifying the relative degree.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub max_r: usize,
    /// `|dh^(j)/du|` below this counts as no dependence.
    pub threshold: f64,
    /// Half-width of the sampling box in every coordinate.
    pub sample_box: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            max_r: 8,
            threshold: 1e-9,
            sample_box: 0.5,
            samples: 100,
            seed: 0,
        }
    }
}

/// `h^(0), ..., h^(r)` together with their jets in `(x, u, w)`.
#[derive(Debug, Clone)]
pub struct OutputChain {
    pub exprs: Vec<Expr>,
    pub jets: Vec<TruncatedPoly>,
    pub r: usize,
    /// Box half-width and sample count of the relative-degree certificate.
    pub certified_box: f64,
    pub certified_samples: usize,
}

impl OutputChain {
    pub fn top(&self) -> &Expr {
        &self.exprs[self.r]
    }

    pub fn top_jet(&self) -> &TruncatedPoly {
        &self.jets[self.r]
    }
}

pub fn build_output_chain(m: &SystemModel, max_r: usize) -> Result<OutputChain, ModelError> {
    build_output_chain_with(
        m,
        &ChainConfig {
            max_r,
            ..ChainConfig::default()
        },
    )
}

pub fn build_output_chain_with(m: &SystemModel, cfg: &ChainConfig) -> Result<OutputChain, ModelError> {
    if cfg.max_r < 1 {
        return Err(ModelError::Dimension("max_r must be at least 1".into()));
    }
    let (n, k) = (m.n(), m.k());
    let arity = m.dims().xuw();
    let cap = m.jet_cap();
    let mut inner: Vec<TruncatedPoly> = m.f_jet().entries().to_vec();
    inner.push(TruncatedPoly::var(arity, cap, n));
    inner.extend(m.a_jet_xuw().into_entries());
    let inner = PolyVector::new(inner)?;

    let xs: Vec<Expr> = m.f().to_vec();
    let ws: Vec<Expr> = m.a().to_vec();
    let mut exprs = vec![m.h().clone()];
    let mut jets = vec![m.h_jet().clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..cfg.samples)
        .map(|_| {
            let mut draw = || rng.random_range(-cfg.sample_box..=cfg.sample_box);
            let x = (0..n).map(|_| draw()).collect();
            let u = draw();
            let w = (0..k).map(|_| draw()).collect();
            (x, u, w)
        })
        .collect();

    for j in 0..=cfg.max_r {
        if j > 0 {
            let prev = exprs.last().expect("chain is non-empty");
            exprs.push(prev.substitute(&xs, &Expr::u(), &ws));
            let prev_jet = jets.last().expect("chain is non-empty");
            jets.push(prev_jet.compose(&inner)?);
        }
        let slope = jets[j].coeff(&Monomial::var(n));
        if slope.abs() > cfg.threshold {
            return Ok(OutputChain {
                exprs,
                jets,
                r: j,
                certified_box: cfg.sample_box,
                certified_samples: cfg.samples,
            });
        }
        for (x, u, w) in &points {
            let xd: Vec<Dual> = x.iter().map(|&v| Dual::constant(v, 1)).collect();
            let wd: Vec<Dual> = w.iter().map(|&v| Dual::constant(v, 1)).collect();
            let ud = Dual::seed(*u, 1, 0);
            let s = m.chain_output_with(j, &xd, &ud, &wd)?.grad[0];
            if s.abs() > cfg.threshold {
                return Err(ModelError::NonUniformRelativeDegree { j, slope: s });
            }
        }
    }
    Err(ModelError::UndefinedRelativeDegree { max_r: cfg.max_r })
}

/// `l = (h^(0))^2 + (h^(r))^2`.
pub fn build_running_cost(chain: &OutputChain) -> Result<Expr, ModelError> {
    if chain.r == 0 {
        return Err(ModelError::ZeroRelativeDegree);
    }
    Ok(chain.exprs[0].powi(2) + chain.top().powi(2))
}
