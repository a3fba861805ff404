use super::model::FsaModel;
use crate::kernels::{distance_matrix, Param, SparseSym};
use crate::linalg::{dot, mat_t_vec, mat_vec, DenseMatrix};
use crate::operator::LinearOperator;

/// Derivative of the low-rank part Σ_l = Σ_mnᵀΣ_m⁻¹Σ_mn.
#[derive(Clone, Debug)]
pub enum LowRankDeriv {
    Zero,
    /// ∂Σ_l = s·Σ_l
    Scaled(f64),
    /// ∂Σ_l = dKᵀW + WᵀdK − WᵀdΣ_m W
    General { dk: DenseMatrix, dsm: DenseMatrix },
}

/// ∂Σ̃†/∂θ for one parameter: sparse part on the taper pattern plus low-rank part.
#[derive(Clone, Debug)]
pub struct ParamDeriv {
    pub param: Param,
    pub sparse: SparseSym,
    pub low: LowRankDeriv,
}

/// Derivatives for all parameters in the order (σ², σ₁², ρ).
#[derive(Clone, Debug)]
pub struct FsaDerivatives<'a> {
    model: &'a FsaModel,
    /// W = Σ_m⁻¹Σ_mn
    w: DenseMatrix,
    pub params: Vec<ParamDeriv>,
}

impl<'a> FsaDerivatives<'a> {
    pub fn new(model: &'a FsaModel) -> Self {
        let w = model.w();
        let p = &model.params;
        let s2 = p.sigma1_2;

        let d_nugget = ParamDeriv {
            param: Param::Sigma2,
            sparse: model
                .sigma_s()
                .map_values(|i, j, _| if i == j { 1.0 } else { 0.0 }),
            low: LowRankDeriv::Zero,
        };

        // Everything except the nugget is linear in σ₁², jitter included.
        let d_marginal = ParamDeriv {
            param: Param::Sigma1Sq,
            sparse: model.sigma_s().map_values(|i, j, v| {
                if i == j {
                    (v - p.sigma2) / s2
                } else {
                    v / s2
                }
            }),
            low: LowRankDeriv::Scaled(1.0 / s2),
        };

        let kernel = model.kernel;
        let dk = {
            let dist = distance_matrix(&model.inducing.locs, &model.locs)
                .expect("dimensions checked at assembly");
            DenseMatrix::from_fn(dist.nrows(), dist.ncols(), |a, i| kernel.dcov_drho(p, dist[(a, i)]))
        };
        let dsm = {
            let dist = distance_matrix(&model.inducing.locs, &model.inducing.locs)
                .expect("dimensions checked at assembly");
            DenseMatrix::from_fn(dist.nrows(), dist.ncols(), |a, b| kernel.dcov_drho(p, dist[(a, b)]))
        };
        let u = &dsm * &w;
        let clamped = model.clamped();
        let taper = model.taper;
        let pattern = model.pattern();
        let sparse_rho = pattern.map_values(|i, j, dist| {
            let dl = dot(dk.col_as_slice(i), w.col_as_slice(j)) + dot(w.col_as_slice(i), dk.col_as_slice(j))
                - dot(w.col_as_slice(i), u.col_as_slice(j));
            if i == j {
                if clamped[i] {
                    0.0
                } else {
                    -dl
                }
            } else {
                (kernel.dcov_drho(p, dist) - dl) * taper.value(dist)
            }
        });
        let d_range = ParamDeriv {
            param: Param::Rho,
            sparse: sparse_rho,
            low: LowRankDeriv::General { dk, dsm },
        };
        Self {
            model,
            w,
            params: vec![d_nugget, d_marginal, d_range],
        }
    }

    pub fn model(&self) -> &FsaModel {
        self.model
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn get(&self, p: Param) -> &ParamDeriv {
        &self.params[p.index()]
    }

    /// Matrix-free view of ∂Σ̃†/∂θ.
    pub fn operator(&self, p: Param) -> DerivOperator<'_> {
        DerivOperator {
            derivs: self,
            which: p.index(),
        }
    }

    /// `out ← ∂Σ̃†/∂θ x`
    pub fn apply(&self, p: Param, x: &[f64], out: &mut [f64]) {
        let d = &self.params[p.index()];
        d.sparse.matvec(x, out);
        add_low_rank_deriv(&d.low, self.model.v(), &self.w, x, out);
    }

    /// Dense ∂Σ̃†/∂θ, for oracles.
    pub fn to_dense(&self, p: Param) -> DenseMatrix {
        let d = &self.params[p.index()];
        let mut a = match &d.low {
            LowRankDeriv::Zero => DenseMatrix::zeros(self.model.n(), self.model.n()),
            LowRankDeriv::Scaled(s) => (self.model.v().transpose() * self.model.v()) * faer::Scale(*s),
            LowRankDeriv::General { dk, dsm } => {
                let kw = dk.transpose() * &self.w;
                let wdw = self.w.transpose() * dsm * &self.w;
                &kw + kw.transpose() - wdw
            }
        };
        for i in 0..self.model.n() {
            let (cols, vals) = d.sparse.row(i);
            for (&j, &x) in cols.iter().zip(vals) {
                a[(i, j)] += x;
            }
        }
        a
    }
}

/// `out += ∂Σ_l x` for a low-rank derivative with factors V (Σ_l = VᵀV) and
/// W = Σ_m⁻¹Σ_mn.
pub fn add_low_rank_deriv(low: &LowRankDeriv, v: &DenseMatrix, w: &DenseMatrix, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let m = v.nrows();
    match low {
        LowRankDeriv::Zero => {}
        LowRankDeriv::Scaled(s) => {
            let mut t = vec![0.0; m];
            mat_vec(v, x, &mut t);
            let mut lr = vec![0.0; n];
            mat_t_vec(v, &t, &mut lr);
            for (o, l) in out.iter_mut().zip(&lr) {
                *o += s * l;
            }
        }
        LowRankDeriv::General { dk, dsm } => {
            let mut a = vec![0.0; m];
            let mut b = vec![0.0; m];
            mat_vec(w, x, &mut a);
            mat_vec(dk, x, &mut b);
            let mut c = vec![0.0; m];
            mat_vec(dsm, &a, &mut c);
            for (bi, ci) in b.iter_mut().zip(&c) {
                *bi -= ci;
            }
            let mut t1 = vec![0.0; n];
            let mut t2 = vec![0.0; n];
            mat_t_vec(dk, &a, &mut t1);
            mat_t_vec(w, &b, &mut t2);
            for ((o, x1), x2) in out.iter_mut().zip(&t1).zip(&t2) {
                *o += x1 + x2;
            }
        }
    }
}

pub struct DerivOperator<'a> {
    derivs: &'a FsaDerivatives<'a>,
    which: usize,
}

impl LinearOperator for DerivOperator<'_> {
    fn dim(&self) -> usize {
        self.derivs.model.n()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.derivs.apply(Param::ALL[self.which], x, out);
    }
}
