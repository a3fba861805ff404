use rand::RngCore;

use super::Preconditioner;
use crate::error::{check_len, GpError, Result};
use crate::fsa::{derivs::add_low_rank_deriv, FsaDerivatives, FsaModel, LowRankDeriv};
use crate::kernels::Param;
use crate::linalg::{dot, mat_t_vec, mat_vec, Cholesky, DenseMatrix};
use crate::random::gaussian_vec;

/// P̂ = D + VᵀV with V = L_m⁻¹Σ_mn, i.e. D + Σ_mnᵀΣ_m⁻¹Σ_mn.
///
/// Solves go through C = I + V D⁻¹ Vᵀ: P̂⁻¹ = D⁻¹ − QᵀQ with Q = L_C⁻¹ V D⁻¹.
#[derive(Clone, Debug)]
pub struct FitcPrecond {
    v: DenseMatrix,
    d: Vec<f64>,
    q: DenseMatrix,
    l_c: Cholesky,
    grad: Option<FitcGrad>,
}

#[derive(Clone, Debug)]
struct FitcGrad {
    w: DenseMatrix,
    dd: [Vec<f64>; 3],
    low: [LowRankDeriv; 3],
}

impl FitcPrecond {
    pub fn new(v: DenseMatrix, d: Vec<f64>) -> Result<Self> {
        check_len("FITC diagonal", v.ncols(), d.len())?;
        if d.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(GpError::NotPositiveDefinite {
                stage: "FITC diagonal".into(),
            });
        }
        let m = v.nrows();
        let mut vd = v.clone();
        for (j, dj) in d.iter().enumerate() {
            let s = 1.0 / dj.sqrt();
            vd.col_as_slice_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        let mut c = &vd * vd.transpose();
        for i in 0..m {
            c[(i, i)] += 1.0;
        }
        let l_c = Cholesky::new(c.as_ref(), "FITC Woodbury core")?;
        let mut q = vd;
        for (j, dj) in d.iter().enumerate() {
            let s = 1.0 / dj.sqrt();
            q.col_as_slice_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        l_c.solve_lower_in_place(q.as_mut());
        Ok(Self {
            v,
            d,
            q,
            l_c,
            grad: None,
        })
    }

    /// FITC preconditioner of an assembled model: D = diag(Σ̃_s).
    pub fn for_model(model: &FsaModel) -> Result<Self> {
        Self::new(model.v().clone(), model.sparse_diag())
    }

    pub fn with_gradients(mut self, derivs: &FsaDerivatives<'_>) -> Self {
        self.grad = Some(FitcGrad {
            w: derivs.w().clone(),
            dd: Param::ALL.map(|p| derivs.get(p).sparse.diag()),
            low: Param::ALL.map(|p| derivs.get(p).low.clone()),
        });
        self
    }

    pub fn diag(&self) -> &[f64] {
        &self.d
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut p = self.v.transpose() * &self.v;
        for (i, di) in self.d.iter().enumerate() {
            p[(i, i)] += di;
        }
        p
    }

    fn grad(&self) -> Result<&FitcGrad> {
        self.grad
            .as_ref()
            .ok_or_else(|| GpError::Domain("FITC preconditioner built without derivatives".into()))
    }
}

fn frob(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    (0..a.ncols()).map(|j| dot(a.col_as_slice(j), b.col_as_slice(j))).sum()
}

impl Preconditioner for FitcPrecond {
    fn dim(&self) -> usize {
        self.d.len()
    }

    fn solve(&self, r: &[f64], out: &mut [f64]) {
        let mut t = vec![0.0; self.q.nrows()];
        mat_vec(&self.q, r, &mut t);
        mat_t_vec(&self.q, &t, out);
        for ((o, ri), di) in out.iter_mut().zip(r).zip(&self.d) {
            *o = ri / di - *o;
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut t = vec![0.0; self.v.nrows()];
        mat_vec(&self.v, x, &mut t);
        mat_t_vec(&self.v, &t, out);
        for ((o, xi), di) in out.iter_mut().zip(x).zip(&self.d) {
            *o += xi * di;
        }
    }

    fn logdet(&self) -> f64 {
        self.l_c.logdet() + self.d.iter().map(|x| x.ln()).sum::<f64>()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let e1 = gaussian_vec(rng, self.v.nrows());
        let e2 = gaussian_vec(rng, self.d.len());
        let mut z = vec![0.0; self.d.len()];
        mat_t_vec(&self.v, &e1, &mut z);
        for ((zi, ei), di) in z.iter_mut().zip(&e2).zip(&self.d) {
            *zi += di.sqrt() * ei;
        }
        z
    }

    fn grad_logdet_trace(&self, wrt: Param) -> Result<f64> {
        let g = self.grad()?;
        let n = self.d.len();
        let dd = &g.dd[wrt.index()];
        let qcol = |i: usize| -> f64 { dot(self.q.col_as_slice(i), self.q.col_as_slice(i)) };
        let mut t: f64 = (0..n)
            .map(|i| if dd[i] == 0.0 { 0.0 } else { dd[i] * (1.0 / self.d[i] - qcol(i)) })
            .sum();
        t += match &g.low[wrt.index()] {
            LowRankDeriv::Zero => 0.0,
            LowRankDeriv::Scaled(s) => {
                let direct: f64 = (0..n)
                    .map(|i| dot(self.v.col_as_slice(i), self.v.col_as_slice(i)) / self.d[i])
                    .sum();
                let qv = &self.q * self.v.transpose();
                s * (direct - frob(&qv, &qv))
            }
            LowRankDeriv::General { dk, dsm } => {
                let w = &g.w;
                let direct: f64 = (0..n)
                    .map(|i| dot(w.col_as_slice(i), dk.col_as_slice(i)) / self.d[i])
                    .sum();
                let qw = &self.q * w.transpose();
                let qk = &self.q * dk.transpose();
                let t1 = direct - frob(&qk, &qw);
                let mut wdw = w.clone();
                for (j, dj) in self.d.iter().enumerate() {
                    let s = 1.0 / dj.sqrt();
                    wdw.col_as_slice_mut(j).iter_mut().for_each(|x| *x *= s);
                }
                let core = &wdw * wdw.transpose() - qw.transpose() * &qw;
                2.0 * t1 - frob(dsm, &core)
            }
        };
        Ok(t)
    }

    fn deriv_apply(&self, wrt: Param, x: &[f64], out: &mut [f64]) -> Result<()> {
        let g = self.grad()?;
        for ((o, xi), di) in out.iter_mut().zip(x).zip(&g.dd[wrt.index()]) {
            *o = xi * di;
        }
        add_low_rank_deriv(&g.low[wrt.index()], &self.v, &g.w, x, out);
        Ok(())
    }

    fn name(&self) -> &'static str {
        "fitc"
    }
}
