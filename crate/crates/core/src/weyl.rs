//! Weyl connections from a gauge pair `(g, theta)` on a chart.
//!
//! The connection is `D = nabla^g + theta~` with the full correction
//! `D_X Y = nabla_X Y + theta(X) Y + theta(Y) X - g(X,Y) theta#`, so that
//! `D g = -2 theta (x) g` and the Lee form transforms as `theta -> theta - du`
//! under `g -> e^{2u} g`. Curvature follows
//! `R^D(X,Y)Z = [D_X, D_Y]Z - D_{[X,Y]}Z`, lowered with the gauge metric in
//! the last slot. All derivatives of the Christoffel symbols entering the
//! curvature are assembled from exact symbolic derivatives of the metric
//! entries; no finite differences anywhere.

use crate::error::{Error, Result};
use crate::expr::{Chart, ScalarExpr};
use crate::sample::quasirandom_points;
use crate::tensor::{
    flat_index, increasing_tuples, inner, interior, wedge, KFormValue, TensorValue, Variance,
};
use nalgebra::{DMatrix, DVector};

/// Chart + gauge metric + Lee form; houses the conformal class `[g]` and the
/// Weyl structure `D` through the gauge pair.
#[derive(Debug, Clone)]
pub struct WeylChart {
    chart: Chart,
    g: Vec<ScalarExpr>,     // n*n, row-major, symmetric
    theta: Vec<ScalarExpr>, // n
    dg: Vec<ScalarExpr>,    // [i][j][m]
    ddg: Vec<ScalarExpr>,   // [i][j][m][r]
    dtheta: Vec<ScalarExpr>, // [i][m]
}

impl WeylChart {
    pub fn new(chart: Chart, g: Vec<ScalarExpr>, theta: Vec<ScalarExpr>) -> Result<Self> {
        let n = chart.dim();
        if !(2..=6).contains(&n) {
            return Err(Error::UnsupportedDimension(n, 2, 6));
        }
        if g.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: g.len(),
            });
        }
        if theta.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: theta.len(),
            });
        }
        for e in g.iter().chain(theta.iter()) {
            if let Some(m) = e.max_coord() {
                if m >= n {
                    return Err(Error::Invalid(format!(
                        "expression uses coordinate x{} beyond chart dim {}",
                        m + 1,
                        n
                    )));
                }
            }
        }
        let mut dg = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for m in 0..n {
                    dg.push(g[i * n + j].partial(m));
                }
            }
        }
        let mut ddg = Vec::with_capacity(n * n * n * n);
        for i in 0..n {
            for j in 0..n {
                for m in 0..n {
                    for r in 0..n {
                        ddg.push(dg[(i * n + j) * n + m].partial(r));
                    }
                }
            }
        }
        let mut dtheta = Vec::with_capacity(n * n);
        for i in 0..n {
            for m in 0..n {
                dtheta.push(theta[i].partial(m));
            }
        }
        let w = WeylChart {
            chart,
            g,
            theta,
            dg,
            ddg,
            dtheta,
        };
        // symmetry and positive definiteness, sampled over the box
        for p in quasirandom_points(w.chart.bounds(), 32, 0x5eed) {
            let jet = w.point_jet_unchecked(&p)?;
            let scale = jet.g.amax().max(1.0);
            for i in 0..n {
                for j in 0..n {
                    if (jet.g[(i, j)] - jet.g[(j, i)]).abs() > 1e-10 * scale {
                        return Err(Error::Invalid("gauge metric is not symmetric".into()));
                    }
                }
            }
        }
        Ok(w)
    }

    /// Metric given as rows of expressions.
    pub fn from_rows(chart: Chart, rows: Vec<Vec<ScalarExpr>>, theta: Vec<ScalarExpr>) -> Result<Self> {
        let n = chart.dim();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rows.len(),
            });
        }
        WeylChart::new(chart, rows.into_iter().flatten().collect(), theta)
    }

    /// Flat metric with zero Lee form.
    pub fn flat(chart: Chart) -> Result<Self> {
        let n = chart.dim();
        let mut g = vec![ScalarExpr::zero(); n * n];
        for i in 0..n {
            g[i * n + i] = ScalarExpr::one();
        }
        WeylChart::new(chart, g, vec![ScalarExpr::zero(); n])
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn metric_exprs(&self) -> &[ScalarExpr] {
        &self.g
    }

    pub fn lee_form_exprs(&self) -> &[ScalarExpr] {
        &self.theta
    }

    pub fn metric_at(&self, p: &[f64]) -> Result<crate::tensor::MetricValue> {
        self.chart.check_point(p)?;
        let n = self.dim();
        let mut e = Vec::with_capacity(n * n);
        for v in &self.g {
            e.push(v.eval(p)?);
        }
        crate::tensor::MetricValue::new(n, e)
    }

    fn point_jet_unchecked(&self, p: &[f64]) -> Result<PointJet> {
        let n = self.dim();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = self.g[i * n + j].eval(p)?;
            }
        }
        let mut dg = vec![0.0; n * n * n];
        for (k, e) in self.dg.iter().enumerate() {
            dg[k] = e.eval(p)?;
        }
        let mut ddg = vec![0.0; n * n * n * n];
        for (k, e) in self.ddg.iter().enumerate() {
            ddg[k] = e.eval(p)?;
        }
        let mut theta = vec![0.0; n];
        for (k, e) in self.theta.iter().enumerate() {
            theta[k] = e.eval(p)?;
        }
        let mut dtheta = vec![0.0; n * n];
        for (k, e) in self.dtheta.iter().enumerate() {
            dtheta[k] = e.eval(p)?;
        }
        let gi = g.clone().try_inverse().ok_or(Error::SingularMetric)?;
        Ok(PointJet {
            n,
            g,
            gi,
            dg,
            ddg,
            theta,
            dtheta,
        })
    }

    pub(crate) fn point_jet(&self, p: &[f64]) -> Result<PointJet> {
        self.chart.check_point(p)?;
        let jet = self.point_jet_unchecked(p)?;
        // leading principal minors of the gauge metric must stay positive
        for k in 1..=jet.n {
            if !(jet.g.view((0, 0), (k, k)).determinant() > 0.0) {
                return Err(Error::SingularMetric);
            }
        }
        Ok(jet)
    }
}

/// Evaluated 2-jet of the gauge pair at a point.
pub(crate) struct PointJet {
    pub n: usize,
    pub g: DMatrix<f64>,
    pub gi: DMatrix<f64>,
    dg: Vec<f64>,
    ddg: Vec<f64>,
    pub theta: Vec<f64>,
    dtheta: Vec<f64>,
}

impl PointJet {
    #[inline]
    pub fn dg(&self, i: usize, j: usize, m: usize) -> f64 {
        self.dg[(i * self.n + j) * self.n + m]
    }

    #[inline]
    fn ddg(&self, i: usize, j: usize, m: usize, r: usize) -> f64 {
        self.ddg[((i * self.n + j) * self.n + m) * self.n + r]
    }

    #[inline]
    pub fn dtheta(&self, i: usize, m: usize) -> f64 {
        self.dtheta[i * self.n + m]
    }

    /// Levi-Civita Christoffel symbols, layout [k][i][j].
    pub fn christoffel_lc(&self) -> Vec<f64> {
        let n = self.n;
        let mut gam = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += self.gi[(k, l)] * (self.dg(j, l, i) + self.dg(i, l, j) - self.dg(i, j, l));
                    }
                    gam[(k * n + i) * n + j] = 0.5 * s;
                }
            }
        }
        gam
    }

    /// d_m g^{kl}, layout [k][l][m].
    fn dginv(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n];
        for k in 0..n {
            for l in 0..n {
                for m in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            s -= self.gi[(k, a)] * self.dg(a, b, m) * self.gi[(b, l)];
                        }
                    }
                    out[(k * n + l) * n + m] = s;
                }
            }
        }
        out
    }

    /// d_m Gamma^k_ij for the Levi-Civita connection, layout [k][i][j][m].
    fn dchristoffel_lc(&self) -> Vec<f64> {
        let n = self.n;
        let dgi = self.dginv();
        let mut out = vec![0.0; n * n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for m in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            s += dgi[(k * n + l) * n + m]
                                * (self.dg(j, l, i) + self.dg(i, l, j) - self.dg(i, j, l));
                            s += self.gi[(k, l)]
                                * (self.ddg(j, l, i, m) + self.ddg(i, l, j, m) - self.ddg(i, j, l, m));
                        }
                        out[((k * n + i) * n + j) * n + m] = 0.5 * s;
                    }
                }
            }
        }
        out
    }

    /// Weyl Christoffel symbols `Gamma + theta_i d^k_j + theta_j d^k_i - g_ij theta^k`.
    pub fn christoffel_weyl(&self) -> Vec<f64> {
        let n = self.n;
        let mut gam = self.christoffel_lc();
        let thup: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|l| self.gi[(k, l)] * self.theta[l]).sum())
            .collect();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut c = 0.0;
                    if k == j {
                        c += self.theta[i];
                    }
                    if k == i {
                        c += self.theta[j];
                    }
                    c -= self.g[(i, j)] * thup[k];
                    gam[(k * n + i) * n + j] += c;
                }
            }
        }
        gam
    }

    fn dchristoffel_weyl(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = self.dchristoffel_lc();
        let dgi = self.dginv();
        let thup: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|l| self.gi[(k, l)] * self.theta[l]).sum())
            .collect();
        let mut dthup = vec![0.0; n * n]; // [k][m]
        for k in 0..n {
            for m in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += dgi[(k * n + l) * n + m] * self.theta[l] + self.gi[(k, l)] * self.dtheta(l, m);
                }
                dthup[k * n + m] = s;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for m in 0..n {
                        let mut c = 0.0;
                        if k == j {
                            c += self.dtheta(i, m);
                        }
                        if k == i {
                            c += self.dtheta(j, m);
                        }
                        c -= self.dg(i, j, m) * thup[k] + self.g[(i, j)] * dthup[k * n + m];
                        out[((k * n + i) * n + j) * n + m] += c;
                    }
                }
            }
        }
        out
    }

    /// Weyl curvature as a (1,3) array, layout [l][i][j][k]:
    /// `R(d_i, d_j) d_k = R13[l][i][j][k] d_l`.
    pub fn curvature13(&self) -> Vec<f64> {
        let n = self.n;
        let gam = self.christoffel_weyl();
        let dgam = self.dchristoffel_weyl();
        let gm = |k: usize, i: usize, j: usize| gam[(k * n + i) * n + j];
        let dgm = |k: usize, i: usize, j: usize, m: usize| dgam[((k * n + i) * n + j) * n + m];
        let mut out = vec![0.0; n * n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut v = dgm(l, j, k, i) - dgm(l, i, k, j);
                        for a in 0..n {
                            v += gm(l, i, a) * gm(a, j, k) - gm(l, j, a) * gm(a, i, k);
                        }
                        out[((l * n + i) * n + j) * n + k] = v;
                    }
                }
            }
        }
        out
    }

    /// All-covariant curvature `R[i][j][k][m] = g(R(d_i,d_j)d_k, d_m)`.
    pub fn curvature_lowered(&self, r13: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for m in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            s += r13[((l * n + i) * n + j) * n + k] * self.g[(l, m)];
                        }
                        out[((i * n + j) * n + k) * n + m] = s;
                    }
                }
            }
        }
        out
    }

    /// Faraday components `F_ij = d_i theta_j - d_j theta_i`.
    pub fn faraday_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| self.dtheta(j, i) - self.dtheta(i, j))
    }

    /// g-orthonormal, positively oriented frame (columns) and coframe (rows).
    pub fn frame(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let chol = self.g.clone().cholesky().ok_or(Error::SingularMetric)?;
        let coframe = chol.l().transpose();
        let frame = coframe.clone().try_inverse().ok_or(Error::SingularMetric)?;
        Ok((frame, coframe))
    }
}

/// Christoffel symbols of the Levi-Civita connection of the gauge metric,
/// slots `(k; i, j)` with `k` contravariant.
pub fn levi_civita_christoffels(w: &WeylChart, p: &[f64]) -> Result<TensorValue> {
    let jet = w.point_jet(p)?;
    TensorValue::new(
        jet.n,
        vec![Variance::Contravariant, Variance::Covariant, Variance::Covariant],
        jet.christoffel_lc(),
    )
}

/// Christoffel symbols of the Weyl connection `D = nabla + theta~`.
pub fn weyl_christoffels(w: &WeylChart, p: &[f64]) -> Result<TensorValue> {
    let jet = w.point_jet(p)?;
    TensorValue::new(
        jet.n,
        vec![Variance::Contravariant, Variance::Covariant, Variance::Covariant],
        jet.christoffel_weyl(),
    )
}

/// All-covariant Weyl curvature `R^D(X,Y,Z,T) = g(R^D_{X,Y} Z, T)`.
pub fn weyl_curvature(w: &WeylChart, p: &[f64]) -> Result<TensorValue> {
    let jet = w.point_jet(p)?;
    let r13 = jet.curvature13();
    TensorValue::new(jet.n, vec![Variance::Covariant; 4], jet.curvature_lowered(&r13))
}

/// Faraday form `F = d theta`.
pub fn faraday(w: &WeylChart, p: &[f64]) -> Result<KFormValue> {
    let jet = w.point_jet(p)?;
    let f = jet.faraday_matrix();
    let mut out = KFormValue::zeros(jet.n, 2)?;
    for idx in increasing_tuples(jet.n, 2) {
        out.set_increasing(&idx, f[(idx[0], idx[1])]);
    }
    Ok(out)
}

/// Weyl Ricci tensor
/// `Ric(X,Y) = 1/2 sum_k [ g(R_{X,e_k} e_k, Y) - g(R_{X,e_k} Y, e_k) ]`
/// over a g-orthonormal frame; computed by the equivalent metric contraction,
/// which is exactly frame-independent.
pub fn weyl_ricci(w: &WeylChart, p: &[f64]) -> Result<TensorValue> {
    let jet = w.point_jet(p)?;
    let n = jet.n;
    let r13 = jet.curvature13();
    let r = jet.curvature_lowered(&r13);
    let rr = |i: usize, j: usize, k: usize, m: usize| r[((i * n + j) * n + k) * n + m];
    let mut out = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for m in 0..n {
                    s += jet.gi[(j, m)] * (rr(a, j, m, b) - rr(a, j, b, m));
                }
            }
            out[a * n + b] = 0.5 * s;
        }
    }
    TensorValue::new(n, vec![Variance::Covariant; 2], out)
}

/// Max over basis 4-tuples of the defect in the pair-symmetry identity
/// `R(X,Y,Z,T) - R(Z,T,X,Y) = (F(X)^Y - F(Y)^X)(Z,T) + F(X,Y)g(Z,T) - F(Z,T)g(X,Y)`.
pub fn pair_symmetry_defect(w: &WeylChart, p: &[f64]) -> Result<f64> {
    let jet = w.point_jet(p)?;
    let n = jet.n;
    let r13 = jet.curvature13();
    let r = jet.curvature_lowered(&r13);
    let rr = |i: usize, j: usize, k: usize, m: usize| r[((i * n + j) * n + k) * n + m];
    let f = jet.faraday_matrix();
    let g = &jet.g;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let rhs = (f[(i, k)] * g[(j, l)] - f[(i, l)] * g[(j, k)])
                        - (f[(j, k)] * g[(i, l)] - f[(j, l)] * g[(i, k)])
                        + f[(i, j)] * g[(k, l)]
                        - f[(k, l)] * g[(i, j)];
                    worst = worst.max((rr(i, j, k, l) - rr(k, l, i, j) - rhs).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Raw pair asymmetry `max |R(X,Y,Z,T) - R(Z,T,X,Y)|`, for contrast with the
/// identity defect above.
pub fn pair_asymmetry_raw(w: &WeylChart, p: &[f64]) -> Result<f64> {
    let jet = w.point_jet(p)?;
    let n = jet.n;
    let r13 = jet.curvature13();
    let r = jet.curvature_lowered(&r13);
    let rr = |i: usize, j: usize, k: usize, m: usize| r[((i * n + j) * n + k) * n + m];
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    worst = worst.max((rr(i, j, k, l) - rr(k, l, i, j)).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// A k-form field with expression coefficients; represents the weightless
/// form whose gauge-g representative it is.
#[derive(Debug, Clone)]
pub struct KFormField {
    chart: Chart,
    degree: usize,
    coeffs: Vec<ScalarExpr>,  // dense dim^k
    dcoeffs: Vec<ScalarExpr>, // [idx][m]
}

impl KFormField {
    pub fn from_increasing(
        chart: Chart,
        degree: usize,
        comps: &[(&[usize], ScalarExpr)],
    ) -> Result<Self> {
        let n = chart.dim();
        if degree > n {
            return Err(Error::DegreeOutOfRange { degree, dim: n });
        }
        let mut coeffs = vec![ScalarExpr::zero(); n.pow(degree as u32)];
        for (idx, e) in comps {
            if idx.len() != degree || idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invalid(format!(
                    "index tuple {idx:?} is not strictly increasing of length {degree}"
                )));
            }
            for (perm, sign) in permutations_signed_pub(idx) {
                let f = flat_index(n, &perm);
                coeffs[f] = if sign > 0.0 {
                    e.clone()
                } else {
                    ScalarExpr::mul(ScalarExpr::constant(-1.0), e.clone())
                };
            }
        }
        let mut dcoeffs = Vec::with_capacity(coeffs.len() * n);
        for c in &coeffs {
            for m in 0..n {
                dcoeffs.push(c.partial(m));
            }
        }
        Ok(KFormField {
            chart,
            degree,
            coeffs,
            dcoeffs,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeff(&self, idx: &[usize]) -> &ScalarExpr {
        &self.coeffs[flat_index(self.chart.dim(), idx)]
    }

    pub fn eval(&self, p: &[f64]) -> Result<KFormValue> {
        self.chart.check_point(p)?;
        let n = self.chart.dim();
        let mut w = KFormValue::zeros(n, self.degree)?;
        for idx in increasing_tuples(n, self.degree) {
            w.set_increasing(&idx, self.coeffs[flat_index(n, &idx)].eval(p)?);
        }
        Ok(w)
    }

    /// Dense values and first partials at `p`: `(w, dw)` with `dw[m]` the
    /// componentwise derivative along `x_{m+1}`.
    fn eval_jet(&self, p: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let n = self.chart.dim();
        let sz = self.coeffs.len();
        let mut w = vec![0.0; sz];
        for (i, c) in self.coeffs.iter().enumerate() {
            w[i] = c.eval(p)?;
        }
        let mut dw = vec![vec![0.0; sz]; n];
        for i in 0..sz {
            for m in 0..n {
                dw[m][i] = self.dcoeffs[i * n + m].eval(p)?;
            }
        }
        Ok((w, dw))
    }

    /// Exterior derivative value at `p` (shuffle convention):
    /// `(dw)_{i0..ik} = sum_j (-1)^j d_{i_j} w_{i0..hat i_j..ik}`.
    pub fn exterior_derivative_at(&self, p: &[f64]) -> Result<KFormValue> {
        self.chart.check_point(p)?;
        let n = self.chart.dim();
        let k = self.degree;
        if k + 1 > n {
            return Err(Error::DegreeOverflow(k, 1, n));
        }
        let (_, dw) = self.eval_jet(p)?;
        let mut out = KFormValue::zeros(n, k + 1)?;
        for idx in increasing_tuples(n, k + 1) {
            let mut v = 0.0;
            for j in 0..=k {
                let rest: Vec<usize> = idx
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| *s != j)
                    .map(|(_, &i)| i)
                    .collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                v += sign * dw[idx[j]][flat_index(n, &rest)];
            }
            out.set_increasing(&idx, v);
        }
        Ok(out)
    }
}

fn permutations_signed_pub(items: &[usize]) -> Vec<(Vec<usize>, f64)> {
    fn rec(cur: &mut Vec<usize>, rest: &mut Vec<usize>, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if rest.is_empty() {
            out.push((cur.clone(), sign));
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            cur.push(x);
            let s = if i % 2 == 0 { sign } else { -sign };
            rec(cur, rest, s, out);
            cur.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut items.to_vec(), 1.0, &mut out);
    out
}

/// Levi-Civita covariant derivative of the form at `p`, layout: slot 0 is the
/// direction, remaining slots the form arguments.
fn nabla_form(jet: &PointJet, field: &KFormField, p: &[f64]) -> Result<Vec<KFormValue>> {
    let n = jet.n;
    let k = field.degree();
    let (wv, dwv) = field.eval_jet(p)?;
    let gam = jet.christoffel_lc();
    let gm = |l: usize, a: usize, i: usize| gam[(l * n + a) * n + i];
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut na = KFormValue::zeros(n, k)?;
        for idx in increasing_tuples(n, k) {
            let fi = flat_index(n, &idx);
            let mut v = dwv[a][fi];
            for s in 0..k {
                for l in 0..n {
                    let mut jdx = idx.clone();
                    jdx[s] = l;
                    v -= gm(l, a, idx[s]) * wv[flat_index(n, &jdx)];
                }
            }
            na.set_increasing(&idx, v);
        }
        out.push(na);
    }
    Ok(out)
}

/// `theta~`-action on a weightless k-form in the gauge:
/// `alpha(tau)(X) = -tau ^ (X -| w) + X_flat ^ (tau# -| w)`.
fn tau_action(
    jet: &PointJet,
    w: &KFormValue,
    tau: &[f64],
    direction: usize,
) -> Result<KFormValue> {
    let n = jet.n;
    let tau_form = {
        let mut t = KFormValue::zeros(n, 1)?;
        for (i, v) in tau.iter().enumerate() {
            t.set_increasing(&[i], *v);
        }
        t
    };
    let basis_vec = |i: usize| {
        let mut c = vec![0.0; n];
        c[i] = 1.0;
        TensorValue::vector(n, c)
    };
    let x_hook_w = interior(&basis_vec(direction)?, w)?;
    let term1 = wedge(&tau_form, &x_hook_w)?;
    let tau_up: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|l| jet.gi[(k, l)] * tau[l]).sum())
        .collect();
    let tau_hook_w = interior(&TensorValue::vector(n, tau_up)?, w)?;
    let mut x_flat = KFormValue::zeros(n, 1)?;
    for i in 0..n {
        x_flat.set_increasing(&[i], jet.g[(direction, i)]);
    }
    let term2 = wedge(&x_flat, &tau_hook_w)?;
    term2.sub(&term1)
}

/// Covariant derivative `D omega` of a weightless form in the gauge:
/// `D omega(X) = nabla^g_X omega - theta ^ (X -| omega) + X_flat ^ (theta# -| omega)`.
/// Returns the full (k+1)-slot covariant tensor, direction first.
pub fn covderiv_weightless_form(
    w: &WeylChart,
    omega: &KFormField,
    p: &[f64],
) -> Result<TensorValue> {
    let n = w.dim();
    let k = omega.degree();
    if k == 0 || k >= n {
        return Err(Error::DegreeOutOfRange { degree: k, dim: n });
    }
    let jet = w.point_jet(p)?;
    let nab = nabla_form(&jet, omega, p)?;
    let mut out = TensorValue::zeros(n, vec![Variance::Covariant; k + 1])?;
    for a in 0..n {
        let corr = tau_action(&jet, &nab[a].add(&KFormValue::zeros(n, k)?)?, &jet.theta, a)?;
        // tau_action consumes the form value omega(p), not nabla omega; redo with omega
        let _ = corr;
        let wv = omega.eval(p)?;
        let corr = tau_action(&jet, &wv, &jet.theta, a)?;
        let total = nab[a].add(&corr)?;
        let mut idx = vec![0usize; k + 1];
        idx[0] = a;
        for rest in crate::tensor::all_tuples(n, k) {
            idx[1..].copy_from_slice(&rest);
            out.set(&idx, total.get(&rest));
        }
    }
    Ok(out)
}

/// Result of the minimal-Weyl-structure fit at a point.
#[derive(Debug, Clone)]
pub struct MinimalLee {
    pub tau: KFormValue,
    pub residual: f64,
    pub condition: f64,
}

/// The unique Lee form candidate minimizing `|nabla^g omega + alpha(tau)|_g`
/// at `p`; if `omega` is parallel for some Weyl structure this is its Lee form.
pub fn minimal_lee_form(w: &WeylChart, omega: &KFormField, p: &[f64]) -> Result<MinimalLee> {
    let n = w.dim();
    let k = omega.degree();
    if k == 0 || k >= n {
        return Err(Error::DegreeOutOfRange { degree: k, dim: n });
    }
    let jet = w.point_jet(p)?;
    let wv = omega.eval(p)?;
    let gm = crate::tensor::MetricValue::new(
        n,
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| jet.g[(i, j)]).collect(),
    )?;
    let norm = inner(&gm, &wv, &wv)?.max(0.0).sqrt();
    if norm < 1e-12 {
        return Err(Error::VanishingForm(1e-12));
    }
    let (frame, _) = jet.frame()?;
    // components of a (k+1)-covariant tensor in the orthonormal frame
    let to_frame = |vals: &[KFormValue]| -> DVector<f64> {
        let tuples = crate::tensor::all_tuples(n, k);
        let mut out = Vec::with_capacity(n * tuples.len());
        for a in 0..n {
            for idx in &tuples {
                let mut s = 0.0;
                for dir in 0..n {
                    // contract direction slot with frame vector a
                    let mut c = frame[(dir, a)];
                    if c == 0.0 {
                        continue;
                    }
                    // contract form slots with frame vectors idx
                    let mut v = 0.0;
                    for src in crate::tensor::all_tuples(n, k) {
                        let mut t = vals[dir].get(&src);
                        if t == 0.0 {
                            continue;
                        }
                        for s2 in 0..k {
                            t *= frame[(src[s2], idx[s2])];
                        }
                        v += t;
                    }
                    c *= v;
                    s += c;
                }
                out.push(s);
            }
        }
        DVector::from_vec(out)
    };
    let nab = nabla_form(&jet, omega, p)?;
    let b = to_frame(&nab);
    let mut cols = Vec::with_capacity(n);
    for m in 0..n {
        let mut tau = vec![0.0; n];
        tau[m] = 1.0;
        let col: Vec<KFormValue> = (0..n)
            .map(|a| tau_action(&jet, &wv, &tau, a))
            .collect::<Result<_>>()?;
        cols.push(to_frame(&col));
    }
    let rows = b.len();
    let a_mat = DMatrix::from_fn(rows, n, |r, c| cols[c][r]);
    let svd = a_mat.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::IllConditioned { cond });
    }
    let sol = svd
        .solve(&(-&b), 0.0)
        .map_err(|e| Error::Invalid(format!("least-squares solve failed: {e}")))?;
    let resid = (&a_mat * &sol + &b).norm();
    let mut tau = KFormValue::zeros(n, 1)?;
    for i in 0..n {
        tau.set_increasing(&[i], sol[i]);
    }
    Ok(MinimalLee {
        tau,
        residual: resid,
        condition: cond,
    })
}

/// Objective value `|nabla^g omega + alpha(tau)|` at `p` for a given `tau`
/// (same frame norm as `minimal_lee_form`); used to probe strict minimality.
pub fn lee_fit_residual(w: &WeylChart, omega: &KFormField, p: &[f64], tau: &[f64]) -> Result<f64> {
    let n = w.dim();
    let k = omega.degree();
    let jet = w.point_jet(p)?;
    let wv = omega.eval(p)?;
    let (frame, _) = jet.frame()?;
    let nab = nabla_form(&jet, omega, p)?;
    let mut total = 0.0;
    let tuples = crate::tensor::all_tuples(n, k);
    for a_fr in 0..n {
        for idx in &tuples {
            let mut s = 0.0;
            for dir in 0..n {
                let c = frame[(dir, a_fr)];
                if c == 0.0 {
                    continue;
                }
                let act = tau_action(&jet, &wv, tau, dir)?;
                let form = nab[dir].add(&act)?;
                let mut v = 0.0;
                for src in &tuples {
                    let mut t = form.get(src);
                    if t == 0.0 {
                        continue;
                    }
                    for s2 in 0..k {
                        t *= frame[(src[s2], idx[s2])];
                    }
                    v += t;
                }
                s += c * v;
            }
            total += s * s;
        }
    }
    Ok(total.sqrt())
}

/// Gauge transformation `g -> e^{2u} g`, `theta -> theta - du`; the Weyl
/// connection itself is unchanged.
pub fn gauge_transform(w: &WeylChart, u: &ScalarExpr) -> Result<WeylChart> {
    let n = w.dim();
    let scale = ScalarExpr::exp(ScalarExpr::mul(ScalarExpr::constant(2.0), u.clone()));
    let mut g = Vec::with_capacity(n * n);
    for e in &w.g {
        g.push(ScalarExpr::mul(scale.clone(), e.clone()));
    }
    let mut theta = Vec::with_capacity(n);
    for (i, t) in w.theta.iter().enumerate() {
        theta.push(ScalarExpr::sub(t.clone(), u.partial(i)));
    }
    WeylChart::new(w.chart.clone(), g, theta)
}
