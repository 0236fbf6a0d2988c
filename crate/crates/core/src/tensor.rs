//! Pointwise dense tensor and exterior algebra in dimension n <= 6.
//!
//! Storage is dense (at most 6^6 entries); antisymmetry of form values is an
//! enforced invariant rather than a compressed representation. The wedge uses
//! the shuffle convention with unit coefficients,
//! `(a^b)(X_1..X_{k+l}) = sum_{shuffles} sgn * a(..) b(..)`,
//! and the Hodge star is normalized by `w ^ *s = <w,s> vol_g`; see
//! CONVENTIONS.md at the repository root.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variance {
    Covariant,
    Contravariant,
}

/// Dense real tensor value at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    dim: usize,
    slots: Vec<Variance>,
    entries: Vec<f64>,
}

impl TensorValue {
    pub fn new(dim: usize, slots: Vec<Variance>, entries: Vec<f64>) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim, MIN_DIM, MAX_DIM));
        }
        let want = dim.pow(slots.len() as u32);
        if entries.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: entries.len(),
            });
        }
        Ok(TensorValue { dim, slots, entries })
    }

    pub fn zeros(dim: usize, slots: Vec<Variance>) -> Result<Self> {
        let n = dim.pow(slots.len() as u32);
        TensorValue::new(dim, slots, vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Variance] {
        &self.slots
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn flat(&self, idx: &[usize]) -> usize {
        flat_index(self.dim, idx)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[self.flat(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let i = self.flat(idx);
        self.entries[i] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Contravariant rank-1 value (a tangent vector).
    pub fn vector(dim: usize, components: Vec<f64>) -> Result<Self> {
        TensorValue::new(dim, vec![Variance::Contravariant], components)
    }
}

pub(crate) fn flat_index(dim: usize, idx: &[usize]) -> usize {
    let mut f = 0;
    for &i in idx {
        debug_assert!(i < dim);
        f = f * dim + i;
    }
    f
}

/// All index tuples of length `k` with values below `dim`, row-major order.
pub(crate) fn all_tuples(dim: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::with_capacity(out.len() * dim);
        for t in &out {
            for i in 0..dim {
                let mut t2 = t.clone();
                t2.push(i);
                next.push(t2);
            }
        }
        out = next;
    }
    out
}

/// Strictly increasing tuples of length `k` below `dim`.
pub(crate) fn increasing_tuples(dim: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..dim {
            cur.push(i);
            rec(dim, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Sign of the permutation taking `tuple` to sorted order; `None` on repeats.
pub(crate) fn sort_sign(tuple: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut v: Vec<usize> = tuple.to_vec();
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in (i + 1..v.len()).rev() {
            if v[j - 1] > v[j] {
                v.swap(j - 1, j);
                sign = -sign;
            }
        }
    }
    for w in v.windows(2) {
        if w[0] == w[1] {
            return None;
        }
    }
    Some((v, sign))
}

fn permutations_signed(items: &[usize]) -> Vec<(Vec<usize>, f64)> {
    fn rec(cur: &mut Vec<usize>, rest: &mut Vec<usize>, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if rest.is_empty() {
            out.push((cur.clone(), sign));
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            cur.push(x);
            // removing from position i shifts by i transpositions
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

/// Degree-k antisymmetric fully covariant form value.
#[derive(Debug, Clone, PartialEq)]
pub struct KFormValue {
    dim: usize,
    degree: usize,
    entries: Vec<f64>,
}

impl KFormValue {
    pub fn zeros(dim: usize, degree: usize) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim, MIN_DIM, MAX_DIM));
        }
        if degree > dim {
            return Err(Error::DegreeOutOfRange { degree, dim });
        }
        Ok(KFormValue {
            dim,
            degree,
            entries: vec![0.0; dim.pow(degree as u32)],
        })
    }

    /// Build from components on increasing index tuples; dense entries are
    /// filled with the permutation signs.
    pub fn from_increasing(dim: usize, degree: usize, comps: &[(&[usize], f64)]) -> Result<Self> {
        let mut w = KFormValue::zeros(dim, degree)?;
        for (idx, v) in comps {
            if idx.len() != degree || idx.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::Invalid(format!(
                    "index tuple {idx:?} is not strictly increasing of length {degree}"
                )));
            }
            w.set_increasing(idx, *v);
        }
        Ok(w)
    }

    /// Basis form `dx^{i1} ^ .. ^ dx^{ik}` for strictly increasing indices.
    pub fn basis(dim: usize, idx: &[usize]) -> Result<Self> {
        KFormValue::from_increasing(dim, idx.len(), &[(idx, 1.0)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[flat_index(self.dim, idx)]
    }

    /// Overwrite the component on an increasing tuple (and its orbit).
    pub fn set_increasing(&mut self, idx: &[usize], v: f64) {
        debug_assert!(idx.windows(2).all(|p| p[0] < p[1]));
        for (perm, sign) in permutations_signed(idx) {
            let f = flat_index(self.dim, &perm);
            self.entries[f] = sign * v;
        }
    }

    pub fn scale(&self, c: f64) -> KFormValue {
        KFormValue {
            dim: self.dim,
            degree: self.degree,
            entries: self.entries.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &KFormValue) -> Result<KFormValue> {
        if self.dim != other.dim || self.degree != other.degree {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(KFormValue {
            dim: self.dim,
            degree: self.degree,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &KFormValue) -> Result<KFormValue> {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max violation of antisymmetry over all slot transpositions (and of
    /// vanishing on repeated indices). Zero for every value produced here.
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in all_tuples(self.dim, self.degree) {
            let v = self.get(&idx);
            if idx.windows(2).any(|_| false) {}
            let mut has_repeat = false;
            for a in 0..idx.len() {
                for b in a + 1..idx.len() {
                    if idx[a] == idx[b] {
                        has_repeat = true;
                    }
                    let mut t = idx.clone();
                    t.swap(a, b);
                    worst = worst.max((self.get(&t) + v).abs());
                }
            }
            if has_repeat {
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    /// View as a fully covariant tensor value.
    pub fn as_tensor(&self) -> TensorValue {
        TensorValue {
            dim: self.dim,
            slots: vec![Variance::Covariant; self.degree],
            entries: self.entries.clone(),
        }
    }
}

/// Symmetric positive-definite metric value at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue {
    dim: usize,
    entries: Vec<f64>, // row-major n*n
}

impl MetricValue {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim, MIN_DIM, MAX_DIM));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let scale = entries.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in 0..dim {
                if (entries[i * dim + j] - entries[j * dim + i]).abs() > 1e-12 * scale {
                    return Err(Error::Invalid("metric is not symmetric".into()));
                }
            }
        }
        let m = MetricValue { dim, entries };
        // all leading principal minors must be positive
        let mat = m.matrix();
        for k in 1..=dim {
            let minor = mat.view((0, 0), (k, k)).determinant();
            if !(minor > 0.0) {
                return Err(Error::SingularMetric);
            }
        }
        Ok(m)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut e = vec![0.0; dim * dim];
        for i in 0..dim {
            e[i * dim + i] = 1.0;
        }
        MetricValue::new(dim, e)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let dim = diag.len();
        let mut e = vec![0.0; dim * dim];
        for i in 0..dim {
            e[i * dim + i] = diag[i];
        }
        MetricValue::new(dim, e)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.matrix().try_inverse().ok_or(Error::SingularMetric)
    }

    pub fn det(&self) -> f64 {
        self.matrix().determinant()
    }

    /// Orthonormal frame data: columns of `frame` are the frame vectors
    /// (g-orthonormal, positively oriented), `coframe` is its inverse so that
    /// rows give the dual coframe in coordinates.
    pub fn orthonormal_frame(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let chol = self.matrix().cholesky().ok_or(Error::SingularMetric)?;
        let lt = chol.l().transpose(); // coframe: e^a = sum_i lt[(a,i)] dx^i
        let frame = lt.clone().try_inverse().ok_or(Error::SingularMetric)?;
        Ok((frame, lt))
    }
}

fn check_orientation(orientation: i32) -> Result<f64> {
    match orientation {
        1 => Ok(1.0),
        -1 => Ok(-1.0),
        _ => Err(Error::Invalid("orientation must be +1 or -1".into())),
    }
}

/// Shuffle-convention wedge product.
pub fn wedge(a: &KFormValue, b: &KFormValue) -> Result<KFormValue> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    let (k, l) = (a.degree, b.degree);
    if k + l > a.dim {
        return Err(Error::DegreeOverflow(k, l, a.dim));
    }
    let mut out = KFormValue::zeros(a.dim, k + l)?;
    for idx in increasing_tuples(a.dim, k + l) {
        let mut val = 0.0;
        for sel in increasing_tuples(k + l, k) {
            let s: Vec<usize> = sel.iter().map(|&i| idx[i]).collect();
            let mut rest = Vec::with_capacity(l);
            let mut take = vec![false; k + l];
            for &i in &sel {
                take[i] = true;
            }
            for (i, &t) in take.iter().enumerate() {
                if !t {
                    rest.push(idx[i]);
                }
            }
            let mut merged = s.clone();
            merged.extend_from_slice(&rest);
            let (_, sign) = sort_sign(&merged).expect("distinct indices");
            val += sign * a.get(&s) * b.get(&rest);
        }
        out.set_increasing(&idx, val);
    }
    Ok(out)
}

/// Interior product (first-slot contraction) of a vector with a form.
pub fn interior(v: &TensorValue, w: &KFormValue) -> Result<KFormValue> {
    if v.dim() != w.dim {
        return Err(Error::DimensionMismatch {
            expected: w.dim,
            got: v.dim(),
        });
    }
    if v.rank() != 1 || v.slots()[0] != Variance::Contravariant {
        return Err(Error::VarianceMismatch);
    }
    if w.degree == 0 {
        return Err(Error::DegreeOutOfRange {
            degree: 0,
            dim: w.dim,
        });
    }
    let mut out = KFormValue::zeros(w.dim, w.degree - 1)?;
    let mut idx = vec![0usize; w.degree];
    for rest in all_tuples(w.dim, w.degree - 1) {
        let mut val = 0.0;
        for i in 0..w.dim {
            idx[0] = i;
            idx[1..].copy_from_slice(&rest);
            val += v.entries()[i] * w.get(&idx);
        }
        out.entries[flat_index(w.dim, &rest)] = val;
    }
    Ok(out)
}

/// Raise or lower one slot with the metric.
pub fn musical(
    g: &MetricValue,
    t: &TensorValue,
    slot: usize,
    direction: Variance,
) -> Result<TensorValue> {
    if slot >= t.rank() {
        return Err(Error::BadSlot {
            slot,
            rank: t.rank(),
        });
    }
    if g.dim() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            got: g.dim(),
        });
    }
    // direction is the target variance of the slot
    let (mat, from) = match direction {
        Variance::Contravariant => (g.inverse()?, Variance::Covariant),
        Variance::Covariant => (g.matrix(), Variance::Contravariant),
    };
    if t.slots()[slot] != from {
        return Err(Error::VarianceMismatch);
    }
    let dim = t.dim();
    let mut slots = t.slots().to_vec();
    slots[slot] = direction;
    let mut out = TensorValue::zeros(dim, slots)?;
    for idx in all_tuples(dim, t.rank()) {
        let mut val = 0.0;
        let mut src = idx.clone();
        for i in 0..dim {
            src[slot] = i;
            val += mat[(idx[slot], i)] * t.get(&src);
        }
        out.set(&idx, val);
    }
    Ok(out)
}

fn transform_form(w: &KFormValue, mat: &DMatrix<f64>, columns_are_targets: bool) -> KFormValue {
    // new[a..] = sum old[i..] prod M[i, a]  (columns_are_targets)
    // new[i..] = sum old[a..] prod M[a, i]  (otherwise)
    let dim = w.dim;
    let k = w.degree;
    let mut out = KFormValue {
        dim,
        degree: k,
        entries: vec![0.0; dim.pow(k as u32)],
    };
    for tgt in increasing_tuples(dim, k) {
        let mut val = 0.0;
        for src in all_tuples(dim, k) {
            let mut c = w.get(&src);
            if c == 0.0 {
                continue;
            }
            for s in 0..k {
                c *= if columns_are_targets {
                    mat[(src[s], tgt[s])]
                } else {
                    mat[(src[s], tgt[s])]
                };
            }
            val += c;
        }
        out.set_increasing(&tgt, val);
    }
    out
}

/// Hodge star with respect to `g` and an orientation sign (`+1` means
/// `dx1 ^ .. ^ dxn` is positively oriented), normalized by
/// `w ^ *s = <w, s> vol_g`.
pub fn hodge(g: &MetricValue, orientation: i32, w: &KFormValue) -> Result<KFormValue> {
    let or = check_orientation(orientation)?;
    if g.dim() != w.dim {
        return Err(Error::DimensionMismatch {
            expected: w.dim,
            got: g.dim(),
        });
    }
    let (frame, coframe) = g.orthonormal_frame()?;
    let dim = w.dim;
    let k = w.degree;
    // frame components: W'(a..) = W(e_{a1},..) = sum W(i..) prod frame[(i, a)]
    let wf = transform_form(w, &frame, true);
    let mut sf = KFormValue::zeros(dim, dim - k)?;
    for idx in increasing_tuples(dim, k) {
        let v = wf.get(&idx);
        if v == 0.0 {
            continue;
        }
        let comp: Vec<usize> = (0..dim).filter(|i| !idx.contains(i)).collect();
        let mut merged = idx.clone();
        merged.extend_from_slice(&comp);
        let (_, sign) = sort_sign(&merged).expect("distinct");
        sf.set_increasing(&comp, or * sign * v);
    }
    // back to coordinates: W(i..) = sum W'(a..) prod coframe[(a, i)]
    let mut out = KFormValue::zeros(dim, dim - k)?;
    for tgt in increasing_tuples(dim, dim - k) {
        let mut val = 0.0;
        for src in all_tuples(dim, dim - k) {
            let mut c = sf.get(&src);
            if c == 0.0 {
                continue;
            }
            for s in 0..dim - k {
                c *= coframe[(src[s], tgt[s])];
            }
            val += c;
        }
        out.set_increasing(&tgt, val);
    }
    Ok(out)
}

/// Metric pairing on k-forms (orthonormal increasing components multiply).
pub fn inner(g: &MetricValue, a: &KFormValue, b: &KFormValue) -> Result<f64> {
    if a.dim != b.dim || a.degree != b.degree {
        return Err(Error::DimensionMismatch {
            expected: a.degree,
            got: b.degree,
        });
    }
    if g.dim() != a.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: g.dim(),
        });
    }
    let (frame, _) = g.orthonormal_frame()?;
    let af = transform_form(a, &frame, true);
    let bf = transform_form(b, &frame, true);
    let mut s = 0.0;
    for idx in increasing_tuples(a.dim, a.degree) {
        s += af.get(&idx) * bf.get(&idx);
    }
    Ok(s)
}

/// Riemannian volume form `sqrt(det g) dx1 ^ .. ^ dxn` times the orientation.
pub fn volume_form(g: &MetricValue, orientation: i32) -> Result<KFormValue> {
    let or = check_orientation(orientation)?;
    let dim = g.dim();
    let idx: Vec<usize> = (0..dim).collect();
    let mut w = KFormValue::zeros(dim, dim)?;
    w.set_increasing(&idx, or * g.det().sqrt());
    Ok(w)
}

/// Self-dual / anti-self-dual split of a 2-form in dimension 4:
/// returns `(w_plus, w_minus)` with `*w_plus = w_plus`, `*w_minus = -w_minus`.
pub fn sd_asd_split(
    g: &MetricValue,
    orientation: i32,
    w: &KFormValue,
) -> Result<(KFormValue, KFormValue)> {
    if w.dim != 4 || w.degree != 2 {
        return Err(Error::DegreeOutOfRange {
            degree: w.degree,
            dim: w.dim,
        });
    }
    let sw = hodge(g, orientation, w)?;
    let plus = w.add(&sw)?.scale(0.5);
    let minus = w.sub(&sw)?.scale(0.5);
    Ok((plus, minus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dx(dim: usize, i: usize) -> KFormValue {
        KFormValue::basis(dim, &[i]).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> MetricValue {
        loop {
            let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
            let m = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5;
            let entries: Vec<f64> = (0..dim)
                .flat_map(|i| (0..dim).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)])
                .collect();
            if let Ok(g) = MetricValue::new(dim, entries) {
                return g;
            }
        }
    }

    fn random_form(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> KFormValue {
        let mut w = KFormValue::zeros(dim, k).unwrap();
        for idx in increasing_tuples(dim, k) {
            w.set_increasing(&idx, rng.random_range(-2.0..2.0));
        }
        w
    }

    #[test]
    fn wedge_basis_cases() {
        let a = dx(4, 0);
        // dx1 ^ dx1 = 0
        let sq = wedge(&a, &a).unwrap();
        assert_eq!(sq.max_abs(), 0.0);
        // dx1 ^ dx2 has (1,2)-entry +1
        let w = wedge(&dx(4, 0), &dx(4, 1)).unwrap();
        assert_eq!(w.get(&[0, 1]), 1.0);
        assert_eq!(w.get(&[1, 0]), -1.0);
        assert_eq!(w.antisymmetry_defect(), 0.0);
    }

    /// Independent oracle: expand the shuffle sum definition directly on all
    /// index tuples, with no reference to the wedge implementation.
    fn wedge_oracle(a: &KFormValue, b: &KFormValue) -> KFormValue {
        let (k, l) = (a.degree(), b.degree());
        let dim = a.dim();
        let mut out = KFormValue::zeros(dim, k + l).unwrap();
        for idx in all_tuples(dim, k + l) {
            let mut val = 0.0;
            for sel in increasing_tuples(k + l, k) {
                let in_sel = |i: usize| sel.contains(&i);
                let s: Vec<usize> = sel.iter().map(|&i| idx[i]).collect();
                let rest: Vec<usize> = (0..k + l).filter(|i| !in_sel(*i)).map(|i| idx[i]).collect();
                // sign of the shuffle as a permutation of positions
                let mut positions: Vec<usize> = sel.clone();
                positions.extend((0..k + l).filter(|i| !in_sel(*i)));
                let (_, sign) = sort_sign(&positions).unwrap();
                val += sign * a.get(&s) * b.get(&rest);
            }
            out.entries[flat_index(dim, &idx)] = val;
        }
        out
    }

    #[test]
    fn wedge_two_forms_volume() {
        let w12 = wedge(&dx(4, 0), &dx(4, 1)).unwrap();
        let w34 = wedge(&dx(4, 2), &dx(4, 3)).unwrap();
        let vol = wedge(&w12, &w34).unwrap();
        let oracle = wedge_oracle(&w12, &w34);
        assert_eq!(vol.entries(), oracle.entries());
        assert_eq!(vol.get(&[0, 1, 2, 3]), 1.0);
        assert_eq!(vol.antisymmetry_defect(), 0.0);
    }

    #[test]
    fn wedge_graded_commutativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let dim = rng.random_range(2..=5usize);
            let k = rng.random_range(0..=dim);
            let l = rng.random_range(0..=dim - k);
            let a = random_form(&mut rng, dim, k);
            let b = random_form(&mut rng, dim, l);
            let ab = wedge(&a, &b).unwrap();
            let ba = wedge(&b, &a).unwrap();
            let sign = if (k * l) % 2 == 0 { 1.0 } else { -1.0 };
            let defect = ab.sub(&ba.scale(sign)).unwrap().max_abs();
            assert!(defect < 1e-12, "graded commutativity defect {defect}");
        }
    }

    #[test]
    fn wedge_matches_oracle_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let dim = rng.random_range(2..=5usize);
            let k = rng.random_range(0..=dim);
            let l = rng.random_range(0..=dim - k);
            let a = random_form(&mut rng, dim, k);
            let b = random_form(&mut rng, dim, l);
            let w = wedge(&a, &b).unwrap();
            let o = wedge_oracle(&a, &b);
            assert!(w.sub(&o).unwrap().max_abs() < 1e-13);
            assert!(w.antisymmetry_defect() < 1e-13);
        }
    }

    #[test]
    fn interior_basis_cases() {
        let d1 = TensorValue::vector(4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let d3 = TensorValue::vector(4, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let w12 = wedge(&dx(4, 0), &dx(4, 1)).unwrap();
        let r = interior(&d1, &w12).unwrap();
        assert_eq!(r.entries(), dx(4, 1).entries());
        let z = interior(&d3, &w12).unwrap();
        assert_eq!(z.max_abs(), 0.0);

        let w123 = wedge(&w12, &dx(4, 2)).unwrap();
        let r = interior(&d1, &w123).unwrap();
        let expect = wedge(&dx(4, 1), &dx(4, 2)).unwrap();
        assert!(r.sub(&expect).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn interior_squares_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let dim = rng.random_range(2..=5usize);
            let k = rng.random_range(2..=dim);
            let w = random_form(&mut rng, dim, k);
            let comps: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = TensorValue::vector(dim, comps).unwrap();
            let once = interior(&v, &w).unwrap();
            let twice = interior(&v, &once).unwrap();
            assert!(twice.max_abs() < 1e-13);
            assert!(once.antisymmetry_defect() < 1e-13);
        }
    }

    #[test]
    fn musical_identity_and_diagonal() {
        let g = MetricValue::identity(4).unwrap();
        let up = musical(&g, &dx(4, 0).as_tensor(), 0, Variance::Contravariant).unwrap();
        assert_eq!(up.entries(), &[1.0, 0.0, 0.0, 0.0]);

        // g = diag(1,1,e^{2f},e^{2f}) with f = 0.5: raise(dx3) = e^{-1} d3
        let e2f = (2.0f64 * 0.5).exp();
        let g = MetricValue::diagonal(&[1.0, 1.0, e2f, e2f]).unwrap();
        let up = musical(&g, &dx(4, 2).as_tensor(), 0, Variance::Contravariant).unwrap();
        assert!((up.get(&[2]) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn musical_inverse_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let dim = rng.random_range(2..=5usize);
            let g = random_spd(&mut rng, dim);
            let w = random_form(&mut rng, dim, 1).as_tensor();
            let up = musical(&g, &w, 0, Variance::Contravariant).unwrap();
            let down = musical(&g, &up, 0, Variance::Covariant).unwrap();
            let defect: f64 = w
                .entries()
                .iter()
                .zip(down.entries())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(defect < 1e-12);
        }
    }

    #[test]
    fn musical_rejects_bad_slot_and_variance() {
        let g = MetricValue::identity(3).unwrap();
        let w = dx(3, 0).as_tensor();
        assert!(musical(&g, &w, 1, Variance::Contravariant).is_err());
        assert!(musical(&g, &w, 0, Variance::Covariant).is_err());
    }

    #[test]
    fn hodge_flat_cases() {
        let g2 = MetricValue::identity(2).unwrap();
        let s = hodge(&g2, 1, &dx(2, 0)).unwrap();
        assert!(s.sub(&dx(2, 1)).unwrap().max_abs() < 1e-15);

        let g4 = MetricValue::identity(4).unwrap();
        let w12 = wedge(&dx(4, 0), &dx(4, 1)).unwrap();
        let w34 = wedge(&dx(4, 2), &dx(4, 3)).unwrap();
        let s = hodge(&g4, 1, &w12).unwrap();
        assert!(s.sub(&w34).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn hodge_conformal_case() {
        // g = diag(1,1,e^{2f},e^{2f}), f = 0.3: *(dx1^dx2) = e^{0.6} dx3^dx4.
        // Orthonormal-coframe oracle: e3 = e^f dx3, e4 = e^f dx4.
        let f = 0.3f64;
        let g = MetricValue::diagonal(&[1.0, 1.0, (2.0 * f).exp(), (2.0 * f).exp()]).unwrap();
        let w12 = wedge(&dx(4, 0), &dx(4, 1)).unwrap();
        let s = hodge(&g, 1, &w12).unwrap();
        let expect = wedge(&dx(4, 2), &dx(4, 3)).unwrap().scale((2.0 * f).exp());
        assert!(s.sub(&expect).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn hodge_double_star_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..30 {
            let dim = rng.random_range(2..=5usize);
            let k = rng.random_range(0..=dim);
            let g = random_spd(&mut rng, dim);
            let w = random_form(&mut rng, dim, k);
            let ss = hodge(&g, 1, &hodge(&g, 1, &w).unwrap()).unwrap();
            let sign = if (k * (dim - k)) % 2 == 0 { 1.0 } else { -1.0 };
            assert!(ss.sub(&w.scale(sign)).unwrap().max_abs() < 1e-11);
        }
    }

    #[test]
    fn hodge_defining_identity() {
        // w ^ *s = <w, s> vol_g for random forms and random SPD metrics
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..200 {
            let dim = rng.random_range(2..=5usize);
            let k = rng.random_range(0..=dim);
            let or = if rng.random_range(0..2) == 0 { 1 } else { -1 };
            let g = random_spd(&mut rng, dim);
            let w = random_form(&mut rng, dim, k);
            let s = random_form(&mut rng, dim, k);
            let lhs = wedge(&w, &hodge(&g, or, &s).unwrap()).unwrap();
            let rhs = volume_form(&g, or).unwrap().scale(inner(&g, &w, &s).unwrap());
            assert!(
                lhs.sub(&rhs).unwrap().max_abs() < 1e-10,
                "dim {dim} deg {k} orientation {or}"
            );
        }
    }

    #[test]
    fn inner_examples() {
        let g = MetricValue::identity(4).unwrap();
        assert!((inner(&g, &dx(4, 0), &dx(4, 0)).unwrap() - 1.0).abs() < 1e-15);
        let w12 = wedge(&dx(4, 0), &dx(4, 1)).unwrap();
        let w34 = wedge(&dx(4, 2), &dx(4, 3)).unwrap();
        assert!(inner(&g, &w12, &w34).unwrap().abs() < 1e-15);

        let f = 0.3f64;
        let g = MetricValue::diagonal(&[1.0, 1.0, (2.0 * f).exp(), (2.0 * f).exp()]).unwrap();
        let v = inner(&g, &dx(4, 2), &dx(4, 2)).unwrap();
        assert!((v - (-0.6f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn inner_positive_definite_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..50 {
            let dim = rng.random_range(2..=5usize);
            let k = rng.random_range(1..=dim);
            let g = random_spd(&mut rng, dim);
            let a = random_form(&mut rng, dim, k);
            let b = random_form(&mut rng, dim, k);
            let ab = inner(&g, &a, &b).unwrap();
            let ba = inner(&g, &b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-11);
            if a.max_abs() > 1e-9 {
                assert!(inner(&g, &a, &a).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn split_flat_basis() {
        let g = MetricValue::identity(4).unwrap();
        let w12 = wedge(&dx(4, 0), &dx(4, 1)).unwrap();
        let w34 = wedge(&dx(4, 2), &dx(4, 3)).unwrap();
        let (p, m) = sd_asd_split(&g, 1, &w12).unwrap();
        let ep = w12.add(&w34).unwrap().scale(0.5);
        let em = w12.sub(&w34).unwrap().scale(0.5);
        assert!(p.sub(&ep).unwrap().max_abs() < 1e-14);
        assert!(m.sub(&em).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn split_projector_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..100 {
            let g = random_spd(&mut rng, 4);
            let or = if rng.random_range(0..2) == 0 { 1 } else { -1 };
            let w = random_form(&mut rng, 4, 2);
            let (p, m) = sd_asd_split(&g, or, &w).unwrap();
            // reconstruction and *-eigenvector properties
            assert!(p.add(&m).unwrap().sub(&w).unwrap().max_abs() < 1e-12);
            let sp = hodge(&g, or, &p).unwrap();
            let sm = hodge(&g, or, &m).unwrap();
            assert!(sp.sub(&p).unwrap().max_abs() < 1e-12);
            assert!(sm.add(&m).unwrap().max_abs() < 1e-12);
            // g-orthogonality of the parts
            assert!(inner(&g, &p, &m).unwrap().abs() < 1e-12);
            // projector idempotence: splitting a self-dual input returns (input, 0)
            let (pp, pm) = sd_asd_split(&g, or, &p).unwrap();
            assert!(pp.sub(&p).unwrap().max_abs() < 1e-12);
            assert!(pm.max_abs() < 1e-12);
        }
    }

    #[test]
    fn metric_rejects_non_spd() {
        assert!(MetricValue::diagonal(&[1.0, -1.0]).is_err());
        assert!(MetricValue::new(2, vec![1.0, 0.5, -0.5, 1.0]).is_err());
        assert!(MetricValue::diagonal(&[0.0, 1.0]).is_err());
    }
}
