//! Dense 8×8 complex matrices for the three-qubit Hilbert space.
//!
//! Storage is row-major in a flat array so that a hierarchy of matrices can
//! be viewed as one contiguous slice of `Complex64`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Hilbert-space dimension of three two-level systems.
pub const DIM: usize = 8;
/// Number of entries of one density matrix.
pub const DIM2: usize = DIM * DIM;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat8(#[serde(with = "serde_arr")] pub [C64; DIM2]);

mod serde_arr {
    use super::{C64, DIM2};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(a: &[C64; DIM2], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<[f64; 2]> = a.iter().map(|z| [z.re, z.im]).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[C64; DIM2], D::Error> {
        let v: Vec<[f64; 2]> = Vec::deserialize(d)?;
        if v.len() != DIM2 {
            return Err(serde::de::Error::invalid_length(v.len(), &"64 complex entries"));
        }
        let mut out = [C64::new(0.0, 0.0); DIM2];
        for (o, p) in out.iter_mut().zip(v) {
            *o = C64::new(p[0], p[1]);
        }
        Ok(out)
    }
}

impl Default for Mat8 {
    fn default() -> Self {
        Self::zeros()
    }
}

impl Mat8 {
    pub fn zeros() -> Self {
        Mat8([C64::new(0.0, 0.0); DIM2])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..DIM {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_real_diagonal(d: &[f64; DIM]) -> Self {
        let mut m = Self::zeros();
        for i in 0..DIM {
            m[(i, i)] = C64::new(d[i], 0.0);
        }
        m
    }

    pub fn from_slice(s: &[C64]) -> Self {
        let mut m = Self::zeros();
        m.0.copy_from_slice(&s[..DIM2]);
        m
    }

    /// Projector |v⟩⟨v|.
    pub fn projector(v: &[C64; DIM]) -> Self {
        Self::from_fn(|i, j| v[i] * v[j].conj())
    }

    /// Outer product |u⟩⟨v|.
    pub fn outer(u: &[C64; DIM], v: &[C64; DIM]) -> Self {
        Self::from_fn(|i, j| u[i] * v[j].conj())
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(|i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self[(j, i)])
    }

    pub fn trace(&self) -> C64 {
        (0..DIM).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        m.0.iter_mut().for_each(|z| *z *= s);
        m
    }

    pub fn commutator(&self, other: &Mat8) -> Self {
        *self * *other - *other * *self
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// ‖A − A†‖ in the max norm.
    pub fn hermiticity_error(&self) -> f64 {
        (*self - self.dagger()).max_abs()
    }

    /// Tr(A B) without forming the product.
    pub fn trace_product(&self, other: &Mat8) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..DIM {
            for k in 0..DIM {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    /// ⟨u|A|v⟩.
    pub fn sandwich(&self, u: &[C64; DIM], v: &[C64; DIM]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..DIM {
            let mut row = C64::new(0.0, 0.0);
            for j in 0..DIM {
                row += self[(i, j)] * v[j];
            }
            acc += u[i].conj() * row;
        }
        acc
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; DIM] {
        let m = nalgebra::DMatrix::from_fn(DIM, DIM, |i, j| {
            let z = 0.5 * (self[(i, j)] + self[(j, i)].conj());
            nalgebra::Complex::new(z.re, z.im)
        });
        let eig = m.symmetric_eigen();
        let mut out = [0.0; DIM];
        for (o, e) in out.iter_mut().zip(eig.eigenvalues.iter()) {
            *o = *e;
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }
}

impl Index<(usize, usize)> for Mat8 {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i * DIM + j]
    }
}

impl IndexMut<(usize, usize)> for Mat8 {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i * DIM + j]
    }
}

impl Mul for Mat8 {
    type Output = Mat8;
    fn mul(self, rhs: Mat8) -> Mat8 {
        let mut out = Mat8::zeros();
        for i in 0..DIM {
            for k in 0..DIM {
                let a = self[(i, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..DIM {
                    out.0[i * DIM + j] += a * rhs.0[k * DIM + j];
                }
            }
        }
        out
    }
}

impl Add for Mat8 {
    type Output = Mat8;
    fn add(mut self, rhs: Mat8) -> Mat8 {
        self += rhs;
        self
    }
}

impl AddAssign for Mat8 {
    fn add_assign(&mut self, rhs: Mat8) {
        self.0.iter_mut().zip(rhs.0.iter()).for_each(|(a, b)| *a += b);
    }
}

impl Sub for Mat8 {
    type Output = Mat8;
    fn sub(mut self, rhs: Mat8) -> Mat8 {
        self.0.iter_mut().zip(rhs.0.iter()).for_each(|(a, b)| *a -= b);
        self
    }
}
