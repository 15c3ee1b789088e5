use num_complex::Complex64;
use rayon::prelude::*;

/// Fixed reduction chunk: partial sums are combined in index order so the
/// result does not depend on the worker count.
pub(crate) const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        StateVector {
            amplitudes: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    pub fn basis(dim: usize, ordinal: usize) -> Self {
        let mut psi = Self::zeros(dim);
        psi.amplitudes[ordinal] = Complex64::new(1.0, 0.0);
        psi
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Self {
        StateVector { amplitudes }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// Spin-up and spin-down halves.
    pub fn blocks(&self) -> (&[Complex64], &[Complex64]) {
        self.amplitudes.split_at(self.amplitudes.len() / 2)
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>`
    pub fn dot(&self, other: &StateVector) -> Complex64 {
        dot(&self.amplitudes, &other.amplitudes)
    }

    pub fn scale(&mut self, factor: f64) {
        if self.amplitudes.len() <= CHUNK {
            self.amplitudes.iter_mut().for_each(|a| *a *= factor);
        } else {
            self.amplitudes.par_iter_mut().for_each(|a| *a *= factor);
        }
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n);
        }
        n
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// `1 - |<a|b>|^2` for normalized states.
    pub fn overlap_deficit(&self, other: &StateVector) -> f64 {
        1.0 - self.dot(other).norm_sqr()
    }
}

// Inputs no longer than one chunk take a serial path with the same
// summation order as the parallel one.

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    if a.len() <= CHUNK {
        return a.iter().zip(b).map(|(u, v)| u.conj() * v).sum();
    }
    let partials: Vec<Complex64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u.conj() * v).sum())
        .collect();
    partials.into_iter().sum()
}

pub(crate) fn norm_sqr(a: &[Complex64]) -> f64 {
    if a.len() <= CHUNK {
        return a.iter().map(|u| u.norm_sqr()).sum();
    }
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .map(|x| x.iter().map(|u| u.norm_sqr()).sum())
        .collect();
    partials.into_iter().sum()
}

/// `y += c * x`
pub(crate) fn axpy(c: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    if y.len() <= CHUNK {
        y.iter_mut().zip(x).for_each(|(v, u)| *v += c * u);
        return;
    }
    y.par_chunks_mut(CHUNK)
        .zip(x.par_chunks(CHUNK))
        .for_each(|(yc, xc)| yc.iter_mut().zip(xc).for_each(|(v, u)| *v += c * u));
}
