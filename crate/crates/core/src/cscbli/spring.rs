//! Two-layer tanh "spring" network producing per-word offsets from
//! contextual vectors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix_io::{read_matrix, read_vector, write_matrix, write_vector};
use crate::util::rng;

/// `y = W a + b` applied to row vectors; `w` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Affine {
            w: DMatrix::zeros(output, input),
            b: DVector::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Applies the layer to every row of `a` and then `tanh`.
    fn forward_tanh(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = a * self.w.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b.transpose();
        }
        z.apply(|v| *v = v.tanh());
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpringParams {
    pub layer0: Affine,
    pub layer1: Affine,
    pub gamma: DVector<f64>,
}

impl SpringParams {
    /// All-zero network.
    pub fn zeros(d0: usize, d: usize) -> Self {
        SpringParams {
            layer0: Affine::zeros(d0, d),
            layer1: Affine::zeros(d, d),
            gamma: DVector::zeros(d),
        }
    }

    /// Uniform Glorot weights, zero biases, zero gain. With zero gain the
    /// unified space starts equal to the static space, while the non-zero
    /// weights keep the gain gradient alive.
    pub fn init(d0: usize, d: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| r.random_range(-limit..limit))
        };
        let w0 = glorot(d, d0);
        let w1 = glorot(d, d);
        SpringParams {
            layer0: Affine { w: w0, b: DVector::zeros(d) },
            layer1: Affine { w: w1, b: DVector::zeros(d) },
            gamma: DVector::zeros(d),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer0.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layer1.output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.layer0.w.len() + self.layer0.b.len() + self.layer1.w.len() + self.layer1.b.len() + self.gamma.len()
    }

    /// Flat views over every parameter, in a fixed order.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for s in self.slices() {
            out.extend_from_slice(s);
        }
        out
    }

    fn slices(&self) -> [&[f64]; 5] {
        [
            self.layer0.w.as_slice(),
            self.layer0.b.as_slice(),
            self.layer1.w.as_slice(),
            self.layer1.b.as_slice(),
            self.gamma.as_slice(),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.layer0.w.as_mut_slice(),
            self.layer0.b.as_mut_slice(),
            self.layer1.w.as_mut_slice(),
            self.layer1.b.as_mut_slice(),
            self.gamma.as_mut_slice(),
        ]
    }

    /// Mutable access to parameter `index` in [`values`](Self::values) order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for s in self.slices_mut() {
            if index < s.len() {
                return &mut s[index];
            }
            index -= s.len();
        }
        panic!("parameter index out of range");
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &SpringParams, scale: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "contextual dimension {cols}, spring network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Writes the manifest line `d0 d` followed by `W0`, `b0`, `W1`, `b1`
    /// and `gamma` as text matrix blocks.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{} {}", self.input_dim(), self.output_dim())?;
        write_matrix(out, &self.layer0.w)?;
        write_vector(out, &self.layer0.b)?;
        write_matrix(out, &self.layer1.w)?;
        write_vector(out, &self.layer1.b)?;
        write_vector(out, &self.gamma)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }

    pub fn read<R: BufRead>(reader: R, origin: &str) -> Result<Self> {
        let mut lines = reader.lines();
        let manifest = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "missing `d0 d` manifest"))??;
        let dims: Vec<usize> = manifest
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::parse(origin, format!("bad manifest `{manifest}`"))))
            .collect::<Result<_>>()?;
        let [d0, d] = dims[..] else {
            return Err(Error::parse(origin, format!("bad manifest `{manifest}`")));
        };
        let p = SpringParams {
            layer0: Affine {
                w: read_matrix(&mut lines, origin)?,
                b: read_vector(&mut lines, origin)?,
            },
            layer1: Affine {
                w: read_matrix(&mut lines, origin)?,
                b: read_vector(&mut lines, origin)?,
            },
            gamma: read_vector(&mut lines, origin)?,
        };
        let shapes_ok = p.layer0.w.shape() == (d, d0)
            && p.layer0.b.len() == d
            && p.layer1.w.shape() == (d, d)
            && p.layer1.b.len() == d
            && p.gamma.len() == d;
        if !shapes_ok {
            return Err(Error::parse(origin, format!("block shapes disagree with manifest {d0} {d}")));
        }
        Ok(p)
    }
}

/// Activations kept for the backward pass.
pub(crate) struct Activations {
    input: DMatrix<f64>,
    h1: DMatrix<f64>,
    pub(crate) h2: DMatrix<f64>,
}

pub(crate) fn forward(a: DMatrix<f64>, p: &SpringParams) -> Result<Activations> {
    p.check_input(a.ncols())?;
    let h1 = p.layer0.forward_tanh(&a);
    let h2 = p.layer1.forward_tanh(&h1);
    Ok(Activations { input: a, h1, h2 })
}

/// Gradient of a loss with respect to every parameter, given its gradient
/// `d_u` with respect to the unified rows `E' + gamma * h2`.
pub(crate) fn backward(act: &Activations, p: &SpringParams, d_u: &DMatrix<f64>) -> SpringParams {
    let d = p.output_dim();
    let mut d_gamma = DVector::zeros(d);
    let mut d_z2 = d_u.clone();
    for i in 0..d_u.nrows() {
        for j in 0..d {
            d_gamma[j] += d_u[(i, j)] * act.h2[(i, j)];
            let h = act.h2[(i, j)];
            d_z2[(i, j)] *= p.gamma[j] * (1.0 - h * h);
        }
    }
    let d_w1 = d_z2.transpose() * &act.h1;
    let d_b1 = row_sums(&d_z2);
    let mut d_z1 = &d_z2 * &p.layer1.w;
    d_z1.zip_apply(&act.h1, |g, h| *g *= 1.0 - h * h);
    let d_w0 = d_z1.transpose() * &act.input;
    let d_b0 = row_sums(&d_z1);
    SpringParams {
        layer0: Affine { w: d_w0, b: d_b0 },
        layer1: Affine { w: d_w1, b: d_b1 },
        gamma: d_gamma,
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_round_trip() {
        let mut p = SpringParams::init(3, 2, 9);
        p.gamma[1] = -0.25;
        p.layer1.b[0] = 1e-7;
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        assert!(buf.starts_with(b"3 2\n"));
        assert_eq!(SpringParams::read(buf.as_slice(), "t").unwrap(), p);

        let bad = String::from_utf8(buf).unwrap().replacen("3 2", "4 2", 1);
        assert!(SpringParams::read(bad.as_bytes(), "t").is_err());
    }

    #[test]
    fn init_shapes_and_zero_gain() {
        let p = SpringParams::init(7, 4, 1);
        assert_eq!(p.layer0.w.shape(), (4, 7));
        assert_eq!(p.layer1.w.shape(), (4, 4));
        assert_eq!(p.n_params(), 28 + 4 + 16 + 4 + 4);
        assert!(p.gamma.iter().all(|&g| g == 0.0));
        assert!(p.layer0.w.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn param_indexing_follows_values_order() {
        let mut p = SpringParams::init(3, 2, 2);
        let n = p.n_params();
        for i in 0..n {
            *p.param_mut(i) = i as f64;
        }
        assert_eq!(p.values(), (0..n).map(|i| i as f64).collect::<Vec<_>>());
    }
}
