//! Products of randomly chosen step matrices, with precomputed block tables.

use std::ops::{Add, Mul};

use nalgebra::DMatrix;
use num_traits::{One, Zero};

use super::rng::IndexSource;
use crate::operator_space::{SuperOp, C64};

pub trait Scalar: Copy + Zero + One + Add<Output = Self> + Mul<Output = Self> + Send + Sync {}
impl Scalar for f64 {}
impl Scalar for C64 {}

const TABLE_BYTES: usize = 1 << 20;
const TABLE_ENTRIES: usize = 4096;

/// `out = a · b` for column-major `n × n` matrices.
#[inline]
pub fn gemm<T: Scalar>(n: usize, a: &[T], b: &[T], out: &mut [T]) {
    match n {
        4 => gemm_fixed::<T, 4>(a, b, out),
        16 => gemm_fixed::<T, 16>(a, b, out),
        _ => gemm_dyn(n, a, b, out),
    }
}

#[inline(always)]
fn gemm_fixed<T: Scalar, const N: usize>(a: &[T], b: &[T], out: &mut [T]) {
    let (a, b, out) = (&a[..N * N], &b[..N * N], &mut out[..N * N]);
    for j in 0..N {
        let col = &mut out[j * N..j * N + N];
        col.fill(T::zero());
        for k in 0..N {
            let bkj = b[j * N + k];
            let acol = &a[k * N..k * N + N];
            for i in 0..N {
                col[i] = col[i] + acol[i] * bkj;
            }
        }
    }
}

fn gemm_dyn<T: Scalar>(n: usize, a: &[T], b: &[T], out: &mut [T]) {
    for j in 0..n {
        let col = &mut out[j * n..j * n + n];
        col.fill(T::zero());
        for k in 0..n {
            let bkj = b[j * n + k];
            let acol = &a[k * n..k * n + n];
            for (c, &x) in col.iter_mut().zip(acol) {
                *c = *c + x * bkj;
            }
        }
    }
}

pub fn identity_flat<T: Scalar>(n: usize) -> Vec<T> {
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    v
}

/// Random products of a fixed step set.
pub struct Kernel<T: Scalar> {
    n: usize,
    radix: usize,
    steps: Vec<Vec<T>>,
    block: u32,
    table: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(n: usize, steps: Vec<Vec<T>>) -> Self {
        let radix = steps.len();
        let entry = n * n * std::mem::size_of::<T>();
        let mut block = 1u32;
        let bits = if radix.is_power_of_two() { radix.trailing_zeros() } else { 0 };
        loop {
            let next = match radix.checked_pow(block + 1) {
                Some(v) => v,
                None => break,
            };
            if next > TABLE_ENTRIES || next * entry > TABLE_BYTES || bits * (block + 1) > 32 {
                break;
            }
            block += 1;
        }
        if radix == 1 {
            block = 1;
        }
        let table = if block > 1 { build_table(n, &steps, block) } else { steps.concat() };
        Kernel { n, radix, steps, block, table }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn block(&self) -> u32 {
        self.block
    }

    /// Products after each checkpoint count of steps (nondecreasing), newest step leftmost.
    pub fn run(&self, src: &mut IndexSource, checkpoints: &[u64], mut record: Option<&mut Vec<u32>>) -> Vec<Vec<T>> {
        let nn = self.n * self.n;
        let mut state = identity_flat::<T>(self.n);
        let mut scratch = vec![T::zero(); nn];
        let mut done = 0u64;
        let mut out = Vec::with_capacity(checkpoints.len());
        let k = self.block as u64;
        for &target in checkpoints {
            assert!(target >= done, "checkpoints must be nondecreasing");
            while target - done >= k && k > 1 {
                let idx = src.next_block(self.block);
                if let Some(rec) = record.as_deref_mut() {
                    let mut b = idx;
                    for _ in 0..k {
                        rec.push((b % self.radix) as u32);
                        b /= self.radix;
                    }
                }
                gemm(self.n, &self.table[idx * nn..(idx + 1) * nn], &state, &mut scratch);
                std::mem::swap(&mut state, &mut scratch);
                done += k;
            }
            while done < target {
                let j = src.next_index();
                if let Some(rec) = record.as_deref_mut() {
                    rec.push(j as u32);
                }
                gemm(self.n, &self.steps[j], &state, &mut scratch);
                std::mem::swap(&mut state, &mut scratch);
                done += 1;
            }
            out.push(state.clone());
        }
        out
    }
}

fn build_table<T: Scalar>(n: usize, steps: &[Vec<T>], block: u32) -> Vec<T> {
    let nn = n * n;
    let radix = steps.len();
    let mut table = steps.concat();
    let mut size = radix;
    for _ in 1..block {
        let mut next = vec![T::zero(); size * radix * nn];
        for digit in 0..radix {
            for lower in 0..size {
                let idx = digit * size + lower;
                gemm(n, &steps[digit], &table[lower * nn..(lower + 1) * nn], &mut next[idx * nn..(idx + 1) * nn]);
            }
        }
        table = next;
        size *= radix;
    }
    table
}

/// A Hermitian orthonormal basis of `B(H)` as the columns of a unitary `d × d` matrix.
///
/// Hermiticity-preserving maps have real matrices in this basis.
pub fn hermitian_basis(dim_h: usize) -> DMatrix<C64> {
    let d = dim_h * dim_h;
    let mut b = DMatrix::zeros(d, d);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut col = 0;
    for k in 0..dim_h {
        b[(k * dim_h + k, col)] = C64::new(1.0, 0.0);
        col += 1;
    }
    for k in 0..dim_h {
        for l in k + 1..dim_h {
            // (E_kl + E_lk)/√2 and i(E_kl − E_lk)/√2, with E_kl at index l·d_H + k
            b[(l * dim_h + k, col)] = C64::new(s, 0.0);
            b[(k * dim_h + l, col)] = C64::new(s, 0.0);
            b[(l * dim_h + k, col + 1)] = C64::new(0.0, s);
            b[(k * dim_h + l, col + 1)] = C64::new(0.0, -s);
            col += 2;
        }
    }
    b
}

/// The step set in the cheapest exact arithmetic: real in the Hermitian basis when possible.
pub enum StepKernel {
    Real { kernel: Kernel<f64>, basis: DMatrix<C64> },
    Complex(Kernel<C64>),
}

impl StepKernel {
    pub fn new(steps: &[SuperOp]) -> Self {
        let dim_h = steps[0].dim_h();
        let d = dim_h * dim_h;
        let basis = hermitian_basis(dim_h);
        let rotated: Vec<DMatrix<C64>> = steps.iter().map(|s| basis.adjoint() * s.matrix() * &basis).collect();
        let real = rotated.iter().all(|m| {
            let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
            m.iter().all(|z| z.im.abs() <= 1e-13 * scale)
        });
        if real {
            let flat = rotated.iter().map(|m| m.iter().map(|z| z.re).collect()).collect();
            StepKernel::Real { kernel: Kernel::new(d, flat), basis }
        } else {
            let flat = steps.iter().map(|s| s.matrix().as_slice().to_vec()).collect();
            StepKernel::Complex(Kernel::new(d, flat))
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, StepKernel::Real { .. })
    }

    pub fn run(
        &self,
        dim_h: usize,
        src: &mut IndexSource,
        checkpoints: &[u64],
        record: Option<&mut Vec<u32>>,
    ) -> Vec<SuperOp> {
        let d = dim_h * dim_h;
        match self {
            StepKernel::Real { kernel, basis } => kernel
                .run(src, checkpoints, record)
                .into_iter()
                .map(|flat| {
                    let r = DMatrix::from_iterator(d, d, flat.into_iter().map(|x| C64::new(x, 0.0)));
                    SuperOp::new_unchecked(dim_h, basis * r * basis.adjoint())
                })
                .collect(),
            StepKernel::Complex(kernel) => kernel
                .run(src, checkpoints, record)
                .into_iter()
                .map(|flat| SuperOp::new_unchecked(dim_h, DMatrix::from_vec(d, d, flat)))
                .collect(),
        }
    }
}
