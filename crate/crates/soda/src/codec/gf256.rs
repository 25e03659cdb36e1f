//! GF(2^8) arithmetic and small dense matrices over the field.
//!
//! Field: GF(256) with primitive polynomial x^8 + x^4 + x^3 + x^2 + 1
//! (0x11d) and generator alpha = 2. Multiplication goes through
//! compile-time exp/log tables; the double-length exp table avoids a
//! modulo in the hot path.

const PRIMITIVE_POLY: u16 = 0x11d;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

static TABLES: Tables = build_tables();

const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0usize;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= PRIMITIVE_POLY;
        }
        i += 1;
    }
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    Tables { exp, log }
}

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        TABLES.exp[TABLES.log[a as usize] as usize + TABLES.log[b as usize] as usize]
    }
}

#[inline]
pub fn inv(a: u8) -> u8 {
    debug_assert!(a != 0, "inverse of zero");
    TABLES.exp[255 - TABLES.log[a as usize] as usize]
}

#[inline]
pub fn div(a: u8, b: u8) -> u8 {
    mul(a, inv(b))
}

/// x^p by repeated table lookups; exponent taken mod 255.
pub fn pow(x: u8, p: u32) -> u8 {
    if x == 0 {
        return if p == 0 { 1 } else { 0 };
    }
    let l = TABLES.log[x as usize] as u32;
    TABLES.exp[((l * p) % 255) as usize]
}

/// Row-major dense matrix over GF(256).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl Matrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zero(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    /// Vandermonde matrix with evaluation points x_r = r + 1, so every
    /// square submatrix built from distinct rows is invertible.
    pub fn vandermonde(rows: usize, cols: usize) -> Self {
        let mut m = Matrix::zero(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, pow((r + 1) as u8, c as u32));
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Matrix::zero(self.rows, rhs.cols);
        for r in 0..self.rows {
            for i in 0..self.cols {
                let a = self.get(r, i);
                if a == 0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    let v = out.get(r, c) ^ mul(a, rhs.get(i, c));
                    out.set(r, c, v);
                }
            }
        }
        out
    }

    /// Picks the given rows into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut out = Matrix::zero(rows.len(), self.cols);
        for (i, &r) in rows.iter().enumerate() {
            for c in 0..self.cols {
                out.set(i, c, self.get(r, c));
            }
        }
        out
    }

    /// Gauss-Jordan inverse. Returns None for singular input.
    pub fn inverse(&self) -> Option<Matrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut b = Matrix::identity(n);
        for col in 0..n {
            let pivot = (col..n).find(|&r| a.get(r, col) != 0)?;
            if pivot != col {
                a.swap_rows(pivot, col);
                b.swap_rows(pivot, col);
            }
            let pv = inv(a.get(col, col));
            a.scale_row(col, pv);
            b.scale_row(col, pv);
            for r in 0..n {
                if r != col && a.get(r, col) != 0 {
                    let factor = a.get(r, col);
                    a.add_scaled_row(r, col, factor);
                    b.add_scaled_row(r, col, factor);
                }
            }
        }
        Some(b)
    }

    fn swap_rows(&mut self, r1: usize, r2: usize) {
        for c in 0..self.cols {
            let t = self.get(r1, c);
            self.set(r1, c, self.get(r2, c));
            self.set(r2, c, t);
        }
    }

    fn scale_row(&mut self, r: usize, by: u8) {
        for c in 0..self.cols {
            self.set(r, c, mul(self.get(r, c), by));
        }
    }

    /// row r -= factor * row src (same as += in GF(2^8)).
    fn add_scaled_row(&mut self, r: usize, src: usize, factor: u8) {
        for c in 0..self.cols {
            let v = self.get(r, c) ^ mul(factor, self.get(src, c));
            self.set(r, c, v);
        }
    }
}
