//! Sampled grids and their on-disk formats.
//!
//! Binary layout (little endian): a 32-byte header
//! `"WFG1" | nx: u32 | ny: u32 | x0, x1, y0, y1: f32 | reserved: u32 = 0`
//! followed by `nx * ny` values as `f64`, row-major with `x` fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{FieldExpr, Program, Rect};
use crate::Scalar;

pub const MAGIC: &[u8; 4] = b"WFG1";
pub const HEADER_LEN: usize = 32;

/// Values of a field at `nx x ny` points spanning a rectangle, edges included.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// `values[j * nx + i]` is the sample at `(x_i, y_j)`.
    pub values: Vec<f64>,
}

impl Grid {
    pub fn sample<S: Scalar>(field: &FieldExpr<S>, rect: &Rect<S>, nx: usize, ny: usize) -> Self {
        let nx = nx.max(2);
        let ny = ny.max(2);
        let mut g = Grid {
            nx,
            ny,
            x_range: [rect.min[0].as_f64(), rect.max[0].as_f64()],
            y_range: [rect.min[1].as_f64(), rect.max[1].as_f64()],
            values: Vec::new(),
        };
        let pts: Vec<[S; 2]> = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| {
                let p = g.point(i, j);
                [S::lit(p[0]), S::lit(p[1])]
            })
            .collect();
        let prog = Program::compile(std::slice::from_ref(field));
        g.values = prog.eval_points(&pts).into_iter().map(|v| v.as_f64()).collect();
        g
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        let t = |k: usize, n: usize, r: [f64; 2]| r[0] + (r[1] - r[0]) * k as f64 / (n - 1) as f64;
        [t(i, self.nx, self.x_range), t(j, self.ny, self.y_range)]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        for r in [self.x_range, self.y_range] {
            for v in r {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let fmt = |field: &'static str, reason: String| Error::Format { field, reason };
        if b.len() < 4 || &b[..4] != MAGIC {
            return Err(fmt("magic", "expected \"WFG1\"".into()));
        }
        let word = |off: usize, field: &'static str| -> Result<[u8; 4]> {
            b.get(off..off + 4)
                .map(|s| s.try_into().expect("4 bytes"))
                .ok_or_else(|| fmt(field, format!("header truncated at byte {}", b.len())))
        };
        let nx = u32::from_le_bytes(word(4, "nx")?) as usize;
        let ny = u32::from_le_bytes(word(8, "ny")?) as usize;
        if nx < 2 || ny < 2 {
            return Err(fmt(if nx < 2 { "nx" } else { "ny" }, format!("grid must be at least 2x2, got {nx}x{ny}")));
        }
        let f = |off, name| -> Result<f64> { Ok(f32::from_le_bytes(word(off, name)?) as f64) };
        let x_range = [f(12, "x_range")?, f(16, "x_range")?];
        let y_range = [f(20, "y_range")?, f(24, "y_range")?];
        if !(x_range[0] < x_range[1]) {
            return Err(fmt("x_range", format!("empty range {x_range:?}")));
        }
        if !(y_range[0] < y_range[1]) {
            return Err(fmt("y_range", format!("empty range {y_range:?}")));
        }
        word(28, "reserved")?;
        let need = HEADER_LEN + 8 * nx * ny;
        if b.len() != need {
            return Err(fmt("data", format!("expected {need} bytes for {nx}x{ny} values, found {}", b.len())));
        }
        let values = b[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Grid { nx, ny, x_range, y_range, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// `x,y,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,value\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let p = self.point(i, j);
                s.push_str(&format!("{},{},{}\n", p[0], p[1], self.get(i, j)));
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Second-order finite-difference partials `(d1, d2)` on the same points:
    /// central inside, one-sided three-point stencils on the edges.
    pub fn gradient(&self) -> Result<[Grid; 2]> {
        if self.nx < 3 || self.ny < 3 {
            return Err(Error::Argument(format!("gradient needs at least 3x3 samples, got {}x{}", self.nx, self.ny)));
        }
        let hx = (self.x_range[1] - self.x_range[0]) / (self.nx - 1) as f64;
        let hy = (self.y_range[1] - self.y_range[0]) / (self.ny - 1) as f64;
        let diff = |f: &dyn Fn(usize) -> f64, k: usize, n: usize, h: f64| {
            if k == 0 {
                (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h)
            } else {
                (f(k + 1) - f(k - 1)) / (2.0 * h)
            }
        };
        let mut d1 = self.clone();
        let mut d2 = self.clone();
        for j in 0..self.ny {
            for i in 0..self.nx {
                d1.values[j * self.nx + i] = diff(&|k| self.get(k, j), i, self.nx, hx);
                d2.values[j * self.nx + i] = diff(&|k| self.get(i, k), j, self.ny, hy);
            }
        }
        Ok([d1, d2])
    }

    /// Bilinear interpolation inside the grid rectangle.
    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        let fx = ((p[0] - self.x_range[0]) / (self.x_range[1] - self.x_range[0]) * (self.nx - 1) as f64).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((p[1] - self.y_range[0]) / (self.y_range[1] - self.y_range[0]) * (self.ny - 1) as f64).clamp(0.0, (self.ny - 1) as f64);
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v00 = self.get(i, j);
        let v10 = self.get(i + 1, j);
        let v01 = self.get(i, j + 1);
        let v11 = self.get(i + 1, j + 1);
        v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
    }
}
