//! Compiled evaluation of expression DAGs.
//!
//! A [`Program`] flattens one or more expressions into a topologically
//! ordered instruction tape. Structurally identical nodes share a register.
//! Mollification nodes with the same kernel form a group whose inner fields
//! are compiled into a sub-program that runs once per quadrature point.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::field::bump::bump_derivative;
use crate::field::expr::{FieldExpr, Kind, Node};
use crate::field::mollify::Mollifier;
use crate::field::poisson::SineSeries;
use crate::Scalar;

enum Instr<S: Scalar> {
    Const(u32, S),
    Affine(u32, S, [S; 2]),
    Sum(u32, Box<[u32]>),
    Prod(u32, u32, u32),
    Scale(u32, S, u32),
    Sin(u32, u32),
    Cos(u32, u32),
    Powi(u32, u32, i32),
    Powf(u32, u32, S),
    Sqrt(u32, u32),
    Exp(u32, u32),
    Bump(u32, u32, u32),
    Sine(u32, Arc<SineSeries<S>>, [u8; 2]),
}

struct Group<S: Scalar> {
    kernel: Arc<Mollifier<S>>,
    sub: Program<S>,
    slots: Vec<u32>,
}

/// Executable form of a list of expressions.
pub struct Program<S: Scalar> {
    instrs: Vec<Instr<S>>,
    groups: Vec<Group<S>>,
    outputs: Vec<u32>,
    nregs: usize,
}

/// Reusable per-thread working memory for [`Program::eval_with`].
pub struct Scratch<S> {
    regs: Vec<S>,
    subs: Vec<(Scratch<S>, Vec<S>)>,
}

#[derive(PartialEq, Eq, Hash)]
enum Key {
    Const(u64),
    Affine(u64, u64, u64),
    Sum(Box<[u32]>),
    Prod(u32, u32),
    Scale(u64, u32),
    Sin(u32),
    Cos(u32),
    Powi(u32, i32),
    Powf(u32, u64),
    Exp(u32),
    Bump(u32, u32),
    Mollify(u64, usize, usize),
    Sine(usize, [u8; 2]),
}

fn bits<S: Scalar>(x: S) -> u64 {
    x.as_f64().to_bits()
}

struct Compiler<S: Scalar> {
    instrs: Vec<Instr<S>>,
    by_ptr: HashMap<*const Node<S>, u32>,
    by_key: HashMap<Key, u32>,
    groups: Vec<(Arc<Mollifier<S>>, Vec<FieldExpr<S>>, Vec<u32>)>,
    group_of: HashMap<(u64, usize), usize>,
    nregs: u32,
}

impl<S: Scalar> Compiler<S> {
    fn slot(&self, f: &FieldExpr<S>) -> u32 {
        self.by_ptr[&f.ptr()]
    }

    fn visit(&mut self, root: &FieldExpr<S>) -> u32 {
        let mut stack: Vec<(FieldExpr<S>, bool)> = vec![(root.clone(), false)];
        while let Some((f, expanded)) = stack.pop() {
            if self.by_ptr.contains_key(&f.ptr()) {
                continue;
            }
            if !expanded {
                stack.push((f.clone(), true));
                for ch in f.children() {
                    if !self.by_ptr.contains_key(&ch.ptr()) {
                        stack.push((ch.clone(), false));
                    }
                }
                continue;
            }
            let slot = self.emit(&f);
            self.by_ptr.insert(f.ptr(), slot);
        }
        self.slot(root)
    }

    fn emit(&mut self, f: &FieldExpr<S>) -> u32 {
        let key = match f.kind() {
            Kind::Const(c) => Key::Const(bits(*c)),
            Kind::Affine { c, g } => Key::Affine(bits(*c), bits(g[0]), bits(g[1])),
            Kind::Sum(ts) => Key::Sum(ts.iter().map(|t| self.slot(t)).collect()),
            Kind::Prod(a, b) => Key::Prod(self.slot(a), self.slot(b)),
            Kind::Scale(c, a) => Key::Scale(bits(*c), self.slot(a)),
            Kind::Sin(a) => Key::Sin(self.slot(a)),
            Kind::Cos(a) => Key::Cos(self.slot(a)),
            Kind::Powi(a, n) => Key::Powi(self.slot(a), *n),
            Kind::Powf(a, p) => Key::Powf(self.slot(a), bits(*p)),
            Kind::Exp(a) => Key::Exp(self.slot(a)),
            Kind::Bump { order, arg } => Key::Bump(*order, self.slot(arg)),
            Kind::Mollify { inner, kernel } => {
                Key::Mollify(bits(kernel.scale()), kernel.order(), inner.ptr() as usize)
            }
            Kind::Sine { series, deriv } => Key::Sine(Arc::as_ptr(series) as usize, *deriv),
        };
        if let Some(&s) = self.by_key.get(&key) {
            return s;
        }
        let dst = self.nregs;
        self.nregs += 1;
        let instr = match (f.kind(), &key) {
            (Kind::Const(c), _) => Instr::Const(dst, *c),
            (Kind::Affine { c, g }, _) => Instr::Affine(dst, *c, *g),
            (Kind::Sum(_), Key::Sum(args)) => Instr::Sum(dst, args.clone()),
            (Kind::Prod(..), Key::Prod(a, b)) => Instr::Prod(dst, *a, *b),
            (Kind::Scale(c, _), Key::Scale(_, a)) => Instr::Scale(dst, *c, *a),
            (Kind::Sin(_), Key::Sin(a)) => Instr::Sin(dst, *a),
            (Kind::Cos(_), Key::Cos(a)) => Instr::Cos(dst, *a),
            (Kind::Powi(_, n), Key::Powi(a, _)) => Instr::Powi(dst, *a, *n),
            (Kind::Powf(_, p), Key::Powf(a, _)) => {
                if *p == S::lit(0.5) {
                    Instr::Sqrt(dst, *a)
                } else {
                    Instr::Powf(dst, *a, *p)
                }
            }
            (Kind::Exp(_), Key::Exp(a)) => Instr::Exp(dst, *a),
            (Kind::Bump { order, .. }, Key::Bump(_, a)) => Instr::Bump(dst, *order, *a),
            (Kind::Sine { series, deriv }, _) => Instr::Sine(dst, series.clone(), *deriv),
            (Kind::Mollify { inner, kernel }, _) => {
                let gk = (bits(kernel.scale()), kernel.order());
                let gi = match self.group_of.get(&gk) {
                    Some(&i) => i,
                    None => {
                        self.groups.push((kernel.clone(), Vec::new(), Vec::new()));
                        self.group_of.insert(gk, self.groups.len() - 1);
                        self.groups.len() - 1
                    }
                };
                self.groups[gi].1.push(inner.clone());
                self.groups[gi].2.push(dst);
                self.by_key.insert(key, dst);
                return dst;
            }
            _ => unreachable!("key built from the same kind"),
        };
        self.instrs.push(instr);
        self.by_key.insert(key, dst);
        dst
    }
}

impl<S: Scalar> Program<S> {
    pub fn compile(roots: &[FieldExpr<S>]) -> Self {
        let mut c = Compiler {
            instrs: Vec::new(),
            by_ptr: HashMap::new(),
            by_key: HashMap::new(),
            groups: Vec::new(),
            group_of: HashMap::new(),
            nregs: 0,
        };
        let outputs = roots.iter().map(|r| c.visit(r)).collect();
        let groups = c
            .groups
            .into_iter()
            .map(|(kernel, inners, slots)| Group { kernel, sub: Program::compile(&inners), slots })
            .collect();
        Program { instrs: c.instrs, groups, outputs, nregs: c.nregs as usize }
    }

    /// Number of outputs per point.
    pub fn width(&self) -> usize {
        self.outputs.len()
    }

    /// Number of instructions, including those of nested sub-programs.
    pub fn size(&self) -> usize {
        self.instrs.len() + self.groups.iter().map(|g| g.sub.size()).sum::<usize>()
    }

    pub fn scratch(&self) -> Scratch<S> {
        Scratch {
            regs: vec![S::zero(); self.nregs],
            subs: self.groups.iter().map(|g| (g.sub.scratch(), vec![S::zero(); g.sub.width()])).collect(),
        }
    }

    pub fn eval(&self, p: [S; 2]) -> Vec<S> {
        let mut s = self.scratch();
        let mut out = vec![S::zero(); self.width()];
        self.eval_with(p, &mut s, &mut out);
        out
    }

    /// Evaluate at `p`, writing one value per output into `out`.
    pub fn eval_with(&self, p: [S; 2], scratch: &mut Scratch<S>, out: &mut [S]) {
        self.run(p, scratch);
        for (o, &r) in out.iter_mut().zip(&self.outputs) {
            *o = scratch.regs[r as usize];
        }
    }

    fn run(&self, p: [S; 2], scratch: &mut Scratch<S>) {
        let Scratch { regs, subs } = scratch;
        for (g, (sub_scratch, acc)) in self.groups.iter().zip(subs.iter_mut()) {
            acc.iter_mut().for_each(|a| *a = S::zero());
            for (off, &w) in g.kernel.offsets.iter().zip(&g.kernel.weights) {
                g.sub.run([p[0] - off[0], p[1] - off[1]], sub_scratch);
                for (a, &o) in acc.iter_mut().zip(&g.sub.outputs) {
                    *a += w * sub_scratch.regs[o as usize];
                }
            }
            for (&slot, &a) in g.slots.iter().zip(acc.iter()) {
                regs[slot as usize] = a;
            }
        }
        for ins in &self.instrs {
            match ins {
                Instr::Const(d, c) => regs[*d as usize] = *c,
                Instr::Affine(d, c, g) => regs[*d as usize] = *c + g[0] * p[0] + g[1] * p[1],
                Instr::Sum(d, args) => {
                    let mut s = S::zero();
                    for &a in args.iter() {
                        s += regs[a as usize];
                    }
                    regs[*d as usize] = s;
                }
                Instr::Prod(d, a, b) => {
                    let (x, y) = (regs[*a as usize], regs[*b as usize]);
                    // an exact zero factor wins, so values outside a bump
                    // support never leak NaN from the other factor
                    regs[*d as usize] = if x == S::zero() || y == S::zero() { S::zero() } else { x * y };
                }
                Instr::Scale(d, c, a) => regs[*d as usize] = *c * regs[*a as usize],
                Instr::Sin(d, a) => regs[*d as usize] = regs[*a as usize].sin(),
                Instr::Cos(d, a) => regs[*d as usize] = regs[*a as usize].cos(),
                Instr::Powi(d, a, n) => regs[*d as usize] = regs[*a as usize].powi(*n),
                Instr::Powf(d, a, e) => regs[*d as usize] = regs[*a as usize].powf(*e),
                Instr::Sqrt(d, a) => regs[*d as usize] = regs[*a as usize].sqrt(),
                Instr::Exp(d, a) => regs[*d as usize] = regs[*a as usize].exp(),
                Instr::Bump(d, k, a) => regs[*d as usize] = bump_derivative(*k, regs[*a as usize]),
                Instr::Sine(d, series, deriv) => regs[*d as usize] = series.eval_derivative(p, *deriv),
            }
        }
    }

    /// Evaluate at every point; the result is row-major with stride [`width`](Self::width).
    pub fn eval_points(&self, pts: &[[S; 2]]) -> Vec<S> {
        let w = self.width().max(1);
        let mut out = vec![S::zero(); pts.len() * w];
        crate::parallel::install(|| {
            out.par_chunks_mut(w).zip(pts.par_iter()).for_each_init(
                || self.scratch(),
                |s, (o, p)| self.eval_with(*p, s, &mut o[..self.width()]),
            )
        });
        out
    }

    /// Evaluate at every point and map the outputs through `f`.
    pub fn map_points<T: Send>(&self, pts: &[[S; 2]], f: impl Fn([S; 2], &[S]) -> T + Sync) -> Vec<T> {
        crate::parallel::install(|| {
            pts.par_iter()
                .map_init(
                    || (self.scratch(), vec![S::zero(); self.width()]),
                    |(s, o), p| {
                        self.eval_with(*p, s, o);
                        f(*p, o)
                    },
                )
                .collect()
        })
    }
}
