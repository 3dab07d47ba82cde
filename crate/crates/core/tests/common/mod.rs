//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's evaluators; formulas are built as text and parsed.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use stlddp::stl::{Predicate, PredicateTable};

/// Affine predicate `coeffs . y - offset`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl Affine {
    pub fn mu(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }
}

#[derive(Debug, Clone)]
pub enum State {
    Pred(usize),
    Neg(usize),
    And(Vec<State>),
    Or(Vec<State>),
}

#[derive(Debug, Clone)]
pub enum Path {
    Always(State, usize, usize),
    Eventually(State, usize, usize),
    Until(State, State, usize, usize),
}

#[derive(Debug, Clone)]
pub struct Spec {
    pub preds: Vec<Affine>,
    pub conjuncts: Vec<Path>,
}

impl State {
    pub fn text(&self, names: &[String]) -> String {
        match self {
            State::Pred(i) => names[*i].clone(),
            State::Neg(i) => format!("not {}", names[*i]),
            State::And(cs) => format!("({})", cs.iter().map(|c| c.text(names)).collect::<Vec<_>>().join(" & ")),
            State::Or(cs) => format!("({})", cs.iter().map(|c| c.text(names)).collect::<Vec<_>>().join(" | ")),
        }
    }

    pub fn eval(&self, preds: &[Affine], y: &[f64]) -> f64 {
        match self {
            State::Pred(i) => preds[*i].mu(y),
            State::Neg(i) => -preds[*i].mu(y),
            State::And(cs) => cs.iter().map(|c| c.eval(preds, y)).fold(f64::INFINITY, f64::min),
            State::Or(cs) => cs.iter().map(|c| c.eval(preds, y)).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl Path {
    pub fn bound(&self) -> usize {
        match self {
            Path::Always(_, _, b) | Path::Eventually(_, _, b) | Path::Until(_, _, _, b) => *b,
        }
    }

    pub fn text(&self, names: &[String]) -> String {
        match self {
            Path::Always(s, a, b) => format!("G[{a},{b}] {}", s_paren(s, names)),
            Path::Eventually(s, a, b) => format!("F[{a},{b}] {}", s_paren(s, names)),
            Path::Until(l, r, a, b) => format!("({} U[{a},{b}] {})", s_paren(l, names), s_paren(r, names)),
        }
    }

    /// Brute-force robustness at time `t` straight from the definitions.
    /// Until requires its left operand on `[t+a, t')` only.
    pub fn eval(&self, preds: &[Affine], sig: &[Vec<f64>], t: usize) -> f64 {
        match self {
            Path::Always(s, a, b) => {
                let mut r = f64::INFINITY;
                for k in t + a..=t + b {
                    r = r.min(s.eval(preds, &sig[k]));
                }
                r
            }
            Path::Eventually(s, a, b) => {
                let mut r = f64::NEG_INFINITY;
                for k in t + a..=t + b {
                    r = r.max(s.eval(preds, &sig[k]));
                }
                r
            }
            Path::Until(l, rgt, a, b) => {
                let mut best = f64::NEG_INFINITY;
                for tp in t + a..=t + b {
                    let mut hold = f64::INFINITY;
                    for tpp in t + a..tp {
                        hold = hold.min(l.eval(preds, &sig[tpp]));
                    }
                    best = best.max(rgt.eval(preds, &sig[tp]).min(hold));
                }
                best
            }
        }
    }
}

fn s_paren(s: &State, names: &[String]) -> String {
    match s {
        State::Neg(_) => format!("({})", s.text(names)),
        _ => s.text(names),
    }
}

impl Spec {
    pub fn names(&self) -> Vec<String> {
        self.preds.iter().map(|p| p.name.clone()).collect()
    }

    pub fn text(&self) -> String {
        let names = self.names();
        self.conjuncts.iter().map(|c| c.text(&names)).collect::<Vec<_>>().join(" & ")
    }

    pub fn bound(&self) -> usize {
        self.conjuncts.iter().map(Path::bound).max().unwrap_or(0)
    }

    pub fn eval(&self, sig: &[Vec<f64>]) -> f64 {
        self.conjuncts.iter().map(|c| c.eval(&self.preds, sig, 0)).fold(f64::INFINITY, f64::min)
    }

    pub fn table(&self) -> PredicateTable {
        self.preds.iter().map(|p| Predicate::affine(p.name.clone(), p.coeffs.clone(), p.offset).unwrap()).collect()
    }
}

pub fn random_state<R: Rng>(rng: &mut R, npreds: usize, depth: usize) -> State {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        let i = rng.gen_range(0..npreds);
        return if rng.gen_bool(0.5) { State::Pred(i) } else { State::Neg(i) };
    }
    let n = rng.gen_range(2..=3);
    let children = (0..n).map(|_| random_state(rng, npreds, depth - 1)).collect();
    if rng.gen_bool(0.5) {
        State::And(children)
    } else {
        State::Or(children)
    }
}

pub fn random_interval<R: Rng>(rng: &mut R, max_bound: usize) -> (usize, usize) {
    let a = rng.gen_range(0..=max_bound);
    let b = rng.gen_range(a..=max_bound);
    (a, b)
}

/// `kind` selects G (0), F (1) or U (2); `None` draws it at random.
pub fn random_path<R: Rng>(rng: &mut R, npreds: usize, max_bound: usize, kind: Option<usize>) -> Path {
    let (a, b) = random_interval(rng, max_bound);
    match kind.unwrap_or_else(|| rng.gen_range(0..3)) {
        0 => Path::Always(random_state(rng, npreds, 2), a, b),
        1 => Path::Eventually(random_state(rng, npreds, 2), a, b),
        _ => Path::Until(random_state(rng, npreds, 1), random_state(rng, npreds, 1), a, b),
    }
}

/// One-dimensional affine predicates `a y - b` named `p0`, `p1`, ...
pub fn scalar_predicates<R: Rng>(rng: &mut R, n: usize) -> Vec<Affine> {
    (0..n)
        .map(|i| Affine {
            name: format!("p{i}"),
            coeffs: vec![[-2.0, -1.0, 1.0, 2.0][rng.gen_range(0..4)]],
            offset: [-0.5, 0.0, 0.5, 0.25][rng.gen_range(0..4)],
        })
        .collect()
}

pub fn random_conjuncts<R: Rng>(rng: &mut R, npreds: usize, max_bound: usize, first_kind: Option<usize>) -> Vec<Path> {
    let n = rng.gen_range(1..=3);
    (0..n).map(|i| random_path(rng, npreds, max_bound, if i == 0 { first_kind } else { None })).collect()
}

pub fn random_spec<R: Rng>(rng: &mut R, npreds: usize, max_bound: usize, first_kind: Option<usize>) -> Spec {
    let preds = scalar_predicates(rng, npreds);
    let conjuncts = random_conjuncts(rng, npreds, max_bound, first_kind);
    Spec { preds, conjuncts }
}

/// All length-`len` scalar signals over `grid`, in lexicographic order.
pub fn all_signals(grid: &[f64], len: usize) -> Vec<Vec<Vec<f64>>> {
    let total = grid.len().pow(len as u32);
    (0..total)
        .map(|mut code| {
            (0..len)
                .map(|_| {
                    let v = grid[code % grid.len()];
                    code /= grid.len();
                    vec![v]
                })
                .collect()
        })
        .collect()
}

/// Riccati feedback gains `K_0 .. K_{T-1}` for the law `u_t = -K_t x_t`.
pub fn riccati_gains(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, qf: &DMatrix<f64>, horizon: usize) -> Vec<DMatrix<f64>> {
    let mut p = qf.clone();
    let mut gains = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let s = r + b.transpose() * &p * b;
        let k = s.try_inverse().expect("invertible") * b.transpose() * &p * a;
        let acl = a - b * &k;
        p = q + k.transpose() * r * &k + acl.transpose() * &p * &acl;
        gains.push(k);
    }
    gains.reverse();
    gains
}

/// Optimal finite-horizon LQR cost by simulating the Riccati feedback law
/// and summing stage costs (`u_T = 0`).
pub fn lqr_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, qf: &DMatrix<f64>, horizon: usize, x0: &DVector<f64>) -> f64 {
    let mut x = x0.clone();
    let mut cost = 0.0;
    for k in &riccati_gains(a, b, q, r, qf, horizon) {
        let u = -(k * &x);
        cost += 0.5 * (x.dot(&(q * &x)) + u.dot(&(r * &u)));
        x = a * &x + b * &u;
    }
    cost + 0.5 * x.dot(&(qf * &x))
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// `M M' + floor I`, symmetric positive definite.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    &m * m.transpose() + DMatrix::identity(n, n) * floor
}

pub fn controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        ctrb.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    ctrb.rank(1e-8) == n
}

/// Relative error with an absolute floor of one.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Random planar boxes and balls named `r0`, `r1`, ... inside `[-1, 4]^2`.
pub fn random_regions<R: Rng>(rng: &mut R, n: usize) -> Vec<Predicate> {
    (0..n)
        .map(|i| {
            let name = format!("r{i}");
            let c = [rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..3.0)];
            if rng.gen_bool(0.5) {
                let size = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
                Predicate::boxed(name, &c, &[c[0] + size[0], c[1] + size[1]]).unwrap()
            } else {
                Predicate::ball(name, c.to_vec(), rng.gen_range(0.3..1.5), 1e-3).unwrap()
            }
        })
        .collect()
}

/// Central-difference gradient of `f` at `y`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, y: &[f64], h: f64) -> Vec<f64> {
    let mut probe = y.to_vec();
    (0..y.len())
        .map(|i| {
            probe[i] = y[i] + h;
            let up = f(&probe);
            probe[i] = y[i] - h;
            let down = f(&probe);
            probe[i] = y[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)` over the Euclidean norm.
pub fn rel_vec_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}
