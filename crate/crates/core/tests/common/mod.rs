//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use drn_core::model::{DrnParams, DrnState, UnitPolarity};
use drn_core::solver::{self, SolverConfig};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Conductance in `{0} ∪ [0.1, 1]`, zero with probability `p_zero`.
fn conductance(rng: &mut ChaCha8Rng, p_zero: f64) -> f64 {
    if rng.gen_bool(p_zero) {
        0.0
    } else {
        rng.gen_range(0.1..=1.0)
    }
}

/// Random network with the given widths: sparse couplings, every free node
/// wired to the previous layer, optional leaks and random gains.
pub fn random_network(rng: &mut ChaCha8Rng, widths: &[usize], leaks: bool) -> DrnParams {
    let num_layers = widths.len() - 1;
    let template = drn_core::model::random_drn(widths, 0).unwrap();
    let mut couplings = Vec::new();
    let mut leak_vecs = Vec::new();
    for l in 1..=num_layers {
        let mut g = Array2::zeros((widths[l - 1], widths[l]));
        for k in 0..widths[l] {
            if template.polarity(l, k).is_pinned() {
                continue;
            }
            loop {
                for j in 0..widths[l - 1] {
                    g[[j, k]] = conductance(rng, 0.3);
                }
                if g.column(k).iter().any(|&v| v > 0.0) {
                    break;
                }
            }
        }
        couplings.push(g);
        let leak = Array1::from_shape_fn(widths[l], |k| {
            if leaks && !template.polarity(l, k).is_pinned() {
                conductance(rng, 0.5)
            } else {
                0.0
            }
        });
        leak_vecs.push(leak);
    }
    let gains = (0..num_layers).map(|_| rng.gen_range(0.5..2.0)).collect();
    DrnParams::new(widths.to_vec(), couplings, leak_vecs, gains, leaks).unwrap()
}

/// Widths with `L <= 3` layers and every layer at most 6 nodes wide.
pub fn random_widths(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let num_layers = rng.gen_range(1..=3);
    let mut w = vec![2 * rng.gen_range(1..=2) + 2];
    for _ in 1..num_layers {
        w.push(rng.gen_range(3..=6));
    }
    w.push(rng.gen_range(1..=6));
    w
}

pub fn random_inputs(rng: &mut ChaCha8Rng, batch: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((batch, dim), |_| rng.gen_range(-1.0..1.0))
}

/// Dense quadratic model `E(u) = uᵀQu - 2bᵀu + c` of one batch row over the
/// free (non-pinned) nodes, plus the bookkeeping to move between `u` and a
/// layered state.
pub struct Quadratic {
    pub q: Array2<f64>,
    pub b: Array1<f64>,
    pub index: Vec<(usize, usize)>,
    pub polarity: Vec<UnitPolarity>,
}

impl Quadratic {
    /// `pinned` holds the full potentials of the pinned layers/nodes (the
    /// free entries are ignored). `nudge` adds `β Σ (v_out - y)²`.
    pub fn new(params: &DrnParams, pinned: &[Vec<f64>], nudge: Option<(&[f64], f64)>) -> Self {
        let widths = params.widths();
        let mut slot = vec![vec![None; 0]; widths.len()];
        let mut index = Vec::new();
        let mut polarity = Vec::new();
        for (l, &n) in widths.iter().enumerate() {
            slot[l] = vec![None; n];
            for k in 0..n {
                let pol = params.polarity(l, k);
                if !pol.is_pinned() {
                    slot[l][k] = Some(index.len());
                    index.push((l, k));
                    polarity.push(pol);
                }
            }
        }
        let n = index.len();
        let mut q = Array2::zeros((n, n));
        let mut b = Array1::zeros(n);
        for l in 1..widths.len() {
            let g = params.coupling(l);
            for j in 0..widths[l - 1] {
                for k in 0..widths[l] {
                    let c = g[[j, k]];
                    if c == 0.0 {
                        continue;
                    }
                    match (slot[l - 1][j], slot[l][k]) {
                        (Some(a), Some(z)) => {
                            q[[a, a]] += c;
                            q[[z, z]] += c;
                            q[[a, z]] -= c;
                            q[[z, a]] -= c;
                        }
                        (None, Some(z)) => {
                            q[[z, z]] += c;
                            b[z] += c * pinned[l - 1][j];
                        }
                        (Some(a), None) => {
                            q[[a, a]] += c;
                            b[a] += c * pinned[l][k];
                        }
                        (None, None) => {}
                    }
                }
            }
            if params.leaks_enabled() {
                for (k, &c) in params.leak(l).iter().enumerate() {
                    if let Some(z) = slot[l][k] {
                        q[[z, z]] += c;
                    }
                }
            }
        }
        if let Some((y, beta)) = nudge {
            let last = widths.len() - 1;
            for (k, &t) in y.iter().enumerate() {
                let z = slot[last][k].expect("output nodes are free");
                q[[z, z]] += beta;
                b[z] += beta * t;
            }
        }
        Quadratic { q, b, index, polarity }
    }

    /// Projected gradient descent with step `1/λ`, `λ` a Gershgorin bound on
    /// the largest eigenvalue of `Q`, started from zero. Stops once a full
    /// step moves no coordinate by more than `tol`.
    pub fn minimize(&self, tol: f64, max_iter: usize) -> (Array1<f64>, bool) {
        let n = self.b.len();
        let lambda = self
            .q
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut u = Array1::zeros(n);
        for _ in 0..max_iter {
            let grad = self.q.dot(&u) - &self.b;
            let mut moved = 0.0f64;
            for i in 0..n {
                let next = project(self.polarity[i], u[i] - grad[i] / lambda);
                moved = moved.max((next - u[i]).abs());
                u[i] = next;
            }
            if moved <= tol {
                return (u, true);
            }
        }
        (u, false)
    }

    pub fn energy(&self, u: &Array1<f64>) -> f64 {
        u.dot(&self.q.dot(u)) - 2.0 * self.b.dot(u)
    }
}

fn project(pol: UnitPolarity, p: f64) -> f64 {
    match pol {
        UnitPolarity::Excitatory => p.max(0.0),
        UnitPolarity::Inhibitory => p.min(0.0),
        _ => p,
    }
}

/// Pinned potentials of every batch row of `state` (free nodes included but
/// ignored by [`Quadratic`]).
pub fn rows_of(state: &DrnState, row: usize) -> Vec<Vec<f64>> {
    state.layers().iter().map(|v| v.row(row).to_vec()).collect()
}

/// Minimizes the (optionally nudged) energy of every batch row with the
/// projected-gradient oracle and returns the resulting state.
pub fn oracle_state(params: &DrnParams, xs: &Array2<f64>, targets: Option<(&Array2<f64>, f64)>) -> DrnState {
    let mut state = DrnState::initial(params, xs.view()).unwrap();
    for r in 0..xs.nrows() {
        let pinned = rows_of(&state, r);
        let y = targets.map(|(t, beta)| (t.row(r).to_vec(), beta));
        let quad = Quadratic::new(params, &pinned, y.as_ref().map(|(t, beta)| (t.as_slice(), *beta)));
        let (u, converged) = quad.minimize(1e-14, 20_000_000);
        assert!(converged, "oracle did not converge");
        for (i, &(l, k)) in quad.index.iter().enumerate() {
            state.layer_mut(l)[[r, k]] = u[i];
        }
    }
    state
}

pub fn max_abs_diff(a: &DrnState, b: &DrnState) -> f64 {
    a.layers()
        .iter()
        .zip(b.layers())
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Batch-mean cost `Σ_k (v_out - y)²` at the free steady state.
pub fn steady_cost(params: &DrnParams, xs: &Array2<f64>, targets: &Array2<f64>) -> f64 {
    let (state, _) = solver::solve_steady_state(params, xs.view(), &SolverConfig::converged(1e-15, 10_000_000)).unwrap();
    solver::costs(&state, targets.view()).mean().unwrap()
}

/// Copy of `params` with coupling `(layer, j, k)` shifted by `delta`.
pub fn perturbed(params: &DrnParams, layer: usize, j: usize, k: usize, delta: f64) -> DrnParams {
    let num_layers = params.num_layers();
    let mut couplings: Vec<Array2<f64>> = (1..=num_layers).map(|l| params.coupling(l).to_owned()).collect();
    couplings[layer - 1][[j, k]] += delta;
    let leaks = (1..=num_layers).map(|l| params.leak(l).to_owned()).collect();
    DrnParams::new(params.widths().to_vec(), couplings, leaks, params.gains().to_vec(), params.leaks_enabled()).unwrap()
}

/// Centered finite-difference gradient of [`steady_cost`] for every strictly
/// positive coupling; `None` where the coupling is zero (the one-sided
/// feasible set has no centered stencil there).
pub fn fd_gradient(params: &DrnParams, xs: &Array2<f64>, targets: &Array2<f64>, h: f64) -> Vec<Array2<Option<f64>>> {
    (1..=params.num_layers())
        .map(|l| {
            let g = params.coupling(l);
            Array2::from_shape_fn(g.dim(), |(j, k)| {
                (g[[j, k]] > h).then(|| {
                    let plus = steady_cost(&perturbed(params, l, j, k, h), xs, targets);
                    let minus = steady_cost(&perturbed(params, l, j, k, -h), xs, targets);
                    (plus - minus) / (2.0 * h)
                })
            })
        })
        .collect()
}
