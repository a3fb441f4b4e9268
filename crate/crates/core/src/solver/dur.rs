//! Decomposed updating reanalysis against the first-iteration system.
//!
//! Write the current system as `K U = F` and the first iteration as
//! `K1 U1 = F1`, both embedded in the current DOF space. With
//! `U = U1 + ΔU`, the correction solves `K ΔU = δ` where `δ = F − K U1`.
//! DOFs whose stiffness row and residual are unchanged ("balanced", `m`) give
//! `K_mm ΔU_m + K_mn ΔU_n = 0`; the remaining `n` DOFs give a small Schur
//! system. `K_mm` is a principal block of `K1`, so every application of
//! `K_mm⁻¹` reuses the first-iteration factor through the identity
//! `K1[m,m]⁻¹ = G_mm − G_mc G_cc⁻¹ G_cm`, `G = K1⁻¹`, where `c` is the
//! complement of `m` in the first-iteration DOF set. Entries of `G_cc` come
//! from sparse triangular solves and are cached across steps.

use std::collections::HashMap;

use log::{debug, warn};

use super::cholesky::{SparseCholesky, SparseVec};
use super::dense::{DenseCholesky, DenseMatrix};
use crate::error::SolverError;
use crate::mesh::{DofKey, DofKind};
use crate::sparse::{norm2, CsrMatrix};

/// Relative threshold on `Δ_j` that marks a DOF unbalanced.
pub const UNBALANCED_TOL: f64 = 1e-12;

/// Residual level below which no refinement pass is attempted.
const REFINE_TARGET: f64 = 1e-11;
const MAX_REFINE: usize = 2;

/// First-iteration system retained for reanalysis.
#[derive(Debug, Clone)]
pub struct ReanalysisState {
    keys: Vec<DofKey>,
    index_of: HashMap<DofKey, usize>,
    k1: CsrMatrix,
    u1: Vec<f64>,
    f1: Vec<f64>,
    factor: SparseCholesky,
    columns: HashMap<usize, SparseVec>,
    inverse: HashMap<(usize, usize), f64>,
}

impl ReanalysisState {
    pub fn new(keys: Vec<DofKey>, k1: CsrMatrix, f1: Vec<f64>, u1: Vec<f64>, factor: SparseCholesky) -> Result<Self, SolverError> {
        let n = k1.n();
        if keys.len() != n || f1.len() != n || u1.len() != n || factor.n() != n {
            return Err(SolverError::Dimension(format!(
                "state parts disagree: keys {}, K {n}, F {}, U {}, factor {}",
                keys.len(),
                f1.len(),
                u1.len(),
                factor.n()
            )));
        }
        let index_of = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        Ok(Self {
            keys,
            index_of,
            k1,
            u1,
            f1,
            factor,
            columns: HashMap::new(),
            inverse: HashMap::new(),
        })
    }

    pub fn keys(&self) -> &[DofKey] {
        &self.keys
    }

    pub fn k1(&self) -> &CsrMatrix {
        &self.k1
    }

    pub fn u1(&self) -> &[f64] {
        &self.u1
    }

    pub fn f1(&self) -> &[f64] {
        &self.f1
    }

    /// Number of cached inverse entries.
    pub fn cached_entries(&self) -> usize {
        self.inverse.len()
    }

    /// Dense block `G[idx, idx]`; entries not yet cached are computed by
    /// scattering one factor column and gathering against the others.
    fn inverse_block(&mut self, idx: &[usize]) -> DenseMatrix {
        for &k in idx {
            if !self.columns.contains_key(&k) {
                let col = self.factor.forward_unit(k);
                self.columns.insert(k, col);
            }
        }
        let q = idx.len();
        let mut missing = vec![0usize; q];
        let mut pairs = Vec::new();
        for a in 0..q {
            for b in 0..=a {
                let key = (idx[a].min(idx[b]), idx[a].max(idx[b]));
                if !self.inverse.contains_key(&key) {
                    missing[a] += 1;
                    missing[b] += 1;
                    pairs.push((a, b));
                }
            }
        }
        // each pair is computed from the endpoint with more missing entries
        let mut by_owner: Vec<Vec<usize>> = vec![Vec::new(); q];
        for &(a, b) in &pairs {
            let (owner, other) = if missing[a] >= missing[b] { (a, b) } else { (b, a) };
            by_owner[owner].push(other);
        }
        let mut work = vec![0.0; self.factor.n()];
        for (owner, others) in by_owner.iter().enumerate() {
            if others.is_empty() {
                continue;
            }
            let col = &self.columns[&idx[owner]];
            for (&i, &v) in col.idx.iter().zip(&col.val) {
                work[i] = v;
            }
            for &o in others {
                let c = &self.columns[&idx[o]];
                let v: f64 = c.idx.iter().zip(&c.val).map(|(&i, &x)| x * work[i]).sum();
                let key = (idx[owner].min(idx[o]), idx[owner].max(idx[o]));
                self.inverse.insert(key, v);
            }
            for &i in &col.idx {
                work[i] = 0.0;
            }
        }
        let mut g = DenseMatrix::zeros(q);
        for a in 0..q {
            for b in 0..=a {
                let v = self.inverse[&(idx[a].min(idx[b]), idx[a].max(idx[b]))];
                g.set(a, b, v);
                g.set(b, a, v);
            }
        }
        g
    }
}

/// First-iteration quantities expressed in the current DOF numbering.
#[derive(Debug, Clone)]
pub struct Embedded {
    pub k1: CsrMatrix,
    pub u1: Vec<f64>,
    pub f1: Vec<f64>,
    /// First-iteration index of each current DOF, if it existed then.
    pub old_of: Vec<Option<usize>>,
    /// First-iteration DOFs absent from the current system.
    pub dropped: Vec<usize>,
}

/// Maps the first-iteration system into the current DOF space, inserting
/// zero rows, columns and entries for DOFs created since.
///
/// Enriched DOFs may disappear (a former tip node loses its branch
/// functions); a vanished standard DOF means the structure itself changed
/// and is rejected.
pub fn embed_previous(state: &ReanalysisState, current: &[DofKey]) -> Result<Embedded, SolverError> {
    let mut old_of = vec![None; current.len()];
    let mut new_of = vec![None; state.keys.len()];
    for (c, key) in current.iter().enumerate() {
        if let Some(&o) = state.index_of.get(key) {
            old_of[c] = Some(o);
            new_of[o] = Some(c);
        }
    }
    let mut dropped = Vec::new();
    for (o, n) in new_of.iter().enumerate() {
        if n.is_none() {
            let key = state.keys[o];
            if key.kind == DofKind::Standard {
                return Err(SolverError::MissingDof(format!("node {} component {}", key.node, key.component)));
            }
            dropped.push(o);
        }
    }
    let k1 = state.k1.remap(&new_of, current.len());
    let scatter = |v: &[f64]| -> Vec<f64> { old_of.iter().map(|o| o.map_or(0.0, |o| v[o])).collect() };
    Ok(Embedded {
        k1,
        u1: scatter(&state.u1),
        f1: scatter(&state.f1),
        old_of,
        dropped,
    })
}

/// Balanced and unbalanced DOF index sets, both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DofPartition {
    pub balanced: Vec<usize>,
    pub unbalanced: Vec<usize>,
}

/// Marks DOF `j` unbalanced when `Σ_k |K[j,k] − K1[j,k]| + |δ_j|` exceeds
/// `1e-12` times the largest absolute row sum of `K`; returns `δ = F − K U1`.
pub fn detect_unbalanced(k: &CsrMatrix, k1: &CsrMatrix, f: &[f64], u1: &[f64]) -> (DofPartition, Vec<f64>) {
    let n = k.n();
    assert_eq!(k1.n(), n);
    let ku = k.mul_vec(u1);
    let delta: Vec<f64> = f.iter().zip(&ku).map(|(a, b)| a - b).collect();
    let tau = UNBALANCED_TOL * k.row_abs_sums().into_iter().fold(0.0, f64::max);
    let mut part = DofPartition::default();
    for j in 0..n {
        let change = row_difference(k.row(j), k1.row(j)) + delta[j].abs();
        if change > tau {
            part.unbalanced.push(j);
        } else {
            part.balanced.push(j);
        }
    }
    (part, delta)
}

fn row_difference((ca, va): (&[usize], &[f64]), (cb, vb): (&[usize], &[f64])) -> f64 {
    let (mut a, mut b, mut s) = (0, 0, 0.0);
    while a < ca.len() || b < cb.len() {
        let ja = ca.get(a).copied().unwrap_or(usize::MAX);
        let jb = cb.get(b).copied().unwrap_or(usize::MAX);
        if ja == jb {
            s += (va[a] - vb[b]).abs();
            a += 1;
            b += 1;
        } else if ja < jb {
            s += va[a].abs();
            a += 1;
        } else {
            s += vb[b].abs();
            b += 1;
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct DurOutcome {
    pub u: Vec<f64>,
    /// Size of the Schur system.
    pub schur_dim: usize,
    /// Refinement passes applied.
    pub refinements: usize,
    /// The Schur factorization failed and a full solve was used instead.
    pub fell_back: bool,
}

/// Solves the current system by block elimination on the unbalanced DOFs.
pub fn dur_solve(
    k: &CsrMatrix,
    f: &[f64],
    state: &mut ReanalysisState,
    emb: &Embedded,
    part: &DofPartition,
    delta: &[f64],
) -> Result<DurOutcome, SolverError> {
    let n_cur = k.n();
    if f.len() != n_cur || emb.u1.len() != n_cur || delta.len() != n_cur {
        return Err(SolverError::Dimension("current system and embedding disagree".into()));
    }
    if part.unbalanced.is_empty() {
        return Ok(DurOutcome {
            u: emb.u1.clone(),
            schur_dim: 0,
            refinements: 0,
            fell_back: false,
        });
    }
    match BlockSolver::new(k, state, emb, part) {
        Ok(block) => {
            let mut rhs = delta.to_vec();
            for &j in &part.balanced {
                rhs[j] = 0.0;
            }
            let du = block.solve(state, &rhs, false);
            let mut u: Vec<f64> = emb.u1.iter().zip(&du).map(|(a, b)| a + b).collect();
            let nf = norm2(f).max(f64::MIN_POSITIVE);
            let mut refinements = 0;
            while refinements < MAX_REFINE {
                let r: Vec<f64> = k.mul_vec(&u).iter().zip(f).map(|(ku, fi)| fi - ku).collect();
                if norm2(&r) / nf <= REFINE_TARGET {
                    break;
                }
                let c = block.solve(state, &r, true);
                u.iter_mut().zip(c).for_each(|(a, b)| *a += b);
                refinements += 1;
            }
            debug!("reanalysis: schur {} of {n_cur}, {refinements} refinements", part.unbalanced.len());
            Ok(DurOutcome {
                u,
                schur_dim: part.unbalanced.len(),
                refinements,
                fell_back: false,
            })
        }
        Err(e) => {
            warn!("reanalysis Schur system failed ({e}); falling back to a full solve");
            let u = super::full_solve(k, f)?;
            Ok(DurOutcome {
                u,
                schur_dim: part.unbalanced.len(),
                refinements: 0,
                fell_back: true,
            })
        }
    }
}

struct BlockSolver<'a> {
    k: &'a CsrMatrix,
    part: &'a DofPartition,
    emb: &'a Embedded,
    /// Position of each current DOF inside the unbalanced set.
    pos: Vec<usize>,
    /// Unbalanced DOFs that existed in iteration 1: (position in n, old index).
    carried: Vec<(usize, usize)>,
    /// Complement of the balanced set in the old space: carried, then dropped.
    complement: Vec<usize>,
    gcc: Option<DenseCholesky>,
    schur: DenseCholesky,
}

impl<'a> BlockSolver<'a> {
    fn new(k: &'a CsrMatrix, state: &mut ReanalysisState, emb: &'a Embedded, part: &'a DofPartition) -> Result<Self, SolverError> {
        let n_cur = k.n();
        let nn = part.unbalanced.len();
        let mut pos = vec![usize::MAX; n_cur];
        for (a, &j) in part.unbalanced.iter().enumerate() {
            pos[j] = a;
        }
        for &j in &part.balanced {
            if emb.old_of[j].is_none() {
                return Err(SolverError::MissingDof(format!("balanced DOF {j} has no first-iteration counterpart")));
            }
        }
        let carried: Vec<(usize, usize)> = part
            .unbalanced
            .iter()
            .enumerate()
            .filter_map(|(a, &j)| emb.old_of[j].map(|o| (a, o)))
            .collect();
        let complement: Vec<usize> = carried.iter().map(|&(_, o)| o).chain(emb.dropped.iter().copied()).collect();
        let q = complement.len();

        let gcc = if q > 0 {
            let g = state.inverse_block(&complement);
            Some(DenseCholesky::factor(&g)?)
        } else {
            None
        };

        let mut s = DenseMatrix::zeros(nn);
        for (a, &j) in part.unbalanced.iter().enumerate() {
            let (cols, vals) = k.row(j);
            for (&c, &v) in cols.iter().zip(vals) {
                if pos[c] != usize::MAX {
                    s.add(a, pos[c], v);
                }
            }
        }
        if let Some(gf) = &gcc {
            // K_nm K_mm⁻¹ K_mn = K1[c,c] − (G_cc⁻¹)[c,c] on the carried block
            let nc = carried.len();
            let mut e = vec![0.0; q];
            for b in 0..nc {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[b] = 1.0;
                let col = gf.solve(&e);
                for a in 0..nc {
                    let (pa, oa) = carried[a];
                    let (pb, ob) = carried[b];
                    s.add(pa, pb, col[a] - state.k1.get(oa, ob));
                }
            }
        }
        let schur = DenseCholesky::factor(&s)?;
        Ok(Self {
            k,
            part,
            emb,
            pos,
            carried,
            complement,
            gcc,
            schur,
        })
    }

    /// `G E_c G_cc⁻¹ z` in the old space, for `z` given on the complement.
    fn lift(&self, state: &ReanalysisState, z: &[f64]) -> Vec<f64> {
        let gf = self.gcc.as_ref().expect("complement is nonempty");
        let w = gf.solve(z);
        let mut e = vec![0.0; state.k1.n()];
        for (&o, &v) in self.complement.iter().zip(&w) {
            e[o] = v;
        }
        state.factor.solve(&e)
    }

    /// `K_mm⁻¹ v_m` returned on current balanced indices (zero elsewhere).
    fn balanced_inverse(&self, state: &ReanalysisState, v: &[f64]) -> Vec<f64> {
        let mut v_old = vec![0.0; state.k1.n()];
        for &j in &self.part.balanced {
            v_old[self.emb.old_of[j].unwrap()] = v[j];
        }
        let w = state.factor.solve(&v_old);
        let corr = if self.gcc.is_some() {
            let wc: Vec<f64> = self.complement.iter().map(|&o| w[o]).collect();
            Some(self.lift(state, &wc))
        } else {
            None
        };
        let mut out = vec![0.0; self.k.n()];
        for &j in &self.part.balanced {
            let o = self.emb.old_of[j].unwrap();
            out[j] = w[o] - corr.as_ref().map_or(0.0, |c| c[o]);
        }
        out
    }

    /// Solves `K x = rhs`; when `general` is false the balanced part of
    /// `rhs` is taken to be zero.
    fn solve(&self, state: &ReanalysisState, rhs: &[f64], general: bool) -> Vec<f64> {
        let n_cur = self.k.n();
        let t = general.then(|| self.balanced_inverse(state, rhs));
        let mut b: Vec<f64> = self.part.unbalanced.iter().map(|&j| rhs[j]).collect();
        if let Some(t) = &t {
            for (a, &j) in self.part.unbalanced.iter().enumerate() {
                let (cols, vals) = self.k.row(j);
                let s: f64 = cols
                    .iter()
                    .zip(vals)
                    .filter(|(c, _)| self.pos[**c] == usize::MAX)
                    .map(|(&c, &v)| v * t[c])
                    .sum();
                b[a] -= s;
            }
        }
        let y = self.schur.solve(&b);
        let mut x = t.unwrap_or_else(|| vec![0.0; n_cur]);
        for (a, &j) in self.part.unbalanced.iter().enumerate() {
            x[j] = y[a];
        }
        // x_m −= K_mm⁻¹ K_mn y = −(G E_c G_cc⁻¹ R y)_m
        if self.gcc.is_some() && !self.carried.is_empty() {
            let mut z = vec![0.0; self.complement.len()];
            for (slot, &(a, _)) in self.carried.iter().enumerate() {
                z[slot] = y[a];
            }
            let w = self.lift(state, &z);
            for &j in &self.part.balanced {
                x[j] += w[self.emb.old_of[j].unwrap()];
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::super::{full_solve, full_solve_factored};
    use super::*;
    use crate::sparse::TripletBuilder;

    fn keys(n: usize) -> Vec<DofKey> {
        (0..n)
            .map(|i| DofKey {
                node: (i / 2) as u32,
                kind: DofKind::Standard,
                component: (i % 2) as u8,
            })
            .collect()
    }

    fn state_for(k: &CsrMatrix, f: &[f64], keys: Vec<DofKey>) -> ReanalysisState {
        let (u, fac) = full_solve_factored(k, f).unwrap();
        ReanalysisState::new(keys, k.clone(), f.to_vec(), u, fac).unwrap()
    }

    fn chain(n: usize, stiff: &[f64]) -> CsrMatrix {
        // springs to ground plus neighbor springs
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            b.push(i, i, 1.0 + stiff[i]);
            if i + 1 < n {
                b.push(i, i, 1.0);
                b.push(i + 1, i + 1, 1.0);
                b.push(i, i + 1, -1.0);
                b.push(i + 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn unchanged_system_keeps_solution() {
        let k = chain(6, &[1.0; 6]);
        let f = vec![1.0, 0.0, 2.0, 0.0, 0.0, 1.0];
        let mut st = state_for(&k, &f, keys(6));
        let emb = embed_previous(&st, &keys(6)).unwrap();
        assert_eq!(emb.u1, st.u1().to_vec());
        let (part, delta) = detect_unbalanced(&k, &emb.k1, &f, &emb.u1);
        assert!(part.unbalanced.is_empty());
        let out = dur_solve(&k, &f, &mut st, &emb, &part, &delta).unwrap();
        assert_eq!(out.u, emb.u1);
    }

    #[test]
    fn four_dof_modified_entry_matches_dense_oracle() {
        let k1 = CsrMatrix::from_dense(&[
            vec![4.0, -1.0, 0.0, 0.0],
            vec![-1.0, 4.0, -1.0, 0.0],
            vec![0.0, -1.0, 4.0, -1.0],
            vec![0.0, 0.0, -1.0, 3.0],
        ]);
        let f = vec![1.0, 2.0, 0.5, -1.0];
        let mut st = state_for(&k1, &f, keys(4));
        let mut kd = k1.to_dense();
        kd[1][2] = -1.5;
        kd[2][1] = -1.5;
        let k = CsrMatrix::from_dense(&kd);
        let emb = embed_previous(&st, &keys(4)).unwrap();
        let (part, delta) = detect_unbalanced(&k, &emb.k1, &f, &emb.u1);
        assert_eq!(part.unbalanced, vec![1, 2]);
        let out = dur_solve(&k, &f, &mut st, &emb, &part, &delta).unwrap();
        let oracle = super::super::tests::dense_oracle(&kd, &f);
        for (a, b) in out.u.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        // balanced block equation holds for the correction
        let du: Vec<f64> = out.u.iter().zip(&emb.u1).map(|(a, b)| a - b).collect();
        let kdu = k.mul_vec(&du);
        for &j in &part.balanced {
            assert!(kdu[j].abs() < 1e-9 * k.max_abs());
        }
    }

    #[test]
    fn load_only_change_flags_that_dof() {
        let k = chain(5, &[0.5; 5]);
        let f1 = vec![1.0; 5];
        let mut st = state_for(&k, &f1, keys(5));
        let mut f = f1.clone();
        f[3] += 2.0;
        let emb = embed_previous(&st, &keys(5)).unwrap();
        let (part, delta) = detect_unbalanced(&k, &emb.k1, &f, &emb.u1);
        assert_eq!(part.unbalanced, vec![3]);
        let out = dur_solve(&k, &f, &mut st, &emb, &part, &delta).unwrap();
        let u = full_solve(&k, &f).unwrap();
        for (a, b) in out.u.iter().zip(&u) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn single_entry_perturbation_is_symmetric() {
        let k1 = chain(6, &[1.0; 6]);
        let f = vec![1.0; 6];
        let st = state_for(&k1, &f, keys(6));
        let mut kd = k1.to_dense();
        kd[1][4] = 0.1;
        kd[4][1] = 0.1;
        let k = CsrMatrix::from_dense(&kd);
        let emb = embed_previous(&st, &keys(6)).unwrap();
        let (part, _) = detect_unbalanced(&k, &emb.k1, &f, &emb.u1);
        assert_eq!(part.unbalanced, vec![1, 4]);
    }

    #[test]
    fn new_and_dropped_dofs() {
        // first system: 6 standard + 2 branch DOFs
        let n1 = 8;
        let k1 = chain(n1, &[1.0, 2.0, 1.0, 3.0, 1.0, 1.0, 2.0, 1.0]);
        let mut k1_keys = keys(6);
        for c in 0..2 {
            k1_keys.push(DofKey {
                node: 1,
                kind: DofKind::Branch(0),
                component: c,
            });
        }
        let f1: Vec<f64> = (0..n1).map(|i| i as f64 - 2.0).collect();
        let mut st = state_for(&k1, &f1, k1_keys);

        // current: branch DOFs gone, two Heaviside DOFs appended, one row changed
        let mut cur_keys = keys(6);
        for c in 0..2 {
            cur_keys.push(DofKey {
                node: 2,
                kind: DofKind::Heaviside,
                component: c,
            });
        }
        let mut kd = chain(n1, &[1.0, 2.0, 1.0, 3.0, 1.0, 1.0, 5.0, 4.0]).to_dense();
        kd[2][7] = 0.3;
        kd[7][2] = 0.3;
        let k = CsrMatrix::from_dense(&kd);
        let f: Vec<f64> = (0..n1).map(|i| if i < 6 { f1[i] } else { 0.0 }).collect();
        let emb = embed_previous(&st, &cur_keys).unwrap();
        assert_eq!(emb.dropped, vec![6, 7]);
        assert_eq!(&emb.u1[6..], &[0.0, 0.0]);
        let (part, delta) = detect_unbalanced(&k, &emb.k1, &f, &emb.u1);
        assert!(part.unbalanced.contains(&6) && part.unbalanced.contains(&7));
        let out = dur_solve(&k, &f, &mut st, &emb, &part, &delta).unwrap();
        let oracle = super::super::tests::dense_oracle(&kd, &f);
        for (a, b) in out.u.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn missing_standard_dof_is_rejected() {
        let k = chain(4, &[1.0; 4]);
        let st = state_for(&k, &[1.0; 4], keys(4));
        assert!(matches!(embed_previous(&st, &keys(2)), Err(SolverError::MissingDof(_))));
    }

    #[test]
    fn permuted_keys_embed_by_identity() {
        let k = chain(4, &[1.0; 4]);
        let st = state_for(&k, &[1.0, 2.0, 3.0, 4.0], keys(4));
        let mut cur = keys(4);
        cur.reverse();
        let emb = embed_previous(&st, &cur).unwrap();
        assert_eq!(emb.f1, vec![4.0, 3.0, 2.0, 1.0]);
        let (part, _) = detect_unbalanced(&emb.k1, &emb.k1, &emb.f1, &emb.u1);
        assert!(part.unbalanced.is_empty());
    }

    #[test]
    fn larger_random_update_matches_full_solve() {
        let k1 = super::super::tests::random_spd(120, 0.05, 11);
        let f: Vec<f64> = (0..120).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let mut st = state_for(&k1, &f, keys(120));
        let mut kd = k1.to_dense();
        for &(i, j, v) in &[(3usize, 40usize, 0.2), (40, 77, -0.3), (90, 91, 0.25)] {
            kd[i][j] += v;
            kd[j][i] += v;
            kd[i][i] += v.abs();
            kd[j][j] += v.abs();
        }
        let k = CsrMatrix::from_dense(&kd);
        let emb = embed_previous(&st, &keys(120)).unwrap();
        let (part, delta) = detect_unbalanced(&k, &emb.k1, &f, &emb.u1);
        assert_eq!(part.unbalanced.len(), 5);
        let out = dur_solve(&k, &f, &mut st, &emb, &part, &delta).unwrap();
        let u = full_solve(&k, &f).unwrap();
        let err = norm2(&crate::sparse::sub(&out.u, &u)) / norm2(&u);
        assert!(err < 1e-13, "{err}");
    }
}
