//! Element kernels, global assembly and Dirichlet elimination.
//!
//! Degrees of freedom are interleaved per node as `[ux, uy, uz, p]`. The
//! sparsity pattern couples every pair of nodes sharing a tetrahedron with a
//! full 4×4 block.

use rayon::prelude::*;

use super::tau::{tau_lsic, tau_supg};
use super::{DirichletSet, MaterialProps, Stabilization};
use crate::krylov::{CsrMatrix, SparseSystem};
use crate::mesh::{Mesh, PatchLabel, Vec3};

/// Elements computed in parallel before each sequential scatter.
const ELEMENT_CHUNK: usize = 4096;

/// Per-assembly constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub props: MaterialProps,
    /// `1/dt`, zero for a steady solve.
    pub inv_dt: f64,
    pub theta: f64,
    /// Time step entering the stabilization parameters.
    pub tau_dt: f64,
    pub stab: Stabilization,
}

impl KernelParams {
    pub fn transient(props: MaterialProps, dt: f64, theta: f64, stab: Stabilization) -> Self {
        KernelParams { props, inv_dt: 1.0 / dt, theta, tau_dt: dt, stab }
    }

    /// Steady equations. With a finite `tau_dt` the solution is the fixed
    /// point of time marching at that step; `f64::INFINITY` gives the purely
    /// steady stabilization.
    pub fn steady(props: MaterialProps, tau_dt: f64, stab: Stabilization) -> Self {
        KernelParams { props, inv_dt: 0.0, theta: 1.0, tau_dt, stab }
    }
}

type ElementMatrix = [[f64; 16]; 16];

struct ElementData {
    grads: [Vec3; 4],
    vol: f64,
    h: f64,
    a_hat: [Vec3; 4],
    u_prev: [Vec3; 4],
}

fn element_system(k: &KernelParams, e: &ElementData) -> (ElementMatrix, [f64; 16]) {
    let MaterialProps { rho, mu } = k.props;
    let (th, om) = (k.theta, 1.0 - k.theta);
    let (g, v) = (&e.grads, e.vol);
    let a_sum: Vec3 = e.a_hat.iter().sum();
    let a_bar = a_sum / 4.0;
    let a_norm = a_bar.norm();
    let tau = tau_supg(e.h, a_norm, k.props.nu(), k.tau_dt);
    let tau_c = if k.stab.lsic { tau_lsic(e.h, a_norm) } else { 0.0 };
    let s: [f64; 4] = std::array::from_fn(|a| a_bar.dot(&g[a]));
    let tau_s = if k.stab.supg { tau } else { 0.0 };
    let tau_p = if k.stab.pspg { tau } else { 0.0 };

    let mut km = [[0.0; 16]; 16];
    let mut f = [0.0; 16];
    for a in 0..4 {
        let conv_w = (a_sum + e.a_hat[a]) * (v / 20.0);
        for b in 0..4 {
            let up = &e.u_prev[b];
            let mass = rho * k.inv_dt * v / 20.0 * if a == b { 2.0 } else { 1.0 };
            let conv = rho * conv_w.dot(&g[b]);
            let visc = mu * v * g[a].dot(&g[b]);
            let supg_mass = tau_s * s[a] * rho * k.inv_dt * v / 4.0;
            let supg_conv = tau_s * s[a] * rho * s[b] * v;
            let diag_lhs = mass + th * (conv + visc) + supg_mass + th * supg_conv;
            let diag_rhs = mass - om * (conv + visc) + supg_mass - om * supg_conv;
            for i in 0..3 {
                let r = 4 * a + i;
                km[r][4 * b + i] += diag_lhs;
                f[r] += diag_rhs * up[i];
                for j in 0..3 {
                    let cross = mu * v * g[a][j] * g[b][i];
                    km[r][4 * b + j] += th * cross + tau_c * rho * v * g[a][i] * g[b][j];
                    f[r] -= om * cross * up[j];
                }
                km[r][4 * b + 3] += -v / 4.0 * g[a][i] + tau_s * s[a] * v * g[b][i];
            }
            let r = 4 * a + 3;
            let pspg_lhs = tau_p * (k.inv_dt * v / 4.0 + th * s[b] * v);
            let pspg_rhs = tau_p * (k.inv_dt * v / 4.0 - om * s[b] * v);
            for j in 0..3 {
                km[r][4 * b + j] += v / 4.0 * g[b][j] + pspg_lhs * g[a][j];
                f[r] += pspg_rhs * g[a][j] * up[j];
            }
            km[r][4 * b + 3] += tau_p / rho * v * g[a].dot(&g[b]);
        }
    }
    (km, f)
}

/// Sparsity pattern and element-to-matrix maps for one mesh.
#[derive(Debug, Clone)]
pub struct Assembler {
    pattern: CsrMatrix,
    /// For element `e`, entry `4a + b` is the position of node `b` in node
    /// `a`'s sorted neighbour list.
    slots: Vec<[u32; 16]>,
    grads: Vec<[Vec3; 4]>,
}

impl Assembler {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.n_nodes();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in mesh.tets() {
            for &a in t {
                adj[a].extend_from_slice(t);
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        let mut rows = Vec::with_capacity(4 * n);
        for nbrs in &adj {
            let cols: Vec<usize> = nbrs.iter().flat_map(|&j| (0..4).map(move |c| 4 * j + c)).collect();
            for _ in 0..4 {
                rows.push(cols.clone());
            }
        }
        let pattern = CsrMatrix::from_pattern(&rows).expect("node adjacency yields a valid pattern");
        let slots = mesh
            .tets()
            .iter()
            .map(|t| {
                std::array::from_fn(|k| {
                    let (a, b) = (t[k / 4], t[k % 4]);
                    adj[a].binary_search(&b).expect("tet nodes are mutual neighbours") as u32
                })
            })
            .collect();
        let grads = (0..mesh.n_el()).map(|e| mesh.shape_gradients(e)).collect();
        Assembler { pattern, slots, grads }
    }

    pub fn n_dofs(&self) -> usize {
        self.pattern.dim()
    }

    fn position(&self, row: usize, slot: u32, comp: usize) -> usize {
        self.pattern.row_ptr()[row] + 4 * slot as usize + comp
    }

    /// Linearized system for the next time level, before boundary conditions.
    ///
    /// `u_prev` is the previous time level and `a_hat` the advection velocity
    /// (ignored when convection is disabled).
    pub fn assemble(&self, mesh: &Mesh, u_prev: &[Vec3], a_hat: &[Vec3], k: &KernelParams) -> SparseSystem {
        let mut matrix = self.pattern.clone();
        let mut rhs = vec![0.0; self.n_dofs()];
        let tets = mesh.tets();
        let convect = k.stab.convection;
        for start in (0..tets.len()).step_by(ELEMENT_CHUNK) {
            let end = (start + ELEMENT_CHUNK).min(tets.len());
            let local: Vec<(ElementMatrix, [f64; 16])> = (start..end)
                .into_par_iter()
                .map(|e| {
                    let t = tets[e];
                    let data = ElementData {
                        grads: self.grads[e],
                        vol: mesh.tet_volume(e),
                        h: mesh.characteristic_length(e),
                        a_hat: if convect { t.map(|n| a_hat[n]) } else { [Vec3::zeros(); 4] },
                        u_prev: t.map(|n| u_prev[n]),
                    };
                    element_system(k, &data)
                })
                .collect();
            let values = matrix.values_mut();
            for (e, (km, f)) in (start..end).zip(local) {
                let t = tets[e];
                let slots = &self.slots[e];
                for a in 0..4 {
                    for ca in 0..4 {
                        let row = 4 * t[a] + ca;
                        rhs[row] += f[4 * a + ca];
                        let base = self.pattern.row_ptr()[row];
                        for b in 0..4 {
                            let off = base + 4 * slots[4 * a + b] as usize;
                            for cb in 0..4 {
                                values[off + cb] += km[4 * a + ca][4 * b + cb];
                            }
                        }
                    }
                }
            }
        }
        if k.stab.backflow && convect {
            self.add_backflow(mesh, a_hat, k, &mut matrix);
        }
        SparseSystem { matrix, rhs }
    }

    /// `ρ/2 |min(ā·n, 0)| ∫ u·w` on FV facets with inflow.
    fn add_backflow(&self, mesh: &Mesh, a_hat: &[Vec3], k: &KernelParams, matrix: &mut CsrMatrix) {
        for f in mesh.facets_with(PatchLabel::FV) {
            let a_mean: Vec3 = f.nodes.iter().map(|&n| a_hat[n]).sum::<Vec3>() / 3.0;
            let un = a_mean.dot(&f.normal);
            if un >= 0.0 {
                continue;
            }
            let coef = 0.5 * k.props.rho * (-un) * f.area / 12.0;
            let t = mesh.tets()[f.tet];
            for &na in &f.nodes {
                let a = t.iter().position(|&x| x == na).unwrap();
                for &nb in &f.nodes {
                    let b = t.iter().position(|&x| x == nb).unwrap();
                    let m = coef * if na == nb { 2.0 } else { 1.0 };
                    let slot = self.slots[f.tet][4 * a + b];
                    for c in 0..3 {
                        let pos = self.position(4 * na + c, slot, c);
                        matrix.values_mut()[pos] += m;
                    }
                }
            }
        }
    }
}

/// One-shot assembly with boundary conditions applied.
pub fn assemble(
    mesh: &Mesh,
    u_prev: &[Vec3],
    a_hat: &[Vec3],
    k: &KernelParams,
    dirichlet: &DirichletSet,
) -> SparseSystem {
    let mut sys = Assembler::new(mesh).assemble(mesh, u_prev, a_hat, k);
    apply_dirichlet(&mut sys, &dirichlet.dof_values());
    sys
}

/// Symmetric elimination: constrained columns move to the right-hand side,
/// constrained rows become `d x = d g` with `d` the original diagonal
/// magnitude (1 if zero), keeping the row scaling of the system.
pub fn apply_dirichlet(sys: &mut SparseSystem, fixed: &[Option<f64>]) {
    let n = sys.matrix.dim();
    assert_eq!(fixed.len(), n, "constraint vector does not match system");
    let row_ptr = sys.matrix.row_ptr().to_vec();
    let cols = sys.matrix.col_idx().to_vec();
    let values = sys.matrix.values_mut();
    let mut row_vals: Vec<&mut [f64]> = Vec::with_capacity(n);
    let mut rest = values;
    for i in 0..n {
        let (head, tail) = rest.split_at_mut(row_ptr[i + 1] - row_ptr[i]);
        row_vals.push(head);
        rest = tail;
    }
    row_vals.par_iter_mut().zip(sys.rhs.par_iter_mut()).enumerate().for_each(|(i, (vals, b))| {
        let cs = &cols[row_ptr[i]..row_ptr[i + 1]];
        if let Some(g) = fixed[i] {
            let k = cs.binary_search(&i).expect("diagonal entry present");
            let d = vals[k].abs();
            let d = if d > 0.0 { d } else { 1.0 };
            vals.iter_mut().for_each(|v| *v = 0.0);
            vals[k] = d;
            *b = d * g;
        } else {
            for (v, &c) in vals.iter_mut().zip(cs) {
                if let Some(g) = fixed[c] {
                    *b -= *v * g;
                    *v = 0.0;
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_box;

    #[test]
    fn elimination_fixes_values() {
        let a = CsrMatrix::from_triplets(3, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 5.0), (1, 2, 1.0), (2, 2, 3.0), (2, 1, -1.0)])
            .unwrap();
        let mut sys = SparseSystem { matrix: a, rhs: vec![1.0, 2.0, 3.0] };
        apply_dirichlet(&mut sys, &[None, Some(0.5), None]);
        assert_eq!(sys.matrix.get(1, 1), 5.0);
        assert_eq!(sys.rhs, vec![0.5, 2.5, 3.5]);
        assert_eq!(sys.matrix.get(0, 1), 0.0);
        assert_eq!(sys.matrix.get(1, 0), 0.0);
    }

    #[test]
    fn continuity_rows_sum_to_boundary_flux() {
        let m = generate_box(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), [2, 2, 2], |_, _| PatchLabel::WALL).unwrap();
        let asm = Assembler::new(&m);
        let u: Vec<Vec3> = m.nodes().iter().map(|p| Vec3::new(p.x * p.y, p.z, 0.3 * p.x)).collect();
        let k = KernelParams::transient(MaterialProps::default(), 1e-3, 1.0, Stabilization::default());
        let sys = asm.assemble(&m, &u, &u, &k);
        let mut x = vec![0.0; asm.n_dofs()];
        for (i, v) in u.iter().enumerate() {
            x[4 * i..4 * i + 3].copy_from_slice(v.as_slice());
            x[4 * i + 3] = m.nodes()[i].x;
        }
        let ax = sys.matrix.spmv(&x);
        let cont: f64 = (0..m.n_nodes()).map(|i| ax[4 * i + 3] - sys.rhs[4 * i + 3]).sum();
        let flux: f64 = m
            .facets()
            .iter()
            .map(|f| f.area * (f.nodes.iter().map(|&n| u[n]).sum::<Vec3>() / 3.0).dot(&f.normal))
            .sum();
        assert!((cont - flux).abs() < 1e-12, "{cont} vs {flux}");
    }
}
