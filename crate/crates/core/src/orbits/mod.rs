//! Brute-force derivation of equivariant parameter sharing.
//!
//! A linear map on a weight space is a `dim x dim` matrix `M`. It commutes
//! with the permutation action iff `M[g a, g b] = M[a, b]` for every group
//! element `g`, i.e. iff `M` is constant on the orbits of index pairs. This
//! module enumerates those orbits with union-find over adjacent
//! transpositions, and certifies closed-form layers against them.

mod rank;
mod scheme_json;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::nflayers::{closed_form_param_count, EquivariantLayer, LayerFamily};
use crate::wsdata::{GroupTag, NeuronPermutation, WeightSpaceFeature, WeightSpaceSpec};

pub use rank::matrix_rank;
pub use scheme_json::{read_scheme, write_scheme, SchemeFile};

/// Default bound on `dim(U)` for dense oracle computations.
pub const DEFAULT_DIM_LIMIT: usize = 512;

/// One coordinate of a weight space at `c = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexEntry {
    /// `W_i[j, k]` at filter position `f` (0-based layer `i`).
    Weight {
        i: usize,
        j: usize,
        k: usize,
        f: usize,
    },
    Bias {
        i: usize,
        j: usize,
    },
}

/// All coordinates of a weight space in canonical flatten order.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexSpace {
    pub entries: Vec<IndexEntry>,
}

impl IndexSpace {
    pub fn new(spec: &WeightSpaceSpec) -> Self {
        let mut entries = Vec::with_capacity(spec.dim());
        for (i, l) in spec.layers().iter().enumerate() {
            for j in 0..l.n_out {
                for k in 0..l.n_in {
                    for f in 0..l.filter_size() {
                        entries.push(IndexEntry::Weight { i, j, k, f });
                    }
                }
            }
        }
        for (i, l) in spec.layers().iter().enumerate() {
            for j in 0..l.n_out {
                entries.push(IndexEntry::Bias { i, j });
            }
        }
        IndexSpace { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Orbit partition of index pairs `(a, b)` under the diagonal group action.
#[derive(Clone, Debug, PartialEq)]
pub struct SharingScheme {
    pub spec: WeightSpaceSpec,
    pub group: GroupTag,
    /// Orbit label of pair `(a, b)` at `a * dim + b`; labels are dense and
    /// ordered by each orbit's smallest member.
    pub orbit_id: Vec<u32>,
    pub orbit_count: usize,
}

impl SharingScheme {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn orbit(&self, a: usize, b: usize) -> u32 {
        self.orbit_id[a * self.dim() + b]
    }
}

fn guard(spec: &WeightSpaceSpec, limit: usize) -> Result<usize> {
    let dim = spec.dim();
    if dim > limit {
        return Err(Error::ResourceLimit {
            what: "dense weight-space oracle dim(U)",
            required: dim,
            limit,
        });
    }
    Ok(dim)
}

/// Index permutations of the generators: one adjacent transposition
/// `(t, t + 1)` per permutable neuron layer. Entry `a` maps to `g[a]`.
pub fn generators(spec: &WeightSpaceSpec, group: GroupTag) -> Vec<Vec<usize>> {
    let l = spec.num_layers();
    let counts = spec.neuron_counts();
    let labels: Vec<f64> = (0..spec.dim()).map(|a| a as f64).collect();
    let labelled = WeightSpaceFeature::unflatten(spec, 1, &labels).expect("label feature");
    let mut gens = Vec::new();
    for layer in 0..=l {
        if !group.permutable(layer, l) {
            continue;
        }
        for t in 0..counts[layer].saturating_sub(1) {
            let sigmas = counts
                .iter()
                .enumerate()
                .map(|(m, &n)| {
                    let mut s: Vec<usize> = (0..n).collect();
                    if m == layer {
                        s.swap(t, t + 1);
                    }
                    s
                })
                .collect();
            let perm = NeuronPermutation::new(sigmas, GroupTag::Np).expect("valid transposition");
            // Position p of the permuted feature holds label g^{-1}(p); a
            // transposition is its own inverse.
            let moved = perm.apply(&labelled).expect("same spec").flatten();
            gens.push(moved.iter().map(|&v| v as usize).collect());
        }
    }
    gens
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index becomes the root.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

pub fn enumerate_orbits(spec: &WeightSpaceSpec, group: GroupTag) -> Result<SharingScheme> {
    enumerate_orbits_with_limit(spec, group, DEFAULT_DIM_LIMIT)
}

pub fn enumerate_orbits_with_limit(
    spec: &WeightSpaceSpec,
    group: GroupTag,
    limit: usize,
) -> Result<SharingScheme> {
    let dim = guard(spec, limit)?;
    let gens = generators(spec, group);
    let mut uf = UnionFind::new(dim * dim);
    for g in &gens {
        for (a, &ga) in g.iter().enumerate() {
            for (b, &gb) in g.iter().enumerate() {
                uf.union((a * dim + b) as u32, (ga * dim + gb) as u32);
            }
        }
    }
    let mut label_of_root = vec![u32::MAX; dim * dim];
    let mut orbit_id = vec![0u32; dim * dim];
    let mut count = 0u32;
    for x in 0..(dim * dim) as u32 {
        let r = uf.find(x) as usize;
        if label_of_root[r] == u32::MAX {
            label_of_root[r] = count;
            count += 1;
        }
        orbit_id[x as usize] = label_of_root[r];
    }
    Ok(SharingScheme {
        spec: spec.clone(),
        group,
        orbit_id,
        orbit_count: count as usize,
    })
}

pub fn count_free_parameters(scheme: &SharingScheme) -> usize {
    scheme.orbit_count
}

/// Square row-major matrix; `y = M x` in canonical flatten order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Materializes a map on `c = 1` features column by column, then checks it is
/// linear by comparing against direct evaluation on a dense test vector.
pub fn materialize_map(
    spec: &WeightSpaceSpec,
    f: impl Fn(&WeightSpaceFeature) -> Result<WeightSpaceFeature>,
) -> Result<DenseMatrix> {
    let dim = guard(spec, DEFAULT_DIM_LIMIT)?;
    let mut m = DenseMatrix::zeros(dim);
    let mut basis = vec![0.0; dim];
    for b in 0..dim {
        basis[b] = 1.0;
        let col = f(&WeightSpaceFeature::unflatten(spec, 1, &basis)?)?;
        ensure!(
            col.channels() == 1,
            "materialized maps must output one channel"
        );
        for (a, v) in col.flatten().into_iter().enumerate() {
            m.set(a, b, v);
        }
        basis[b] = 0.0;
    }
    let probe: Vec<f64> = (0..dim)
        .map(|a| ((a * 7 + 3) % 11) as f64 / 11.0 - 0.5)
        .collect();
    let direct = f(&WeightSpaceFeature::unflatten(spec, 1, &probe)?)?.flatten();
    let zero = f(&WeightSpaceFeature::zeros(spec, 1)?)?.flatten();
    let scale = 1.0 + direct.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let via = m.mul_vec(&probe);
    let worst = via
        .iter()
        .zip(&direct)
        .chain(zero.iter().map(|z| (z, &0.0)))
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    ensure!(
        worst <= 1e-9 * scale,
        "map is not linear (deviation {worst:e})"
    );
    Ok(m)
}

/// Dense matrix of a single-channel NF-Layer.
pub fn materialize_layer_matrix(
    layer: &EquivariantLayer,
    spec: &WeightSpaceSpec,
) -> Result<DenseMatrix> {
    ensure!(
        layer.c_in() == 1 && layer.c_out() == 1,
        "materialization needs a single-channel layer"
    );
    ensure!(
        layer.spec().same_dims(spec),
        "layer belongs to a different weight space"
    );
    materialize_map(spec, |x| layer.forward(x))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharingCheck {
    pub ok: bool,
    pub worst_violation: f64,
}

pub const SHARING_TOL: f64 = 1e-10;

/// Whether `matrix` is constant on every orbit of `scheme`.
pub fn check_sharing(matrix: &DenseMatrix, scheme: &SharingScheme) -> Result<SharingCheck> {
    ensure!(
        matrix.n == scheme.dim() && matrix.data.len() == scheme.orbit_id.len(),
        "matrix is {}x{}, scheme covers dim {}",
        matrix.n,
        matrix.n,
        scheme.dim()
    );
    let mut lo = vec![f64::INFINITY; scheme.orbit_count];
    let mut hi = vec![f64::NEG_INFINITY; scheme.orbit_count];
    for (&v, &o) in matrix.data.iter().zip(&scheme.orbit_id) {
        lo[o as usize] = lo[o as usize].min(v);
        hi[o as usize] = hi[o as usize].max(v);
    }
    let worst = lo.iter().zip(&hi).fold(0.0f64, |m, (a, b)| m.max(b - a));
    Ok(SharingCheck {
        ok: worst <= SHARING_TOL,
        worst_violation: worst,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankComparison {
    pub orbit_count: usize,
    pub closed_form_param_count: usize,
    pub span_dim_closed_form: usize,
}

/// Materialized matrices of the single-channel layer with one parameter set
/// to 1 at a time.
pub fn basis_matrices(spec: &WeightSpaceSpec, family: LayerFamily) -> Result<Vec<DenseMatrix>> {
    guard(spec, DEFAULT_DIM_LIMIT)?;
    let template = EquivariantLayer::zeros(spec, family, 1, 1)?;
    let mut out = Vec::new();
    for t in 0..template.params().len() {
        for e in 0..template.params()[t].len() {
            let mut layer = template.clone();
            layer.params_mut()[t][e] = 1.0;
            out.push(materialize_layer_matrix(&layer, spec)?);
        }
    }
    Ok(out)
}

/// Orbit count of the group's scheme against the closed-form family's
/// parameter count and the dimension of the span of its basis matrices.
pub fn compare_rank(
    spec: &WeightSpaceSpec,
    group: GroupTag,
    family: LayerFamily,
) -> Result<RankComparison> {
    let scheme = enumerate_orbits(spec, group)?;
    let basis = basis_matrices(spec, family)?;
    let rows: Vec<Vec<f64>> = basis.into_iter().map(|m| m.data).collect();
    Ok(RankComparison {
        orbit_count: scheme.orbit_count,
        closed_form_param_count: closed_form_param_count(spec, family, 1, 1),
        span_dim_closed_form: matrix_rank(rows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_space_matches_flatten_order() {
        let spec = WeightSpaceSpec::mlp(&[1, 2, 1]).unwrap();
        let idx = IndexSpace::new(&spec);
        assert_eq!(idx.len(), 7);
        assert_eq!(
            idx.entries[1],
            IndexEntry::Weight {
                i: 0,
                j: 1,
                k: 0,
                f: 0
            }
        );
        assert_eq!(idx.entries[6], IndexEntry::Bias { i: 1, j: 0 });
    }

    #[test]
    fn union_find_labels_by_smallest_member() {
        let spec = WeightSpaceSpec::mlp(&[1, 2, 1]).unwrap();
        let s = enumerate_orbits(&spec, GroupTag::Np).unwrap();
        assert_eq!(s.orbit_id[0], 0);
        let mut seen = 0;
        for &o in &s.orbit_id {
            assert!(o as usize <= seen);
            if o as usize == seen {
                seen += 1;
            }
        }
        assert_eq!(seen, s.orbit_count);
    }

    #[test]
    fn guard_reports_required_dim() {
        let spec = WeightSpaceSpec::mlp(&[10, 10, 10]).unwrap();
        match enumerate_orbits_with_limit(&spec, GroupTag::Np, 100) {
            Err(Error::ResourceLimit {
                required, limit, ..
            }) => {
                assert_eq!(required, 220);
                assert_eq!(limit, 100);
            }
            other => panic!("expected resource limit, got {other:?}"),
        }
    }

    #[test]
    fn nonlinear_maps_are_rejected() {
        let spec = WeightSpaceSpec::mlp(&[1, 2, 1]).unwrap();
        let r = materialize_map(&spec, |x| Ok(x.map(|v| v.max(0.0))));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
