//! Structured linear maps `U^{c_i} -> U^{c_o}` that commute with a neuron
//! permutation group.
//!
//! Each layer is a sum of *terms*. A term reads one input block (a weight
//! array `W_s` or a bias vector `b_s`) and writes one output block. Every
//! neuron axis of the input block is either averaged out (`Mean`), kept and
//! tied to an output axis of the same neuron layer (`Linked`), or kept as a
//! free parameter index (`Fixed`, only for axes the group does not permute).
//! Every output axis is either broadcast, linked, or a free parameter index.
//! The term's parameter is a `c_o x c_i` matrix for every combination of fixed
//! output and fixed input indices.
//!
//! With all axes permutable this reproduces the NP layer term for term
//! (`a`, `b`, `c`, `d` blocks). Under HNP the input and output neuron axes
//! become fixed, which yields the per-position parameters of the HNP layer.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::wsdata::{GroupTag, WeightSpaceFeature, WeightSpaceSpec};

/// Which closed-form layer family a layer belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerFamily {
    /// Full neuron-permutation equivariant layer.
    Np,
    /// Hidden-neuron-permutation equivariant layer.
    Hnp,
    /// Per-entry ablation: only the `d` (weights) and `b_psi` (biases) terms.
    Pointwise,
}

impl LayerFamily {
    /// The group this family is equivariant to.
    pub fn group(self) -> GroupTag {
        match self {
            LayerFamily::Hnp => GroupTag::Hnp,
            LayerFamily::Np | LayerFamily::Pointwise => GroupTag::Np,
        }
    }
}

/// A weight-space array: weight layer `Weight(i)` or bias `Bias(i)` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    Weight(usize),
    Bias(usize),
}

impl Block {
    /// Neuron layers indexed by this block's axes, in storage order.
    pub fn axes(self) -> Vec<usize> {
        match self {
            Block::Weight(i) => vec![i + 1, i],
            Block::Bias(i) => vec![i + 1],
        }
    }

    fn all(num_layers: usize) -> Vec<Block> {
        (0..num_layers)
            .map(Block::Weight)
            .chain((0..num_layers).map(Block::Bias))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum InAxis {
    Mean,
    Linked,
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum OutAxis {
    Broadcast,
    Linked(usize),
    Fixed,
}

/// Structural description of one term.
#[derive(Clone, Debug)]
pub struct Term {
    pub name: String,
    pub out: Block,
    pub inp: Block,
    in_axes: Vec<InAxis>,
    out_axes: Vec<OutAxis>,
    /// Number of fixed output index combinations.
    pub fixed_out: usize,
    /// Number of fixed input index combinations.
    pub fixed_in: usize,
    /// Rows of each parameter matrix (output width).
    pub width_out: usize,
    /// Columns of each parameter matrix (input width).
    pub width_in: usize,
}

impl Term {
    pub fn param_len(&self) -> usize {
        self.fixed_out * self.fixed_in * self.width_out * self.width_in
    }

    /// Whether this term maps a block to itself without averaging any axis
    /// (the per-entry `d` / `b_psi` term, indexed by fixed positions under HNP).
    pub fn is_diagonal(&self) -> bool {
        self.out == self.inp && self.in_axes.iter().all(|a| *a != InAxis::Mean)
    }

    fn linked_layers(&self) -> Vec<usize> {
        let axes = self.inp.axes();
        self.in_axes
            .iter()
            .zip(axes)
            .filter(|(m, _)| **m == InAxis::Linked)
            .map(|(_, l)| l)
            .collect()
    }
}

fn block_width(spec: &WeightSpaceSpec, b: Block, c: usize) -> usize {
    match b {
        Block::Weight(i) => spec.filter_size(i) * c,
        Block::Bias(_) => c,
    }
}

fn block_positions(spec: &WeightSpaceSpec, b: Block) -> Vec<usize> {
    b.axes().into_iter().map(|l| spec.neurons(l)).collect()
}

fn term_name(out: Block, inp: Block, linked: &[usize], fixed: &[&str]) -> String {
    use Block::*;
    let base = match (out, inp) {
        (Weight(i), Weight(s)) => {
            let (i1, s1) = (i + 1, s + 1);
            match linked.len() {
                0 => format!("a_theta[{i1},{s1}]"),
                2 => format!("d_theta[{i1}]"),
                _ if s == i && linked[0] == i => format!("b_theta[{i1},{i1}]"),
                _ if s == i => format!("c_theta[{i1},{i1}]"),
                _ if s + 1 == i => format!("b_theta[{i1},{s1}]"),
                _ => format!("c_theta[{i1},{s1}]"),
            }
        }
        (Weight(i), Bias(s)) => match (linked.is_empty(), s == i) {
            (true, _) => format!("a_phi[{},{}]", i + 1, s + 1),
            (false, true) => format!("b_phi[{}]", i + 1),
            (false, false) => format!("c_phi[{}]", i + 1),
        },
        (Bias(i), Weight(s)) => {
            if linked.is_empty() {
                format!("a_varphi[{},{}]", i + 1, s + 1)
            } else {
                format!("b_varphi[{},{}]", i + 1, s + 1)
            }
        }
        (Bias(i), Bias(s)) => {
            if linked.is_empty() {
                format!("a_psi[{},{}]", i + 1, s + 1)
            } else {
                format!("b_psi[{}]", i + 1)
            }
        }
    };
    if fixed.is_empty() {
        base
    } else {
        format!("{base}{{{}}}", fixed.join(","))
    }
}

/// Enumerates the terms of a layer family over `spec` in declaration order.
fn enumerate_terms(
    spec: &WeightSpaceSpec,
    family: LayerFamily,
    c_in: usize,
    c_out: usize,
) -> Vec<Term> {
    let num_layers = spec.num_layers();
    let group = family.group();
    let mut terms = Vec::new();
    for out in Block::all(num_layers) {
        for inp in Block::all(num_layers) {
            if family == LayerFamily::Pointwise && out != inp {
                continue;
            }
            let out_layers = out.axes();
            let in_layers = inp.axes();
            // Permutable neuron layers shared by the two blocks: each can be
            // linked or reduced independently.
            let shared: Vec<usize> = out_layers
                .iter()
                .copied()
                .filter(|l| in_layers.contains(l) && group.permutable(*l, num_layers))
                .collect();
            for mask in 0..(1usize << shared.len()) {
                let linked: Vec<usize> = shared
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &l)| l)
                    .collect();
                if family == LayerFamily::Pointwise && linked.len() != in_layers.len() {
                    continue;
                }
                let in_axes: Vec<InAxis> = in_layers
                    .iter()
                    .map(|l| {
                        if !group.permutable(*l, num_layers) {
                            InAxis::Fixed
                        } else if linked.contains(l) {
                            InAxis::Linked
                        } else {
                            InAxis::Mean
                        }
                    })
                    .collect();
                let out_axes: Vec<OutAxis> = out_layers
                    .iter()
                    .map(|l| {
                        if !group.permutable(*l, num_layers) {
                            OutAxis::Fixed
                        } else if linked.contains(l) {
                            OutAxis::Linked(in_layers.iter().position(|x| x == l).unwrap())
                        } else {
                            OutAxis::Broadcast
                        }
                    })
                    .collect();
                let mut fixed_names = Vec::new();
                let mut fixed_out = 1;
                for (l, a) in out_layers.iter().zip(&out_axes) {
                    if *a == OutAxis::Fixed {
                        fixed_out *= spec.neurons(*l);
                        fixed_names.push(if *l == 0 { "k" } else { "j" });
                    }
                }
                let mut fixed_in = 1;
                for (l, a) in in_layers.iter().zip(&in_axes) {
                    if *a == InAxis::Fixed {
                        fixed_in *= spec.neurons(*l);
                        fixed_names.push(if *l == 0 { "q" } else { "p" });
                    }
                }
                terms.push(Term {
                    name: term_name(out, inp, &linked, &fixed_names),
                    out,
                    inp,
                    in_axes,
                    out_axes,
                    fixed_out,
                    fixed_in,
                    width_out: block_width(spec, out, c_out),
                    width_in: block_width(spec, inp, c_in),
                });
            }
        }
    }
    terms
}

/// Averages an input block down to its kept axes.
#[derive(Debug)]
struct Reducer {
    block: Block,
    x_to_z: Vec<u32>,
    z_positions: usize,
    inv_count: f64,
    width: usize,
}

/// Broadcasts a compact result over the non-kept output axes.
#[derive(Debug)]
struct Expander {
    block: Block,
    y_to_r: Vec<u32>,
    r_positions: usize,
    width: usize,
}

#[derive(Debug)]
struct Contraction {
    reducer: usize,
    expander: usize,
    /// `(r position, parameter slot, z position)` triples.
    triples: Vec<(u32, u32, u32)>,
}

#[derive(Debug)]
struct Plan {
    reducers: Vec<Reducer>,
    expanders: Vec<Expander>,
    contractions: Vec<Contraction>,
}

fn row_major(idx: &[usize], sizes: &[usize]) -> usize {
    idx.iter().zip(sizes).fold(0, |acc, (i, s)| acc * s + i)
}

fn multi_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = sizes.iter().product();
    (0..total)
        .map(|mut flat| {
            let mut idx = vec![0; sizes.len()];
            for d in (0..sizes.len()).rev() {
                idx[d] = flat % sizes[d];
                flat /= sizes[d];
            }
            idx
        })
        .collect()
}

fn build_plan(spec: &WeightSpaceSpec, terms: &[Term]) -> Plan {
    let mut reducers: Vec<Reducer> = Vec::new();
    let mut reducer_ids: HashMap<(Block, Vec<bool>), usize> = HashMap::new();
    let mut expanders: Vec<Expander> = Vec::new();
    let mut expander_ids: HashMap<(Block, Vec<bool>), usize> = HashMap::new();
    let mut contractions = Vec::with_capacity(terms.len());

    for term in terms {
        let in_sizes = block_positions(spec, term.inp);
        let out_sizes = block_positions(spec, term.out);
        let in_keep: Vec<bool> = term.in_axes.iter().map(|a| *a != InAxis::Mean).collect();
        let out_keep: Vec<bool> = term
            .out_axes
            .iter()
            .map(|a| *a != OutAxis::Broadcast)
            .collect();
        let z_sizes: Vec<usize> = in_sizes
            .iter()
            .zip(&in_keep)
            .filter(|(_, k)| **k)
            .map(|(s, _)| *s)
            .collect();
        let r_sizes: Vec<usize> = out_sizes
            .iter()
            .zip(&out_keep)
            .filter(|(_, k)| **k)
            .map(|(s, _)| *s)
            .collect();

        let reducer = *reducer_ids
            .entry((term.inp, in_keep.clone()))
            .or_insert_with(|| {
                let x_to_z = multi_indices(&in_sizes)
                    .into_iter()
                    .map(|x| {
                        let kept: Vec<usize> = x
                            .iter()
                            .zip(&in_keep)
                            .filter(|(_, k)| **k)
                            .map(|(v, _)| *v)
                            .collect();
                        row_major(&kept, &z_sizes) as u32
                    })
                    .collect();
                let z_positions: usize = z_sizes.iter().product();
                let total: usize = in_sizes.iter().product();
                reducers.push(Reducer {
                    block: term.inp,
                    x_to_z,
                    z_positions,
                    inv_count: z_positions as f64 / total as f64,
                    width: term.width_in,
                });
                reducers.len() - 1
            });

        let expander = *expander_ids
            .entry((term.out, out_keep.clone()))
            .or_insert_with(|| {
                let y_to_r = multi_indices(&out_sizes)
                    .into_iter()
                    .map(|y| {
                        let kept: Vec<usize> = y
                            .iter()
                            .zip(&out_keep)
                            .filter(|(_, k)| **k)
                            .map(|(v, _)| *v)
                            .collect();
                        row_major(&kept, &r_sizes) as u32
                    })
                    .collect();
                expanders.push(Expander {
                    block: term.out,
                    y_to_r,
                    r_positions: r_sizes.iter().product(),
                    width: term.width_out,
                });
                expanders.len() - 1
            });

        // Fixed input axes enumerate the parameter's input slot; linked input
        // axes copy their index from the output position.
        let fixed_in_sizes: Vec<usize> = in_sizes
            .iter()
            .zip(&term.in_axes)
            .filter(|(_, a)| **a == InAxis::Fixed)
            .map(|(s, _)| *s)
            .collect();
        let kept_out_axes: Vec<usize> = (0..out_sizes.len()).filter(|&p| out_keep[p]).collect();
        let mut triples = Vec::new();
        for r in multi_indices(&r_sizes) {
            let mut out_idx = vec![usize::MAX; out_sizes.len()];
            for (pos, v) in kept_out_axes.iter().zip(&r) {
                out_idx[*pos] = *v;
            }
            let fo_idx: Vec<usize> = term
                .out_axes
                .iter()
                .zip(&out_idx)
                .filter(|(a, _)| **a == OutAxis::Fixed)
                .map(|(_, v)| *v)
                .collect();
            let fo_sizes: Vec<usize> = term
                .out_axes
                .iter()
                .zip(&out_sizes)
                .filter(|(a, _)| **a == OutAxis::Fixed)
                .map(|(_, s)| *s)
                .collect();
            let fo = row_major(&fo_idx, &fo_sizes);
            let r_flat = row_major(&r, &r_sizes);
            for (fi, fi_idx) in multi_indices(&fixed_in_sizes).into_iter().enumerate() {
                let mut z_idx = Vec::with_capacity(z_sizes.len());
                let mut fixed_iter = fi_idx.iter();
                for (q, a) in term.in_axes.iter().enumerate() {
                    match a {
                        InAxis::Mean => {}
                        InAxis::Fixed => z_idx.push(*fixed_iter.next().unwrap()),
                        InAxis::Linked => {
                            let p = term
                                .out_axes
                                .iter()
                                .position(|o| *o == OutAxis::Linked(q))
                                .unwrap();
                            z_idx.push(out_idx[p]);
                        }
                    }
                }
                let slot = fo * term.fixed_in + fi;
                triples.push((
                    r_flat as u32,
                    slot as u32,
                    row_major(&z_idx, &z_sizes) as u32,
                ));
            }
        }
        contractions.push(Contraction {
            reducer,
            expander,
            triples,
        });
    }
    Plan {
        reducers,
        expanders,
        contractions,
    }
}

fn block_data(feat: &WeightSpaceFeature, b: Block) -> &[f64] {
    match b {
        Block::Weight(i) => feat.weight(i),
        Block::Bias(i) => feat.bias(i),
    }
}

fn block_data_mut(feat: &mut WeightSpaceFeature, b: Block) -> &mut [f64] {
    match b {
        Block::Weight(i) => feat.weight_mut(i),
        Block::Bias(i) => feat.bias_mut(i),
    }
}

/// A closed-form equivariant NF-Layer with its parameters.
#[derive(Clone, Debug)]
pub struct EquivariantLayer {
    spec: WeightSpaceSpec,
    family: LayerFamily,
    c_in: usize,
    c_out: usize,
    terms: Arc<Vec<Term>>,
    params: Vec<Vec<f64>>,
    plan: Arc<Plan>,
    /// Test fixture: flips the sign of the `b_theta` parameter gradients.
    adjoint_fault: bool,
}

impl EquivariantLayer {
    /// A layer with all parameters zero.
    pub fn zeros(
        spec: &WeightSpaceSpec,
        family: LayerFamily,
        c_in: usize,
        c_out: usize,
    ) -> Result<Self> {
        ensure!(c_in >= 1 && c_out >= 1, "channel counts must be positive");
        let terms = enumerate_terms(spec, family, c_in, c_out);
        let plan = build_plan(spec, &terms);
        let params = terms.iter().map(|t| vec![0.0; t.param_len()]).collect();
        Ok(EquivariantLayer {
            spec: spec.clone(),
            family,
            c_in,
            c_out,
            terms: Arc::new(terms),
            params,
            plan: Arc::new(plan),
            adjoint_fault: false,
        })
    }

    /// Fan-in scaled uniform initialization. Every parameter of a term writing
    /// output block `Y` is drawn from `U[-1/sqrt(F), 1/sqrt(F)]`, where `F` sums
    /// `width_in * fixed_in` over all terms writing `Y`: the number of scalar
    /// products accumulated into one output entry.
    pub fn init(
        spec: &WeightSpaceSpec,
        family: LayerFamily,
        c_in: usize,
        c_out: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut layer = Self::zeros(spec, family, c_in, c_out)?;
        let mut fan_in: HashMap<Block, usize> = HashMap::new();
        for t in layer.terms.iter() {
            *fan_in.entry(t.out).or_default() += t.width_in * t.fixed_in;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (t, p) in layer.terms.iter().zip(layer.params.iter_mut()) {
            let bound = 1.0 / (fan_in[&t.out] as f64).sqrt();
            for x in p.iter_mut() {
                *x = rng.gen_range(-bound..=bound);
            }
        }
        Ok(layer)
    }

    /// The layer mapping every feature to itself (`d` and `b_psi` identity).
    pub fn identity(spec: &WeightSpaceSpec, family: LayerFamily, channels: usize) -> Result<Self> {
        let mut layer = Self::zeros(spec, family, channels, channels)?;
        for (t, p) in layer.terms.iter().zip(layer.params.iter_mut()) {
            if t.is_diagonal() {
                let w = t.width_in;
                for slot in 0..t.fixed_out * t.fixed_in {
                    // With fixed axes the pointwise term is indexed by
                    // (fixed out, fixed in); identity lives on its diagonal.
                    let (fo, fi) = (slot / t.fixed_in, slot % t.fixed_in);
                    if fo == fi {
                        for d in 0..w {
                            p[slot * w * w + d * w + d] = 1.0;
                        }
                    }
                }
            }
        }
        Ok(layer)
    }

    pub fn spec(&self) -> &WeightSpaceSpec {
        &self.spec
    }

    pub fn family(&self) -> LayerFamily {
        self.family
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }

    /// Parameter block of the named term, e.g. `"d_theta[1]"` or `"b_psi[2]"`.
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.term_index(name).map(|i| self.params[i].as_slice())
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.term_index(name)
            .map(move |i| self.params[i].as_mut_slice())
    }

    pub fn set_block(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let block = self
            .block_mut(name)
            .ok_or_else(|| Error::invalid(format!("no parameter block named {name}")))?;
        ensure!(
            block.len() == values.len(),
            "block {name} has {} entries, got {}",
            block.len(),
            values.len()
        );
        block.copy_from_slice(values);
        Ok(())
    }

    fn check_input(&self, x: &WeightSpaceFeature) -> Result<()> {
        ensure!(
            x.spec().same_dims(&self.spec),
            "feature weight space does not match the layer"
        );
        ensure!(
            x.channels() == self.c_in,
            "feature has {} channels, layer expects {}",
            x.channels(),
            self.c_in
        );
        Ok(())
    }

    fn reduce_all(&self, x: &WeightSpaceFeature) -> Vec<Vec<f64>> {
        self.plan
            .reducers
            .iter()
            .map(|red| {
                let src = block_data(x, red.block);
                let w = red.width;
                let mut z = vec![0.0; red.z_positions * w];
                for (pos, &zi) in red.x_to_z.iter().enumerate() {
                    let zi = zi as usize;
                    let (dst, row) = (&mut z[zi * w..(zi + 1) * w], &src[pos * w..(pos + 1) * w]);
                    for (d, s) in dst.iter_mut().zip(row) {
                        *d += s;
                    }
                }
                if red.inv_count != 1.0 {
                    z.iter_mut().for_each(|v| *v *= red.inv_count);
                }
                z
            })
            .collect()
    }

    pub fn forward(&self, x: &WeightSpaceFeature) -> Result<WeightSpaceFeature> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &WeightSpaceFeature) -> WeightSpaceFeature {
        let zs = self.reduce_all(x);
        let mut rs: Vec<Vec<f64>> = self
            .plan
            .expanders
            .iter()
            .map(|e| vec![0.0; e.r_positions * e.width])
            .collect();
        for ((term, con), params) in self
            .terms
            .iter()
            .zip(&self.plan.contractions)
            .zip(&self.params)
        {
            let z = &zs[con.reducer];
            let r = &mut rs[con.expander];
            let (wo, wi) = (term.width_out, term.width_in);
            for &(ri, slot, zi) in &con.triples {
                let p = &params[slot as usize * wo * wi..(slot as usize + 1) * wo * wi];
                let zv = &z[zi as usize * wi..(zi as usize + 1) * wi];
                let rv = &mut r[ri as usize * wo..(ri as usize + 1) * wo];
                for (o, acc) in rv.iter_mut().enumerate() {
                    let row = &p[o * wi..(o + 1) * wi];
                    *acc += row.iter().zip(zv).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        let mut y = WeightSpaceFeature::zeros_unchecked(&self.spec, self.c_out);
        for (exp, r) in self.plan.expanders.iter().zip(&rs) {
            let dst = block_data_mut(&mut y, exp.block);
            let w = exp.width;
            for (pos, &ri) in exp.y_to_r.iter().enumerate() {
                let ri = ri as usize;
                for (d, s) in dst[pos * w..(pos + 1) * w]
                    .iter_mut()
                    .zip(&r[ri * w..(ri + 1) * w])
                {
                    *d += s;
                }
            }
        }
        y
    }

    /// Adjoint pass. Accumulates parameter gradients into `grads` (shaped like
    /// [`Self::params`]) and returns the gradient with respect to the input.
    pub fn backward(
        &self,
        x: &WeightSpaceFeature,
        dy: &WeightSpaceFeature,
        grads: &mut [Vec<f64>],
    ) -> Result<WeightSpaceFeature> {
        self.check_input(x)?;
        ensure!(
            dy.channels() == self.c_out && dy.spec().same_dims(&self.spec),
            "upstream gradient shape mismatch"
        );
        ensure!(grads.len() == self.params.len(), "gradient buffer mismatch");
        let zs = self.reduce_all(x);
        // Sum the upstream gradient over broadcast axes.
        let drs: Vec<Vec<f64>> = self
            .plan
            .expanders
            .iter()
            .map(|exp| {
                let src = block_data(dy, exp.block);
                let w = exp.width;
                let mut dr = vec![0.0; exp.r_positions * w];
                for (pos, &ri) in exp.y_to_r.iter().enumerate() {
                    let ri = ri as usize;
                    for (d, s) in dr[ri * w..(ri + 1) * w]
                        .iter_mut()
                        .zip(&src[pos * w..(pos + 1) * w])
                    {
                        *d += s;
                    }
                }
                dr
            })
            .collect();
        let mut dzs: Vec<Vec<f64>> = self
            .plan
            .reducers
            .iter()
            .map(|r| vec![0.0; r.z_positions * r.width])
            .collect();
        for (idx, (term, con)) in self.terms.iter().zip(&self.plan.contractions).enumerate() {
            let z = &zs[con.reducer];
            let dr = &drs[con.expander];
            let params = &self.params[idx];
            let grad = &mut grads[idx];
            let dz = &mut dzs[con.reducer];
            let (wo, wi) = (term.width_out, term.width_in);
            let sign = if self.adjoint_fault && term.name.starts_with("b_theta") {
                -1.0
            } else {
                1.0
            };
            for &(ri, slot, zi) in &con.triples {
                let base = slot as usize * wo * wi;
                let zv = &z[zi as usize * wi..(zi as usize + 1) * wi];
                let dzv = &mut dz[zi as usize * wi..(zi as usize + 1) * wi];
                let drv = &dr[ri as usize * wo..(ri as usize + 1) * wo];
                for (o, &g) in drv.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let prow = &params[base + o * wi..base + (o + 1) * wi];
                    let grow = &mut grad[base + o * wi..base + (o + 1) * wi];
                    for q in 0..wi {
                        grow[q] += sign * g * zv[q];
                        dzv[q] += g * prow[q];
                    }
                }
            }
        }
        let mut dx = WeightSpaceFeature::zeros_unchecked(&self.spec, self.c_in);
        for (red, dz) in self.plan.reducers.iter().zip(&dzs) {
            let dst = block_data_mut(&mut dx, red.block);
            let w = red.width;
            for (pos, &zi) in red.x_to_z.iter().enumerate() {
                let zi = zi as usize;
                for (d, s) in dst[pos * w..(pos + 1) * w]
                    .iter_mut()
                    .zip(&dz[zi * w..(zi + 1) * w])
                {
                    *d += s * red.inv_count;
                }
            }
        }
        Ok(dx)
    }

    /// Deliberately corrupts the `b_theta` parameter adjoint; used to verify
    /// that the gradient checks catch a wrong sign.
    #[doc(hidden)]
    pub fn inject_adjoint_fault(&mut self, on: bool) {
        self.adjoint_fault = on;
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| vec![0.0; p.len()]).collect()
    }

    /// Re-expresses this layer inside a larger family (`Pointwise -> Np`,
    /// `Np -> Hnp`, `Pointwise -> Hnp`) so that both compute the same map.
    pub fn embed_into(&self, target: LayerFamily) -> Result<EquivariantLayer> {
        use LayerFamily::*;
        ensure!(
            self.family == target
                || matches!(
                    (self.family, target),
                    (Pointwise, Np) | (Pointwise, Hnp) | (Np, Hnp)
                ),
            "{:?} layers cannot be embedded into {:?}",
            self.family,
            target
        );
        if self.family == target {
            return Ok(self.clone());
        }
        let mut out = EquivariantLayer::zeros(&self.spec, target, self.c_in, self.c_out)?;
        let num_layers = self.spec.num_layers();
        let tgt_group = target.group();
        for (src_term, src_params) in self.terms.iter().zip(&self.params) {
            let src_linked = src_term.linked_layers();
            // The matching target term links the same permutable layers.
            let tgt_linked: Vec<usize> = src_linked
                .iter()
                .copied()
                .filter(|l| tgt_group.permutable(*l, num_layers))
                .collect();
            let ti = out
                .terms
                .iter()
                .position(|t| {
                    t.out == src_term.out
                        && t.inp == src_term.inp
                        && t.linked_layers() == tgt_linked
                })
                .ok_or_else(|| Error::invalid(format!("no target term for {}", src_term.name)))?;
            let tgt_term = out.terms[ti].clone();
            let out_layers = tgt_term.out.axes();
            let in_layers = tgt_term.inp.axes();
            let fo_layers: Vec<usize> = out_layers
                .iter()
                .zip(&tgt_term.out_axes)
                .filter(|(_, a)| **a == OutAxis::Fixed)
                .map(|(l, _)| *l)
                .collect();
            let fi_layers: Vec<usize> = in_layers
                .iter()
                .zip(&tgt_term.in_axes)
                .filter(|(_, a)| **a == InAxis::Fixed)
                .map(|(l, _)| *l)
                .collect();
            let fo_sizes: Vec<usize> = fo_layers.iter().map(|l| self.spec.neurons(*l)).collect();
            let fi_sizes: Vec<usize> = fi_layers.iter().map(|l| self.spec.neurons(*l)).collect();
            let w = tgt_term.width_out * tgt_term.width_in;
            for (fo, fo_idx) in multi_indices(&fo_sizes).into_iter().enumerate() {
                for (fi, fi_idx) in multi_indices(&fi_sizes).into_iter().enumerate() {
                    // Weight of this (fixed out, fixed in) slot implied by the
                    // source term's treatment of each newly fixed layer.
                    let mut factor = 1.0;
                    for (q, l) in fi_layers.iter().enumerate() {
                        match fo_layers.iter().position(|x| x == l) {
                            Some(p) if src_linked.contains(l) => {
                                if fo_idx[p] != fi_idx[q] {
                                    factor = 0.0;
                                }
                            }
                            _ => factor /= self.spec.neurons(*l) as f64,
                        }
                    }
                    let slot = fo * tgt_term.fixed_in + fi;
                    // Source families here never have fixed axes: one slot.
                    let dst = &mut out.params[ti][slot * w..(slot + 1) * w];
                    for (d, s) in dst.iter_mut().zip(&src_params[..w]) {
                        *d += factor * s;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Sharing-parameter count of the closed-form family at the given channels.
pub fn closed_form_param_count(
    spec: &WeightSpaceSpec,
    family: LayerFamily,
    c_in: usize,
    c_out: usize,
) -> usize {
    enumerate_terms(spec, family, c_in, c_out)
        .iter()
        .map(Term::param_len)
        .sum()
}
