use super::feature::WeightSpaceFeature;
use super::perm::NeuronPermutation;
use super::spec::{LayerDesc, WeightSpaceSpec};
use crate::error::{ensure, Result};

/// A feature whose conv filter axes have been merged into the channel axis.
///
/// Weight layer `i` has shape `(n_i, n_{i-1}, 1, weight_channels[i])` with
/// `weight_channels[i] = filter_size_i * c`; biases keep `c` channels. The
/// original filter shapes are kept so [`FoldedFeature::unfold`] is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldedFeature {
    spec: WeightSpaceSpec,
    original: WeightSpaceSpec,
    channels: usize,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl FoldedFeature {
    /// Fully connected spec of the folded feature.
    pub fn spec(&self) -> &WeightSpaceSpec {
        &self.spec
    }

    pub fn original_spec(&self) -> &WeightSpaceSpec {
        &self.original
    }

    pub fn weight_channels(&self, i: usize) -> usize {
        self.original.filter_size(i) * self.channels
    }

    pub fn bias_channels(&self) -> usize {
        self.channels
    }

    pub fn weight(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn bias(&self, i: usize) -> &[f64] {
        &self.biases[i]
    }

    pub fn unfold(&self) -> WeightSpaceFeature {
        WeightSpaceFeature::from_parts(
            &self.original,
            self.channels,
            self.weights.clone(),
            self.biases.clone(),
        )
        .expect("folded feature keeps shapes consistent")
    }

    /// Group action on the folded representation (filter and channels ride along).
    pub fn apply(&self, perm: &NeuronPermutation) -> Result<FoldedFeature> {
        let counts = self.spec.neuron_counts();
        ensure!(
            perm.sigmas()
                .iter()
                .map(Vec::len)
                .eq(counts.iter().copied()),
            "permutation dims do not match folded weight space"
        );
        let mut out = self.clone();
        let c = self.channels;
        for (i, layer) in self.spec.layers().iter().enumerate() {
            let row = &perm.sigmas()[i + 1];
            let col = &perm.sigmas()[i];
            let block = self.weight_channels(i);
            for (j, &rj) in row.iter().enumerate() {
                for (k, &ck) in col.iter().enumerate() {
                    let s = (j * layer.n_in + k) * block;
                    let d = (rj * layer.n_in + ck) * block;
                    out.weights[i][d..d + block].copy_from_slice(&self.weights[i][s..s + block]);
                }
                out.biases[i][rj * c..(rj + 1) * c]
                    .copy_from_slice(&self.biases[i][j * c..(j + 1) * c]);
            }
        }
        Ok(out)
    }
}

/// Folds every conv filter axis into the channel axis (filter index major,
/// original channel minor). A purely fc feature folds to a plain copy.
pub fn fold_conv(feat: &WeightSpaceFeature) -> FoldedFeature {
    let original = feat.spec().clone();
    FoldedFeature {
        spec: original.to_fc(),
        original,
        channels: feat.channels(),
        weights: feat.weights().to_vec(),
        biases: feat.biases().to_vec(),
    }
}

/// Rebuilds a conv feature from a folded feature and the target spec.
pub fn unfold_conv(folded: &FoldedFeature, spec: &WeightSpaceSpec) -> Result<WeightSpaceFeature> {
    ensure!(
        spec == folded.original_spec(),
        "target spec differs from the spec the feature was folded from"
    );
    Ok(folded.unfold())
}

/// The fc layer shape a conv layer folds to.
pub fn folded_layer(layer: &LayerDesc) -> LayerDesc {
    LayerDesc::fc(layer.n_out, layer.n_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wsdata::{GroupTag, InitKind};

    fn conv_spec() -> WeightSpaceSpec {
        WeightSpaceSpec::new(
            vec![
                LayerDesc::conv1d(2, 3, 5),
                LayerDesc::conv2d(4, 2, 3, 3),
                LayerDesc::fc(2, 4),
            ],
            true,
        )
        .unwrap()
    }

    #[test]
    fn fold_shapes() {
        let spec = WeightSpaceSpec::new(vec![LayerDesc::conv1d(2, 3, 5)], false).unwrap();
        let f = WeightSpaceFeature::new(&spec, 1, InitKind::UniformFanIn { seed: 1 }).unwrap();
        let folded = fold_conv(&f);
        assert_eq!(folded.spec().layers()[0], LayerDesc::fc(2, 3));
        assert_eq!(folded.weight_channels(0), 5);
        assert_eq!(folded.weight(0).len(), 2 * 3 * 5);
        assert_eq!(folded.bias_channels(), 1);
    }

    #[test]
    fn fold_unfold_exact() {
        let spec = conv_spec();
        let f = WeightSpaceFeature::new(&spec, 2, InitKind::UniformFanIn { seed: 4 }).unwrap();
        let folded = fold_conv(&f);
        assert_eq!(folded.weight_channels(1), 18);
        assert_eq!(unfold_conv(&folded, &spec).unwrap(), f);
        assert!(unfold_conv(&folded, &spec.to_fc()).is_err());
    }

    #[test]
    fn fold_commutes_with_action() {
        let spec = conv_spec();
        for seed in 0..10 {
            let f = WeightSpaceFeature::new(&spec, 2, InitKind::UniformFanIn { seed }).unwrap();
            let p = NeuronPermutation::random(&spec, GroupTag::Np, seed + 100);
            let lhs = fold_conv(&p.apply(&f).unwrap());
            let rhs = fold_conv(&f).apply(&p).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn fc_fold_is_copy() {
        let spec = WeightSpaceSpec::mlp(&[2, 3, 1]).unwrap();
        let f = WeightSpaceFeature::new(&spec, 1, InitKind::UniformFanIn { seed: 0 }).unwrap();
        let folded = fold_conv(&f);
        assert_eq!(folded.spec(), &spec);
        assert_eq!(folded.unfold(), f);
    }
}
