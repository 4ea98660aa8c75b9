use rand::Rng;

use crate::error::Result;
use crate::model::{ModelDims, ModelParams, Variant};
use crate::tensor::Real;

/// Fresh parameters: weight matrices uniform in `+-sqrt(3 / fan_in)` with
/// `fan_in` the number of input rows, giving unit-variance pre-activations
/// for unit-variance inputs. Embeddings are unit variance. Biases keep the
/// layout values (zero, forget gate 1) and the copy scale stays 1.
pub fn init_params<T: Real, R: Rng + ?Sized>(
    variant: Variant,
    dims: ModelDims,
    rng: &mut R,
) -> Result<ModelParams<T>> {
    let mut model = ModelParams::<T>::layout(variant, dims)?;
    let skip: Vec<_> = model
        .encoder
        .iter()
        .chain(&model.decoder)
        .map(|l| l.bias)
        .chain(model.copy_scale)
        .collect();
    let ids: Vec<_> = model.params.ids().filter(|id| !skip.contains(id)).collect();
    for id in ids {
        let fan_in = if id == model.embedding {
            1
        } else {
            model.params.get(id).rows()
        };
        let bound = (3.0 / fan_in as f64).sqrt();
        for x in model.params.get_mut(id).data_mut() {
            *x = T::of(rng.gen_range(-bound..=bound));
        }
    }
    Ok(model)
}
