use rand::{Rng, SeedableRng};

use crate::nn::Rng64;
use crate::numeric::ParamStore;

/// Redraws every parameter as a generic O(1) instance for gradient checks:
/// weights in U(-1,1), step biases in U(-0.5,0.5), state-matrix logs in
/// U(-0.7,0.4).
pub fn gradcheck_instance(store: &mut ParamStore, seed: u64) {
    let mut rng = Rng64::seed_from_u64(seed);
    for p in store.iter_mut() {
        let range = if p.name.ends_with(".dt_up.bias") {
            -0.5..0.5
        } else if p.name.ends_with(".a_log") {
            -0.7..0.4
        } else {
            -1.0..1.0
        };
        for v in p.value.data_mut() {
            *v = rng.gen_range(range.clone());
        }
    }
}
