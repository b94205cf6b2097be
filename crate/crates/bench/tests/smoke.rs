// The benchmarked kernels run once at their benchmark sizes.

use diffbbo::diffusion::sample;
use diffbbo::uncertainty::decompose;
use diffbbo::{DiffusionModel, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn benchmark_inputs_are_valid() {
    let members: Vec<DiffusionModel> = (0..3)
        .map(|s| DiffusionModel::new(8, &ModelConfig::desk(), &mut ChaCha8Rng::seed_from_u64(s)).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs = sample(&members[0], 0.8, 20, 2.0, &mut rng).unwrap();
    assert_eq!(xs.len(), 20);
    assert!(xs.iter().all(|x| x.len() == 8 && x.iter().all(|v| v.is_finite())));
    let est = decompose(&members, 0.8, 20, 2.0, &mut rng).unwrap();
    assert!(est.aleatoric >= 0.0 && est.epistemic >= 0.0);
}
