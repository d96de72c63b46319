"""
Spectral signatures of local neighbourhoods
===========================================

Each word is summarised by the sorted eigenvalues of ``I - S``, where ``S``
holds Gaussian similarities among the word and its nearest neighbours. The
signature ignores rotations and translations, so a word and its counterpart
in a rotated copy of the space get the same row.
"""

import numpy as np

from wordmap import generate, mutual_nn_pairs, spectral_features

# A noiseless rotated and shuffled copy of a 300-point cloud
inst = generate(300, 20, "orthogonal", noise_level=0.0, seed=0)
fx = spectral_features(inst.X, k=10)
fy = spectral_features(inst.Y, k=10)

# Rows of corresponding words agree to rounding error
print("max signature gap:", np.abs(fx.features - fy.features[inst.true_map]).max())

# Every row sums to zero: the diagonal of I - S vanishes
print("max |row sum|:", np.abs(fx.features.sum(axis=1)).max())

# Mutual nearest neighbours in signature space give seed pairs
seeds = mutual_nn_pairs(fx, fy)
pairs = seeds.pairs()
correct = sum(inst.true_map[s] == t for s, t in pairs)
print(f"{len(pairs)} seed pairs, {correct} correct")

# With a little noise the signatures drift and fewer pairs survive
noisy = generate(300, 20, "orthogonal", noise_level=0.02, seed=0)
seeds = mutual_nn_pairs(spectral_features(noisy.X, 10), spectral_features(noisy.Y, 10))
correct = sum(noisy.true_map[s] == t for s, t in seeds.pairs())
print(f"noise 0.02: {seeds.n_real} seed pairs, {correct} correct")
