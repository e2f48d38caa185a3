"""Score training images for artifacts and drop the worst slice.

Each sample gets a partial-artifact ratio (PAR): the fraction of pixels a
detector flags as unrealistic. Filtering keeps samples at or below a PAR
threshold; the threshold can be calibrated so a target fraction (say 15%)
of the corpus is dropped. The built-in detector is a crude
high-frequency-residual stand-in, but the machinery is detector-agnostic.
"""

from pathlib import Path

import numpy as np

from tilekit.imagecore import ImageBuffer
from tilekit.losses import (
    TrainingSample, calibrate_threshold, filter_dataset, par,
    residual_artifact_detector, write_filter_manifest,
)
from tilekit.synth import textured_image

rng = np.random.default_rng(42)
samples = []
for i, density in enumerate(np.linspace(0.002, 0.25, 100)):
    data = textured_image(32, 32, 1, seed=500 + i).data.copy()
    n = int(density * data.size)  # saltier images rank worse
    idx = rng.choice(data.size, size=n, replace=False)
    data.ravel()[idx] = rng.choice([0.0, 1.0], size=n)
    img = ImageBuffer(data)
    samples.append(TrainingSample(f"sample{i:03d}", img, img))

pars = [par(residual_artifact_detector(s)) for s in samples]
print(f"PAR spread over 100 samples: min {min(pars):.3f}, "
      f"median {sorted(pars)[50]:.3f}, max {max(pars):.3f}")

threshold = calibrate_threshold(pars, target_drop_fraction=0.15)
print(f"threshold for a 15% drop: {threshold:.4f}")

result = filter_dataset(samples, residual_artifact_detector, threshold)
print(f"kept {len(result.kept)}, dropped {len(result.dropped)}")

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)
write_filter_manifest(result.records, out_dir / "filter_manifest.jsonl")
print(f"manifest -> {out_dir / 'filter_manifest.jsonl'} "
      f"(one JSON line per sample: id, par, kept)")
