"""How much extra work does tile overlap cost?

Overlapping tiles at ratio r reprocess pixels: the model says
(1/(1-r))^2, so 50% overlap means 4x the pixels. Adjacent padding keeps
0% overlap and only pays ((tile + 2*pad)/tile)^2, about 1.27x at the
default 6% padding. The sweep below counts actual pixels fed to the
processor and puts the model next to the measurement.
"""

import sys

from tilekit.processors import IdentityProcessor
from tilekit.profiler import overhead_ratio, records_to_csv, sweep
from tilekit.synth import textured_image

img = textured_image(1024, 1024, 1, seed=3)

print("analytic overhead: r=0 -> %.3f, r=0.25 -> %.3f, r=0.5 -> %.3f" % (
    overhead_ratio(0.0), overhead_ratio(0.25), overhead_ratio(0.5)))

records = sweep(img.data, IdentityProcessor(),
                tile_sizes=[32, 64, 128], overlaps=[0.0, 0.25, 0.5],
                repeats=3, verify_against=img.data)

print("\nengine-counted pixels per configuration:")
sys.stdout.write(records_to_csv(records))

base = {r.tile_size: r.pixels_processed for r in records
        if r.strategy == "small_overlap" and r.overlap_ratio == 0.0}
print("\nmeasured/model agreement at 50% overlap:")
for r in records:
    if r.strategy == "small_overlap" and r.overlap_ratio == 0.5:
        measured = r.pixels_processed / base[r.tile_size]
        print(f"  tile {r.tile_size:4d}: measured {measured:.3f} vs model 4.000")
for r in records:
    if r.strategy == "adjacent_padding":
        print(f"  tile {r.tile_size:4d} adjacent padding: "
              f"{r.pixels_processed / img.data.size:.3f}x pixels (model "
              f"{r.model_overhead:.3f})")
