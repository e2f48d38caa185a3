"""Zero vs reflect vs adjacent padding, scored against a whole-image oracle.

Zero padding starves tile borders of context; reflect padding invents
plausible but wrong context; adjacent padding hands each tile its true
neighbourhood, which makes tiled processing agree with the whole-image
reference exactly whenever the padding covers the receptive field. The
50%-overlap baseline gets close at four times the pixel cost.
"""

from tilekit.imagecore import ImageBuffer
from tilekit.metrics import psnr, seam_energy, ssim
from tilekit.processors import ConvKernel, ConvProcessor, conv2d_apply
from tilekit.synth import textured_corpus
from tilekit.tiling import PaddingMode, apply_plan, default_padding_size, plan_tiling

corpus = textured_corpus(5, 512, 512, channels=3, seed=100)
kernel = ConvKernel.gaussian(3, 1.5)
proc = ConvProcessor(kernel)
tile = 128
pad = default_padding_size(tile)
plan = plan_tiling(512, 512, tile, padding_size=pad, force="adjacent")
plan50 = plan_tiling(512, 512, tile, overlap_ratio=0.5, force="overlap")

print(f"{'image':>6} {'strategy':>12} {'psnr_db':>9} {'ssim':>7} {'seam':>9}")
for i, img in enumerate(corpus):
    oracle = conv2d_apply(img, kernel)
    for name, mode in [("zero", PaddingMode.ZERO), ("reflect", PaddingMode.REFLECT),
                       ("adjacent", PaddingMode.ADJACENT)]:
        arr, _ = apply_plan(img.data, proc, plan, padding_mode=mode)
        out = ImageBuffer(arr)
        print(f"{i:>6} {name:>12} {psnr(out, oracle):>9.2f} "
              f"{ssim(out, oracle):>7.4f} {seam_energy(out, plan):>9.5f}")
    arr, _ = apply_plan(img.data, proc, plan50)
    out = ImageBuffer(arr)
    print(f"{i:>6} {'overlap50':>12} {psnr(out, oracle):>9.2f} "
          f"{ssim(out, oracle):>7.4f} {seam_energy(out, plan50):>9.5f}")

print("\nadjacent padding reaches the oracle exactly (psnr = inf) at a "
      "quarter of the 50%-overlap cost; zero padding leaves bright seams.")
