from plunet.data.netpbm import load_dir, load_sample, read_netpbm, save_mask, save_sample
from plunet.data.sample import Sample, stack
from plunet.data.split import Split, SplitSpec, split
from plunet.data.synth import synth_generate

__all__ = [
    "Sample",
    "Split",
    "SplitSpec",
    "load_dir",
    "load_sample",
    "read_netpbm",
    "save_mask",
    "save_sample",
    "split",
    "stack",
    "synth_generate",
]
