"""Single-shot phase watermarking of latent tensors in the mid-band frequency domain."""

from .codec import BlockMeanCodec, IdentityCodec, SpaceToDepthCodec, make_codec
from .errors import (
    CapacityError,
    ContractError,
    FormatError,
    PhaseMarkError,
    ShapeError,
    SymmetryError,
    ThresholdError,
    TruncatedFileError,
)
from .layout import BandConfig, BlockPlan, BlockPos, build_plan, enumerate_candidates
from .modem import ModemParams, PcqConstellations, Variant
from .pipeline import DetectionReport, PipelineConfig, embed, identify, verify
from .spectrum import RealizeMode
from .stats import Codebook, binom_tail, bonferroni_threshold, generate_codebook, threshold
from .tensor import ImageBuffer, LatentTensor, Message, bit_accuracy, psnr

__version__ = "0.1.0"
