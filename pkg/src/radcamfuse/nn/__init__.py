from .camera import CameraNet, LatentDistribution, SkipAlign, reparameterize
from .config import MODES, TASKS, ModelConfig
from .heads import DetectionHead, DetectionPrediction, SegmentationHead, SegmentationPrediction
from .layers import bilinear_resize, rearrange_complex, split_complex, swap_axes
from .model import FusionNet, batch_inputs, count_parameters
from .radar import MIMOPreEncoder, RadarNet, RadarOutputs
