# Models Package
from .config import DenoiserConfig, LatentKind
from .denoiser import DenoiserBackbone, build_denoiser, count_parameters, predict_noise
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint
