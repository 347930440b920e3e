"""Audio tagging with log-mel and waveform CNNs on a small numpy autodiff engine."""
from .architectures import ArchSpec, Network, build_architecture, count_multiadds, count_params
from .dsp import LogMelFrontEnd, Waveform
from .estimators import AudioTagger, LogMelExtractor

__version__ = "0.1.0"

__all__ = [
    "ArchSpec",
    "AudioTagger",
    "LogMelExtractor",
    "LogMelFrontEnd",
    "Network",
    "Waveform",
    "build_architecture",
    "count_multiadds",
    "count_params",
]
