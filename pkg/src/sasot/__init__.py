"""Speaker-aware serialized output training (SA-SOT) for multi-talker ASR, at desk scale."""

__version__ = "0.1.0"

from .cif import CifConfig, FireResult, cif_backward, cif_forward, quantity_loss, scale_alpha
from .labels import (CC, MASK, S1S, S2S, SOS, MaskedLabel, SpeakerTranscript, TimedWord,
                     TsotLabel, deserialize_tsot, make_masked_label, serialize_tsot)
from .metrics import CpwerReport, EditCounts, cpwer, edit_distance, wer
from .mixsim import (AlignedUtterance, MixtureSample, build_dataset, load_alignments,
                     simulate_mixture, synthesize_features)
from .model import ModelConfig, SaSotModel, joint_loss
from .saa import (cosine_similarity_matrix, saa_backward, scaled_dot_attention,
                  speaker_aware_attention)
