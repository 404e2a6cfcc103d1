"""Speaker diarization for small meetings recorded by a microphone array.

The pipeline localizes speech frames with SRP-PHAT over an azimuth grid,
counts speakers from a 10-degree DOA histogram, assigns speech to angular
sectors, optionally re-clusters externally supplied speaker embeddings with
the estimated count, fuses hypotheses by weighted voting, and scores results
with a NIST-style diarization error rate.
"""

from .census import AngularHistogram, SpeakerCensus, build_histogram, count_speakers, find_local_maxima
from .clustering import (
    ClusterAssignment,
    ahc,
    assignment_to_rttm,
    cosine_affinity,
    nme_sc,
    sc_fixed_k,
)
from .der import DerReport, score
from .doa import DoaTrack, SrpFrame, SteeringGrid, build_grid, gcc_phat, localize, srp_phat_frame
from .fusion import WeightedHypothesis, align_labels, fuse, vote
from .io import (
    EmbeddingSet,
    FramePlan,
    MicArrayGeometry,
    MultichannelClip,
    Segment,
    frame_clip,
    load_geometry,
    load_wav,
    read_embeddings,
    read_rttm,
    write_rttm,
    write_wav,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .sectors import SectorMap, assign_frames, build_sectors, frames_to_rttm
from .synth import SceneSpec, SourceSpec, render

__version__ = "0.1.0"
