"""Polarimetric DoFP imaging toolkit for particle classification.

Subpackages follow the processing chain: :mod:`imagery` (mosaics and file
formats), :mod:`demosaic`, :mod:`stokes`, :mod:`segment`, :mod:`degrade`,
:mod:`dataset`, :mod:`classify` and the :mod:`synth` forward model. Each
stage has a functional API and a scikit-learn style estimator.
"""

__version__ = "0.1.0"

from .classify import PolarFeatureExtractor, SoftmaxAdamClassifier
from .degrade import FeatureDegrader, Scenario
from .demosaic import FDZPDemosaicer
from .segment import ParticleSegmenter
from .stokes import StokesTransformer

__all__ = [
    "FDZPDemosaicer",
    "FeatureDegrader",
    "ParticleSegmenter",
    "PolarFeatureExtractor",
    "Scenario",
    "SoftmaxAdamClassifier",
    "StokesTransformer",
    "__version__",
]
