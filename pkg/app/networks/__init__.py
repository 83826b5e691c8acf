from app.networks.base import Conv2d, Module, Parameter
from app.networks.cfd import StudentModel, StudentOutput, TeacherModel, TeacherOutput, build_model
from app.networks.converter import FeatureConverter
from app.networks.extractor import FeatureExtractor
from app.networks.matcher import (
    DisparitySequence,
    StereoMatcher,
    UpdateBlock,
    build_correlation,
    window_lookup,
)

__all__ = [
    "Conv2d",
    "DisparitySequence",
    "FeatureConverter",
    "FeatureExtractor",
    "Module",
    "Parameter",
    "StereoMatcher",
    "StudentModel",
    "StudentOutput",
    "TeacherModel",
    "TeacherOutput",
    "UpdateBlock",
    "build_correlation",
    "build_model",
    "window_lookup",
]
