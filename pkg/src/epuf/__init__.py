"""Entropy-feature DRAM PUF: simulation, key generation, metrics, and a
lightweight device/server mutual-authentication protocol."""

from .core import (
    EntropyFeatures, HelperStream, InsufficientBits, Precision, Response,
    apply_hs, generate_ef, generate_hs, quantize, row_entropy, select_precision,
)
from .dramsim import (
    Bitmap, DeviceModel, Geometry, InputPattern, PatternKind, ReadCondition,
    build_device, build_population, read_segment, reference_read,
)
from .keygen import Challenge, CrpRecord, reconstruct, register
from .metrics import fractional_hd
from .protocol import Device, Server, ServerDb, enroll, run_session

__version__ = "0.1.0"

__all__ = [
    "Bitmap", "Challenge", "CrpRecord", "Device", "DeviceModel",
    "EntropyFeatures", "Geometry", "HelperStream", "InputPattern",
    "InsufficientBits", "PatternKind", "Precision", "ReadCondition", "Response",
    "Server", "ServerDb", "apply_hs", "build_device", "build_population",
    "enroll", "fractional_hd", "generate_ef", "generate_hs", "quantize",
    "read_segment", "reconstruct", "reference_read", "register", "row_entropy",
    "run_session", "select_precision",
]
