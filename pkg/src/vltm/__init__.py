"""Virtual light transport matrix probing for non-line-of-sight scenes."""
from .engine import (DirectImage, OccupancyMask, TransportMatrix, VoxelGrid, accumulate_in_focus_indirect,
                     assemble_ltm, band_decompose, compute_column, compute_direct, default_wavelength,
                     mask_outer, occupancy_from_direct)
from .estimator import VirtualTransportMatrix
from .export import export_image, export_matrix, read_matrix, write_matrix
from .nlir import FormatError, read_nlir, write_nlir
from .phasor import (GateSpec, PhasorSignal, WaveParams, convolve_time, gaussian_gate, higher_order_gate,
                     image_value, make_direct_illumination, make_indirect_illumination, thin_lens)
from .scene import (SPEED_OF_LIGHT, ImpulseResponse, Lambertian, NoiseSpec, Patch, Phong, RelayTopology,
                    SceneDescription, SceneError, TimeAxis, grid_topology, load_scene, save_scene)
from .simulate import apply_noise, brdf_eval, simulate_impulse_response

__version__ = "0.1.0"
