"""volabel: connectivity-aware instance labeling for 3D segmentation volumes.

Converts semantic volumes to instance labels by min-label propagation,
decodes instances from probability maps by distance-transform watershed,
aligns resolutions, tiles and stitches large volumes, and evaluates
predictions with per-class Dice/IoU reports.
"""

from .decode import (
    DecodeParams,
    ProbabilityVolume,
    decode_instances,
    distance_transform,
    extract_markers,
    threshold_semantic,
    watershed,
)
from .instances import (
    InstanceReport,
    build_instance_report,
    filter_small,
    instance_sizes,
    log_spaced_edges,
    size_class,
    size_histogram,
)
from .io import VlvFormatError, export_csv, import_raw, read_vlv, write_vlv
from .lpa import (
    ConvergenceError,
    LpaConfig,
    LpaResult,
    ccl_oracle,
    compact_labels,
    init_labels,
    per_class_instances,
    propagate_step,
    run_lpa,
)
from .metrics import (
    DEFAULT_CLASS_NAMES,
    ClassScores,
    MetricsReport,
    dice,
    format_report_table,
    instances_to_class_masks,
    iou,
    per_class_report,
)
from .scale import (
    FragmentationReport,
    ResampleSpec,
    TileIndex,
    fragmentation_report,
    make_tile_index,
    random_crop,
    resample,
    stitch,
    tile,
)
from .volume import (
    Connectivity,
    LabeledVolume,
    VoxelCoord,
    coord_of,
    linear_index,
    neighbors,
    new_volume,
)

__version__ = "0.1.0"
