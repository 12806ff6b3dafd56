"""Recurrent instance-level video object segmentation on numpy.

Modules:
    tensor    reverse-mode autodiff, Adam, checkpoints
    vision    warping, boxes, morphology, mask perturbation, augmentation
    flow      Horn-Schunck optical flow and .flo files
    scene     parametric synthetic scenes
    data      synthetic suites, DAVIS-layout I/O, indexed PNG
    segnet    two-stream segmentation network
    locnet    box proposal, RoI pooling, box regression, restriction
    fusion    argmax fusion of per-object maps
    pipeline  training stages, online finetuning, inference
    metrics   J, F, T and aggregates
    ablation  component toggle matrix
    report    text tables and figures
    cli       command line entry point
"""

__version__ = "0.1.0"
