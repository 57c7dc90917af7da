"""
Configuration and constants for holoflow.

This module contains every default used by the toolkit, including:
- Sampler settings for the variance diminishing ODE
- Prior noise scales
- Apo/holo coupling thresholds
- Training loss weights and network sizes
- Evaluation thresholds and search limits

A command-line run with no flags uses exactly these values.
"""

# ============================================================================
# Sampler
# ============================================================================

DEFAULT_STEPS = 40
"""
Number of integration steps `i` taken from t = 0 to t = 1.

Forty Euler-style steps are enough for the convex update to land on the
final endpoint prediction.
"""

DEFAULT_ETA = 1.0
"""
Scale `eta` applied to both convex coefficients of the sampler update.

With eta = 1 the two coefficients sum to one before clamping.
"""

CLAMP_LOWER = 1e-6
"""Lower bound applied to both sampler coefficients."""

CLAMP_UPPER = 1.0 - 1e-6
"""Upper bound applied to both sampler coefficients."""

# ============================================================================
# Priors
# ============================================================================

DEFAULT_SIGMA = 1e-4
"""
Standard deviation (Å) of the Gaussian noise added to protein templates.

The same scale is used for the training-time noise on holo targets.
"""

EIGENVALUE_TOLERANCE = 1e-8
"""
Laplacian eigenvalues at or below this value are treated as null modes.

One null mode per connected fragment pins the fragment centroid.
"""

NEGATIVE_EIGENVALUE_LIMIT = -1e-10
"""Eigenvalues below this value mean the matrix is not a valid Laplacian."""

# ============================================================================
# Coupling
# ============================================================================

TM_MIN = 0.7
"""Minimum apo/holo Cα TM-score for a pair to be accepted."""

RMSD_MAX = 5.0
"""Apo/holo Cα RMSD (Å) at or above which a pair is rejected."""

# ============================================================================
# Geometry
# ============================================================================

POCKET_WEIGHT_SCALE = 5.0
"""
Length scale (Å) of the pocket alignment weights.

Residue i receives weight exp(-d_i / scale), d_i being the distance from its
holo Cα to the nearest crystal ligand atom.
"""

TM_MAX_ITERATIONS = 20
"""Maximum number of re-fits in the iterative TM-score superposition."""

TM_MIN_D0 = 0.5
"""Floor (Å) for the TM-score distance scale of short chains (L <= 21)."""

ORTHONORMAL_TOLERANCE = 1e-9
"""Tolerance for R^T R = I and det(R) = 1 on rigid transforms."""

COLLINEAR_TOLERANCE = 1e-8
"""
Relative singular-value cutoff below which a point cloud counts as rank < 2.
"""

# ============================================================================
# Ligand graphs
# ============================================================================

AUTOMORPHISM_CAP = 10_000
"""
Maximum number of graph automorphisms enumerated per fragment.

When the cap is hit, symmetry-corrected RMSD falls back to the identity
labelling and flags the result as truncated.
"""

MAX_FRAGMENT_ATOMS = 64
"""Largest fragment (heavy atoms) accepted by automorphism enumeration."""

# ============================================================================
# Field network and training
# ============================================================================

DEFAULT_HIDDEN_WIDTH = 64
"""Hidden width of the endpoint network and of the affinity readout."""

TIME_FREQUENCIES = 4
"""
Number of Fourier frequencies in the time embedding.

Each frequency k contributes sin(2 pi k t) and cos(2 pi k t).
"""

LAMBDA_X = 0.2
"""Weight of the structure loss."""

LAMBDA_B = 0.1
"""Weight of the binding affinity loss."""

DEFAULT_LEARNING_RATE = 0.05
"""Step size of plain gradient descent."""

DEFAULT_EPOCHS = 100
"""Default number of passes over the training set."""

DEFAULT_BATCH_SIZE = 8
"""
Number of (prior sample, t) draws averaged into one gradient step per pair.
"""

STRUCTURE_LOSS_CLAMP = 10.0
"""Per-atom error clamp (Å) of the clamped aligned structure loss."""

STRUCTURE_LOSSES = ("aligned-mse", "clamped-aligned-error")
"""Selectable structure losses."""

CHECKPOINT_MAGIC = "holoflow-field"
"""First token of the text header of a parameter checkpoint."""

CHECKPOINT_VERSION = 1
"""Checkpoint format version written by this release."""

# ============================================================================
# Generation and evaluation
# ============================================================================

TOP_K = 5
"""Number of ranked samples returned by generation."""

SUCCESS_RMSD_THRESHOLD = 2.0
"""Ligand RMSD (Å) at or below which a docked pose counts as a success."""

POCKET_CUTOFF = 10.0
"""Distance (Å) from the reference ligand defining pocket residues."""

# ============================================================================
# File formats
# ============================================================================

TRAJECTORY_FORMAT = "holoflow-trajectory"
"""Format tag stored in the header line of trajectory files."""

TRAJECTORY_VERSION = 1
"""Trajectory format version written by this release."""

TRAJECTORY_SUFFIX = ".traj.jsonl"
"""File suffix used for trajectory files."""

LIGAND_RESIDUE_NAME = "LIG"
"""Residue name written on HETATM records."""

LIGAND_CHAIN_ID = "L"
"""Chain identifier written on HETATM records."""

RUN_MANIFEST_NAME = "run_manifest.json"
"""File written next to every CLI output."""
