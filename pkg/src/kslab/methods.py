"""Training-method identifiers shared across modules.

One identifier per row of the method table: what data the method trains on,
which loss it minimizes, and whether an inference-time correction applies.
"""

FULLY_SUPERVISED = "fully_supervised"
SUPERVISED_WO_DENOISING = "supervised_wo_denoising"
NOISIER2FULL = "noisier2full"
NOISIER2FULL_UNWEIGHTED = "noisier2full_unweighted"
STANDARD_SSDU = "standard_ssdu"
NOISE2RECON_SS = "noise2recon_ss"
ROBUST_SSDU = "robust_ssdu"
ROBUST_SSDU_UNWEIGHTED = "robust_ssdu_unweighted"

ALL_METHODS = (
    FULLY_SUPERVISED,
    SUPERVISED_WO_DENOISING,
    NOISIER2FULL,
    NOISIER2FULL_UNWEIGHTED,
    STANDARD_SSDU,
    NOISE2RECON_SS,
    ROBUST_SSDU,
    ROBUST_SSDU_UNWEIGHTED,
)

# Methods whose training input is supported on Omega (noisy fully sampled
# training data) versus on Lambda ∩ Omega (noisy sub-sampled training data).
TASK_A_METHODS = (
    FULLY_SUPERVISED,
    SUPERVISED_WO_DENOISING,
    NOISIER2FULL,
    NOISIER2FULL_UNWEIGHTED,
)
TASK_B_METHODS = (
    STANDARD_SSDU,
    NOISE2RECON_SS,
    ROBUST_SSDU,
    ROBUST_SSDU_UNWEIGHTED,
)

# Methods that apply the alpha-based correction at inference.
CORRECTED_METHODS = (
    NOISIER2FULL,
    NOISIER2FULL_UNWEIGHTED,
    ROBUST_SSDU,
    ROBUST_SSDU_UNWEIGHTED,
)

# Methods whose item must carry the ground truth (supervised targets).
NEEDS_GROUND_TRUTH = (FULLY_SUPERVISED,)

# Methods whose item must carry the measurement-noise draw so the fully
# sampled noisy target y0 + n can be formed.
NEEDS_FULL_NOISY_TARGET = (
    SUPERVISED_WO_DENOISING,
    NOISIER2FULL,
    NOISIER2FULL_UNWEIGHTED,
)

# Methods with a population-minimizer proof (all but Noise2Recon-SS).
PROOF_BACKED_METHODS = tuple(m for m in ALL_METHODS if m != NOISE2RECON_SS)
