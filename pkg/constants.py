# Scattering coefficients (m^-1) for three levels of air purity
BETA_PRESETS = {
    "clean": 2.8e-5,        # aerosol free
    "slight-haze": 1e-4,
    "haze": 1e-3,
}
DEFAULT_BETA = BETA_PRESETS["slight-haze"]

# Physics / quadrature
Y_FLOOR_M = 1.0                 # E(y) diverges at the ground; altitudes are clamped here
DEFAULT_TAU_MAX_FACTOR = 15.0   # sky paths are cut at tau_max_factor / beta
DEFAULT_QUAD_REL_TOL = 1e-8
QUAD_MIN_PANELS = 16
QUAD_MAX_DOUBLINGS = 16
DEFAULT_METERS_PER_UNIT = 1.0

# Adaptive method
DEFAULT_WINDOW = 31
DEFAULT_ROW_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_PROFILE_SIGMA = 15.0
DEFAULT_EXPOSURE_SCALE = 1.0

# City restoration (guided filter on [0, 1] luminance)
DEFAULT_GF_RADIUS = 16
DEFAULT_GF_EPSILON = 1e-3
DEFAULT_DEPTH_SCALE = 1.0

# Skyline detection
SKYLINE_MEDIAN_WIDTH = 9
SKYLINE_PREFILTER = 3
SKYLINE_MIN_CONTRAST = 0.02    # luminance step below which a column counts as all sky
SKYLINE_STAR_FOOTPRINT = 15    # rows; taller than any synthetic star patch

# Rec.709 luminance weights (linear RGB)
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)

# Synthetic skies
MIN_SIM_SIZE = 16
STAR_SIGMA_RANGE = (0.8, 1.6)
STAR_AMPLITUDE_RANGE = (0.2, 0.8)
STAR_MIN_SEPARATION = 8

# Output
DEFAULT_BIT_DEPTH = 16
SUMMARY_SCHEMA = 1
CLAMP_WARN_FRACTION = 0.01

# File exts
PNG_EXTS = (".png",)
PFM_EXTS = (".pfm",)
PILLOW_EXTS = (".jpg", ".jpeg", ".tif", ".tiff")
