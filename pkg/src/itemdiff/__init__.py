"""Item difficulty estimation from item content.

Two estimation routes over a shared item pool: a direct LLM difficulty
rating calibrated per grade onto the Rasch scale, and LLM-extracted item
features feeding from-scratch random forest / gradient boosting regressors.
"""

__version__ = "0.1.0"

MODEL_FORMAT_VERSION = 1
MANIFEST_FORMAT_VERSION = 1
