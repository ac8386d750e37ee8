"""malharness: deep-learning harness feeding the malvis file interfaces."""

__version__ = "0.1.0"

from .acgan import (
    ACGAN_NOISE_DIM,
    Discriminator,
    GanSpec,
    Generator,
    acgan_train,
    discriminator_predict,
    parameter_count,
)
from .dcgan import DCGAN_NOISE_DIM, DcganGenerator, DcganSpec, dcgan_train
from .errors import HarnessError, MissingDependencyError
from .fakes import generate_fakes
from .baselines import baseline_adapter
from .resnet import resnet_finetune
