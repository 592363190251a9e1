"""Gender-privacy face perturbation with ensembles of adversarially
trained autoencoders, plus the evaluation and selection harness."""

from .core import (AttributeLabels, DatasetManifest, aggregate_race,
                   group_of, labels_of, load_image, load_manifest,
                   save_image, save_manifest)
from .ensemble import (EnsembleSpec, entropy_diversity, error_report,
                       load_ensemble, resample_e2, resample_e3,
                       train_ensemble)
from .evaluation import augment_eval, eval_gender, eval_matching, roc
from .losses import (LossBreakdown, LossWeights, loss_gender, loss_match,
                     loss_reconstruction)
from .models import Autoencoder, FaceMatcher, GenderClassifier, perturb
from .prototypes import (PrototypeSet, compute_prototypes,
                         opposite_gender_prototype, same_gender_prototype)
from .selection import select_best, select_random
from .synthetic import SyntheticSpec, generate
from .training import TrainState, gradient_check, train_san, train_step

__version__ = "0.1.0"
