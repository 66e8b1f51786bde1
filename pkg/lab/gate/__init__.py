from .models import GateConfig, Prediction, RoutedBatch
from .services import (
    calibrate_from_validation,
    calibrate_tau,
    classifier_accuracy,
    entropy,
    entropy_statistics,
    evaluate,
    evaluate_generalized,
    gated_predict,
    tau_sweep,
)
from .serializers import read_entropy_histogram, write_entropy_histogram
