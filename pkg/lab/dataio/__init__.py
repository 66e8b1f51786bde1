from .models import (
    Batch,
    Domain,
    GzslDataset,
    Sample,
    SampleFlag,
    SemanticLabel,
    SynthConfig,
    attribute_matrix,
    validate_dataset,
)
from .serializers import load_dataset, load_dataset_dir, write_dataset, write_dataset_dir
from .synth import class_means, synth_gzsl
