from .models import DvbeModels, EpochRecord, TrainConfig, TrainLog
from .objective import LossBreakdown, overall_loss
from .optim import SGD
from .tasks import fix_architecture, init_models, run_pipeline, train_stage1, train_stage2
from .ablation import AblationRow, run_ablation
from .serializers import (
    load_checkpoint,
    read_ablation,
    read_trainlog,
    save_checkpoint,
    write_ablation,
    write_trainlog,
)
