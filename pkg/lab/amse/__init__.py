from .models import AmseModel, EmbeddingVariant, MarginConfig, MarginMode
from .embedding import attend_channel, attend_spatial, bilinear_pool, embed
from .losses import adaptive_lambda, ams_loss, classify, logits
