from .base import *

# lr above the source value: a few hundred samples and tens of epochs
# need larger steps to move the classifier at all
TRAIN = {
    **TRAIN,
    "lr": 0.05,
}
