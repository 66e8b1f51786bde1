"""
Lecture/écriture des fichiers texte du jeu de données.

features:   "W H C N", then per sample "class_id flag" and one line of W·H·C reals
attributes: "n_classes A", then per class "class_id a_1 … a_A"
splits:     "seen: …", "unseen: …", "val_fraction: r"

Reals are written with repr() so that write(load(p)) reproduces p byte for byte.
"""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from dvbe_lab.exceptions import ValidationError

from .models import Domain, GzslDataset, Sample, SampleFlag, SemanticLabel, held_out_count

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _format_reals(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values, dtype=np.float64).reshape(-1))


def _parse_reals(tokens: List[str], where: str) -> np.ndarray:
    try:
        values = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}")
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{where}: non-finite value")
    return values


def _parse_ints(tokens: List[str], where: str) -> List[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}")


def _read_lines(path: PathLike) -> List[str]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]


def read_attributes(path: PathLike) -> List[SemanticLabel]:
    lines = _read_lines(path)
    if not lines:
        raise ValidationError(f"{path}: empty attributes file")
    n_classes, attr_dim = _parse_ints(lines[0].split(), f"{path} header")
    if len(lines) - 1 != n_classes:
        raise ValidationError(f"{path}: header announces {n_classes} classes, found {len(lines) - 1}")
    labels = []
    for number, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        class_id = _parse_ints(tokens[:1], f"{path}:{number}")[0]
        values = _parse_reals(tokens[1:], f"{path}:{number}")
        if values.size != attr_dim:
            raise ValidationError(
                f"{path}:{number}: class {class_id} has {values.size} attributes, expected {attr_dim}"
            )
        labels.append(SemanticLabel(class_id=class_id, attributes=values))
    return labels


def read_splits(path: PathLike) -> Tuple[List[int], List[int], float]:
    fields: Dict[str, List[str]] = {}
    for line in _read_lines(path):
        key, _, rest = line.partition(":")
        fields[key.strip()] = rest.split()
    for key in ("seen", "unseen"):
        if key not in fields:
            raise ValidationError(f"{path}: missing '{key}:' line")
    seen = _parse_ints(fields["seen"], f"{path} seen")
    unseen = _parse_ints(fields["unseen"], f"{path} unseen")
    val_fraction = float(_parse_reals(fields.get("val_fraction", ["0.2"]), f"{path} val_fraction")[0])
    if not 0.0 <= val_fraction < 1.0:
        raise ValidationError(f"{path}: val_fraction must be in [0, 1), got {val_fraction}")
    overlap = sorted(set(seen) & set(unseen))
    if overlap:
        raise ValidationError(f"{path}: classes {overlap} listed as both seen and unseen")
    return seen, unseen, val_fraction


def read_features(path: PathLike) -> List[Tuple[int, SampleFlag, np.ndarray]]:
    lines = _read_lines(path)
    if not lines:
        raise ValidationError(f"{path}: empty features file")
    width, height, channels, n_samples = _parse_ints(lines[0].split(), f"{path} header")
    if len(lines) - 1 != 2 * n_samples:
        raise ValidationError(f"{path}: header announces {n_samples} samples, found {(len(lines) - 1) / 2:g}")
    samples = []
    for index in range(n_samples):
        number = 2 + 2 * index
        head = _parse_ints(lines[number - 1].split(), f"{path}:{number}")
        if len(head) != 2:
            raise ValidationError(f"{path}:{number}: expected 'class_id domain_flag'")
        try:
            flag = SampleFlag(head[1])
        except ValueError:
            raise ValidationError(f"{path}:{number}: unknown domain flag {head[1]}")
        values = _parse_reals(lines[number].split(), f"{path}:{number + 1}")
        if values.size != width * height * channels:
            raise ValidationError(f"{path}:{number + 1}: expected {width * height * channels} reals, got {values.size}")
        samples.append((head[0], flag, values.reshape(width, height, channels)))
    return samples


def load_dataset(features_path: PathLike, attributes_path: PathLike, splits_path: PathLike) -> GzslDataset:
    """Charge les trois fichiers et construit un GzslDataset validé."""
    semantics = read_attributes(attributes_path)
    seen, unseen, val_fraction = read_splits(splits_path)
    seen_set, unseen_set = set(seen), set(unseen)

    trainval = defaultdict(list)
    test_seen = defaultdict(list)
    test_unseen = defaultdict(list)
    for class_id, flag, feature in read_features(features_path):
        expected_unseen = flag is SampleFlag.UNSEEN
        if class_id not in seen_set | unseen_set:
            raise ValidationError(f"Sample of class {class_id} is in neither class set")
        if expected_unseen != (class_id in unseen_set):
            raise ValidationError(f"Sample of class {class_id} has domain flag {int(flag)} that contradicts the splits")
        if flag is SampleFlag.SEEN_TRAINVAL:
            trainval[class_id].append(Sample(feature, class_id, Domain.SEEN))
        elif flag is SampleFlag.SEEN_TEST:
            test_seen[class_id].append(Sample(feature, class_id, Domain.SEEN))
        else:
            test_unseen[class_id].append(Sample(feature, class_id, Domain.UNSEEN))

    train, val = [], []
    for class_id in sorted(trainval):
        group = trainval[class_id]
        n_val = held_out_count(len(group), val_fraction)
        train.extend(group[:len(group) - n_val])
        val.extend(group[len(group) - n_val:])

    dataset = GzslDataset(
        train_seen=train,
        val_seen=val,
        test_seen=[s for c in sorted(test_seen) for s in test_seen[c]],
        test_unseen=[s for c in sorted(test_unseen) for s in test_unseen[c]],
        semantics=sorted(semantics, key=lambda label: label.class_id),
        seen_classes=seen_set,
        unseen_classes=unseen_set,
        val_fraction=val_fraction,
    )
    logger.info(
        f"Loaded dataset: {len(seen_set)} seen / {len(unseen_set)} unseen classes, "
        f"{len(dataset.train_seen)} train, {len(dataset.val_seen)} val, "
        f"{len(dataset.test_seen)} test seen, {len(dataset.test_unseen)} test unseen"
    )
    return dataset


def load_dataset_dir(directory: PathLike, files: Dict[str, str]) -> GzslDataset:
    directory = Path(directory)
    return load_dataset(directory / files["features"], directory / files["attributes"], directory / files["splits"])


def _grouped(samples) -> List[Sample]:
    groups = defaultdict(list)
    for sample in samples:
        groups[sample.label].append(sample)
    return [s for c in sorted(groups) for s in groups[c]]


def write_dataset(dataset: GzslDataset, features_path: PathLike, attributes_path: PathLike, splits_path: PathLike):
    """Écrit la forme canonique : trainval par classe (train puis val), test vu, puis non vu."""
    train_groups = defaultdict(list)
    for sample in dataset.train_seen:
        train_groups[sample.label].append(sample)
    val_groups = defaultdict(list)
    for sample in dataset.val_seen:
        val_groups[sample.label].append(sample)

    records = []
    for class_id in sorted(set(train_groups) | set(val_groups)):
        group = train_groups[class_id] + val_groups[class_id]
        if held_out_count(len(group), dataset.val_fraction) != len(val_groups[class_id]):
            logger.warning(f"Class {class_id}: val split does not follow val_fraction and will not survive reload")
        records.extend((s, SampleFlag.SEEN_TRAINVAL) for s in group)
    records.extend((s, SampleFlag.SEEN_TEST) for s in _grouped(dataset.test_seen))
    records.extend((s, SampleFlag.UNSEEN) for s in _grouped(dataset.test_unseen))

    width, height, channels = dataset.feature_dims
    with open(features_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{width} {height} {channels} {len(records)}\n")
        for sample, flag in records:
            f.write(f"{sample.label} {int(flag)}\n")
            f.write(_format_reals(sample.feature) + "\n")

    with open(attributes_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{len(dataset.semantics)} {dataset.attr_dim}\n")
        for label in sorted(dataset.semantics, key=lambda item: item.class_id):
            f.write(f"{label.class_id} {_format_reals(label.attributes)}\n")

    with open(splits_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("seen: " + " ".join(str(c) for c in dataset.sorted_seen) + "\n")
        f.write("unseen: " + " ".join(str(c) for c in dataset.sorted_unseen) + "\n")
        f.write(f"val_fraction: {dataset.val_fraction!r}\n")

    logger.info(f"Wrote dataset with {len(records)} samples to {Path(features_path).parent}")


def write_dataset_dir(dataset: GzslDataset, directory: PathLike, files: Dict[str, str]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, directory / files["features"], directory / files["attributes"], directory / files["splits"])
    return directory
