"""
Training service: MAE objective, parameter initialization, adaptive-moment
optimizer, the mini-batch training loop and evaluation.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.logging_config import get_logger
from config.settings import POS_EMB_SCALE
from models.configs import ModelConfig, TrainConfig
from models.params import (
    AttentionParams,
    BlockParams,
    EdgeWeightParams,
    GCParams,
    HeadParams,
    ModelParams,
    StemParams,
)
from models.samples import Dataset
from models.train_state import EpochRecord, TrainState
from numerics import ops
from numerics.tensor import ComputationTape, Tensor, constant, parameter
from processors.network import forward
from utils.errors import ConfigError, DimensionError, DivergenceError

logger = get_logger(__name__)

EpochCallback = Callable[[EpochRecord], None]

# Tensors initialized to zero instead of drawn
ZERO_INIT_SUFFIXES = ("edge.b", "head.b_h1", "head.b_h2")


def mae(preds: Sequence[float], labels: Sequence[float]) -> float:
    """
    Mean absolute error (1/m)·Σ|y_i - ŷ_i|.

    Raises:
        ValueError: lengths differ or are zero
    """
    if len(preds) != len(labels):
        raise ValueError(f"{len(preds)} predictions for {len(labels)} labels")
    if len(preds) == 0:
        raise ValueError("mae needs at least one prediction")
    return float(np.mean(np.abs(np.asarray(labels, dtype=np.float64) - np.asarray(preds, dtype=np.float64))))


def _zeros(*shape: int) -> Tensor:
    return parameter(np.zeros(shape))


def _block_shell(config: ModelConfig) -> BlockParams:
    dim = config.feature_dim
    chunk = dim // config.gc_heads
    head_dim = dim // config.attn_heads
    return BlockParams(
        w_in=_zeros(dim, dim),
        w_out=_zeros(dim, dim),
        gc=GCParams(
            w_r1=_zeros(dim, dim),
            w_01=_zeros(dim, dim),
            w_r2=_zeros(dim, dim),
            w_02=_zeros(dim, dim),
            update_heads=[_zeros(chunk, chunk) for _ in range(config.gc_heads)],
        ),
        edge=EdgeWeightParams(a=_zeros(2 * dim), b=_zeros(1)),
        attn=AttentionParams(
            w_q=[_zeros(dim, head_dim) for _ in range(config.attn_heads)],
            w_k=[_zeros(dim, head_dim) for _ in range(config.attn_heads)],
            w_v=[_zeros(dim, head_dim) for _ in range(config.attn_heads)],
        ),
        ffn_w1=_zeros(dim, 4 * dim),
        ffn_w2=_zeros(4 * dim, dim),
    )


def _glorot_bound(shape: Tuple[int, ...]) -> float:
    # A 1-D tensor is a column vector: fan_in = length, fan_out = 1
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """
    Deterministic parameters for ``config``.

    Weights are drawn uniform in ±sqrt(6/(fan_in+fan_out)), position
    embeddings uniform in ±0.02 and biases start at zero. Draws follow
    ``named_tensors`` order from one generator seeded with ``seed``.
    """
    dim = config.feature_dim
    params = ModelParams(
        stem=StemParams(
            patch_kernel=_zeros(config.patch_dim, dim),
            pointwise_kernel=_zeros(dim, dim),
        ),
        pos_emb=_zeros(config.node_count, dim),
        blocks=[_block_shell(config) for _ in range(config.block_count)],
        downsample=[_zeros(4 * dim, dim) for flag in config.downsample_flags() if flag],
        head=HeadParams(
            k_h1=_zeros(dim, dim),
            b_h1=_zeros(1, dim),
            k_h2=_zeros(dim, 1),
            b_h2=_zeros(1, 1),
        ),
    )

    rng = np.random.default_rng(seed)
    for name, tensor in params.named_tensors():
        tensor.name = name
        if name.endswith(ZERO_INIT_SUFFIXES):
            continue
        bound = POS_EMB_SCALE if name == "pos_emb" else _glorot_bound(tensor.shape)
        tensor.data = rng.uniform(-bound, bound, size=tensor.shape)
    return params


def optimizer_step(
    params: ModelParams,
    grads: Dict[str, np.ndarray],
    state: TrainState,
    config: TrainConfig,
) -> Tuple[ModelParams, TrainState]:
    """
    One adaptive-moment update of every parameter.

    Raises:
        DivergenceError: a gradient is not finite (names the parameter)
        DimensionError: a gradient does not match its parameter's shape
    """
    named = list(params.named_tensors())
    for name, tensor in named:
        grad = grads.get(name)
        if grad is None or grad.shape != tensor.shape:
            raise DimensionError(
                f"gradient for {name} has shape {None if grad is None else grad.shape}, expected {tensor.shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise DivergenceError("non-finite gradient", step=state.step + 1, parameter=name)

    state.step += 1
    correction1 = 1.0 - config.beta1 ** state.step
    correction2 = 1.0 - config.beta2 ** state.step
    for name, tensor in named:
        grad = grads[name]
        m = config.beta1 * state.first_moment[name] + (1.0 - config.beta1) * grad
        v = config.beta2 * state.second_moment[name] + (1.0 - config.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data = tensor.data - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return params, state


def check_image_shape(dataset: Dataset, config: ModelConfig) -> None:
    """Raise DimensionError when the dataset's images do not fit the model input."""
    expected = (config.image_height, config.image_width, config.channels)
    if dataset.image_shape is not None and dataset.image_shape != expected:
        raise DimensionError(f"images are {dataset.image_shape}, model expects {expected}")


def split_indices(count: int, config: TrainConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded (train, validation) index split; validation takes round(val_fraction · n)."""
    order = rng.permutation(count)
    val_count = int(round(config.val_fraction * count))
    return order[val_count:], order[:val_count]


def sample_loss(image: Tensor, label: float, params: ModelParams, config: ModelConfig, weight: float = 1.0) -> Tensor:
    """weight · |ŷ - y| as a one-element tensor."""
    prediction = forward(image, params, config)
    return ops.scale(ops.absolute(ops.sub(prediction, constant([label]))), weight)


def train(
    dataset: Dataset,
    mconfig: ModelConfig,
    tconfig: TrainConfig,
    on_epoch: Optional[EpochCallback] = None,
) -> Tuple[ModelParams, TrainState]:
    """
    Mini-batch training with per-epoch train / validation MAE.

    Args:
        dataset: labelled images matching the model input size
        mconfig: architecture; ``mconfig.seed`` seeds initialization
        tconfig: optimizer and loop settings; ``tconfig.seed`` seeds split and shuffling
        on_epoch: called with each EpochRecord as soon as it is recorded

    Returns:
        (final params, final TrainState)

    Raises:
        ConfigError: empty dataset or empty training split
        DivergenceError: non-finite loss or gradient
    """
    if len(dataset) == 0:
        raise ConfigError("cannot train on an empty dataset")
    check_image_shape(dataset, mconfig)

    rng = np.random.default_rng(tconfig.seed)
    train_idx, val_idx = split_indices(len(dataset), tconfig, rng)
    if train_idx.size == 0:
        raise ConfigError(f"validation fraction {tconfig.val_fraction} leaves no training samples")
    val_set = dataset.subset(val_idx) if val_idx.size else None

    params = init_params(mconfig, mconfig.seed)
    state = TrainState.initial(params, rng)
    logger.info(
        f"Training on {train_idx.size} samples ({val_idx.size} held out) "
        f"for {tconfig.epochs} epochs, batch size {tconfig.batch_size}"
    )

    for epoch in range(1, tconfig.epochs + 1):
        order = rng.permutation(train_idx)
        abs_errors: List[float] = []
        for start in range(0, order.size, tconfig.batch_size):
            batch = order[start:start + tconfig.batch_size]
            params.zero_grad()
            for index in batch:
                sample = dataset.samples[int(index)]
                with ComputationTape() as tape:
                    loss = sample_loss(sample.image, sample.label, params, mconfig, 1.0 / batch.size)
                if not loss.is_finite():
                    raise DivergenceError("non-finite loss", epoch=epoch, step=state.step + 1)
                tape.backward(loss)
                abs_errors.append(loss.item() * batch.size)
            try:
                optimizer_step(params, params.gradients(), state, tconfig)
            except DivergenceError as e:
                raise DivergenceError("non-finite gradient", epoch=epoch, step=e.step, parameter=e.parameter)
            logger.debug(
                f"Step {state.step}: batch loss {np.mean(abs_errors[-batch.size:]):.6f}",
                extra={"epoch": epoch, "step": state.step},
            )

        params.zero_grad()
        record = EpochRecord(
            epoch=epoch,
            train_mae=float(np.mean(abs_errors)),
            val_mae=evaluate(val_set, params, mconfig) if val_set is not None else None,
        )
        state.record_epoch(record)
        state.rng_state = dict(rng.bit_generator.state)
        logger.info(f"Epoch {record.log_line()}", extra={"epoch": epoch, "step": state.step})
        if on_epoch is not None:
            on_epoch(record)

    return params, state


def predictions(dataset: Dataset, params: ModelParams, config: ModelConfig) -> List[float]:
    """Forward every sample without recording gradients."""
    return [forward(sample.image, params, config).item() for sample in dataset.samples]


def evaluate(dataset: Dataset, params: ModelParams, config: ModelConfig) -> float:
    """
    MAE of the model over ``dataset``; parameters are not touched.

    Raises:
        ValueError: empty dataset
    """
    if dataset is None or len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    check_image_shape(dataset, config)
    return mae(predictions(dataset, params, config), dataset.labels)
