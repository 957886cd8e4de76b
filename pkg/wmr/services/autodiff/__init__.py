from wmr.services.autodiff.tensor import (
    Tape,
    Tensor,
    absolute,
    active_tape,
    add,
    as_tensor,
    backward,
    clamp,
    concat,
    default_dtype,
    elu,
    exp,
    forward_primitive,
    log,
    matmul,
    minimum,
    mul,
    neg,
    precision,
    reduce_mean,
    reduce_sum,
    sigmoid,
    slice_cols,
    square,
    stop_gradient,
    sub,
    tanh,
)
from wmr.services.autodiff.nn import LSTM, EluMLP, Linear, LstmState, LstmWeights, Module, lstm_cell
from wmr.services.autodiff.optim import AdamState, adam_step, clip_grad_norm, global_norm
