"""Dense float64 tensors with a define-by-run gradient tape."""

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from fscil.exceptions import ContractError

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """A float64 array that can take part in reverse-mode differentiation.

    Leaves are created by the user (parameters, inputs). Every other tensor is
    produced by an operation in ``fscil.models.functional`` and, when any of its
    inputs requires a gradient, is recorded on the active tape together with a
    closure mapping the output gradient to one gradient per parent.
    """

    __slots__ = (
        "data",
        "requires_grad",
        "grad",
        "name",
        "_parents",
        "_backward",
        "_tape",
        "_tape_index",
    )

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._tape: Optional["Tape"] = None
        self._tape_index = -1

    @classmethod
    def wrap(cls, data: np.ndarray) -> "Tensor":
        """Wrap an array produced by an operation without copying it."""
        out = cls.__new__(cls)
        out.data = data if data.dtype == np.float64 else data.astype(np.float64)
        out.requires_grad = False
        out.grad = None
        out.name = None
        out._parents = ()
        out._backward = None
        out._tape = None
        out._tape_index = -1
        return out

    @classmethod
    def zeros(cls, shape: Sequence[int], requires_grad: bool = False) -> "Tensor":
        """Create a zero-filled tensor."""
        return cls(np.zeros(tuple(shape)), requires_grad=requires_grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        """Dimension sizes."""
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        """Number of dimensions."""
        return self.data.ndim

    @property
    def values(self) -> List[float]:
        """Values in row-major order."""
        return self.data.ravel().tolist()

    @property
    def is_leaf(self) -> bool:
        """True for tensors not produced by a recorded operation."""
        return self._backward is None

    def item(self) -> float:
        """Return the single value of a one-element tensor."""
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array."""
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Return a gradient-free copy."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        """Drop the accumulated gradient."""
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from this scalar tensor."""
        backward(self)

    # Operators delegate to functional so gradient rules live in one place

    def __add__(self, other: "Tensor") -> "Tensor":
        from fscil.models import functional as F

        return F.add(self, F.as_tensor(other))

    def __sub__(self, other: "Tensor") -> "Tensor":
        from fscil.models import functional as F

        return F.sub(self, F.as_tensor(other))

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from fscil.models import functional as F

        if isinstance(other, (int, float)):
            return F.scale(self, float(other))
        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from fscil.models import functional as F

        return F.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from fscil.models import functional as F

        if self.ndim == 3:
            return F.bmm(self, other)
        return F.matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f", name='{self.name}'" if self.name else ""
        return f"<Tensor(shape={self.shape}{flag}{label})>"


class Tape:
    """Ordered record of operations whose outputs require gradients.

    Nodes are appended as operations run, so the record is always in
    topological order. Clearing the tape severs every recorded node from its
    parents; leaf tensors are never recorded and survive.
    """

    def __init__(self) -> None:
        self._nodes: List[Tensor] = []

    def record(self, node: Tensor) -> None:
        """Append an operation output."""
        node._tape = self
        node._tape_index = len(self._nodes)
        self._nodes.append(node)

    def clear(self) -> None:
        """Free all recorded nodes."""
        for node in self._nodes:
            node._parents = ()
            node._backward = None
            node._tape = None
            node._tape_index = -1
        self._nodes.clear()

    @property
    def nodes(self) -> Tuple[Tensor, ...]:
        """Recorded nodes in creation order."""
        return tuple(self._nodes)

    def __len__(self) -> int:
        return len(self._nodes)


class _State(threading.local):
    """Per-thread autodiff state."""

    def __init__(self) -> None:
        self.tape = Tape()
        self.grad_enabled = True


_state = _State()


def get_tape() -> Tape:
    """Return the tape of the calling thread."""
    return _state.tape


def is_grad_enabled() -> bool:
    """Whether operations are currently recorded."""
    return _state.grad_enabled


@contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording them."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def use_tape(tape: Optional[Tape] = None) -> Iterator[Tape]:
    """Record onto a dedicated tape for the duration of the block."""
    previous = _state.tape
    _state.tape = tape if tape is not None else Tape()
    try:
        yield _state.tape
    finally:
        _state.tape = previous


def make_node(
    data: np.ndarray,
    parents: Tuple[Tensor, ...],
    backward_fn: BackwardFn,
) -> Tensor:
    """Wrap an operation result and record it when a parent needs gradients."""
    out = Tensor.wrap(data)
    if _state.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        _state.tape.record(out)
    return out


def backward(loss: Tensor) -> None:
    """Populate gradients of every tensor reachable from a scalar loss.

    Leaves accumulate into ``grad`` across calls; intermediate nodes have
    ``grad`` overwritten with the gradient of the current call.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward() called on a tensor that does not require grad")

    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return

    tape = loss._tape
    index = loss._tape_index
    if tape is None or index >= len(tape) or tape._nodes[index] is not loss:
        raise ContractError("loss was not produced through operations on a live tape")

    pending = {id(loss): seed}
    for node in reversed(tape._nodes[: index + 1]):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        node.grad = grad
        parent_grads = node._backward(grad)
        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent.is_leaf:
                parent.grad = (
                    parent_grad.copy() if parent.grad is None else parent.grad + parent_grad
                )
            else:
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad
