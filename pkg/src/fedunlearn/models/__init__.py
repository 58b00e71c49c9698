"""Decremental / incremental models with update, forget and predict."""
from .records import Document, Observation, UserItems
from .ppr import PprDelta, PprModel, jaccard, ppr_forget, ppr_predict, ppr_update
from .qr import qr_rank_one
from .ridge import RidgeDelta, RidgeModel, ridge_forget, ridge_predict, ridge_update
from .mnb import MnbDelta, MnbModel, mnb_forget, mnb_predict, mnb_update
from .snapshot import from_snapshot, to_snapshot

__all__ = [
    "Document",
    "MnbDelta",
    "MnbModel",
    "Observation",
    "PprDelta",
    "PprModel",
    "RidgeDelta",
    "RidgeModel",
    "UserItems",
    "build_model",
    "delta_from_records",
    "from_snapshot",
    "jaccard",
    "mnb_forget",
    "mnb_predict",
    "mnb_update",
    "ppr_forget",
    "ppr_predict",
    "ppr_update",
    "qr_rank_one",
    "ridge_forget",
    "ridge_predict",
    "ridge_update",
    "to_snapshot",
]

MODEL_KINDS = {"ppr": PprModel, "ridge": RidgeModel, "mnb": MnbModel}


def build_model(kind, **params):
    """Empty model of the given kind (``ppr``, ``ridge`` or ``mnb``)."""
    try:
        cls = MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None
    return cls(**params)


def delta_from_records(kind, removed=(), added=()):
    """Sufficient-statistic difference for forgetting ``removed`` and adding ``added``."""
    delta_cls = {"ppr": PprDelta, "ridge": RidgeDelta, "mnb": MnbDelta}[kind]
    return delta_cls.from_records(removed=removed, added=added)
