"""Memory subsystem: shared dataclasses and everything that touches disk.

Public API re-exported for convenience::

    from memory import (
        # Shared types
        StreamManifest, StreamBundle, Frame, FlowField, SupervisionEvent,
        AttentionState, EvalRecord, LapSpan,
        # Stream bundles
        read_bundle, write_bundle, iter_frames,
        # Trajectories
        read_foa, write_foa,
        # Open-set templates
        TemplateStore, TemplateEntry, Prediction,
    )

Checkpoints, run settings and artifacts pull in the numerical services
and are imported from their own modules.
"""

# ── Shared types ─────────────────────────────────────────
from memory.models import (                # noqa: F401
    AttentionState,
    EvalRecord,
    FlowField,
    Frame,
    LapSpan,
    StreamBundle,
    StreamManifest,
    SupervisionEvent,
)

# ── Stream bundles ───────────────────────────────────────
from memory.bundle import (                # noqa: F401
    iter_frames,
    read_bundle,
    write_bundle,
)

# ── Trajectories ─────────────────────────────────────────
from memory.foa_file import (              # noqa: F401
    read_foa,
    write_foa,
)

# ── Open-set templates ───────────────────────────────────
from memory.template_store import (        # noqa: F401
    Prediction,
    TemplateEntry,
    TemplateStore,
    refresh_templates,
)
