"""Parameter accounting for the policy networks."""

from __future__ import annotations

from dataclasses import dataclass

from .spec import PolicySpec


@dataclass
class SummaryRow:
    name: str
    shape: tuple
    count: int


def model_summary(model) -> tuple[list[SummaryRow], int]:
    """Per-parameter rows and the total count of a built model."""
    rows = [SummaryRow(n, tuple(p.shape), int(p.size)) for n, p in model.parameters().items()]
    return rows, sum(r.count for r in rows)


def group_counts(model) -> dict[str, int]:
    """Counts aggregated by top-level component (``encoder``, ``table`` ...)."""
    out: dict[str, int] = {}
    for name, p in model.parameters().items():
        key = name.split(".")[0]
        out[key] = out.get(key, 0) + int(p.size)
    return out


def format_summary(model) -> str:
    lines = [f"{'component':<20}{'parameters':>12}"]
    for k, v in group_counts(model).items():
        lines.append(f"{k:<20}{v:>12,}")
    total = sum(group_counts(model).values())
    lines.append(f"{'total':<20}{total:>12,}")
    return "\n".join(lines)


def _attention(d: int) -> int:
    return d * 3 * d + 3 * d + d * d + d


def _ff(d: int, h: int) -> int:
    return d * h + h + h * d + d


def analytic_parameter_count(spec: PolicySpec, n_words: int) -> dict[str, int]:
    """Closed-form count of a :class:`MuscleTransformer` built from ``spec``."""
    d, h = spec.embedding_dim, spec.feedforward_dim
    enc_layer = 2 * 2 * d + _attention(d) + _ff(d, h)
    dec_layer = 3 * 2 * d + 2 * _attention(d) + _ff(d, h)
    counts = {
        "table": n_words * d,
        "tokenizer": spec.tokenizer_inputs * d + d,
        "encoder": spec.encoder_layers * enc_layer + 2 * d,
        "action_decoder": spec.decoder_layers * dec_layer + d,
        "value_decoder": spec.decoder_layers * dec_layer + d,
        "action_net": d + 1,
        "value_net": d + 1,
        "log_std_net": d + 1,
        "log_sigma": 1,
    }
    counts["total"] = sum(counts.values())
    return counts


def mlp_parameter_count(spec) -> int:
    n_in = spec.flat_dim + spec.task_embedding_dim
    hid = spec.hidden

    def trunk(n_out):
        return n_in * hid + hid + hid * hid + hid + hid * n_out + n_out

    return spec.n_tasks * spec.task_embedding_dim + trunk(spec.max_actuators) + trunk(1) + spec.max_actuators
