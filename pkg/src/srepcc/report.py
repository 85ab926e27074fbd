"""Complexity (parameter) reports and the reference parameter ledger."""

import csv
import io

from .errors import ConfigError
from .layers import count_parameters
from .models import (
    CODING_SUBNETS, LAMBDAS, SR_SUBNETS, build_model, original_config, simplified_config, table5_config,
)

SUBNET_LABELS = {
    "analysis": "Analysis Transform",
    "synthesis": "Synthesis Transform",
    "hyper_analysis": "Hyper Analysis Transform",
    "hyper_mean": "Hyper Mean Synthesis Transform",
    "hyper_scale": "Hyper Scale Synthesis Transform",
    "sr2": "SR branch SF=2",
    "sr4": "SR branch SF=4",
}

# Published totals of the decompressed-domain U-Net SR models (SF=2, SF=4).  Their
# layer widths are unknown, so they enter the reports as constants only.
UNET_SR_PARAMS = {2: 7_253_817, 4: 7_278_905}

LEDGER = {
    "simplified.analysis": 1_194_096,
    "simplified.synthesis": 1_013_040,
    "simplified.hyper_analysis": 20_768,
    "simplified.hyper_mean": 11_056,
    "simplified.hyper_scale": 11_056,
    "simplified.per_lambda": 2_250_016,
    "original.analysis": 1_208_432,
    "original.synthesis": 1_127_728,
    "original.hyper_analysis": 1_327_360,
    "original.hyper_mean+hyper_scale": 1_409_792,
    "original.per_lambda": 5_073_312,
    "sr.sf2": 71_312,
    "sr.sf4": 171_664,
    "sr_epcc.grand_total": 12_464_960,
    "jpeg_pcc.grand_total": 39_899_282,
    "reduction_percent": 69,
    "table5.latent_only.16": 3_782_848,
    "table5.latent_and_hyper.64": 2_946_976,
    "table5.all_channels.32": 514_848,
    "table5.all_channels.16": 129_168,
}


def subnet_counts(cfg):
    specs = build_model(cfg)
    return {name: count_parameters(spec)[0] for name, spec in specs.items()}


def coding_total(counts):
    return sum(counts[k] for k in CODING_SUBNETS if k in counts)


def family_totals(n_models=len(LAMBDAS)):
    simp = subnet_counts(simplified_config())
    orig = subnet_counts(original_config())
    sr_epcc = n_models * (coding_total(simp) + simp["sr2"] + simp["sr4"])
    jpeg = n_models * coding_total(orig) + sum(UNET_SR_PARAMS.values())
    return sr_epcc, jpeg


def computed_ledger():
    simp = subnet_counts(simplified_config())
    orig = subnet_counts(original_config())
    sr_epcc, jpeg = family_totals()
    out = {f"simplified.{k}": simp[k] for k in CODING_SUBNETS if k in simp}
    out["simplified.per_lambda"] = coding_total(simp)
    for k in ("analysis", "synthesis", "hyper_analysis"):
        out[f"original.{k}"] = orig[k]
    out["original.hyper_mean+hyper_scale"] = orig["hyper_mean"] + orig["hyper_scale"]
    out["original.per_lambda"] = coding_total(orig)
    out["sr.sf2"] = simp["sr2"]
    out["sr.sf4"] = simp["sr4"]
    out["sr_epcc.grand_total"] = sr_epcc
    out["jpeg_pcc.grand_total"] = jpeg
    out["reduction_percent"] = round(100 * (1 - sr_epcc / jpeg))
    for approach, n in (("latent_only", 16), ("latent_and_hyper", 64), ("all_channels", 32), ("all_channels", 16)):
        out[f"table5.{approach}.{n}"] = coding_total(subnet_counts(table5_config(approach, n)))
    return out


def check_ledger():
    """[(key, expected, computed)] for every ledger entry."""
    got = computed_ledger()
    return [(k, v, got.get(k)) for k, v in LEDGER.items()]


def profile_config(profile):
    """``simplified`` | ``original`` | ``table5:<approach>:<N>``."""
    if profile == "simplified":
        return simplified_config()
    if profile == "original":
        return original_config()
    if profile.startswith("table5:"):
        _, approach, n = profile.split(":")
        return table5_config(approach, int(n))
    raise ConfigError(f"unknown parameter profile {profile!r}")


def subnet_table(cfg):
    """Rows (sub-network, parameters) with the per-lambda coding total."""
    counts = subnet_counts(cfg)
    rows = [(SUBNET_LABELS[k], counts[k]) for k in CODING_SUBNETS if k in counts]
    rows.append(("Coding model total (per lambda)", coding_total(counts)))
    rows += [(SUBNET_LABELS[SR_SUBNETS[sf]], counts[SR_SUBNETS[sf]]) for sf in sorted(SR_SUBNETS)]
    return rows


def complexity_table():
    """Family-level comparison in the shape of the codec complexity table."""
    simp = subnet_counts(simplified_config())
    orig = subnet_counts(original_config())
    sr_epcc, jpeg = family_totals()
    n = len(LAMBDAS)
    return [
        ("codec", "coding model per lambda", "SR SF=2", "SR SF=4", "total (5 lambdas)"),
        ("JPEG PCC", coding_total(orig), UNET_SR_PARAMS[2], UNET_SR_PARAMS[4], jpeg),
        ("SR-EPCC", coding_total(simp), n * simp["sr2"], n * simp["sr4"], sr_epcc),
        ("reduction", "", "", "", f"{100 * (1 - sr_epcc / jpeg):.1f}%"),
    ]


def simplification_table(ns=(16, 32, 64)):
    rows = [("approach", *[f"N={n}" for n in ns])]
    for approach in ("latent_only", "latent_and_hyper", "all_channels"):
        rows.append((approach, *[coding_total(subnet_counts(table5_config(approach, n))) for n in ns]))
    return rows


def to_csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def to_markdown(rows):
    head, *body = rows
    lines = ["| " + " | ".join(str(c) for c in head) + " |", "|" + "---|" * len(head)]
    lines += ["| " + " | ".join(f"{c:,}" if isinstance(c, int) else str(c) for c in r) + " |" for r in body]
    return "\n".join(lines) + "\n"
