"""Protocol files: parsing, strict validation, and built-in templates.

A protocol is a JSON document naming the model, initial state, pulse list,
per-interval delays, phase signature, readout, engine choice, and transform
directives.  Sites are 1-based in files (matching the usual ion numbering)
and 0-based inside the package.  Unknown fields are rejected outright; every
semantic invariant carries a named diagnostic code so failures point at the
offending field.
"""

from __future__ import annotations

import copy
import hashlib
import importlib.resources
import json
from dataclasses import dataclass, field

import jsonschema

from .engine import FixedDelay, ScanDelay
from .models import (
    BathSpec,
    IsingChainParams,
    PhononChainParams,
)
from .pathways import PhaseSignature
from .pulses import (
    MODE_PHONON,
    MODE_SPIN,
    Interaction,
    generic_interaction,
    lower_only,
    raise_only,
    spin_pi2,
    weak_displacement,
)


@dataclass(frozen=True)
class Diagnostic:
    path: str
    code: str
    message: str

    def __str__(self):
        return f"{self.path}: [{self.code}] {self.message}"


class ProtocolError(ValueError):
    """Validation failure carrying one diagnostic per offending field."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__(
            "invalid protocol:\n" + "\n".join(f"  {d}" for d in self.diagnostics)
        )


def _schema():
    ref = importlib.resources.files("ionspec") / "schema" / "protocol.schema.json"
    return json.loads(ref.read_text())


_SCHEMA = None


def schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        _SCHEMA = _schema()
    return _SCHEMA


_PULSE_FIELDS = {
    "spin-pi2": {"kind", "site", "phase"},
    "displacement": {"kind", "site", "phase", "epsilon"},
    "raise": {"kind", "site", "phase", "beta"},
    "lower": {"kind", "site", "phase", "gamma"},
    "generic": {"kind", "site", "phase", "alpha", "beta", "gamma", "mode",
                "linearized", "coeffs"},
}

_PHONON_FIELDS = {"kind", "ions", "beta0", "anharmonicity", "cutoff", "baths"}
_SPIN_FIELDS = {"kind", "spins", "j0", "exponent", "field"}


@dataclass(frozen=True)
class ProtocolSpec:
    """A fully validated measurement protocol."""

    name: str
    units: str
    model_kind: str
    model_params: object
    initial: object  # "ground" | "steady-state" | tuple of occupations
    interactions: tuple[Interaction, ...]
    delays: tuple
    signature: PhaseSignature
    readout_kind: str
    readout_site: int  # 0-based
    method: str
    transform: dict
    document: dict = field(repr=False)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.document)

    def to_json(self) -> str:
        return json.dumps(self.document, indent=2, sort_keys=True) + "\n"

    @property
    def protocol_hash(self) -> str:
        canonical = json.dumps(self.document, sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @property
    def scanned_axes(self) -> tuple[str, ...]:
        return tuple(f"t{k + 1}" for k, d in enumerate(self.delays)
                     if isinstance(d, ScanDelay))

    @property
    def n_sites(self) -> int:
        if self.model_kind == "phonon-chain":
            return self.model_params.n_ions
        return self.model_params.n_spins


def _site_ok(site, n_sites) -> bool:
    return 1 <= site <= n_sites


def _build_model(doc, diag):
    model = doc["model"]
    kind = model.get("kind")
    if kind == "phonon-chain":
        unknown = set(model) - _PHONON_FIELDS
        for f in sorted(unknown):
            diag.append(Diagnostic(f"model.{f}", "unknown-field",
                                   "field not allowed for a phonon chain"))
        missing = {"ions", "beta0"} - set(model)
        for f in sorted(missing):
            diag.append(Diagnostic(f"model.{f}", "missing-field",
                                   "required for a phonon chain"))
        if unknown or missing:
            return None
        cutoff = model.get("cutoff", {})
        try:
            params = PhononChainParams(
                n_ions=model["ions"],
                beta0=model["beta0"],
                anharmonicity=model.get("anharmonicity", 0.0),
                local_dim=cutoff.get("local_dim", 4),
                total_cap=cutoff.get("total_cap", 4),
                baths=tuple(
                    BathSpec(b["site"] - 1, b["nbar"], b["rate"])
                    for b in model.get("baths", ())
                    if _site_ok(b["site"], model["ions"])
                ),
            )
        except ValueError as exc:
            diag.append(Diagnostic("model", "model-params", str(exc)))
            return None
        for i, b in enumerate(model.get("baths", ())):
            if not _site_ok(b["site"], model["ions"]):
                diag.append(Diagnostic(f"model.baths.{i}.site", "site-range",
                                       f"site {b['site']} outside 1..{model['ions']}"))
        return params
    if kind == "spin-chain":
        unknown = set(model) - _SPIN_FIELDS
        for f in sorted(unknown):
            diag.append(Diagnostic(f"model.{f}", "unknown-field",
                                   "field not allowed for a spin chain"))
        if "spins" not in model:
            diag.append(Diagnostic("model.spins", "missing-field",
                                   "required for a spin chain"))
        if unknown or "spins" not in model:
            return None
        try:
            return IsingChainParams(
                n_spins=model["spins"],
                j0=model.get("j0", 1.0),
                power_exponent=model.get("exponent", 1.0),
                field=model.get("field", 0.0),
            )
        except ValueError as exc:
            diag.append(Diagnostic("model", "model-params", str(exc)))
            return None
    diag.append(Diagnostic("model.kind", "model-kind", f"unknown kind {kind!r}"))
    return None


def _build_pulse(i, p, model_kind, n_sites, diag) -> Interaction | None:
    kind = p.get("kind")
    allowed = _PULSE_FIELDS.get(kind)
    path = f"pulses.{i}"
    if allowed is None:
        diag.append(Diagnostic(f"{path}.kind", "pulse-kind",
                               f"unknown pulse kind {kind!r}"))
        return None
    for f in sorted(set(p) - allowed):
        diag.append(Diagnostic(f"{path}.{f}", "unknown-field",
                               f"field not allowed for a {kind!r} pulse"))
    if "site" not in p:
        diag.append(Diagnostic(f"{path}.site", "missing-field", "pulse needs a site"))
        return None
    sites = p["site"] if isinstance(p["site"], list) else [p["site"]]
    bad = [s for s in sites if not _site_ok(s, n_sites)]
    if bad:
        diag.append(Diagnostic(f"{path}.site", "site-range",
                               f"site(s) {bad} outside 1..{n_sites}"))
        return None
    if len(sites) > 1 and kind != "generic":
        diag.append(Diagnostic(f"{path}.site", "multi-site",
                               "only generic pulses may address several sites"))
        return None
    sites0 = [s - 1 for s in sites]
    phase = p["phase"]
    spin_kinds = {"spin-pi2"}
    phonon_kinds = {"displacement", "raise", "lower"}
    if kind in spin_kinds and model_kind != "spin-chain":
        diag.append(Diagnostic(f"{path}.kind", "pulse-model-mismatch",
                               f"{kind!r} pulses need a spin chain"))
        return None
    if kind in phonon_kinds and model_kind != "phonon-chain":
        diag.append(Diagnostic(f"{path}.kind", "pulse-model-mismatch",
                               f"{kind!r} pulses need a phonon chain"))
        return None
    try:
        if kind == "spin-pi2":
            return spin_pi2(sites0[0], phase)
        if kind == "displacement":
            if "epsilon" not in p:
                diag.append(Diagnostic(f"{path}.epsilon", "missing-field",
                                       "displacement needs an amplitude"))
                return None
            return weak_displacement(sites0[0], p["epsilon"], phase)
        if kind == "raise":
            return raise_only(sites0[0], phase, **({"beta": p["beta"]} if "beta" in p else {}))
        if kind == "lower":
            return lower_only(sites0[0], phase, **({"gamma": p["gamma"]} if "gamma" in p else {}))
        mode = p.get("mode",
                     MODE_SPIN if model_kind == "spin-chain" else MODE_PHONON)
        expected = MODE_SPIN if model_kind == "spin-chain" else MODE_PHONON
        if mode != expected:
            diag.append(Diagnostic(f"{path}.mode", "pulse-model-mismatch",
                                   f"mode {mode!r} does not match a {model_kind}"))
            return None
        coeffs = p.get("coeffs")
        if coeffs is not None:
            coeffs = [c if isinstance(c, (int, float)) else complex(c[0], c[1])
                      for c in coeffs]
            if len(coeffs) != len(sites0):
                diag.append(Diagnostic(f"{path}.coeffs", "coeffs-length",
                                       "one coefficient per addressed site"))
                return None
        return generic_interaction(
            sites0 if len(sites0) > 1 else sites0[0],
            p.get("alpha", 0.0), p.get("beta", 0.0), p.get("gamma", 0.0),
            phase, mode, linearized=p.get("linearized", False), coeffs=coeffs,
        )
    except ValueError as exc:
        diag.append(Diagnostic(path, "pulse-params", str(exc)))
        return None


def parse_protocol(text: str | dict) -> ProtocolSpec:
    """Parse and validate a protocol document (JSON text or dict).

    Raises :class:`ProtocolError` carrying all collected diagnostics.
    """
    if isinstance(text, str):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ProtocolError([Diagnostic("$", "json-syntax", str(exc))]) from exc
    else:
        doc = copy.deepcopy(text)

    validator = jsonschema.Draft202012Validator(schema())
    schema_errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
    if schema_errors:
        raise ProtocolError([
            Diagnostic(".".join(str(p) for p in e.path) or "$", "schema", e.message)
            for e in schema_errors
        ])

    diag: list[Diagnostic] = []
    model_params = _build_model(doc, diag)
    model_kind = doc["model"].get("kind")
    n_sites = 0
    if model_params is not None:
        n_sites = (model_params.n_ions if model_kind == "phonon-chain"
                   else model_params.n_spins)

    pulses = []
    for i, p in enumerate(doc["pulses"]):
        v = _build_pulse(i, p, model_kind, n_sites, diag)
        if v is not None:
            pulses.append(v)

    if len(doc["delays"]) != len(doc["pulses"]):
        diag.append(Diagnostic(
            "delays", "delay-count",
            f"{len(doc['delays'])} delays for {len(doc['pulses'])} pulses "
            "(the last delay precedes the readout)"))
    delays = []
    for i, d in enumerate(doc["delays"]):
        try:
            if "fixed" in d:
                delays.append(FixedDelay(float(d["fixed"])))
            else:
                s = d["scan"]
                delays.append(ScanDelay(float(s["start"]), float(s["stop"]),
                                        int(s["points"])))
        except ValueError as exc:
            diag.append(Diagnostic(f"delays.{i}", "delay-params", str(exc)))

    signature = None
    sig_doc = {k: int(v) for k, v in doc["signature"].items()}
    if sum(sig_doc.values()) != 0:
        diag.append(Diagnostic("signature", "signature-sum",
                               "signature coefficients must sum to zero"))
    else:
        signature = PhaseSignature(sig_doc)
        bound = {v.phase_var for v in pulses}
        if len(pulses) == len(doc["pulses"]) and bound != set(sig_doc):
            diag.append(Diagnostic(
                "signature", "signature-binding",
                f"signature variables {sorted(sig_doc)} do not match pulse "
                f"phase variables {sorted(bound)}"))

    readout = doc["readout"]
    if model_params is not None and not _site_ok(readout["site"], n_sites):
        diag.append(Diagnostic("readout.site", "site-range",
                               f"site {readout['site']} outside 1..{n_sites}"))
    if readout["kind"] in ("motional-pi", "number") and model_kind == "spin-chain":
        diag.append(Diagnostic("readout.kind", "readout-model-mismatch",
                               "motional observables need a phonon chain"))
    if readout["kind"] == "sigma-z" and model_kind == "phonon-chain":
        diag.append(Diagnostic("readout.kind", "readout-model-mismatch",
                               "sigma-z readout needs a spin chain"))

    initial = doc["initial"]
    if initial == "steady-state":
        if model_kind == "spin-chain" or (
                model_params is not None and model_kind == "phonon-chain"
                and not model_params.baths):
            diag.append(Diagnostic("initial", "steady-state-needs-bath",
                                   "a steady-state initial requires at least one bath"))
    elif isinstance(initial, dict):
        occ = tuple(int(c) for c in initial["occupations"])
        if model_params is not None:
            if len(occ) != n_sites:
                diag.append(Diagnostic("initial.occupations", "initial-occupations",
                                       f"need {n_sites} digits, got {len(occ)}"))
            else:
                layout = model_params.layout()
                if any(o >= d for o, d in zip(occ, layout.site_dims)) or \
                        not layout.contains(occ):
                    diag.append(Diagnostic(
                        "initial.occupations", "initial-occupations",
                        f"occupations {occ} exceed the local cutoff or the "
                        "total excitation cap"))
        initial = occ

    transform = dict(doc.get("transform", {}))
    axis_names = {f"t{k + 1}" for k, d in enumerate(delays)
                  if isinstance(d, ScanDelay)}
    for name in transform.get("axes", []):
        if name not in axis_names:
            diag.append(Diagnostic("transform.axes", "transform-axis",
                                   f"{name!r} is not a scanned delay axis"))
    apod = transform.get("apodization")
    if isinstance(apod, dict):
        for name in apod:
            if name not in axis_names:
                diag.append(Diagnostic("transform.apodization", "transform-axis",
                                       f"{name!r} is not a scanned delay axis"))

    if diag:
        raise ProtocolError(diag)

    return ProtocolSpec(
        name=doc.get("name", ""),
        units=doc["units"],
        model_kind=model_kind,
        model_params=model_params,
        initial=initial,
        interactions=tuple(pulses),
        delays=tuple(delays),
        signature=signature,
        readout_kind=readout["kind"],
        readout_site=readout["site"] - 1,
        method=doc.get("method", "direct"),
        transform=transform,
        document=doc,
    )


def serialize_protocol(spec: ProtocolSpec) -> str:
    return spec.to_json()


def set_by_path(doc: dict, dotted: str, value):
    """Override a nested field through a dotted path (list indices numeric)."""
    parts = dotted.split(".")
    node = doc
    for p in parts[:-1]:
        node = node[int(p)] if isinstance(node, list) else node.setdefault(p, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return doc


# ---------------------------------------------------------------------------
# built-in protocols
# ---------------------------------------------------------------------------


def _phonon_model(ions=3, beta0=0.1, anharmonicity=0.0, baths=None,
                  local_dim=4, total_cap=4):
    model = {
        "kind": "phonon-chain",
        "ions": ions,
        "beta0": beta0,
        "anharmonicity": anharmonicity,
        "cutoff": {"local_dim": local_dim, "total_cap": total_cap},
    }
    if baths:
        model["baths"] = baths
    return model


def _displacements(sites, epsilon=0.05):
    return [{"kind": "displacement", "site": s, "epsilon": epsilon,
             "phase": f"p{k + 1}"} for k, s in enumerate(sites)]


def builtin_templates() -> dict[str, dict]:
    """Template documents for the shipped measurement protocols."""
    t: dict[str, dict] = {}

    t["sqc"] = {
        "name": "sqc",
        "units": "J0",
        "model": {"kind": "spin-chain", "spins": 5, "j0": 1.0,
                  "exponent": 1.0, "field": 0.5},
        "initial": "ground",
        "pulses": [
            {"kind": "spin-pi2", "site": 1, "phase": "p1"},
            {"kind": "spin-pi2", "site": 1, "phase": "p2"},
        ],
        "delays": [
            {"scan": {"start": 0.0, "stop": 68.0, "points": 256}},
            {"scan": {"start": 0.0, "stop": 68.0, "points": 256}},
        ],
        "signature": {"p1": 1, "p2": -1},
        "readout": {"kind": "sigma-z", "site": 1},
        "method": "direct",
        "transform": {"axes": ["t1", "t2"], "apodization": 0.06,
                      "zero_pad": 4, "flip_axes": True},
    }

    t["sqc-single-mode"] = {
        "name": "sqc-single-mode",
        "units": "nu_x",
        "model": _phonon_model(ions=1, local_dim=4, total_cap=None),
        "initial": "ground",
        "pulses": _displacements([1, 1]),
        "delays": [
            {"scan": {"start": 0.0, "stop": 254.0, "points": 128}},
            {"scan": {"start": 0.0, "stop": 30.0, "points": 16}},
        ],
        "signature": {"p1": 1, "p2": -1},
        "readout": {"kind": "motional-pi", "site": 1},
        "method": "direct",
        "transform": {"axes": ["t1", "t2"], "apodization": 0.02,
                      "zero_pad": 4, "flip_axes": True},
    }

    for name, site in (("delta-sqc", 1), ("delta-sqc-mirrored", 3)):
        t[name] = {
            "name": name,
            "units": "nu_x",
            "model": _phonon_model(
                anharmonicity=-0.025,
                baths=[{"site": 1, "nbar": 0.0, "rate": 0.01},
                       {"site": 3, "nbar": 0.5, "rate": 0.01}],
            ),
            "initial": "steady-state",
            "pulses": _displacements([site, site]),
            "delays": [
                {"scan": {"start": 0.0, "stop": 318.0, "points": 160}},
                {"scan": {"start": 0.0, "stop": 630.0, "points": 64}},
            ],
            "signature": {"p1": 1, "p2": -1},
            "readout": {"kind": "motional-pi", "site": 2},
            "method": "direct",
            "transform": {"axes": ["t1", "t2"], "apodization": 0.0,
                          "zero_pad": 4, "flip_axes": True},
        }

    for name, readout_site, anh in (
        ("dqc", 1, 0.0),
        ("dqc-anharmonic", 1, -0.01),
        ("dqc-center", 2, 0.0),
        ("dqc-center-anharmonic", 2, -0.01),
    ):
        t[name] = {
            "name": name,
            "units": "nu_x",
            "model": _phonon_model(anharmonicity=anh),
            "initial": "ground",
            "pulses": _displacements([1, 1, readout_site, readout_site]),
            "delays": [
                {"fixed": 0.0},
                {"scan": {"start": 0.0, "stop": 383.0, "points": 384}},
                {"fixed": 0.0},
                {"scan": {"start": 0.0, "stop": 504.0, "points": 64}},
            ],
            "signature": {"p1": 1, "p2": 1, "p3": -1, "p4": -1},
            "readout": {"kind": "motional-pi", "site": readout_site},
            "method": "direct",
            "transform": {"axes": ["t2", "t4"], "apodization": 0.01,
                          "zero_pad": 4, "flip_axes": True},
        }

    pe_model = _phonon_model(
        anharmonicity=-0.03,
        baths=[{"site": s, "nbar": 0.1, "rate": 0.0015} for s in (1, 2, 3)],
    )
    pe_delays = [
        {"scan": {"start": 0.0, "stop": 510.0, "points": 256}},
        {"fixed": 0.0},
        {"scan": {"start": 0.0, "stop": 510.0, "points": 256}},
        {"fixed": 0.0},
    ]
    pe_signature = {"p1": -1, "p2": 1, "p3": 1, "p4": -1}
    pe_transform = {"axes": ["t1", "t3"], "apodization": 0.004,
                    "zero_pad": 4, "flip_axes": True}

    t["pe"] = {
        "name": "pe",
        "units": "nu_x",
        "model": pe_model,
        "initial": "ground",
        "pulses": _displacements([1, 1, 1, 1]),
        "delays": copy.deepcopy(pe_delays),
        "signature": dict(pe_signature),
        "readout": {"kind": "motional-pi", "site": 1},
        "method": "direct",
        "transform": dict(pe_transform),
    }

    # Diagram-selective photon-echo sequences built from raise/lower pulses.
    # With the photon-echo signature each sequence admits exactly one
    # pathway: the corresponding double-sided diagram.
    diagram_kinds = {
        "pe-gsb": ["raise", "lower", "raise", "raise"],
        "pe-ese": ["raise", "raise", "lower", "raise"],
        "pe-esaa": ["raise", "raise", "raise", "lower"],
        "pe-esab": ["raise", "raise", "raise", "raise"],
    }
    for name, kinds in diagram_kinds.items():
        t[name] = {
            "name": name,
            "units": "nu_x",
            "model": copy.deepcopy(pe_model),
            "initial": "ground",
            "pulses": [{"kind": k, "site": 1, "phase": f"p{i + 1}"}
                       for i, k in enumerate(kinds)],
            "delays": copy.deepcopy(pe_delays),
            "signature": dict(pe_signature),
            "readout": {"kind": "motional-pi", "site": 1},
            "method": "phase-cycling",
            "transform": dict(pe_transform),
        }
    return t


def builtin_protocols() -> dict[str, ProtocolSpec]:
    """All built-in templates, parsed and validated."""
    return {name: parse_protocol(doc) for name, doc in builtin_templates().items()}


def builtin_protocol(name: str, overrides: dict | None = None) -> ProtocolSpec:
    """One built-in template with optional dotted-path overrides."""
    templates = builtin_templates()
    if name not in templates:
        raise KeyError(f"unknown built-in protocol {name!r}; "
                       f"available: {sorted(templates)}")
    doc = templates[name]
    for path, value in (overrides or {}).items():
        set_by_path(doc, path, value)
    return parse_protocol(doc)
