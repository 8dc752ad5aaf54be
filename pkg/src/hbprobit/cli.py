"""Command-line entry point: ``hbprobit {estimate,simulate,recover,report}``.

Settings come from an optional ``--config`` key-value file (``key = value``,
``#`` comments) and are overridden by explicit flags. Exit codes: 0 ok,
2 validation or missing input, 3 sampler failure, 4 recovery threshold failure.
On failure a single line ``hbprobit: error=<code> <detail>`` goes to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import asdict
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
import scipy

from .brand_value import decompose_chain
from .data_model import (
    BrandAttributeMatrix,
    McmcConfig,
    PanelFormatError,
    PriorConfig,
    default_attributes,
    read_attributes,
    read_panel,
    validate_panel,
    write_attributes,
    write_panel,
)
from .posterior import (
    MARKET_RESPONSE_HEADING,
    DiagnosticUnavailableError,
    geweke_z,
    hpd_bounds,
    render_report,
    significance_table,
)
from .sampler import WORKERS_ENV, ChainDraws, SamplerError, run_chains
from .synth import (
    GeneratorSpec,
    RecoveryThresholds,
    Truth,
    generate_panel,
    recovery_score,
    threshold_failures,
    tracked_population_draws,
)

log = logging.getLogger("hbprobit")

EXIT_OK, EXIT_VALIDATION, EXIT_SAMPLER, EXIT_THRESHOLD = 0, 2, 3, 4
PRIOR_KEYS = {
    "beta_mean_precision": float,
    "delta_mean_precision": float,
    "iw_df_offset": float,
    "iw_scale": float,
    "ig_shape": float,
    "ig_scale": float,
}
REPORT_EXT = {"text": "txt", "csv": "csv", "json": "json"}


class CliError(Exception):
    def __init__(self, code: int, kind: str, detail: str) -> None:
        super().__init__(detail)
        self.code = code
        self.kind = kind


# --- configuration -------------------------------------------------------------


def read_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    if not Path(path).is_file():
        raise CliError(EXIT_VALIDATION, "missing_input", f"config file {path} not found")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep key case, e.g. max_abs_error.Price
    try:
        parser.read_string("[run]\n" + Path(path).read_text(encoding="utf-8"))
    except configparser.Error as exc:
        raise CliError(EXIT_VALIDATION, "validation", f"bad config file: {exc}") from exc
    return dict(parser["run"])


def _setting(args: argparse.Namespace, cfg: dict[str, str], name: str, cast: type, default: Any) -> Any:
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if name in cfg:
        try:
            return cast(cfg[name])
        except ValueError as exc:
            raise CliError(EXIT_VALIDATION, "validation", f"config key {name}: {exc}") from exc
    return default


def mcmc_config(args: argparse.Namespace, cfg: dict[str, str]) -> McmcConfig:
    config = McmcConfig(
        n_iterations=_setting(args, cfg, "iters", int, 4000),
        n_burn_in=_setting(args, cfg, "burn", int, 1000),
        thin=_setting(args, cfg, "thin", int, 1),
        rng_seed=_setting(args, cfg, "seed", int, 0),
        hpd_level=_setting(args, cfg, "hpd_level", float, 0.95),
    )
    problems = config.validate()
    if problems:
        raise CliError(EXIT_VALIDATION, "validation", "; ".join(problems))
    return config


def prior_config(cfg: dict[str, str]) -> PriorConfig:
    kwargs = {}
    for key, cast in PRIOR_KEYS.items():
        if f"prior.{key}" in cfg:
            kwargs[key] = cast(cfg[f"prior.{key}"])
    priors = PriorConfig(**kwargs)
    problems = priors.validate()
    if problems:
        raise CliError(EXIT_VALIDATION, "validation", "; ".join(problems))
    return priors


def config_hash(resolved: dict[str, Any]) -> str:
    blob = json.dumps(resolved, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _versions() -> dict[str, str]:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"hbprobit": pkg, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pd.__version__}


def _manifest(command: str, seed: int, resolved: dict[str, Any], inputs: dict[str, str]) -> dict[str, Any]:
    return {
        "command": command,
        "seed": seed,
        "chain_seed_rule": "chain k, iteration i, stage s draws from Philox(SeedSequence(seed, spawn_key=(k, i, s)))",
        "config": resolved,
        "config_hash": config_hash(resolved),
        "inputs": inputs,
        "versions": _versions(),
    }


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- output staging --------------------------------------------------------------


class _Staging:
    """Collect outputs in a temporary directory and move them into place at the end."""

    def __init__(self, out: Path) -> None:
        self.out = out
        out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".hbprobit-", dir=out.parent))

    def path(self, name: str) -> Path:
        return self.tmp / name

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text, encoding="utf-8")

    def commit(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        for f in sorted(self.tmp.iterdir()):
            os.replace(f, self.out / f.name)
        self.tmp.rmdir()

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --- shared report writing -----------------------------------------------------------


def chain_summary(chain: ChainDraws, level: float) -> dict[str, Any]:
    labels, draws = tracked_population_draws(chain)
    lo, hi = hpd_bounds(draws, level)
    params = {
        label: {"mean": float(draws[:, i].mean()), "sd": float(draws[:, i].std(ddof=1)),
                "hpd_lower": float(lo[i]), "hpd_upper": float(hi[i])}
        for i, label in enumerate(labels)
    }
    for name, values in (("beta_sd.Display", np.sqrt(chain.beta_cov[:, 0, 0])),
                         ("beta_sd.Price", np.sqrt(chain.beta_cov[:, 1, 1])),
                         ("intangible_var", chain.intangible_var)):
        params[name] = {"mean": float(values.mean()), "sd": float(values.std(ddof=1))}
    return {"n_draws": chain.n_draws, "n_chains": chain.n_chains, "hpd_level": level,
            "n_households": chain.n_households, "population": params}


def diagnostics(chain: ChainDraws) -> dict[str, Any]:
    labels, draws = tracked_population_draws(chain)
    per_chain = np.array_split(draws, chain.n_chains)
    out: dict[str, Any] = {}
    for i, label in enumerate(labels):
        zs = []
        for part in per_chain:
            try:
                zs.append(geweke_z(part[:, i]))
            except DiagnosticUnavailableError:
                zs.append(None)
            except ValueError:
                zs.append(None)
        out[label] = zs
    flagged = [k for k, v in out.items() if any(z is not None and abs(z) >= 3 for z in v)]
    return {"geweke_z": out, "flagged_abs_z_ge_3": flagged,
            "decomposition_identity_max_rel_error": decompose_chain(chain).max_identity_error}


def write_reports(stage: _Staging, chain: ChainDraws, level: float, fmt: str,
                  attrs: BrandAttributeMatrix | None = None) -> None:
    ext = REPORT_EXT[fmt]
    t3 = significance_table(chain, "market_response", level)
    t4 = significance_table(chain, "engineering", level)
    tc = significance_table(chain, "contrasts", level) if chain.alpha.shape[2] > 1 else []
    stage.write_text(f"market_response.{ext}", render_report(t3, fmt, heading=MARKET_RESPONSE_HEADING))
    stage.write_text(f"engineering.{ext}", render_report(t4, fmt))
    stage.write_text(f"contrasts.{ext}", render_report(tc, fmt))
    decompose_chain(chain, attrs).to_csv(stage.path("decomposition.csv"))


# --- subcommands ------------------------------------------------------------------------


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = read_config(args.config)
    panel_path = args.panel or cfg.get("panel")
    attrs_path = args.attrs or cfg.get("attrs")
    out = Path(args.out or cfg.get("out") or "")
    if not panel_path or not attrs_path or not str(out):
        raise CliError(EXIT_VALIDATION, "validation", "estimate needs --panel, --attrs and --out")
    for p in (panel_path, attrs_path):
        if not Path(p).is_file():
            raise CliError(EXIT_VALIDATION, "missing_input", f"input file {p} not found")
    config = mcmc_config(args, cfg)
    priors = prior_config(cfg)
    n_chains = _setting(args, cfg, "chains", int, 1)
    fmt = _setting(args, cfg, "format", str, "text")
    if fmt not in REPORT_EXT:
        raise CliError(EXIT_VALIDATION, "validation", f"unknown format {fmt}")
    try:
        panel = read_panel(panel_path)
        attrs = read_attributes(attrs_path)
    except PanelFormatError as exc:
        raise CliError(EXIT_VALIDATION, "validation", str(exc)) from exc
    problems = validate_panel(panel, attrs)
    if problems:
        raise CliError(EXIT_VALIDATION, "validation", "; ".join(problems))

    def progress(it: int, fit: float) -> None:
        log.info("iteration %d fit %.6g", it, fit)

    try:
        chain = run_chains(panel, attrs, priors, config, n_chains=n_chains,
                           workers=int(os.environ.get(WORKERS_ENV, "1")), progress=progress)
    except SamplerError as exc:
        raise CliError(EXIT_SAMPLER, "sampler", str(exc)) from exc

    resolved = {"mcmc": asdict(config), "priors": asdict(priors), "chains": n_chains, "format": fmt}
    stage = _Staging(out)
    try:
        chain.save(stage.path("chain.npz"))
        stage.write_text("chain_summary.json", _dumps(chain_summary(chain, config.hpd_level)))
        stage.write_text("diagnostics.json", _dumps(diagnostics(chain)))
        write_reports(stage, chain, config.hpd_level, fmt, attrs)
        pd.DataFrame({"household_id": list(panel.household_ids), "index": range(panel.n_households)}).to_csv(
            stage.path("household_map.csv"), index=False)
        inputs = {"panel": _sha256(panel_path), "attrs": _sha256(attrs_path)}
        stage.write_text("manifest.json", _dumps(_manifest("estimate", config.rng_seed, resolved, inputs)))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = read_config(args.config)
    out = Path(args.out or cfg.get("out") or "")
    if not str(out):
        raise CliError(EXIT_VALIDATION, "validation", "simulate needs --out")
    attrs_path = args.attrs or cfg.get("attrs")
    try:
        attrs = read_attributes(attrs_path) if attrs_path else default_attributes()
    except PanelFormatError as exc:
        raise CliError(EXIT_VALIDATION, "validation", str(exc)) from exc
    J = attrs.n_brands
    spec = GeneratorSpec(
        n_households=_setting(args, cfg, "households", int, 98),
        n_brands=J,
        n_occasions=_setting(args, cfg, "occasions", int, 40),
        attrs=attrs,
        price_levels=GeneratorSpec.price_levels if J == 6 else tuple(300.0 for _ in range(J)),
        display_prob=(0.2,) * J,
        seed=_setting(args, cfg, "seed", int, 0),
    )
    problems = spec.validate()
    if problems:
        raise CliError(EXIT_VALIDATION, "validation", "; ".join(problems))
    panel, truth = generate_panel(spec)
    resolved = {"households": spec.n_households, "occasions": spec.n_occasions, "brands": J,
                "price_levels": list(spec.price_levels), "price_jitter": spec.price_jitter,
                "display_prob": list(spec.display_prob)}
    stage = _Staging(out)
    try:
        write_panel(panel, stage.path("panel.csv"))
        write_attributes(attrs, stage.path("attributes.csv"))
        truth.save(stage.path("truth.json"))
        stage.write_text("manifest.json", _dumps(_manifest("simulate", spec.seed, resolved, {})))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(out)
    return EXIT_OK


def cmd_recover(args: argparse.Namespace) -> int:
    cfg = read_config(args.config)
    truth_path = args.truth or cfg.get("truth")
    chain_path = args.chain or cfg.get("chain")
    for label, p in (("truth", truth_path), ("chain", chain_path)):
        if not p or not Path(p).is_file():
            raise CliError(EXIT_VALIDATION, "missing_input", f"{label} artifact {p} not found")
    try:
        truth = Truth.load(truth_path)
        chain = ChainDraws.load(chain_path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_VALIDATION, "validation", f"cannot load artifacts: {exc}") from exc
    level = _setting(args, cfg, "hpd_level", float, 0.95)
    try:
        report = recovery_score(truth, chain, level)
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, "validation", str(exc)) from exc
    thresholds = RecoveryThresholds.from_mapping(cfg)
    failures = threshold_failures(report, thresholds)
    doc = report.to_dict()
    doc["thresholds"] = asdict(thresholds)
    doc["failures"] = failures
    text = _dumps(doc)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if failures:
        raise CliError(EXIT_THRESHOLD, "threshold", "; ".join(failures))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    cfg = read_config(args.config)
    chain_path = args.chain or cfg.get("chain")
    if not chain_path or not Path(chain_path).is_file():
        raise CliError(EXIT_VALIDATION, "missing_input", f"chain artifact {chain_path} not found")
    out = Path(args.out or cfg.get("out") or Path(chain_path).parent)
    fmt = _setting(args, cfg, "format", str, "text")
    if fmt not in REPORT_EXT:
        raise CliError(EXIT_VALIDATION, "validation", f"unknown format {fmt}")
    chain = ChainDraws.load(chain_path)
    level = _setting(args, cfg, "hpd_level", float, chain.config.hpd_level)
    attrs = None
    if args.attrs:
        try:
            attrs = read_attributes(args.attrs)
        except PanelFormatError as exc:
            raise CliError(EXIT_VALIDATION, "validation", str(exc)) from exc
    stage = _Staging(out)
    try:
        write_reports(stage, chain, level, fmt, attrs)
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(out)
    return EXIT_OK


# --- parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hbprobit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value settings file; flags override it")
        p.add_argument("--out", help="output directory (file for recover)")

    def mcmc(p: argparse.ArgumentParser) -> None:
        p.add_argument("--iters", type=int)
        p.add_argument("--burn", type=int)
        p.add_argument("--thin", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--chains", type=int)
        p.add_argument("--hpd-level", dest="hpd_level", type=float)
        p.add_argument("--format", choices=sorted(REPORT_EXT))

    p = sub.add_parser("estimate", help="run the Gibbs sampler on a panel")
    common(p)
    mcmc(p)
    p.add_argument("--panel")
    p.add_argument("--attrs")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="generate a synthetic panel with known truth")
    common(p)
    p.add_argument("--attrs", help="attribute CSV (default: bundled synthetic matrix)")
    p.add_argument("--seed", type=int)
    p.add_argument("--households", type=int)
    p.add_argument("--occasions", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recover", help="score a chain against simulation truth")
    common(p)
    p.add_argument("--truth")
    p.add_argument("--chain")
    p.add_argument("--hpd-level", dest="hpd_level", type=float)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("report", help="re-render tables from a saved chain")
    common(p)
    p.add_argument("--chain")
    p.add_argument("--attrs")
    p.add_argument("--hpd-level", dest="hpd_level", type=float)
    p.add_argument("--format", choices=sorted(REPORT_EXT))
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        detail = " ".join(str(exc).split())
        print(f"hbprobit: error={exc.kind} {detail}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
