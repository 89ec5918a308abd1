"""Command-line entry point: ``bancoex <command> ...``.

Run configuration lives in a flat ``key = value`` text file (``#`` starts a
comment).  Values are resolved in increasing precedence: built-in defaults,
then the file, then command-line flags such as ``--seed``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
file-system failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelModel, InterBodyParams, OnBodyFadingParams, WalkParams, write_trace
from .controllers import Controller
from .core import ConfigurationError, DomainError, RngStream, make_power_grid
from .equilibrium import WORK_BOUND, SizeError, sample_scenario, verify_social_optimality
from .pdr_model import FitError, fit_compressed_exponential, params_for, read_pdr_samples
from .sim import CampaignConfig, MetricsReport, game_trace, run_campaign

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

# key -> (section, field, parser); section None means a CampaignConfig field.
_CAMPAIGN_INT = ("seed", "n_channel_sets", "games_per_set", "stages_per_game", "total_bans",
                 "channels", "steady_window")
_CAMPAIGN_FLOAT = ("grid_min_dbm", "grid_max_dbm", "grid_step_db", "nominal_gain_db",
                   "noise_dbm", "target_pdr", "stage_duration_s")
_CAMPAIGN_STR = ("coexistence_mode", "activity_resample", "modulation")


def _optional_int(text: str):
    return None if text.lower() in ("none", "") else int(text)


def _weight_d(text: str):
    return None if text.lower() == "auto" else float(text)


KEYS: dict[str, tuple[str | None, str, object]] = {}
for _k in _CAMPAIGN_INT:
    KEYS[_k] = (None, _k, int)
for _k in _CAMPAIGN_FLOAT:
    KEYS[_k] = (None, _k, float)
for _k in _CAMPAIGN_STR:
    KEYS[_k] = (None, _k, str)
KEYS["fixed_m"] = (None, "fixed_m", _optional_int)
KEYS["weights.w"] = (None, "w", float)
KEYS["weights.v"] = (None, "v", float)
KEYS["weights.d"] = (None, "d", _weight_d)
KEYS["controller"] = ("controller", "kind", str)
KEYS["constant_dbm"] = ("controller", "constant_dbm", float)
KEYS["relax"] = ("controller", "relax", float)
for _sec, _cls in (("walk", WalkParams), ("onbody", OnBodyFadingParams),
                   ("interbody", InterBodyParams)):
    for _f in dataclasses.fields(_cls):
        KEYS[f"{_sec}.{_f.name}"] = (_sec, _f.name, int if _f.type in ("int", int) else float)


@dataclasses.dataclass
class ConfigEntry:
    key: str
    value: object
    line: int


def parse_config_text(text: str, source: str = "<config>") -> list[ConfigEntry]:
    entries: dict[str, ConfigEntry] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigurationError(
                f"{source}:{lineno}: duplicate key {key!r} (first set on line {entries[key].line})")
        parser = KEYS[key][2]
        try:
            entries[key] = ConfigEntry(key, parser(value), lineno)
        except ValueError:
            raise ConfigurationError(f"{source}:{lineno}: bad value {value!r} for {key}") from None
    return list(entries.values())


def build_config(entries: list[ConfigEntry]) -> CampaignConfig:
    top: dict = {}
    sections: dict[str, dict] = {"controller": {}, "walk": {}, "onbody": {}, "interbody": {}}
    for e in entries:
        section, name, _ = KEYS[e.key]
        (top if section is None else sections[section])[name] = e.value
    controller = Controller(**sections["controller"])
    channel = ChannelModel(WalkParams(**sections["walk"]), OnBodyFadingParams(**sections["onbody"]),
                           InterBodyParams(**sections["interbody"]))
    if top.get("fixed_m") is not None and "coexistence_mode" not in top:
        top["coexistence_mode"] = "fixed_m"
    config = CampaignConfig(controller=controller, channel=channel, **top)
    params_for(config.modulation)
    return config


def load_config(path, overrides: dict | None = None) -> CampaignConfig:
    """Parse a config file and apply flag overrides.

    Validation errors are pinned to the offending line: the entry whose
    removal makes the error go away is named.
    """
    text = Path(path).read_text()
    entries = parse_config_text(text, str(path))
    extra = [ConfigEntry(k, v, 0) for k, v in (overrides or {}).items()]
    merged = [e for e in entries if e.key not in (overrides or {})] + extra
    try:
        return build_config(merged)
    except (ConfigurationError, DomainError, TypeError) as exc:
        for e in merged:
            try:
                build_config([x for x in merged if x is not e])
            except (ConfigurationError, DomainError, TypeError):
                continue
            where = f"{path}:{e.line}" if e.line else f"command-line {e.key}"
            raise ConfigurationError(f"{where}: {e.key}: {exc}") from None
        raise ConfigurationError(f"{path}: {exc}") from None


def template_text() -> str:
    """A config listing every key at its default value."""
    cfg = CampaignConfig()
    lines = ["# bancoex run configuration: 'key = value', one per line.",
             "# weights.d accepts a number or 'auto' (calibrate at nominal_gain_db).",
             "# controller is one of game, sah, sinr_balance, constant.", ""]
    for key, (section, name, _) in KEYS.items():
        if section is None:
            value = getattr(cfg, name)
        elif section == "controller":
            value = getattr(cfg.controller, name)
        else:
            value = getattr(getattr(cfg.channel, section), name)
        if key == "weights.d" and value is None:
            value = "auto"
        if value is None:
            lines.append({"fixed_m": "# fixed_m = 4  (switches coexistence_mode to fixed_m)",
                          "constant_dbm": "# constant_dbm = -10  (needed by controller = constant)"}[key])
            continue
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "bans", None) is not None:
        out["total_bans"] = args.bans
    if getattr(args, "channels", None) is not None:
        out["channels"] = args.channels
    if getattr(args, "fixed_m", None) is not None:
        out["fixed_m"] = args.fixed_m
        out["coexistence_mode"] = "fixed_m"
    if getattr(args, "stochastic_m", False):
        out["coexistence_mode"] = "stochastic"
        out["fixed_m"] = None
    return out


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_metrics(report: MetricsReport, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "pct_at_target", "mean_power_dbm"])
        for t, pct, pw in report.to_rows():
            w.writerow([t, _fmt(pct), _fmt(pw)])


def write_games(report: MetricsReport, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game", "stage", "ban", "active", "power_dbm", "sinr_db", "pdr"])
        for g, rec in enumerate(report.games):
            S, M = rec.power_dbm.shape
            for t in range(S):
                for b in range(M):
                    act = bool(rec.active[t, b])
                    sinr_db = _fmt(10.0 * np.log10(rec.sinr[t, b])) if act else ""
                    pdr = _fmt(rec.pdr[t, b]) if act else ""
                    w.writerow([g, t, b, int(act), _fmt(rec.power_dbm[t, b]), sinr_db, pdr])


def run_meta_text(report: MetricsReport, command: str) -> str:
    cfg = report.config
    lines = [f"# bancoex {__version__} {command}",
             f"# written {datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')}"]
    lines += [f"config.{k} = {v}" for k, v in dataclasses.asdict(cfg).items()
              if k not in ("controller", "channel")]
    lines += [f"config.controller.{k} = {v}" for k, v in dataclasses.asdict(cfg.controller).items()]
    for sec, val in dataclasses.asdict(cfg.channel).items():
        lines += [f"config.{sec}.{k} = {v}" for k, v in val.items()]
    w = report.weights
    lines += [
        f"resolved.weights = w={w.w} v={w.v} d={w.d!r}",
        f"result.steady_pct_at_target = {report.steady_pct:.4f}",
        f"result.steady_power_dbm = {report.steady_power_dbm:.4f}",
        f"result.convergence_stage = {report.convergence_stage}",
        f"result.converged = {report.converged}",
        f"result.convergence_series = mean of dBm over active BANs; "
        f"band 0.5 dB around the mean of the last 10 stages",
        f"result.linear_convergence_stage = {report.linear_convergence_stage}",
        f"result.linear_converged = {report.linear_converged}",
        f"result.active_samples = {report.n_active_samples}",
        f"result.pdr_clamped_samples = {report.n_pdr_clamped}",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_init(args) -> int:
    out = Path(args.path)
    if out.exists() and not args.force:
        raise ConfigurationError(f"{out} exists; pass --force to overwrite")
    out.write_text(template_text())
    print(f"wrote {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config, _overrides(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_campaign(config, keep_games=args.games, jobs=args.jobs)
    write_metrics(report, out / "metrics.csv")
    if args.games:
        write_games(report, out / "games.csv")
    (out / "run_meta.txt").write_text(run_meta_text(report, "run"))
    print(f"{config.controller.label}: {report.steady_pct:.1f}% at target, "
          f"{report.steady_power_dbm:.1f} dBm, converged at stage {report.convergence_stage}")
    return EXIT_OK


def parse_m_range(text: str) -> list[int]:
    """``"2-8"`` or ``"2,4,8"`` (or a mix) to a sorted list of ``m`` values."""
    values = set()
    try:
        for part in text.split(","):
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                values.update(range(lo, hi + 1))
            elif part.strip():
                values.add(int(part))
    except ValueError:
        raise ConfigurationError(f"bad m range {text!r}; use e.g. 2-8 or 2,4,8") from None
    if not values:
        raise ConfigurationError("empty m range")
    return sorted(values)


def cmd_sweep_m(args) -> int:
    base = load_config(args.config, _overrides(args))
    ms = parse_m_range(args.m)
    bad = [m for m in ms if not 1 <= m <= base.total_bans]
    if bad:
        raise ConfigurationError(f"m values {bad} outside [1, M={base.total_bans}]")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for m in ms:
        report = run_campaign(base.replace(coexistence_mode="fixed_m", fixed_m=m), jobs=args.jobs)
        write_metrics(report, out / f"metrics_m{m}.csv")
        (out / f"run_meta_m{m}.txt").write_text(run_meta_text(report, f"sweep-m m={m}"))
        rows.append((m, report.steady_pct, report.steady_power_dbm, report.convergence_stage))
        print(f"m={m}: {report.steady_pct:.1f}% at target, {report.steady_power_dbm:.1f} dBm")
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "steady_pct", "steady_power_dbm", "convergence_stage"])
        for m, pct, pw, conv in rows:
            w.writerow([m, _fmt(pct), _fmt(pw), conv])
    return EXIT_OK


def cmd_verify_ne(args) -> int:
    config = load_config(args.config, _overrides(args))
    step = args.grid_step if args.grid_step is not None else config.grid_step_db
    grid = make_power_grid(config.grid_min_dbm, config.grid_max_dbm, step)
    if args.m < 1:
        raise ConfigurationError("--m must be >= 1")
    if len(grid) ** args.m > WORK_BOUND:
        raise SizeError(
            f"{len(grid)}^{args.m} = {len(grid) ** args.m:.3g} joint profiles exceed the "
            f"exhaustive-search bound {WORK_BOUND:.0e}; pass a coarser --grid-step")
    if args.scenarios < 0:
        raise ConfigurationError("--scenarios must be >= 0")
    weights = config.resolved_weights()
    params = params_for(config.modulation)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    gaps, rel_gaps, equal = [], [], 0
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario_id", "m", "ne_welfare", "opt_welfare", "gap", "profiles_equal"])
        for k in range(args.scenarios):
            sc = sample_scenario(args.m, RngStream(config.seed, ("verify_ne", args.m, k)), weights,
                                 params, grid, config.noise_dbm, config.channel)
            rep = verify_social_optimality(sc)
            w.writerow([k, args.m, repr(rep.ne_welfare), repr(rep.optimal_welfare),
                        repr(rep.gap), int(rep.profiles_equal)])
            gaps.append(rep.gap)
            rel_gaps.append(rep.relative_gap)
            equal += rep.profiles_equal
    n = len(gaps)
    summary = [f"scenarios = {n}", f"m = {args.m}", f"grid_levels = {len(grid)}"]
    if n:
        g = np.asarray(gaps)
        summary += [f"max_gap = {float(g.max())!r}",
                    f"median_relative_gap = {float(np.median(rel_gaps))!r}",
                    f"fraction_gap_zero = {float(np.mean(g <= 0.0)):.4f}",
                    f"fraction_profiles_equal = {equal / n:.4f}"]
    text = "\n".join(summary) + "\n"
    out.with_name(out.stem + "_summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_fit_pdr(args) -> int:
    samples = read_pdr_samples(args.samples)
    params, rmse = fit_compressed_exponential(samples)
    text = (f"a_c = {params.a_c!r}\nb_c = {params.b_c!r}\na = {params.a!r}\n"
            f"b = {params.b!r}\nrmse = {rmse!r}\n")
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_export_trace(args) -> int:
    config = load_config(args.config, _overrides(args))
    if not 0 <= args.set < config.n_channel_sets or not 0 <= args.game < config.games_per_set:
        raise ConfigurationError("--set/--game outside the campaign")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(game_trace(config, args.set, args.game), out)
    print(f"wrote {out}")
    return EXIT_OK


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--bans", type=int, help="override total_bans (M)")
    p.add_argument("--channels", type=int, help="override channels (N_c)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fixed-m", type=int, help="hold the number of active BANs at this value")
    g.add_argument("--stochastic-m", action="store_true", help="draw the active count per game")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bancoex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write a config template with every default")
    p.add_argument("path", nargs="?", default="bancoex.cfg")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", help="run one campaign")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.add_argument("--games", action="store_true", help="also write per-game games.csv")
    p.add_argument("--jobs", type=int, default=1)
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-m", help="one fixed-m campaign per value of m")
    p.add_argument("config")
    p.add_argument("--m", default="2-8", help="e.g. 2-8 or 2,4,8")
    p.add_argument("--out", default="sweep")
    p.add_argument("--jobs", type=int, default=1)
    _add_overrides(p)
    p.set_defaults(func=cmd_sweep_m)

    p = sub.add_parser("verify-ne", help="compare Nash equilibria with the exhaustive optimum")
    p.add_argument("config")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--scenarios", type=int, default=100)
    p.add_argument("--grid-step", type=float, help="coarser grid step in dB for large m")
    p.add_argument("--out", default="verify_ne.csv")
    _add_overrides(p)
    p.set_defaults(func=cmd_verify_ne)

    p = sub.add_parser("fit-pdr", help="fit PDR-vs-SINR samples (CSV sinr_db,pdr)")
    p.add_argument("samples")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit_pdr)

    p = sub.add_parser("export-trace", help="write one game's channel trace as CSV")
    p.add_argument("config")
    p.add_argument("--set", type=int, default=0)
    p.add_argument("--game", type=int, default=0)
    p.add_argument("--out", default="trace.csv")
    _add_overrides(p)
    p.set_defaults(func=cmd_export_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
