"""
Temperature sweeps, the consistency metric, the theory band and outputs.

Each grid point runs the whole experiment: nominal transition matrix,
circuit, noise, conditional channels (analytic or tomographic), fixed-point
states and finite-shot statistics.
"""

import csv
import io
import json
import logging
import os
import platform
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy

import app
from app import config
from app.circuit import (
    NoiseModel,
    apply_noise,
    branch_probabilities,
    build_circuit,
    classical_sample,
    conditional_maps,
    estimate_gamma,
    run_shots,
    spectral_ensemble,
)
from app.errors import (
    InsufficientData,
    InvalidParams,
    IoError,
    IsingMachineError,
)
from app.fixedpoint import OptimizerConfig, solve_fixed_points
from app.ising import (
    IsingParams,
    TransitionMatrix,
    invert_parameters,
    stationary_distribution,
)
from app.machine import (
    classical_complexity,
    complexities,
    excess_entropy,
    quantum_complexity,
)
from app.tomography import generate_tomography_data, reconstruct_channels

NAN = float("nan")
UNDEFINED_DENOMINATOR = 1e-12

CSV_COLUMNS = (
    "t_nominal", "b_nominal", "j",
    "gamma00", "gamma01", "gamma10", "gamma11",
    "c_c", "c_q", "t_m", "b_m", "c_q_m", "t_s", "b_s", "c_q_s",
    "residual", "shots", "seed", "status",
)
SOURCES = ("theory", "m", "s")
BOOTSTRAP_RESAMPLES = 200


@dataclass(frozen=True)
class RunConfig:
    j: float = config.NOMINAL_J
    b_nominal: float = config.NOMINAL_B
    t_grid: tuple = config.NOMINAL_T_GRID
    noise: NoiseModel = field(
        default_factory=lambda: NoiseModel(
            config.DEFAULT_NOISE_P,
            config.DEFAULT_NOISE_EPS,
            config.DEFAULT_NOISE_Q,
        )
    )
    shots: int = config.DEFAULT_SHOTS
    tomography_shots: int = config.DEFAULT_TOMOGRAPHY_SHOTS
    seed: int = config.DEFAULT_SEED
    exact: bool = False
    route: str = "decomposed"
    channel_source: str = "analytic"
    optimizer_starts: int = 32
    optimizer_evals: int = 20000
    excess_window: int = config.EXCESS_ENTROPY_WINDOW
    workers: int = config.DEFAULT_WORKERS
    out_dir: str = config.DEFAULT_OUT_DIR
    svg: bool = True

    def __post_init__(self):
        grid = tuple(float(t) for t in self.t_grid)
        if not grid:
            raise InvalidParams("Temperature grid is empty")
        if any(t <= 0 for t in grid):
            raise InvalidParams("Temperatures must be strictly positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidParams(
                "Temperature grid must be strictly increasing"
            )
        object.__setattr__(self, "t_grid", grid)
        if self.channel_source not in ("analytic", "tomography"):
            raise InvalidParams(
                f"Unknown channel source {self.channel_source!r}"
            )
        if self.route not in ("direct", "decomposed"):
            raise InvalidParams(f"Unknown circuit route {self.route!r}")
        if not self.exact and self.shots < 1:
            raise InvalidParams("Shot count must be at least 1")

    def to_dict(self):
        payload = asdict(self)
        payload["t_grid"] = list(self.t_grid)
        return payload

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload)
        if isinstance(payload.get("noise"), dict):
            payload["noise"] = NoiseModel(**payload["noise"])
        if "t_grid" in payload:
            payload["t_grid"] = parse_t_grid(payload["t_grid"])
        unknown = set(payload) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParams(f"Unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def load_json(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def with_overrides(self, **overrides):
        return replace(
            self, **{k: v for k, v in overrides.items() if v is not None}
        )


def parse_t_grid(value):
    """Temperature grid from a list, a comma list or ``nominal``."""
    if isinstance(value, str):
        if value.strip().lower() == "nominal":
            return config.NOMINAL_T_GRID
        return tuple(float(t) for t in value.split(",") if t.strip())
    return tuple(float(t) for t in value)


@dataclass(frozen=True, eq=False)
class SweepRecord:
    t_nominal: float
    b_nominal: float
    j: float
    gamma: TransitionMatrix = None
    c_c: float = NAN
    c_q: float = NAN
    t_m: float = NAN
    b_m: float = NAN
    c_q_m: float = NAN
    t_s: float = NAN
    b_s: float = NAN
    c_q_s: float = NAN
    gamma_s: TransitionMatrix = None
    p_s: object = None
    residual: float = NAN
    shots: int = None
    seed: int = 0
    status: str = "ok"
    excess_entropy: float = NAN
    c_c_sample: float = NAN
    fixed_states: tuple = None
    c_q_s_sigma: float = NAN

    @property
    def failed(self):
        """Errors and partial records (an inversion that gave NaN) alike."""
        return self.status != "ok"

    def csv_row(self):
        gamma = self.gamma.as_list() if self.gamma is not None else [NAN] * 4
        values = [self.t_nominal, self.b_nominal, self.j, *gamma]
        values += [
            self.c_c, self.c_q, self.t_m, self.b_m, self.c_q_m,
            self.t_s, self.b_s, self.c_q_s, self.residual,
        ]
        row = [_fmt(v) for v in values]
        row += [
            "exact" if self.shots is None else str(self.shots),
            str(self.seed),
            self.status,
        ]
        return row

    @classmethod
    def from_csv_row(cls, row):
        number = {k: float(row[k]) for k in CSV_COLUMNS[:16]}
        try:
            gamma = TransitionMatrix(
                np.array(
                    [
                        [number["gamma00"], number["gamma01"]],
                        [number["gamma10"], number["gamma11"]],
                    ]
                )
            )
        except IsingMachineError:
            gamma = None
        return cls(
            number["t_nominal"], number["b_nominal"], number["j"],
            gamma=gamma,
            c_c=number["c_c"], c_q=number["c_q"],
            t_m=number["t_m"], b_m=number["b_m"], c_q_m=number["c_q_m"],
            t_s=number["t_s"], b_s=number["b_s"], c_q_s=number["c_q_s"],
            residual=number["residual"],
            shots=None if row["shots"] == "exact" else int(row["shots"]),
            seed=int(row["seed"]),
            status=row["status"],
        )


@dataclass(frozen=True)
class ConsistencyCell:
    t1: float
    t2: float
    r: float = None
    k: float = None

    @property
    def defined(self):
        return self.k is not None


@dataclass(frozen=True)
class AmbiguityMap:
    source: str
    temperatures: tuple
    cells: tuple

    def pairs(self):
        """Cells with ``t1`` before ``t2`` in grid order."""
        n = len(self.temperatures)
        return [self.cells[a][b] for a in range(n) for b in range(a + 1, n)]

    def values(self):
        return [cell.k for row in self.cells for cell in row if cell.defined]

    @property
    def has_ambiguity(self):
        return any(k < 0 for k in self.values())

    def boundary(self):
        """Neighbouring cells across which K changes sign."""
        n = len(self.temperatures)
        edges = []
        for a in range(n):
            for b in range(n):
                here = self.cells[a][b]
                for da, db in ((1, 0), (0, 1)):
                    if a + da >= n or b + db >= n:
                        continue
                    there = self.cells[a + da][b + db]
                    if here.defined and there.defined and here.k * there.k < 0:
                        edges.append(
                            ((here.t1, here.t2), (there.t1, there.t2))
                        )
        return edges


@dataclass(frozen=True)
class TheoryBand:
    t: tuple
    c_q_low: tuple
    c_q_mid: tuple
    c_q_high: tuple
    slope: float
    intercept: float
    spread: float

    def contains(self, t, c_q, margin=0.0):
        index = int(np.argmin(np.abs(np.asarray(self.t) - t)))
        return (
            self.c_q_low[index] - margin
            <= c_q
            <= self.c_q_high[index] + margin
        )


def _fmt(value):
    if value is None:
        return ""
    value = float(value)
    if np.isnan(value):
        return "nan"
    return format(value, ".12g")


def _point_seeds(master_seed, index, count=6):
    state = np.random.SeedSequence([master_seed, index]).generate_state(count)
    return [int(s) for s in state]


def _invert_or_nan(gamma, j, nominal):
    """``(T, B, error name)``; NaN parameters when the inversion fails."""
    try:
        return (*invert_parameters(gamma, j, initial_guess=nominal), None)
    except IsingMachineError as e:
        logging.warning(f"Inversion failed at nominal {nominal}: {e}")
        return NAN, NAN, type(e).__name__


def _partial_status(*errors):
    names = [e for e in errors if e is not None]
    if not names:
        return "ok"
    return "partial: " + ";".join(dict.fromkeys(names))


def c_q_s_uncertainty(gamma_s, states, shots, resamples=BOOTSTRAP_RESAMPLES,
                      seed=0):
    """
    Shot-noise standard deviation of ``C_q^s`` by parametric bootstrap.

    Each row of ``gamma_s`` is redrawn as ``shots`` binomial runs and the
    resampled stationary mixture of the fixed-point ``states`` is re-scored.
    """
    if shots is None or shots < 1:
        raise InvalidParams("Bootstrap needs a finite shot count")
    rng = np.random.default_rng(seed)
    ones = rng.binomial(shots, gamma_s.gamma[:, 1], size=(resamples, 2))
    g01 = ones[:, 0] / shots
    g10 = 1 - ones[:, 1] / shots
    rho0, rho1 = states
    values = []
    for a, b in zip(g01, g10):
        if a + b <= 0:
            continue
        p0 = b / (a + b)
        values.append(quantum_complexity(p0 * rho0 + (1 - p0) * rho1))
    if len(values) < 2:
        return NAN
    return float(np.std(values, ddof=1))


def run_point(cfg, index, t):
    """One grid point of the sweep; failures are recorded, not raised."""
    (
        circuit_seed, tomo_seed, opt_seed, shot_seed, classical_seed,
        bootstrap_seed,
    ) = _point_seeds(cfg.seed, index)
    base = SweepRecord(
        t, cfg.b_nominal, cfg.j,
        shots=None if cfg.exact else cfg.shots,
        seed=cfg.seed,
    )
    try:
        params = IsingParams(cfg.j, cfg.b_nominal, t)
        gamma, c_c, c_q = complexities(params)
        e_l = excess_entropy(gamma, cfg.excess_window).value
        base = replace(base, gamma=gamma, c_c=c_c, c_q=c_q, excess_entropy=e_l)

        spec = build_circuit(gamma, cfg.route, seed=circuit_seed)
        pair = conditional_maps(apply_noise(spec, cfg.noise), cfg.noise.q)
        channels = pair
        if cfg.channel_source == "tomography":
            data = generate_tomography_data(
                pair, cfg.tomography_shots, tomo_seed, exact=cfg.exact
            )
            channels = reconstruct_channels(data)

        solution = solve_fixed_points(
            channels,
            OptimizerConfig(
                starts=cfg.optimizer_starts,
                max_evals=cfg.optimizer_evals,
                seed=opt_seed,
                workers=1,
            ),
            cfg.j,
            reference=gamma,
            nominal=(t, cfg.b_nominal),
        )
        c_q_m = quantum_complexity(solution.rho_m)

        # Statistics come from the physical step, fed with the fixed points
        ensembles = [spectral_ensemble(solution.rho0),
                     spectral_ensemble(solution.rho1)]
        rows = []
        for k, ensemble in enumerate(ensembles):
            if cfg.exact:
                rows.append(branch_probabilities(ensemble, pair))
            else:
                counts = run_shots(ensemble, pair, cfg.shots, shot_seed + k)
                rows.append([counts.n0, counts.n1])
        gamma_s = TransitionMatrix.from_rows(rows)
        p_s = stationary_distribution(gamma_s)
        rho_s = p_s.p0 * solution.rho0 + p_s.p1 * solution.rho1
        t_s, b_s, s_error = _invert_or_nan(
            gamma_s, cfg.j, (t, cfg.b_nominal)
        )
        sigma = NAN
        if not cfg.exact:
            sigma = c_q_s_uncertainty(
                gamma_s, (solution.rho0, solution.rho1), cfg.shots,
                seed=bootstrap_seed,
            )

        sample = classical_sample(
            gamma, cfg.shots if not cfg.exact else 10**5, classical_seed
        )
        gamma_hat = estimate_gamma(sample)
        c_c_sample = classical_complexity(
            stationary_distribution(gamma_hat), gamma_hat
        )

        return replace(
            base,
            t_m=solution.t_m,
            b_m=solution.b_m,
            c_q_m=c_q_m,
            t_s=t_s,
            b_s=b_s,
            c_q_s=quantum_complexity(rho_s),
            gamma_s=gamma_s,
            p_s=p_s,
            residual=solution.residual,
            c_c_sample=c_c_sample,
            fixed_states=(solution.rho0, solution.rho1),
            c_q_s_sigma=sigma,
            status=_partial_status(solution.inversion_error, s_error),
        )
    except IsingMachineError as e:
        logging.error(f"Sweep point T={t} failed: {type(e).__name__}: {e}")
        return replace(base, status=f"error: {type(e).__name__}")
    except Exception as e:
        logging.error(f"Unexpected error at sweep point T={t}: {e}")
        return replace(base, status="error: unexpected")


def complexity_sweep(cfg):
    """Run every grid point; records keep grid order."""
    logging.info(
        f"Sweeping {len(cfg.t_grid)} temperatures at J={cfg.j}, "
        f"B={cfg.b_nominal} with {cfg.noise}"
    )
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        records = list(
            pool.map(
                lambda item: run_point(cfg, *item), enumerate(cfg.t_grid)
            )
        )
    failed = [r.t_nominal for r in records if r.failed]
    if failed:
        logging.warning(f"Sweep points failed at T={failed}")
    return records


def consistency(c_c1, c_q1, c_c2, c_q2, t1=NAN, t2=NAN):
    """
    Signed agreement of quantum and classical complexity orderings.

    ``r`` is the ratio of quantum to classical differences and
    ``K = sign(r) min(|r|, 1/|r|)``; K is undefined when the classical
    difference vanishes.
    """
    values = (c_c1, c_q1, c_c2, c_q2)
    denominator = c_c1 - c_c2
    if any(np.isnan(v) for v in values) or abs(denominator) < (
        UNDEFINED_DENOMINATOR
    ):
        return ConsistencyCell(t1, t2)
    r = (c_q1 - c_q2) / denominator
    if r == 0:
        return ConsistencyCell(t1, t2, 0.0, 0.0)
    k = float(np.sign(r) * min(abs(r), 1 / abs(r)))
    return ConsistencyCell(t1, t2, float(r), k)


def _classical_at(j, b, t):
    if not (np.isfinite(b) and np.isfinite(t) and t > 0):
        return NAN
    return complexities(IsingParams(j, b, t))[1]


def _source_points(records, source):
    if source == "theory":
        return [(r.t_nominal, r.c_c, r.c_q) for r in records]
    if source == "m":
        return [(r.t_m, _classical_at(r.j, r.b_m, r.t_m), r.c_q_m)
                for r in records]
    if source == "s":
        return [(r.t_s, _classical_at(r.j, r.b_s, r.t_s), r.c_q_s)
                for r in records]
    raise InvalidParams(f"Unknown complexity source {source!r}")


def ambiguity_map(records, source="theory"):
    """K for every ordered pair of records, diagonal included."""
    if len(records) < 2:
        raise InsufficientData("Ambiguity map needs at least two records")
    points = _source_points(records, source)
    cells = tuple(
        tuple(
            ConsistencyCell(t1, t2)
            if a == b
            else consistency(cc1, cq1, cc2, cq2, t1, t2)
            for b, (t2, cc2, cq2) in enumerate(points)
        )
        for a, (t1, cc1, cq1) in enumerate(points)
    )
    return AmbiguityMap(source, tuple(p[0] for p in points), cells)


def theory_band(records, j=None):
    """
    Quantum complexity band implied by a linear fit of ``B^m`` on ``T^m``.

    The band edges are ``C_q`` at the fitted field plus or minus the residual
    standard deviation of the fit.
    """
    points = sorted(
        (r.t_m, r.b_m, r.j)
        for r in records
        if np.isfinite(r.t_m) and np.isfinite(r.b_m) and r.t_m > 0
    )
    if len(points) < 3:
        raise InsufficientData(
            "Theory band needs at least three finite (T^m, B^m) points"
        )
    t = np.array([p[0] for p in points])
    b = np.array([p[1] for p in points])
    coupling = points[0][2] if j is None else j
    slope, intercept = np.polyfit(t, b, 1)
    residuals = b - (slope * t + intercept)
    spread = float(np.sqrt(np.sum(residuals**2) / max(len(t) - 2, 1)))

    low, mid, high = [], [], []
    for t_k in t:
        b_fit = slope * t_k + intercept
        edges = [
            complexities(IsingParams(coupling, b_fit + s, t_k))[2]
            for s in (-spread, 0.0, spread)
        ]
        low.append(min(edges))
        mid.append(edges[1])
        high.append(max(edges))
    return TheoryBand(
        tuple(float(v) for v in t),
        tuple(low),
        tuple(mid),
        tuple(high),
        float(slope),
        float(intercept),
        spread,
    )


def band_coverage(band, records, margin=0.0):
    """Share of records with finite ``(T^m, C_q^m)`` that the band contains."""
    points = [
        (r.t_m, r.c_q_m)
        for r in records
        if np.isfinite(r.t_m) and np.isfinite(r.c_q_m)
    ]
    if not points:
        raise InsufficientData("No finite (T^m, C_q^m) points to cover")
    inside = sum(1 for t, c_q in points if band.contains(t, c_q, margin))
    return inside / len(points)


def k_color(k):
    """Diverging scale: -1 red, 0 white, +1 blue; undefined grey."""
    if k is None:
        return "#bdbdbd"
    weight = min(abs(k), 1.0)
    fade = round(255 * (1 - weight))
    if k < 0:
        return f"#ff{fade:02x}{fade:02x}"
    return f"#{fade:02x}{fade:02x}ff"


def render_svg(amap, cell_size=24, margin=48):
    n = len(amap.temperatures)
    size = margin + n * cell_size
    root = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(size),
        height=str(size),
        viewBox=f"0 0 {size} {size}",
    )
    for a, row in enumerate(amap.cells):
        for b, cell in enumerate(row):
            ET.SubElement(
                root,
                "rect",
                x=str(margin + b * cell_size),
                y=str(margin + a * cell_size),
                width=str(cell_size),
                height=str(cell_size),
                fill=k_color(cell.k),
            )
    for index, t in enumerate(amap.temperatures):
        offset = margin + index * cell_size + cell_size / 2
        label = ET.SubElement(
            root, "text", x=str(offset), y=str(margin - 6),
            **{"font-size": "8", "text-anchor": "middle"},
        )
        label.text = _fmt(t)
        label = ET.SubElement(
            root, "text", x=str(margin - 6), y=str(offset),
            **{"font-size": "8", "text-anchor": "end"},
        )
        label.text = _fmt(t)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(
        root, encoding="unicode"
    ) + "\n"


def sweep_csv(records):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in records:
        writer.writerow(record.csv_row())
    return buffer.getvalue()


def ambiguity_csv(amap):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("t1", "t2", "r", "k"))
    for row in amap.cells:
        for cell in row:
            writer.writerow(
                (_fmt(cell.t1), _fmt(cell.t2), _fmt(cell.r), _fmt(cell.k))
            )
    return buffer.getvalue()


def band_csv(band):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("t", "c_q_low", "c_q_mid", "c_q_high"))
    for values in zip(band.t, band.c_q_low, band.c_q_mid, band.c_q_high):
        writer.writerow([_fmt(v) for v in values])
    return buffer.getvalue()


def manifest(cfg, records):
    return json.dumps(
        {
            "config": cfg.to_dict() if cfg is not None else None,
            "seed": cfg.seed if cfg is not None else None,
            "versions": {
                "app": app.__version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "records": len(records),
            "failed": [r.t_nominal for r in records if r.failed],
        },
        indent=2,
        sort_keys=True,
    ) + "\n"


def read_sweep_csv(path):
    with open(path, encoding="utf-8", newline="") as f:
        return [SweepRecord.from_csv_row(row) for row in csv.DictReader(f)]


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise IoError(path, e) from e
    logging.info(f"Wrote {path}")
    return path


def _ensure_dir(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise IoError(out_dir, e) from e


def emit_ambiguity(amap, out_dir, svg=True):
    """Write only the ambiguity CSV and, optionally, its heatmap."""
    _ensure_dir(out_dir)
    paths = {
        "ambiguity": _write(
            os.path.join(out_dir, "ambiguity.csv"), ambiguity_csv(amap)
        )
    }
    if svg:
        paths["svg"] = _write(
            os.path.join(out_dir, "ambiguity.svg"), render_svg(amap)
        )
    return paths


def emit_outputs(records, amap, band, out_dir, cfg=None, svg=True):
    """Write the sweep, ambiguity, band, manifest and heatmap files."""
    _ensure_dir(out_dir)
    paths = {
        "sweep": _write(os.path.join(out_dir, "sweep.csv"),
                        sweep_csv(records)),
        "manifest": _write(os.path.join(out_dir, "manifest.json"),
                           manifest(cfg, records)),
    }
    if amap is not None:
        paths.update(emit_ambiguity(amap, out_dir, svg))
    if band is not None:
        paths["band"] = _write(os.path.join(out_dir, "band.csv"),
                               band_csv(band))
    return paths
