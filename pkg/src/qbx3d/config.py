"""Experiment and scene files (INI syntax, see docs/config.md)."""
from dataclasses import dataclass, field
import configparser
import itertools
import os

from .geometry import Domain, SurfaceShape
from .qbx import QbxParams
from .treecode import TreecodeParams

KINDS = ("eval_onsurface", "eval_near", "solve_interior", "solve_exterior", "sweep")
SWEEP_KEYS = ("n_theta", "p", "kappa", "r_c", "d_qbx", "gap")


class ConfigError(ValueError):
    pass


def _floats(text):
    text = (text or "").strip()
    if not text:
        return []
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text):
    return [int(round(v)) for v in _floats(text)]


def _bool(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


# ---------------------------------------------------------------- scenes

@dataclass
class Scene:
    """Boundary components; ``n_theta`` and ``gap`` are filled per run."""
    layout: str = "single"
    shape: str = "sphere"
    params: tuple = (1.0,)
    count: int = 1
    gap: float = 0.01
    n_phi_ratio: int = 1
    q: int = 7
    centers: list = field(default_factory=list)

    def shapes(self, gap=None):
        gap = self.gap if gap is None else gap
        if self.layout == "explicit":
            cs = self.centers
        elif self.layout == "single":
            cs = [(0.0, 0.0, 0.0)]
        elif self.layout == "line":
            probe = SurfaceShape(self.shape, self.params)
            step = 2.0 * probe.bounding_radius + gap
            cs = [(i * step, 0.0, 0.0) for i in range(self.count)]
        else:
            raise ConfigError("unknown layout %r" % self.layout)
        return [SurfaceShape(self.shape, self.params, c) for c in cs]

    def domain(self, n_theta, gap=None):
        nphi = max(1, int(self.n_phi_ratio * n_theta))
        return Domain([(s, int(n_theta), nphi) for s in self.shapes(gap)], self.q)


def _parse(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError("%s: %s" % (path, exc)) from exc
    return cp


def load_scene(path):
    if not os.path.isfile(path):
        raise ConfigError("scene file %s not found" % path)
    cp = _parse(path)
    if "scene" not in cp:
        raise ConfigError("%s: missing [scene] section" % path)
    s = cp["scene"]
    sc = Scene(layout=s.get("layout", "single"), shape=s.get("shape", "sphere"),
               params=tuple(_floats(s.get("params", "1.0"))), count=s.getint("count", 1),
               gap=s.getfloat("gap", 0.01), n_phi_ratio=s.getint("n_phi_ratio", 1),
               q=s.getint("q", 7))
    if sc.layout == "explicit":
        for name in sorted(n for n in cp.sections() if n.startswith("component")):
            c = _floats(cp[name].get("center", "0 0 0"))
            if len(c) != 3:
                raise ConfigError("%s: center needs three numbers" % name)
            sc.centers.append(tuple(c))
        if not sc.centers:
            raise ConfigError("%s: explicit layout without [component ...] sections" % path)
    sc.shapes()  # validate
    return sc


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentConfig:
    id: str
    kind: str
    scene: Scene
    scene_path: str
    qbx: dict
    tree: TreecodeParams
    far_field: str = "direct"
    side: str = "exterior"
    boundary: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    gmres_tol: float = 1e-10
    gmres_maxit: int = 200
    output: str = None

    def rows(self, product=False):
        """Parameter rows: lists are zipped (``product=False``) or crossed."""
        keys = [k for k in SWEEP_KEYS if k in self.sweep]
        lists = [self.sweep[k] for k in keys]
        if not keys:
            return [{}]
        if product:
            return [dict(zip(keys, vals)) for vals in itertools.product(*lists)]
        n = max(len(v) for v in lists)
        for k, v in zip(keys, lists):
            if len(v) not in (1, n):
                raise ConfigError("sweep list %s has %d entries, expected 1 or %d" % (k, len(v), n))
        return [{k: (v[i] if len(v) == n else v[0]) for k, v in zip(keys, lists)}
                for i in range(n)]

    def qbx_params(self, row):
        kw = dict(self.qbx)
        for k in ("p", "kappa", "r_c", "d_qbx"):
            if k in row:
                kw[k] = row[k]
        nt = row.get("n_theta")
        if "r_c_scale" in kw:
            s = kw.pop("r_c_scale")
            if "r_c" not in row and nt:
                kw["r_c"] = s / nt
        if "d_qbx_factor" in kw:
            f = kw.pop("d_qbx_factor")
            if "d_qbx" not in row:
                kw["d_qbx"] = f * kw.get("r_c", 0.2)
        kw.pop("r_c_scale", None)
        kw.pop("d_qbx_factor", None)
        return QbxParams(**kw)


_QBX_KEYS = {"p": int, "kappa": int, "r_c": float, "d_qbx": float, "d_up": float,
             "kappa_up": int, "q_c": int, "q_onsurface": int, "adaptive_onsurface": _bool,
             "onsurface": str, "qbx": _bool, "r_c_scale": float, "d_qbx_factor": float,
             "max_weights": int}


def load_config(path):
    if not os.path.isfile(path):
        raise ConfigError("config file %s not found" % path)
    cp = _parse(path)
    if "experiment" not in cp:
        raise ConfigError("%s: missing [experiment] section" % path)
    e = cp["experiment"]
    kind = e.get("kind", "")
    if kind not in KINDS:
        raise ConfigError("%s: kind must be one of %s" % (path, ", ".join(KINDS)))
    base = os.path.dirname(os.path.abspath(path))
    scene_path = e.get("scene", "")
    if not scene_path:
        raise ConfigError("%s: missing scene" % path)
    if not os.path.isabs(scene_path):
        scene_path = os.path.join(base, scene_path)
    scene = load_scene(scene_path)

    qbx = {}
    if "qbx" in cp:
        for k, v in cp["qbx"].items():
            if k not in _QBX_KEYS:
                raise ConfigError("%s: unknown [qbx] key %r" % (path, k))
            qbx[k] = _QBX_KEYS[k](v)
    tkw = {}
    if "treecode" in cp:
        t = cp["treecode"]
        tkw = dict(p_T=t.getint("p_T", 5), eps_T=t.getfloat("eps_T", 0.2),
                   leaf_cap=t.getint("leaf_cap", 64))
    sweep = {}
    if "sweep" in cp:
        for k, v in cp["sweep"].items():
            if k not in SWEEP_KEYS:
                raise ConfigError("%s: unknown [sweep] key %r" % (path, k))
            vals = _ints(v) if k in ("n_theta", "p", "kappa") else _floats(v)
            if not vals:
                raise ConfigError("%s: sweep list %s is empty" % (path, k))
            sweep[k] = vals
    if "n_theta" not in sweep:
        raise ConfigError("%s: [sweep] needs n_theta" % path)

    far = e.get("far_field", "direct")
    if far not in ("direct", "treecode"):
        raise ConfigError("%s: far_field must be direct or treecode" % path)
    side = e.get("side", "interior" if kind == "solve_interior" else "exterior")
    out = e.get("output", None)
    if out and not os.path.isabs(out):
        out = os.path.join(base, out)
    cfg = ExperimentConfig(
        id=e.get("id", os.path.splitext(os.path.basename(path))[0]), kind=kind, scene=scene,
        scene_path=scene_path, qbx=qbx, tree=TreecodeParams(**tkw), far_field=far, side=side,
        boundary=dict(cp["boundary"]) if "boundary" in cp else {},
        targets=dict(cp["targets"]) if "targets" in cp else {},
        sweep=sweep, gmres_tol=e.getfloat("gmres_tol", 1e-10),
        gmres_maxit=e.getint("gmres_maxit", 200), output=out)
    for row in cfg.rows():
        cfg.qbx_params(row)  # validate early
    return cfg
