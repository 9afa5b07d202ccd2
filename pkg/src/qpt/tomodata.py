"""Measurement settings, datasets, likelihoods, and data simulation.

Two tomographic schemes are supported. Prepare-and-measure: known input
states go through the channel and a POVM is measured on the output.
Ancilla-assisted: half of a fixed full-Schmidt-rank entangled state
psi_AP goes through the channel and a joint POVM is measured on output
(x) ancilla.

Counts are stored aggregated per effect; the likelihood depends on the
data only through these counts, so per-shot records are never kept.
Datasets are immutable after construction and likelihood evaluation is
pure, which makes concurrent use across chains safe.
"""

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import qmat
from .channels import ChannelDims, apply_channel, swap_factors
from .errors import BadParameter, BadPOVM, DimensionMismatch, NotState

POVM_TOL = 1e-9
SCHMIDT_FLOOR = 1e-10
PROB_FLOOR = 1e-300


class Scheme(str, Enum):
    PM = "prepare-measure"
    AA = "ancilla-assisted"


@dataclass(frozen=True)
class Setting:
    """One measurement configuration: optional input state, POVM, counts.

    counts is None for a template (pre-simulation) setting.
    """

    effects: tuple
    input_state: np.ndarray = None
    counts: np.ndarray = None


def _validate_povm(effects, d):
    total = np.zeros((d, d), dtype=complex)
    for e in effects:
        e = np.asarray(e)
        if e.shape != (d, d):
            raise DimensionMismatch(f"effect shape {e.shape}, expected {(d, d)}")
        if qmat.asymmetry(e) > 1e-9:
            raise BadPOVM("effect is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0] < -POVM_TOL:
            raise BadPOVM("effect has a negative eigenvalue")
        total = total + e
    if np.max(np.abs(total - np.eye(d))) > POVM_TOL:
        raise BadPOVM("effects do not sum to the identity")


@dataclass(frozen=True)
class Dataset:
    """A scheme, its settings, and (once simulated/measured) the counts."""

    scheme: Scheme
    dims: ChannelDims
    settings: tuple
    input_entangled: np.ndarray = None  # psi_AP vector, AA only

    def __post_init__(self):
        object.__setattr__(self, "settings", tuple(self.settings))
        if self.scheme == Scheme.AA:
            if self.input_entangled is None:
                raise BadParameter("ancilla-assisted dataset needs psi_AP")
            psi = np.asarray(self.input_entangled, dtype=complex).reshape(-1)
            if psi.size % self.dims.d_in != 0:
                raise DimensionMismatch("psi_AP length not divisible by d_in")
            object.__setattr__(self, "input_entangled", psi)
            sv = np.linalg.svd(psi.reshape(self.dims.d_in, -1), compute_uv=False)
            if sv.size < self.dims.d_in or sv[-1] < SCHMIDT_FLOOR:
                raise NotState("psi_AP must have full Schmidt rank")
        elif self.input_entangled is not None:
            raise BadParameter("prepare-measure dataset cannot carry psi_AP")
        d_meas = self.d_effect
        for s in self.settings:
            _validate_povm(s.effects, d_meas)
            if self.scheme == Scheme.PM:
                st = np.asarray(s.input_state, dtype=complex)
                if st.shape != (self.dims.d_in,) * 2:
                    raise DimensionMismatch("input state has wrong shape")
            if s.counts is not None and len(s.counts) != len(s.effects):
                raise BadParameter("counts length differs from effects length")

    @property
    def d_probe(self):
        """Ancilla dimension d_P (AA); 1 for prepare-and-measure."""
        if self.scheme == Scheme.PM:
            return 1
        return self.input_entangled.size // self.dims.d_in

    @property
    def d_effect(self):
        return self.dims.d_out * self.d_probe

    @property
    def total_n(self):
        return int(
            sum(int(np.sum(s.counts)) for s in self.settings if s.counts is not None)
        )

    def probe_marginal(self):
        """psi_P = tr_A |psi_AP><psi_AP| (AA only)."""
        psi = self.input_entangled.reshape(self.dims.d_in, self.d_probe)
        return psi.conj().T @ psi


def aa_input_state(sigma_a):
    """psi_AP for the standard entangled input sqrt(d) (sigma^1/2 (x) 1)|Phi>.

    Written out in the product basis this is just sigma_a^{1/2} read
    row-major, which is also how one sees that the ancilla marginal is
    the complex conjugate of sigma_a.
    """
    sigma_a = np.asarray(sigma_a, dtype=complex)
    if qmat.asymmetry(sigma_a) > 1e-8 or abs(np.trace(sigma_a).real - 1) > 1e-8:
        raise NotState("sigma_a must be a density matrix")
    return qmat.mat_sqrt(sigma_a).reshape(-1)


def output_state(choi, psi_ap, dims: ChannelDims):
    """Joint output (Lambda (x) id)(|psi_AP><psi_AP|) on H_B (x) H_P.

    Applies the channel to the A factor directly through the Choi
    matrix. This is deliberately a different code path from the
    whitened-sandwich form used in log_likelihood; the two must agree.
    """
    psi = np.asarray(psi_ap, dtype=complex).reshape(dims.d_in, -1)
    c4 = np.asarray(choi, dtype=complex).reshape(
        dims.d_in, dims.d_out, dims.d_in, dims.d_out
    )
    out = dims.d_in * np.einsum("abcd,ai,cj->bidj", c4, psi, psi.conj(), optimize=True)
    n = psi.shape[1] * dims.d_out
    return out.reshape(n, n)


class Likelihood:
    """Log-likelihood of a dataset as a function of the Choi matrix.

    All settings are flattened once into a stack of effect operators so
    an evaluation is a single real matrix-vector product: for each
    counted effect there is a Hermitian G with p = d_in tr(choi G^T),
    stored as a flattened row. For the ancilla-assisted scheme G comes
    from the whitened form p = d_in tr(Lambda_BP (1 (x) psi_P^{1/2}) E
    (1 (x) psi_P^{1/2})) rewritten in input (x) output ordering.
    """

    def __init__(self, ds: Dataset):
        self.ds = ds
        rows = []
        counts = []
        da, db = ds.dims.d_in, ds.dims.d_out
        if ds.scheme == Scheme.AA:
            root_p = qmat.mat_sqrt(ds.probe_marginal())
            sandw = qmat.kron(np.eye(db), root_p)
        for s in ds.settings:
            if s.counts is None:
                raise BadParameter("dataset has no counts; simulate first")
            for e, n in zip(s.effects, s.counts):
                if n == 0:
                    continue
                if ds.scheme == Scheme.PM:
                    g = np.kron(s.input_state, np.asarray(e).T)
                else:
                    f = sandw @ np.asarray(e, dtype=complex) @ sandw
                    g = swap_factors(f, db, ds.d_probe).conj()
                rows.append(g.reshape(-1))
                counts.append(n)
        if not rows:
            raise BadParameter("dataset has no nonzero counts")
        self.rows = np.array(rows)
        self.counts = np.array(counts, dtype=float)

    def probabilities(self, choi):
        p = self.ds.dims.d_in * (self.rows @ np.asarray(choi).reshape(-1)).real
        return p

    def __call__(self, choi, return_clamped=False):
        p = self.probabilities(choi)
        n_clamped = int(np.count_nonzero(p < PROB_FLOOR))
        ll = float(np.dot(self.counts, np.log(np.maximum(p, PROB_FLOOR))))
        if return_clamped:
            return ll, n_clamped
        return ll


class BipartiteLikelihood:
    """Same data seen as a likelihood over bipartite states sigma_BP.

    Used by the state-space walk: p_k = tr(sigma_BP E_k), no whitening
    and no d_in factor, because sigma_BP is the measured state itself.
    AA datasets only.
    """

    def __init__(self, ds: Dataset):
        if ds.scheme != Scheme.AA:
            raise BadParameter("state-space likelihood needs an AA dataset")
        rows = []
        counts = []
        for s in ds.settings:
            if s.counts is None:
                raise BadParameter("dataset has no counts; simulate first")
            for e, n in zip(s.effects, s.counts):
                if n == 0:
                    continue
                rows.append(np.asarray(e, dtype=complex).conj().reshape(-1))
                counts.append(n)
        self.rows = np.array(rows)
        self.counts = np.array(counts, dtype=float)

    def __call__(self, sigma_bp, return_clamped=False):
        p = (self.rows @ np.asarray(sigma_bp).reshape(-1)).real
        n_clamped = int(np.count_nonzero(p < PROB_FLOOR))
        ll = float(np.dot(self.counts, np.log(np.maximum(p, PROB_FLOOR))))
        if return_clamped:
            return ll, n_clamped
        return ll


def log_likelihood(ds: Dataset, choi, return_clamped=False):
    """ln L(choi | dataset), probabilities clamped below at 1e-300.

    The clamp keeps hopeless proposals finite so the sampler can reject
    them instead of crashing; ask for the clamp count when diagnosing.
    """
    return Likelihood(ds)(choi, return_clamped=return_clamped)


def setting_probabilities(choi, ds: Dataset, setting: Setting):
    """Born probabilities of one setting's effects, by direct application."""
    if ds.scheme == Scheme.PM:
        rho = apply_channel(choi, setting.input_state, ds.dims)
    else:
        rho = output_state(choi, ds.input_entangled, ds.dims)
    return np.array([np.trace(np.asarray(e) @ rho).real for e in setting.effects])


def simulate(true_choi, template: Dataset, shots, rng):
    """Draw multinomial counts from the Born probabilities of true_choi.

    shots is an int (same for every setting) or a sequence with one
    entry per setting. shots=0 gives a valid empty dataset, which the
    walkers interpret as prior sampling.
    """
    if np.isscalar(shots):
        shots = [int(shots)] * len(template.settings)
    if len(shots) != len(template.settings):
        raise BadParameter("need one shot count per setting")
    new_settings = []
    for s, n in zip(template.settings, shots):
        p = setting_probabilities(true_choi, template, s)
        if abs(p.sum() - 1.0) > 1e-6:
            raise BadPOVM(f"setting probabilities sum to {p.sum():.8f}")
        p = np.clip(p, 0.0, None)
        counts = rng.multinomial(n, p / p.sum()) if n > 0 else np.zeros(len(p), int)
        new_settings.append(Setting(s.effects, s.input_state, counts))
    return Dataset(template.scheme, template.dims, new_settings, template.input_entangled)


def rescale_counts(ds: Dataset, alpha):
    """Map every count to floor(alpha * count), settings unchanged.

    Floors do not compose: rescaling a count of 5 by 0.5 and then 0.8
    gives 1, by 0.4 at once gives 2. Always rescale from the reference
    dataset, never from an already rescaled one.
    """
    if not 0.0 < alpha <= 1.0:
        raise BadParameter(f"alpha must be in (0, 1], got {alpha}")
    settings = [
        Setting(s.effects, s.input_state, np.floor(alpha * np.asarray(s.counts)).astype(int))
        for s in ds.settings
    ]
    return Dataset(ds.scheme, ds.dims, settings, ds.input_entangled)


# ---------------------------------------------------------------------------
# standard observables and setting templates

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

GELLMANN = (
    np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex),
    np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 0]], dtype=complex),
    np.array([[1, 0, 0], [0, -1, 0], [0, 0, 0]], dtype=complex),
    np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]], dtype=complex),
    np.array([[0, 0, -1j], [0, 0, 0], [1j, 0, 0]], dtype=complex),
    np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex),
    np.array([[0, 0, 0], [0, 0, -1j], [0, 1j, 0]], dtype=complex),
    np.array([[1, 0, 0], [0, 1, 0], [0, 0, -2]], dtype=complex) / np.sqrt(3),
)


def eigenprojectors(observable):
    """Rank-1 spectral projectors of a Hermitian observable.

    Degenerate eigenvalues are split into rank-1 pieces along the
    eigendecomposition's own (deterministic) basis, so a d-dim system
    always yields d outcomes.
    """
    eig = qmat.eigh(np.asarray(observable, dtype=complex))
    return [
        np.outer(eig.eigenvectors[:, i], eig.eigenvectors[:, i].conj())
        for i in range(eig.eigenvectors.shape[1])
    ]


def sign_projectors(observable):
    """Coarse two-outcome projectors onto the +/- eigenvalue sectors."""
    eig = qmat.eigh(np.asarray(observable, dtype=complex))
    v = eig.eigenvectors
    plus = v[:, eig.eigenvalues > 0]
    minus = v[:, eig.eigenvalues < 0]
    return [plus @ plus.conj().T, minus @ minus.conj().T]


def _pauli_strings(n):
    axes = ["x", "y", "z"]
    strings = [()]
    for _ in range(n):
        strings = [s + (a,) for s in strings for a in axes]
    return [qmat.kron(*(PAULI[a] for a in s)) for s in strings]


def standard_settings(kind, scheme: Scheme, n_qubits=1):
    """Ready-made setting templates (no counts).

    pauli-qubit PM: the 6 Pauli eigenstates as inputs, each measured in
    the 3 Pauli bases. pauli-qubit AA: all 9 Pauli pairs on output (x)
    ancilla with 4 rank-1 product effects each. pauli-n-qubit AA: all
    3^(2n) Pauli-product pairs with the 4 coarse sign-sector product
    effects. gellmann-qutrit AA: all 64 observable pairs with 9 rank-1
    product effects each.
    """
    from .errors import Unsupported

    if kind == "pauli-qubit":
        if scheme == Scheme.PM:
            inputs = []
            for a in ("x", "y", "z"):
                for pr in eigenprojectors(PAULI[a]):
                    inputs.append(pr)  # eigenstates are the projectors
            return [
                Setting(tuple(eigenprojectors(PAULI[b])), inp)
                for inp in inputs
                for b in ("x", "y", "z")
            ]
        singles = [eigenprojectors(PAULI[a]) for a in ("x", "y", "z")]
        return _product_settings(singles, singles)
    if kind == "pauli-n-qubit":
        if scheme != Scheme.AA:
            raise Unsupported("pauli-n-qubit is ancilla-assisted only")
        obs = _pauli_strings(n_qubits)
        sectors = [sign_projectors(o) for o in obs]
        return _product_settings(sectors, sectors)
    if kind == "gellmann-qutrit":
        if scheme != Scheme.AA:
            raise Unsupported("gellmann-qutrit is ancilla-assisted only")
        singles = [eigenprojectors(g) for g in GELLMANN]
        return _product_settings(singles, singles)
    raise Unsupported(f"unknown settings kind {kind!r}")


def _product_settings(out_povms, probe_povms):
    settings = []
    for povm_b in out_povms:
        for povm_p in probe_povms:
            effects = tuple(np.kron(eb, ep) for eb in povm_b for ep in povm_p)
            settings.append(Setting(effects))
    return settings


# ---------------------------------------------------------------------------
# file format: JSON with matrices as lists of rows of [re, im] pairs

def matrix_to_json(m):
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    return [[[float(x.real), float(x.imag)] for x in row] for row in m]


def matrix_from_json(rows):
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def vector_to_json(v):
    return [[float(x.real), float(x.imag)] for x in np.asarray(v, dtype=complex)]


def vector_from_json(pairs):
    return np.array([complex(re, im) for re, im in pairs])


def dataset_to_json(ds: Dataset):
    doc = {
        "scheme": ds.scheme.value,
        "dims": {"d_A": ds.dims.d_in, "d_B": ds.dims.d_out},
        "settings": [
            {
                **({"input": matrix_to_json(s.input_state)} if s.input_state is not None else {}),
                "effects": [matrix_to_json(e) for e in s.effects],
                **({"counts": [int(c) for c in s.counts]} if s.counts is not None else {}),
            }
            for s in ds.settings
        ],
    }
    if ds.input_entangled is not None:
        doc["input_entangled"] = vector_to_json(ds.input_entangled)
    return doc


def dataset_from_json(doc):
    scheme = Scheme(doc["scheme"])
    dims = ChannelDims(int(doc["dims"]["d_A"]), int(doc["dims"]["d_B"]))
    psi = vector_from_json(doc["input_entangled"]) if "input_entangled" in doc else None
    settings = [
        Setting(
            tuple(matrix_from_json(e) for e in s["effects"]),
            matrix_from_json(s["input"]) if "input" in s else None,
            np.array(s["counts"], dtype=int) if "counts" in s else None,
        )
        for s in doc["settings"]
    ]
    return Dataset(scheme, dims, settings, psi)


def save_dataset(ds: Dataset, path):
    with open(path, "w") as fh:
        json.dump(dataset_to_json(ds), fh)


def load_dataset(path):
    with open(path) as fh:
        return dataset_from_json(json.load(fh))
