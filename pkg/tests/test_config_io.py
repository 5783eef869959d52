import numpy as np
import pytest
from hypothesis import given, strategies as st

from snsgap.config import (
    DEFAULT_CONFIG_TEXT,
    ConfigError,
    default_config,
    format_modes,
    load_config,
    parse_config,
    parse_modes,
)
from snsgap.fourier import random_field
from snsgap.io import (
    provenance_line,
    read_csv,
    read_kernel_csv,
    read_snapshot,
    read_spectrum_csv,
    snapshot_bytes,
    snapshot_from_bytes,
    write_csv,
    write_kernel_csv,
    write_snapshot,
    write_spectrum_csv,
)
from snsgap.contraction import lazy_cycle_kernel


def test_defaults():
    cfg = default_config()
    p = cfg.params
    assert (p.nu, p.dt, p.cutoff, p.horizon, p.seed) == (0.5, 0.005, 16, 50.0, 0)
    assert cfg.forcing.forced == ((1, 0), (1, 1))
    assert cfg.ensemble_size == 256
    assert cfg.metric.eta == pytest.approx(0.05 * 0.5 / 4)


def test_missing_key_is_named():
    text = DEFAULT_CONFIG_TEXT.replace("nu = 0.5\n", "")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.key == "nu" and "'nu'" in str(err.value)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(DEFAULT_CONFIG_TEXT + "viscosity = 2\n")
    assert err.value.key == "viscosity"


@pytest.mark.parametrize("line", ["cutoff = sixteen", "forced_modes = 1,0", "nonlinear = maybe",
                                  "fbar_modes = 1,0:0.5", "grid_factor = 1.2", "burn_in = 1.5"])
def test_bad_values_are_config_errors(line):
    key = line.split("=")[0].strip()
    text = "\n".join(l for l in DEFAULT_CONFIG_TEXT.splitlines() if not l.startswith(key + " "))
    with pytest.raises(ConfigError):
        parse_config(text + "\n" + line + "\n")


def test_comments_and_optional_keys():
    cfg = parse_config(DEFAULT_CONFIG_TEXT + "eta = 0.01  # explicit\nnonlinear = off\n"
                       "fbar_modes = 1,0:0.2,-0.1\n")
    assert cfg.metric.eta == 0.01
    assert not cfg.params.nonlinear
    assert cfg.forcing.mean_force == (((1, 0), 0.2 - 0.1j),)


def test_hash_tracks_content():
    a = default_config()
    assert a.hash() == default_config().hash()
    assert a.hash() != a.with_seed(1).hash()
    assert len(a.hash()) == 16


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(DEFAULT_CONFIG_TEXT.replace("seed = 0", "seed = 9"), encoding="utf-8")
    assert load_config(path).params.seed == 9
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 5),
                          st.floats(-3, 3, allow_nan=False), st.floats(-3, 3, allow_nan=False)),
                max_size=4))
def test_mode_text_round_trip(items):
    pairs = tuple(((k1, k2), complex(re, im)) for k1, k2, re, im in items)
    assert parse_modes(format_modes(pairs, True), True) == pairs


# -- files ----------------------------------------------------------------------------------


def test_snapshot_round_trip(tmp_path, rng):
    w = random_field(5, rng)
    write_snapshot(tmp_path / "w.vort", w)
    back = read_snapshot(tmp_path / "w.vort")
    np.testing.assert_array_equal(back.coeffs, w.coeffs)
    data = snapshot_bytes(w)
    assert data[:4] == b"VORT"
    with pytest.raises(ValueError):
        snapshot_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        snapshot_from_bytes(data[:-8])


def test_spectrum_round_trip(tmp_path, rng):
    w = random_field(4, rng)
    write_spectrum_csv(tmp_path / "s.csv", w, provenance_line("abc", 3))
    np.testing.assert_allclose(read_spectrum_csv(tmp_path / "s.csv", 4).coeffs, w.coeffs)


def test_csv_has_provenance(tmp_path):
    write_csv(tmp_path / "x.csv", ["a", "b"], [(1, 0.5)], provenance_line("h", 4))
    first = (tmp_path / "x.csv").read_text().splitlines()[0]
    assert first.startswith("# config_hash=h seed=4 snsgap=")
    header, rows = read_csv(tmp_path / "x.csv")
    assert header == ["a", "b"] and rows == [["1", "0.5"]]


def test_kernel_round_trip(tmp_path):
    k = lazy_cycle_kernel()
    write_kernel_csv(tmp_path / "k.csv", k, "# lazy")
    back = read_kernel_csv(tmp_path / "k.csv")
    np.testing.assert_array_equal(back.P, k.P)
    np.testing.assert_array_equal(back.D, k.D)
    (tmp_path / "bad.csv").write_text("3\n1,0,0\n")
    with pytest.raises(ValueError):
        read_kernel_csv(tmp_path / "bad.csv")
