import numpy as np
import pytest

from emtsim import kernels
from emtsim.harness import initialize
from emtsim.harness.scenario import data_dir
from emtsim.netmodel import VSC, build_network, load_network

py = kernels.backend_module("python")
try:
    cy = kernels.backend_module("cython")
except ImportError:  # extension not built
    cy = None

needs_ext = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def test_backend_selection_reports_a_known_name():
    assert kernels.BACKEND in ("cython", "python")
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")


def test_layouts_agree():
    if cy is None:
        pytest.skip("compiled kernels not built")
    assert cy.layout() == py.layout()


@needs_ext
@pytest.mark.parametrize("net_file", ["surrogate_4bus.json", "cigre_hv.json"])
def test_kernels_agree_on_random_points(net_file):
    init = initialize(build_network(load_network(data_dir() / net_file)))
    net = init.net
    rng = np.random.default_rng(7)
    for lvrt in (0.0, 1.0):
        for row in net.vsc_P:
            row[VSC["lvrt_active"]] = lvrt
        for _ in range(20):
            x = init.x0 + 0.05 * net.layout.scale * rng.normal(size=net.layout.n)
            xd = init.xd0 + 10.0 * net.layout.scale * rng.normal(size=net.layout.n)
            t = rng.uniform(0, 0.1)
            d = net.delayed_values(0.0).copy()
            outs = []
            for mod in (py, cy):
                raw = np.zeros(net.layout.n)
                so, vo = net.sg_out.copy(), net.vsc_out.copy()
                mod.sg_kernel(t, x, xd, raw, net.sg_P, net.sg_I, so)
                if net.vsc_P.shape[0]:
                    mod.vsc_kernel(t, x, xd, raw, net.vsc_P, net.vsc_I, d, vo)
                outs.append((raw, so, vo))
            for a, b in zip(*outs):
                assert np.allclose(a, b, rtol=1e-11, atol=1e-9 * max(1.0, np.abs(a).max()))

